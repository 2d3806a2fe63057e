#!/usr/bin/env python3
"""Robustness-coefficient sweep for npgd on the blobs benchmark.

Sweeps the composite-loss coefficient over {0.5, 1.5, 5} with everything else
held fixed; robust test error should trend downward as the coefficient grows.
Writes one summary.csv row per sweep point.
"""

import argparse
from pathlib import Path

from nullspace_at.harness.experiment import run_pipeline

GAP = 5.0
EPS = 0.3 * GAP


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/beta_sweep")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--betas", type=float, nargs="+", default=[0.5, 1.5, 5.0])
    args = parser.parse_args()

    attack = {"epsilon": EPS, "step_size": EPS / 5, "steps": 10}
    cfg = {
        "seed": args.seed,
        "out_dir": args.out,
        "dataset": {"kind": "blobs", "n_train": 4000, "n_test": 1000,
                    "dim": 20, "classes": 2, "separation": GAP},
        "model": {"dims": [20, 32, 2]},
        "std_train": {"loss_selector": "ce", "learning_rate": 0.1,
                      "batch_size": 64, "epochs": 30, "attack": attack},
        "train": {"method": "npgd", "loss_selector": "trades",
                  "learning_rate": 0.01, "batch_size": 512, "epochs": 120,
                  "attack": attack},
        "eval_attack": {"epsilon": EPS, "step_size": EPS / 4, "steps": 20},
        "sweep": {"parameter": "beta", "values": args.betas},
    }
    result = run_pipeline(cfg)
    print(f"{'beta':>6} {'clean_error':>12} {'pgd_error':>10}")
    for method, beta, clean, pgd in result["rows"]:
        print(f"{beta:>6} {clean:>12.4f} {pgd:>10.4f}")
    print(f"summary: {Path(args.out) / 'summary.csv'}")


if __name__ == "__main__":
    main()
