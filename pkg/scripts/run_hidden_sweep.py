#!/usr/bin/env python3
"""Penultimate-width sweep for npgd on the blobs benchmark.

For each width an extra linear layer of that size is inserted before the
final map, a fresh reference model is trained, and npgd runs from it. Wider
penultimate layers leave a larger null space for the constrained update.
"""

import argparse
from pathlib import Path

from nullspace_at.harness.experiment import run_pipeline

GAP = 5.0
EPS = 0.3 * GAP


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/hidden_sweep")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--widths", type=int, nargs="+", default=[16, 32, 64, 128])
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
        "train": {"method": "npgd", "loss_selector": "ce",
                  "learning_rate": 0.05, "batch_size": 64, "epochs": 20,
                  "attack": attack},
        "eval_attack": {"epsilon": EPS, "step_size": EPS / 4, "steps": 20},
        "sweep": {"parameter": "hidden_size", "values": args.widths},
    }
    result = run_pipeline(cfg)
    print(f"{'width':>6} {'clean_error':>12} {'pgd_error':>10}")
    for method, width, clean, pgd in result["rows"]:
        print(f"{width:>6} {clean:>12.4f} {pgd:>10.4f}")
    print(f"summary: {Path(args.out) / 'summary.csv'}")


if __name__ == "__main__":
    main()
