#!/usr/bin/env python3
"""Standard vs. null-space constrained training on the blobs benchmark.

Trains a standard reference model, then an npgd run (projected last-layer
updates, cross-entropy on PGD samples) and an npda run (projected sample
generation, composite loss) from it, and prints clean/PGD test error for all
three. Everything is config-driven, so the artifacts under --out are
reproducible byte for byte.
"""

import argparse
import json
from pathlib import Path

from nullspace_at.harness.experiment import run_pipeline

GAP = 5.0
EPS = 0.3 * GAP


def base_config(seed, out_dir):
    return {
        "seed": seed,
        "out_dir": out_dir,
        "dataset": {"kind": "blobs", "n_train": 4000, "n_test": 1000,
                    "dim": 20, "classes": 2, "separation": GAP},
        "model": {"dims": [20, 32, 2]},
        "eval_attack": {"epsilon": EPS, "step_size": EPS / 4, "steps": 20},
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/tradeoff")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    out = Path(args.out)

    attack = {"epsilon": EPS, "step_size": EPS / 5, "steps": 10}

    npgd_cfg = base_config(args.seed, str(out / "npgd"))
    npgd_cfg["std_train"] = {"loss_selector": "ce", "learning_rate": 0.1,
                             "batch_size": 64, "epochs": 30, "attack": attack}
    npgd_cfg["train"] = {"method": "npgd", "loss_selector": "ce",
                         "learning_rate": 0.05, "batch_size": 64, "epochs": 20,
                         "attack": attack}
    run_pipeline(npgd_cfg)

    npda_cfg = base_config(args.seed, str(out / "npda"))
    npda_cfg["train"] = {"method": "npda", "loss_selector": "trades",
                         "beta": 1.5, "learning_rate": 0.1, "batch_size": 64,
                         "epochs": 20, "attack": attack,
                         "std_model_path": str(out / "npgd" / "std" / "model.json")}
    run_pipeline(npda_cfg)

    print(f"{'run':<10} {'clean_error':>12} {'pgd_error':>10}")
    for name, path in (("standard", out / "npgd" / "std" / "eval_report.json"),
                       ("npgd", out / "npgd" / "run" / "eval_report.json"),
                       ("npda", out / "npda" / "run" / "eval_report.json")):
        ev = json.loads(Path(path).read_text())
        print(f"{name:<10} {ev['clean_error']:>12.4f} {ev['pgd_error']:>10.4f}")


if __name__ == "__main__":
    main()
