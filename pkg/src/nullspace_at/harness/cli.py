"""Command-line front end: train, eval, landscape and sweep subcommands.

Every subcommand takes --config (JSON, strict schema), with optional --seed
and --out overriding the config. Exit code is 0 on success; any failure
prints a one-line diagnostic to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..model import load_model
from .experiment import (ConfigError, _TAG_EVAL, _TAG_LANDSCAPE, _require,
                         _write_landscape, attack_from_config, build_datasets,
                         load_config, run_pipeline, write_json)
from .evaluation import evaluate, landscape


def _load(args) -> dict:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = int(args.seed)
    if args.out is not None:
        cfg["out_dir"] = str(args.out)
    return cfg


def _cmd_train(args) -> None:
    cfg = _load(args)
    if "sweep" in cfg:
        raise ConfigError("config has a sweep section; use the sweep subcommand")
    result = run_pipeline(cfg)
    print(f"wrote {result['out_dir']}/summary.csv "
          f"({len(result['rows'])} run)")


def _cmd_sweep(args) -> None:
    cfg = _load(args)
    if "sweep" not in cfg:
        raise ConfigError("missing config key: sweep")
    result = run_pipeline(cfg)
    print(f"wrote {result['out_dir']}/summary.csv "
          f"({len(result['rows'])} {result['parameter']} points)")


def _cmd_eval(args) -> None:
    cfg = _load(args)
    model_path = _require(cfg, "model_path", "")
    if "eval_attack" not in cfg:
        raise ConfigError("missing config key: eval_attack")
    seed = int(_require(cfg, "seed", ""))
    out = Path(_require(cfg, "out_dir", ""))
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(model_path)
    _, test_set = build_datasets(cfg["dataset"], seed)
    report = evaluate(model, test_set, attack_from_config(cfg["eval_attack"]),
                      seed=[seed, _TAG_EVAL])
    write_json(out / "eval_report.json", report.to_dict())
    print(f"clean_error={report.clean_error:.6f} pgd_error={report.pgd_error:.6f} "
          f"-> {out}/eval_report.json")


def _cmd_landscape(args) -> None:
    cfg = _load(args)
    model_path = _require(cfg, "model_path", "")
    lcfg = _require(cfg, "landscape", "")
    seed = int(_require(cfg, "seed", ""))
    out = Path(_require(cfg, "out_dir", ""))
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(model_path)
    _, test_set = build_datasets(cfg["dataset"], seed)
    anchor = int(lcfg.get("anchor_index", 0))
    extent = lcfg.get("extent")
    if extent is None:
        if "eval_attack" not in cfg:
            raise ConfigError("landscape.extent is unset and there is no "
                              "eval_attack to default from")
        extent = attack_from_config(cfg["eval_attack"]).epsilon
    grid = landscape(model, test_set.inputs[anchor], int(test_set.labels[anchor]),
                     lcfg.get("mode", "adversarial"), float(extent),
                     int(lcfg.get("resolution", 21)), seed=[seed, _TAG_LANDSCAPE])
    _write_landscape(out, grid)
    print(f"wrote {out}/landscape.csv ({grid.resolution}x{grid.resolution} grid)")


_COMMANDS = {
    "train": (_cmd_train, "run the config's training pipeline"),
    "eval": (_cmd_eval, "evaluate a saved model on the config's test split"),
    "landscape": (_cmd_landscape, "sample the loss surface around a test sample"),
    "sweep": (_cmd_sweep, "run the config's parameter sweep"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nullspace-at",
        description="Null-space constrained adversarial training experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command][0](args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
