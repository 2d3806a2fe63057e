"""Config-driven experiments: training runs, sweeps, evaluation, landscapes.

Configs are JSON with a strict schema: unknown keys are errors (silent typos
are the main reproducibility hazard), and every output file is written
atomically and deterministically, so rerunning a config with the same seed
reproduces each artifact byte for byte.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..attacks import AttackSpec
from ..model import save_model
from ..trainers import TrainReport, TrainSpec, train
from .data import Dataset, load_idx_subset, make_blobs
from .evaluation import LandscapeGrid, evaluate, landscape

# seed-stream tags for the harness (trainers use 1..3)
_TAG_TRAIN_DATA = 11
_TAG_TEST_DATA = 12
_TAG_EVAL = 13
_TAG_LANDSCAPE = 14

_ATTACK_KEYS = {"epsilon", "step_size", "steps", "random_start_scale",
                "use_sign", "value_clamp", "pixel_scale"}
_TRAIN_KEYS = {"method", "loss_selector", "beta", "learning_rate", "batch_size",
               "epochs", "attack", "std_model_path", "freeze_backbone"}
_STD_TRAIN_KEYS = _TRAIN_KEYS - {"method", "std_model_path", "freeze_backbone"}
_DATASET_KEYS = {
    "blobs": {"kind", "n_train", "n_test", "dim", "classes", "separation"},
    "idx": {"kind", "train_images", "train_labels", "test_images",
            "test_labels", "max_train", "max_test", "mean", "std"},
}
_SWEEP_KEYS = {"parameter", "values"}
_LANDSCAPE_KEYS = {"mode", "extent", "resolution", "anchor_index"}
_TOP_KEYS = {"seed", "out_dir", "dataset", "model", "std_train", "train",
             "eval_attack", "sweep", "landscape", "model_path"}


class ConfigError(ValueError):
    pass


def _check_keys(section: dict, allowed: set, path: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"config section {path!r} must be an object")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {path}.{key}" if path else
                              f"unknown config key: {key}")


def _require(section: dict, key: str, path: str):
    if key not in section:
        where = f"{path}.{key}" if path else key
        raise ConfigError(f"missing config key: {where}")
    return section[key]


def validate_config(cfg: dict) -> None:
    _check_keys(cfg, _TOP_KEYS, "")
    _require(cfg, "seed", "")
    dataset = _require(cfg, "dataset", "")
    kind = _require(dataset, "kind", "dataset")
    if kind not in _DATASET_KEYS:
        raise ConfigError(f"dataset.kind must be one of {sorted(_DATASET_KEYS)}, got {kind!r}")
    _check_keys(dataset, _DATASET_KEYS[kind], "dataset")
    if "model" in cfg:
        _check_keys(cfg["model"], {"dims"}, "model")
        _require(cfg["model"], "dims", "model")
    if "std_train" in cfg:
        _check_keys(cfg["std_train"], _STD_TRAIN_KEYS, "std_train")
        if "attack" in cfg["std_train"]:
            _check_keys(cfg["std_train"]["attack"], _ATTACK_KEYS, "std_train.attack")
    if "train" in cfg:
        _check_keys(cfg["train"], _TRAIN_KEYS, "train")
        _require(cfg["train"], "method", "train")
        if "attack" in cfg["train"]:
            _check_keys(cfg["train"]["attack"], _ATTACK_KEYS, "train.attack")
    if "eval_attack" in cfg:
        _check_keys(cfg["eval_attack"], _ATTACK_KEYS, "eval_attack")
    if "sweep" in cfg:
        _check_keys(cfg["sweep"], _SWEEP_KEYS, "sweep")
        param = _require(cfg["sweep"], "parameter", "sweep")
        if param not in ("beta", "hidden_size"):
            raise ConfigError(f"sweep.parameter must be 'beta' or 'hidden_size', got {param!r}")
        values = _require(cfg["sweep"], "values", "sweep")
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep.values must be a nonempty list")
    if "landscape" in cfg:
        _check_keys(cfg["landscape"], _LANDSCAPE_KEYS, "landscape")


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    validate_config(cfg)
    return cfg


def write_text_atomic(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    write_text_atomic(path, "\n".join(lines) + "\n")


def build_datasets(dcfg: dict, seed: int) -> tuple[Dataset, Dataset]:
    if dcfg["kind"] == "blobs":
        args = (dcfg["dim"], dcfg["classes"], dcfg["separation"])
        train_set = make_blobs(dcfg["n_train"], *args,
                               seed=[seed, _TAG_TRAIN_DATA], split="train")
        test_set = make_blobs(dcfg["n_test"], *args,
                              seed=[seed, _TAG_TEST_DATA], split="test")
        return train_set, test_set
    norm = None
    if "mean" in dcfg or "std" in dcfg:
        norm = (dcfg.get("mean", 0.0), dcfg.get("std", 1.0))
    train_set = load_idx_subset(dcfg["train_images"], dcfg["train_labels"],
                                dcfg.get("max_train", 1 << 62), norm, split="train")
    test_set = load_idx_subset(dcfg["test_images"], dcfg["test_labels"],
                               dcfg.get("max_test", 1 << 62), norm, split="test")
    return train_set, test_set


def attack_from_config(acfg: dict | None) -> AttackSpec:
    if acfg is None:
        return AttackSpec(epsilon=0.0, step_size=0.0, steps=0)
    scale = float(acfg.get("pixel_scale", 1.0))
    clamp = acfg.get("value_clamp")
    return AttackSpec(
        epsilon=float(acfg["epsilon"]) * scale,
        step_size=float(acfg["step_size"]) * scale,
        steps=int(acfg["steps"]),
        random_start_scale=float(acfg.get("random_start_scale", 0.001)),
        use_sign=bool(acfg.get("use_sign", True)),
        value_clamp=tuple(clamp) if clamp is not None else None,
    )


def train_spec_from_config(tcfg: dict, seed: int, dims=None,
                           std_model_path=None, method=None) -> TrainSpec:
    return TrainSpec(
        method=method if method is not None else tcfg["method"],
        loss_selector=tcfg.get("loss_selector", "ce"),
        beta=float(tcfg.get("beta", 1.0)),
        learning_rate=float(tcfg.get("learning_rate", 0.1)),
        batch_size=int(tcfg.get("batch_size", 64)),
        epochs=int(tcfg.get("epochs", 10)),
        attack=attack_from_config(tcfg.get("attack")),
        seed=seed,
        model_dims=tuple(dims) if dims is not None else None,
        std_model_path=tcfg.get("std_model_path", std_model_path),
        freeze_backbone=bool(tcfg.get("freeze_backbone", False)),
    )


def _write_train_artifacts(out: Path, report: TrainReport, spec: TrainSpec) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_model(report.model, out / "model.json")
    doc = report.to_dict()
    doc["spec"] = spec.to_dict()
    write_json(out / "train_report.json", doc)


def _write_landscape(out: Path, grid: LandscapeGrid) -> None:
    rows = []
    for i, a in enumerate(grid.offsets):
        for j, b in enumerate(grid.offsets):
            rows.append([float(a), float(b), float(grid.values[i, j])])
    write_csv(out / "landscape.csv", ["a_offset", "b_offset", "loss"], rows)
    write_json(out / "landscape.json", {
        "mode": grid.mode,
        "extent": grid.extent,
        "resolution": grid.resolution,
        "origin_loss": grid.origin_loss,
        "direction_a": [float(v) for v in grid.direction_a],
        "direction_b": [float(v) for v in grid.direction_b],
    })


def _run_point(out: Path, spec: TrainSpec, train_set: Dataset, test_set: Dataset,
               eval_attack: AttackSpec, seed: int, lcfg: dict | None) -> dict:
    report = train(train_set, spec)
    _write_train_artifacts(out, report, spec)
    ev = evaluate(report.model, test_set, eval_attack, seed=[seed, _TAG_EVAL])
    write_json(out / "eval_report.json", ev.to_dict())
    if lcfg is not None:
        anchor = int(lcfg.get("anchor_index", 0))
        grid = landscape(report.model, test_set.inputs[anchor],
                         int(test_set.labels[anchor]),
                         lcfg.get("mode", "adversarial"),
                         float(lcfg.get("extent", eval_attack.epsilon)),
                         int(lcfg.get("resolution", 21)),
                         seed=[seed, _TAG_LANDSCAPE])
        _write_landscape(out, grid)
    return {"clean_error": ev.clean_error, "pgd_error": ev.pgd_error}


def _train_std_stage(out: Path, cfg: dict, dims, train_set, test_set,
                     eval_attack, seed) -> str:
    spec = train_spec_from_config(cfg["std_train"], seed, dims=dims,
                                  method="standard")
    report = train(train_set, spec)
    _write_train_artifacts(out, report, spec)
    ev = evaluate(report.model, test_set, eval_attack, seed=[seed, _TAG_EVAL])
    write_json(out / "eval_report.json", ev.to_dict())
    return str(out / "model.json")


def run_pipeline(cfg: dict) -> dict:
    """Execute everything the config describes; returns the summary rows."""
    validate_config(cfg)
    seed = int(_require(cfg, "seed", ""))
    out = Path(_require(cfg, "out_dir", ""))
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.resolved.json", cfg)

    train_set, test_set = build_datasets(cfg["dataset"], seed)
    tcfg = _require(cfg, "train", "")
    if "eval_attack" not in cfg:
        raise ConfigError("missing config key: eval_attack")
    eval_attack = attack_from_config(cfg["eval_attack"])
    lcfg = cfg.get("landscape")
    dims = cfg["model"]["dims"] if "model" in cfg else None

    sweep = cfg.get("sweep")
    param = sweep["parameter"] if sweep else "beta"
    values = sweep["values"] if sweep else [tcfg.get("beta", 1.0)]

    needs_std = tcfg["method"] in ("npda", "npgd") and not tcfg.get("std_model_path")
    if needs_std and "std_train" not in cfg:
        raise ConfigError(
            f"train.method {tcfg['method']!r} needs a reference model: "
            "set train.std_model_path or add an std_train section")

    std_path = None
    if sweep and param == "hidden_size":
        if tcfg.get("std_model_path"):
            raise ConfigError("hidden_size sweep retrains the reference model "
                              "per width; remove train.std_model_path")
        if dims is None:
            raise ConfigError("missing config key: model")
    elif "std_train" in cfg:
        if dims is None:
            raise ConfigError("missing config key: model")
        std_path = _train_std_stage(out / "std", cfg, dims, train_set, test_set,
                                    eval_attack, seed)

    rows = []
    for value in values:
        point_dir = out / (f"{param}_{value:g}" if sweep else "run")
        if param == "hidden_size":
            point_dims = list(dims[:-1]) + [int(value)] + [dims[-1]]
            point_std = _train_std_stage(point_dir / "std", cfg, point_dims,
                                         train_set, test_set, eval_attack, seed)
            spec = train_spec_from_config(tcfg, seed, dims=point_dims,
                                          std_model_path=point_std)
        else:
            point_cfg = {**tcfg, "beta": float(value)} if sweep else tcfg
            spec = train_spec_from_config(point_cfg, seed, dims=dims,
                                          std_model_path=std_path)
        result = _run_point(point_dir, spec, train_set, test_set,
                            eval_attack, seed, lcfg)
        rows.append([spec.method, value, result["clean_error"], result["pgd_error"]])

    write_csv(out / "summary.csv", ["method", param, "clean_error", "pgd_error"], rows)
    return {"out_dir": str(out), "rows": rows, "parameter": param}


def run_experiment(config_path, seed: int | None = None,
                   out_dir: str | None = None) -> dict:
    """Load, validate and execute a config file.

    seed and out_dir, when given, override the config's values (the resolved
    config on disk records what actually ran).
    """
    cfg = load_config(config_path)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    return run_pipeline(cfg)
