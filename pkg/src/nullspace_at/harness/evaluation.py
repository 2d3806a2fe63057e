"""Robustness evaluation and loss-landscape sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..attacks import AttackSpec, pgd_attack
from ..losses import cross_entropy, error_rate
from ..model import NetworkModel, backward_to_input, forward
from ..numerics import Matrix
from .data import Dataset


@dataclass
class EvalReport:
    """Clean and PGD misclassification rates plus a per-class breakdown."""

    clean_error: float
    pgd_error: float
    attack: dict
    seed: int
    sample_count: int
    per_class_clean: list[float]
    per_class_pgd: list[float]

    def to_dict(self) -> dict:
        return {
            "clean_error": self.clean_error,
            "pgd_error": self.pgd_error,
            "attack": self.attack,
            "seed": self.seed,
            "sample_count": self.sample_count,
            "per_class_clean": list(self.per_class_clean),
            "per_class_pgd": list(self.per_class_pgd),
        }


def _per_class_errors(pred: np.ndarray, labels: np.ndarray, classes: int) -> list[float]:
    out = []
    for k in range(classes):
        mask = labels == k
        out.append(float(np.mean(pred[mask] != k)) if mask.any() else 0.0)
    return out


def evaluate(model: NetworkModel, dataset: Dataset, attack: AttackSpec,
             seed=0) -> EvalReport:
    """Clean error from argmax logits; PGD error from cross-entropy PGD
    samples at the given budget. Deterministic per seed."""
    logits = forward(model, dataset.inputs).logits
    clean_pred = np.argmax(logits, axis=1)
    adv = pgd_attack(model, dataset.inputs, dataset.labels, attack, "ce", seed=seed)
    adv_pred = np.argmax(forward(model, adv).logits, axis=1)
    return EvalReport(
        clean_error=error_rate(logits, dataset.labels),
        pgd_error=float(np.mean(adv_pred != dataset.labels)),
        attack=attack.to_dict(),
        seed=int(seed) if np.isscalar(seed) else list(seed),
        sample_count=len(dataset),
        per_class_clean=_per_class_errors(clean_pred, dataset.labels, dataset.num_classes),
        per_class_pgd=_per_class_errors(adv_pred, dataset.labels, dataset.num_classes),
    )


@dataclass
class LandscapeGrid:
    """Cross-entropy loss sampled over a 2-D slice of input space.

    direction_a is the signed loss-gradient direction in adversarial mode and
    a random sign vector in random mode; direction_b is always an independent
    random sign vector. Both have unit l-infinity norm. values[i, j] is the
    loss at anchor + offsets[i] * direction_a + offsets[j] * direction_b.
    """

    direction_a: np.ndarray
    direction_b: np.ndarray
    extent: float
    resolution: int
    offsets: np.ndarray
    values: Matrix
    origin_loss: float
    mode: str


LANDSCAPE_MODES = ("adversarial", "random")


def landscape(model: NetworkModel, anchor_x, anchor_label: int, mode: str,
              extent: float, resolution: int, seed=0) -> LandscapeGrid:
    """Sample the loss surface around one input along two probe directions."""
    if mode not in LANDSCAPE_MODES:
        raise ValueError(f"unknown landscape mode {mode!r}")
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError(f"resolution must be odd and >= 3, got {resolution}")
    if extent < 0:
        raise ValueError("extent must be nonnegative")
    x = np.asarray(anchor_x, dtype=np.float64).reshape(1, -1)
    label = np.asarray([int(anchor_label)])
    rng = np.random.default_rng(seed)
    if mode == "adversarial":
        tr = forward(model, x)
        lg = cross_entropy(tr.logits, label).logit_grad
        gx = backward_to_input(model, tr, lg @ model.last_layer.weight)
        direction_a = np.sign(gx[0])
    else:
        direction_a = rng.choice([-1.0, 1.0], size=x.shape[1])
    direction_b = rng.choice([-1.0, 1.0], size=x.shape[1])
    offsets = np.linspace(-extent, extent, resolution)
    values = np.zeros((resolution, resolution))
    for i, a in enumerate(offsets):
        points = x + a * direction_a + offsets[:, None] * direction_b
        logits = forward(model, points).logits
        logp = logits - logits.max(axis=1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
        values[i, :] = -logp[:, label[0]]
    origin = cross_entropy(forward(model, x).logits, label).value
    return LandscapeGrid(direction_a=direction_a, direction_b=direction_b,
                         extent=float(extent), resolution=int(resolution),
                         offsets=offsets, values=values, origin_loss=origin,
                         mode=mode)
