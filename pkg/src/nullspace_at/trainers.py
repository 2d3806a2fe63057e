"""Training loops: standard, PGD, TRADES, and the two null-space methods.

The two constrained methods share one reference model ("std model", a
standard-trained high-accuracy network saved by `model.save_model`):

* npda generates adversarial samples whose penultimate perturbation direction
  is projected into the null space of the reference last layer;
* npgd trains on ordinary PGD samples but projects each last-layer
  weight-gradient row into that null space and freezes the last-layer bias,
  so the trained map agrees with the reference map on its row space.

Both build the projector once, before training, and both start from the
reference parameters. All loops are deterministic per (data, spec, seed):
shuffling, per-batch attacks and per-epoch evaluation each draw from their
own seed stream derived from spec.seed, so adding or removing one consumer
never shifts the others.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .attacks import LOSS_SELECTORS, AttackSpec, npda_generate, pgd_attack
from .losses import cross_entropy, error_rate, lse_loss, trades_loss
from .model import (LayerParams, NetworkModel, backward_params, forward,
                    init_model, load_model)
from .numerics import NullProjector, as_matrix, null_projector_svd

TRAIN_METHODS = ("standard", "pgd_at", "trades", "npda", "npgd")

# seed-stream tags; every random consumer derives its generator from
# (spec.seed, tag, ...) so the streams never interfere
_TAG_SHUFFLE = 1
_TAG_ATTACK = 2
_TAG_EVAL = 3


@dataclass(frozen=True)
class TrainSpec:
    """Full description of one training run.

    model_dims is required for the unconstrained methods; npda and npgd
    instead take their architecture (and initial parameters) from the saved
    model at std_model_path. freeze_backbone confines npgd updates to the
    last layer, the regime in which the trained map provably never moves on
    the reference row space.
    """

    method: str
    loss_selector: str = "ce"
    beta: float = 1.0
    learning_rate: float = 0.1
    batch_size: int = 64
    epochs: int = 10
    attack: AttackSpec = AttackSpec(epsilon=0.0, step_size=0.0, steps=0)
    seed: int = 0
    model_dims: tuple[int, ...] | None = None
    std_model_path: str | None = None
    freeze_backbone: bool = False

    def validate(self) -> None:
        if self.method not in TRAIN_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.loss_selector not in LOSS_SELECTORS:
            raise ValueError(f"unknown loss selector {self.loss_selector!r}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.method == "standard" and self.loss_selector == "trades":
            raise ValueError("standard training takes a plain classification loss (ce or lse)")
        if self.method == "trades" and self.loss_selector != "trades":
            raise ValueError("method 'trades' requires loss_selector 'trades'")
        if self.method in ("npda", "npgd"):
            if not self.std_model_path:
                raise ValueError(f"method {self.method!r} requires std_model_path")
        elif not self.model_dims or len(self.model_dims) < 2:
            raise ValueError(f"method {self.method!r} requires model_dims")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["attack"] = self.attack.to_dict()
        d["model_dims"] = list(self.model_dims) if self.model_dims else None
        return d


@dataclass
class TrainReport:
    """Per-epoch training dynamics plus the final model.

    Error fields are fractions in [0, 1], one entry per epoch, measured on
    the full training set after that epoch's updates; robust_error uses a
    cross-entropy PGD attack with the training attack budget.
    """

    method: str
    loss_selector: str
    beta: float
    seed: int
    epochs: int
    clean_error: list[float] = field(default_factory=list)
    robust_error: list[float] = field(default_factory=list)
    clean_loss: list[float] = field(default_factory=list)
    adv_loss: list[float] = field(default_factory=list)
    update_steps: int = 0
    model: NetworkModel | None = None
    projector_rank: int | None = None
    null_dim: int | None = None
    npda_max_residual: float | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "loss_selector": self.loss_selector,
            "beta": self.beta,
            "seed": self.seed,
            "epochs": self.epochs,
            "clean_error": list(self.clean_error),
            "robust_error": list(self.robust_error),
            "clean_loss": list(self.clean_loss),
            "adv_loss": list(self.adv_loss),
            "update_steps": self.update_steps,
            "projector_rank": self.projector_rank,
            "null_dim": self.null_dim,
            "npda_max_residual": self.npda_max_residual,
        }


def sgd_step(model: NetworkModel, grads, learning_rate: float) -> NetworkModel:
    """Plain gradient step; returns a new model, inputs untouched."""
    if len(grads) != len(model.backbone) + 1:
        raise ValueError(f"{len(grads)} gradient pairs for "
                         f"{len(model.backbone) + 1} layers")

    def step(layer: LayerParams, grad) -> LayerParams:
        gw, gb = grad
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise ValueError(f"gradient shapes {gw.shape}/{gb.shape} do not match "
                             f"layer {layer.weight.shape}/{layer.bias.shape}")
        return LayerParams(layer.weight - learning_rate * gw,
                           layer.bias - learning_rate * gb,
                           layer.activation)

    return NetworkModel([step(l, g) for l, g in zip(model.backbone, grads)],
                        step(model.last_layer, grads[-1]))


def freeze_backbone_option(spec: TrainSpec, freeze: bool = True) -> TrainSpec:
    """Copy of spec with backbone updates toggled off (or back on)."""
    return dataclasses.replace(spec, freeze_backbone=freeze)


def _inner_selector(spec: TrainSpec) -> str:
    # The generator ascends the loss being trained against: the plain
    # classification loss for ce/lse, and for the composite loss the same
    # clean-to-adversarial divergence term it penalizes (the KL inner loop).
    return spec.loss_selector


def _classification_loss(selector: str):
    return lse_loss if selector == "lse" else cross_entropy


def _generate(model, x, y, spec: TrainSpec, projector, seed, hook):
    if spec.method == "standard":
        return x
    if spec.method == "npda":
        return npda_generate(model, projector, x, y, spec.attack,
                             _inner_selector(spec), seed, direction_hook=hook)
    return pgd_attack(model, x, y, spec.attack, _inner_selector(spec), seed)


def _batch_grads(model, x, y, adv, spec: TrainSpec):
    """Loss value and parameter gradients for one update."""
    if spec.method != "standard" and spec.loss_selector == "trades":
        clean_tr = forward(model, x)
        adv_tr = forward(model, adv)
        lv = trades_loss(clean_tr.logits, adv_tr.logits, y, spec.beta)
        g_clean = backward_params(model, clean_tr, lv.logit_grad)
        g_adv = backward_params(model, adv_tr, lv.adv_logit_grad)
        grads = [(wc + wa, bc + ba)
                 for (wc, bc), (wa, ba) in zip(g_clean, g_adv)]
        return lv.value, grads
    loss_fn = _classification_loss(spec.loss_selector)
    tr = forward(model, adv)
    lv = loss_fn(tr.logits, y)
    return lv.value, backward_params(model, tr, lv.logit_grad)


def _npgd_project(grads, projector: NullProjector, freeze_backbone: bool):
    out = []
    last = len(grads) - 1
    for i, (gw, gb) in enumerate(grads):
        if i == last:
            # each row of the applied update lies in Null(reference map);
            # the bias is frozen because any bias change would shift the
            # logits uniformly and break the agreement constraint
            out.append((gw @ projector.p, np.zeros_like(gb)))
        elif freeze_backbone:
            out.append((np.zeros_like(gw), np.zeros_like(gb)))
        else:
            out.append((gw, gb))
    return out


def training_eval(model: NetworkModel, data, spec: TrainSpec, epoch: int) -> dict:
    """End-of-epoch metrics on the full training set.

    The PGD pass always maximizes cross-entropy (the robust-error definition)
    with the training attack budget, seeded by (spec.seed, epoch) so a report
    entry can be reproduced independently of the training loop.
    """
    inputs = as_matrix(data.inputs)
    labels = np.asarray(data.labels, dtype=np.int64).reshape(-1)
    loss_fn = _classification_loss(spec.loss_selector)
    tr = forward(model, inputs)
    adv = pgd_attack(model, inputs, labels, spec.attack, "ce",
                     seed=[spec.seed, _TAG_EVAL, epoch])
    adv_tr = forward(model, adv)
    return {
        "clean_error": error_rate(tr.logits, labels),
        "robust_error": error_rate(adv_tr.logits, labels),
        "clean_loss": loss_fn(tr.logits, labels).value,
        "adv_loss": loss_fn(adv_tr.logits, labels).value,
    }


def _train(data, spec: TrainSpec) -> TrainReport:
    spec.validate()
    inputs = as_matrix(data.inputs)
    labels = np.asarray(data.labels, dtype=np.int64).reshape(-1)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if labels.size != n:
        raise ValueError(f"{labels.size} labels for {n} samples")

    projector = None
    report = TrainReport(method=spec.method, loss_selector=spec.loss_selector,
                         beta=spec.beta, seed=spec.seed, epochs=spec.epochs)
    hook = None
    if spec.method in ("npda", "npgd"):
        std = load_model(spec.std_model_path)
        projector = null_projector_svd(std.last_layer.weight)
        if projector.source_rank >= projector.dim:
            raise ValueError(
                f"reference last layer has trivial null space: rank "
                f"{projector.source_rank} equals penultimate width {projector.dim}")
        model = std.copy()  # adversarial training starts from the reference
        report.projector_rank = projector.source_rank
        report.null_dim = projector.dim - projector.source_rank
        if spec.method == "npda":
            std_map = std.last_layer.weight.copy()
            report.npda_max_residual = 0.0

            def hook(g, _std=std_map):
                resid = float(np.abs(_std @ g.T).max()) if g.size else 0.0
                report.npda_max_residual = max(report.npda_max_residual, resid)
    else:
        model = init_model(spec.model_dims, spec.seed)

    shuffle = np.random.default_rng([spec.seed, _TAG_SHUFFLE])
    for epoch in range(spec.epochs):
        perm = shuffle.permutation(n)
        for b0 in range(0, n, spec.batch_size):
            idx = perm[b0:b0 + spec.batch_size]
            x, y = inputs[idx], labels[idx]
            adv = _generate(model, x, y, spec, projector,
                            [spec.seed, _TAG_ATTACK, epoch, b0], hook)
            _, grads = _batch_grads(model, x, y, adv, spec)
            if spec.method == "npgd":
                grads = _npgd_project(grads, projector, spec.freeze_backbone)
            model = sgd_step(model, grads, spec.learning_rate)
            report.update_steps += 1
        metrics = training_eval(model, data, spec, epoch)
        report.clean_error.append(metrics["clean_error"])
        report.robust_error.append(metrics["robust_error"])
        report.clean_loss.append(metrics["clean_loss"])
        report.adv_loss.append(metrics["adv_loss"])

    report.model = model
    return report


def _expect_method(spec: TrainSpec, method: str) -> None:
    if spec.method != method:
        raise ValueError(f"spec.method is {spec.method!r}, expected {method!r}")


def train_standard(data, spec: TrainSpec) -> TrainReport:
    """Minimize the selected classification loss on clean samples."""
    _expect_method(spec, "standard")
    return _train(data, spec)


def train_pgd_at(data, spec: TrainSpec) -> TrainReport:
    """Adversarial training on PGD samples generated against the current model."""
    _expect_method(spec, "pgd_at")
    return _train(data, spec)


def train_trades(data, spec: TrainSpec) -> TrainReport:
    """Adversarial training with the KL-ascent inner loop and composite loss."""
    _expect_method(spec, "trades")
    return _train(data, spec)


def train_npda(data, spec: TrainSpec) -> TrainReport:
    """Adversarial training on null-projected samples (projector built once
    from the reference model; all parameters update)."""
    _expect_method(spec, "npda")
    return _train(data, spec)


def train_npgd(data, spec: TrainSpec) -> TrainReport:
    """Adversarial training with the last-layer update projected into the
    reference null space and the last-layer bias frozen."""
    _expect_method(spec, "npgd")
    return _train(data, spec)


def train(data, spec: TrainSpec) -> TrainReport:
    """Dispatch on spec.method."""
    if spec.method not in TRAIN_METHODS:
        raise ValueError(f"unknown method {spec.method!r}")
    return _train(data, spec)
