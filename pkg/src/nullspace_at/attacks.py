"""Adversarial sample generation: l-infinity PGD and its null-projected variant.

Both generators are pure functions of (model snapshot, inputs, spec, seed):
the random start is drawn from the seed and every later step is
deterministic, so identical calls give bit-identical outputs. Iterates are
projected back into the epsilon ball (and the optional value clamp) after the
random start and after every step.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .losses import cross_entropy, kl_divergence, lse_loss
from .model import NetworkModel, backward_to_input, forward
from .numerics import Matrix, NullProjector, as_matrix

LOSS_SELECTORS = ("ce", "lse", "trades")


@dataclass(frozen=True)
class AttackSpec:
    """Perturbation budget and inner-loop parameters.

    epsilon is the l-infinity radius in model-input units, step_size the
    per-iteration step, steps the iteration count. The random start adds
    Gaussian noise of the given scale before the first step. With use_sign
    the raw ascent direction is replaced by its sign. value_clamp, when set,
    bounds every input coordinate to [lo, hi].
    """

    epsilon: float
    step_size: float
    steps: int
    random_start_scale: float = 0.001
    use_sign: bool = True
    value_clamp: tuple[float, float] | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.step_size < 0:
            raise ValueError(f"step_size must be nonnegative, got {self.step_size}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if self.random_start_scale < 0:
            raise ValueError("random_start_scale must be nonnegative")
        if self.value_clamp is not None:
            lo, hi = self.value_clamp
            if lo > hi:
                raise ValueError(f"value_clamp lower bound {lo} exceeds upper bound {hi}")
            object.__setattr__(self, "value_clamp", (float(lo), float(hi)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["value_clamp"] = list(self.value_clamp) if self.value_clamp else None
        return d


def attack_logit_grad(loss_selector: str, logits: Matrix, labels,
                      ref_logits: Matrix | None = None) -> Matrix:
    """Gradient of the inner objective with respect to the current logits.

    Selectors ce and lse ascend the classification loss; trades ascends
    KL(clean || current), which needs the clean reference logits.
    """
    if loss_selector == "ce":
        return cross_entropy(logits, labels).logit_grad
    if loss_selector == "lse":
        return lse_loss(logits, labels).logit_grad
    if loss_selector == "trades":
        if ref_logits is None:
            raise ValueError("trades attack objective needs reference logits")
        return kl_divergence(ref_logits, logits).adv_logit_grad
    raise ValueError(f"unknown loss selector {loss_selector!r}")


def _project(adv: Matrix, lo: Matrix, hi: Matrix, spec: AttackSpec) -> Matrix:
    adv = np.clip(adv, lo, hi)
    if spec.value_clamp is not None:
        adv = np.clip(adv, spec.value_clamp[0], spec.value_clamp[1])
    return adv


def _start(model: NetworkModel, x: Matrix, labels, spec: AttackSpec,
           loss_selector: str, seed):
    x = as_matrix(x)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size != x.shape[0]:
        raise ValueError(f"{labels.size} labels for {x.shape[0]} input rows")
    if loss_selector not in LOSS_SELECTORS:
        raise ValueError(f"unknown loss selector {loss_selector!r}")
    rng = np.random.default_rng(seed)
    adv = x + rng.standard_normal(x.shape) * spec.random_start_scale
    lo = x - spec.epsilon
    hi = x + spec.epsilon
    adv = _project(adv, lo, hi, spec)
    ref = forward(model, x).logits if loss_selector == "trades" else None
    return x, labels, adv, lo, hi, ref


def pgd_attack(model: NetworkModel, x: Matrix, labels, spec: AttackSpec,
               loss_selector: str = "ce", seed=0) -> Matrix:
    """Iterative gradient ascent on the selected loss inside the epsilon ball.

    Each step moves by step_size along the (signed) input gradient of the
    inner objective evaluated at the current iterate, then projects back onto
    the ball around x and the value clamp.
    """
    x, labels, adv, lo, hi, ref = _start(model, x, labels, spec, loss_selector, seed)
    for _ in range(spec.steps):
        tr = forward(model, adv)
        lg = attack_logit_grad(loss_selector, tr.logits, labels, ref)
        gx = backward_to_input(model, tr, lg @ model.last_layer.weight)
        step = spec.step_size * (np.sign(gx) if spec.use_sign else gx)
        adv = _project(adv + step, lo, hi, spec)
    return adv


def npda_penultimate_direction(model_adv: NetworkModel, projector: NullProjector,
                               trace, labels, loss_selector: str = "ce",
                               ref_logits: Matrix | None = None) -> Matrix:
    """Penultimate-layer loss gradient projected into the reference null space.

    Returns one row per sample: g = (dl/dh) @ P.T. Every row is annihilated
    by the reference map the projector was built from, so a step along it
    cannot move the reference model's logits (exactly so for a linear
    backbone, to first order otherwise).
    """
    if projector.dim != model_adv.hidden_dim:
        raise ValueError(
            f"projector dimension {projector.dim} != model hidden width "
            f"{model_adv.hidden_dim}")
    lg = attack_logit_grad(loss_selector, trace.logits, labels, ref_logits)
    return (lg @ model_adv.last_layer.weight) @ projector.p.T


def npda_generate(model_adv: NetworkModel, projector: NullProjector, x: Matrix,
                  labels, spec: AttackSpec, loss_selector: str = "ce", seed=0,
                  direction_hook: Callable[[Matrix], None] | None = None) -> Matrix:
    """Null-projected adversarial generation.

    Like pgd_attack, but each step's penultimate gradient is projected into
    the null space of the reference last layer before being pulled back to
    input space. direction_hook, when given, receives every step's projected
    direction (used by trainers to track the annihilation residual).
    """
    x, labels, adv, lo, hi, ref = _start(model_adv, x, labels, spec, loss_selector, seed)
    for _ in range(spec.steps):
        tr = forward(model_adv, adv)
        g = npda_penultimate_direction(model_adv, projector, tr, labels,
                                       loss_selector, ref)
        if direction_hook is not None:
            direction_hook(g)
        dx = backward_to_input(model_adv, tr, g)
        step = spec.step_size * (np.sign(dx) if spec.use_sign else dx)
        adv = _project(adv + step, lo, hi, spec)
    return adv
