"""Scalar classification losses with exact gradients on the logits.

Batch reduction is the mean everywhere. Each loss returns both its value and
the gradient with respect to the logits it was fed, which is what the
hand-rolled backward passes consume; the composite robustness loss carries a
second gradient for the adversarial logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Matrix, as_matrix


@dataclass(frozen=True)
class LossValue:
    value: float
    logit_grad: Matrix
    adv_logit_grad: Matrix | None = None


def softmax(logits: Matrix) -> Matrix:
    """Row-wise softmax, computed with max subtraction for stability."""
    logits = as_matrix(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: Matrix) -> Matrix:
    logits = as_matrix(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_labels(labels, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise ValueError(
            f"labels must lie in [0, {class_count}), got range "
            f"[{labels.min()}, {labels.max()}]")
    return labels


def one_hot(labels: np.ndarray, class_count: int) -> Matrix:
    t = np.zeros((labels.size, class_count))
    t[np.arange(labels.size), labels] = 1.0
    return t


def cross_entropy(logits: Matrix, labels) -> LossValue:
    """Mean negative log-likelihood; gradient is (softmax - onehot) / batch."""
    logits = as_matrix(logits)
    labels = _check_labels(labels, logits.shape[1])
    if labels.size != logits.shape[0]:
        raise ValueError(f"{labels.size} labels for {logits.shape[0]} logit rows")
    n = logits.shape[0]
    logp = log_softmax(logits)
    value = float(-logp[np.arange(n), labels].mean())
    grad = (np.exp(logp) - one_hot(labels, logits.shape[1])) / n
    return LossValue(value, grad)


def lse_loss(logits: Matrix, labels) -> LossValue:
    """Squared error between the softmax output and the one-hot target,
    summed over classes and averaged over the batch."""
    logits = as_matrix(logits)
    labels = _check_labels(labels, logits.shape[1])
    if labels.size != logits.shape[0]:
        raise ValueError(f"{labels.size} labels for {logits.shape[0]} logit rows")
    n = logits.shape[0]
    p = softmax(logits)
    err = p - one_hot(labels, logits.shape[1])
    value = float(np.sum(err * err, axis=1).mean())
    inner = np.sum(err * p, axis=1, keepdims=True)
    grad = 2.0 * p * (err - inner) / n
    return LossValue(value, grad)


def kl_divergence(p_logits: Matrix, q_logits: Matrix) -> LossValue:
    """Mean KL(softmax(p) || softmax(q)) with gradients to both logit sets.

    logit_grad is with respect to p_logits, adv_logit_grad with respect to
    q_logits. Computed from log-softmax so extreme logits stay finite.
    """
    p_logits = as_matrix(p_logits)
    q_logits = as_matrix(q_logits)
    if p_logits.shape != q_logits.shape:
        raise ValueError(f"logit shapes differ: {p_logits.shape} vs {q_logits.shape}")
    n = p_logits.shape[0]
    lp = log_softmax(p_logits)
    lq = log_softmax(q_logits)
    p = np.exp(lp)
    per_row = np.sum(p * (lp - lq), axis=1, keepdims=True)
    value = float(per_row.mean())
    grad_p = p * ((lp - lq) - per_row) / n
    grad_q = (np.exp(lq) - p) / n
    return LossValue(value, grad_p, grad_q)


def trades_loss(clean_logits: Matrix, adv_logits: Matrix, labels,
                beta: float) -> LossValue:
    """Classification loss plus beta times the clean-to-adversarial KL term.

    The divergence direction is KL(clean || adversarial). Returns gradients
    with respect to the clean logits (logit_grad) and the adversarial logits
    (adv_logit_grad); the value is exactly linear in beta.
    """
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    ce = cross_entropy(clean_logits, labels)
    kl = kl_divergence(clean_logits, adv_logits)
    return LossValue(ce.value + beta * kl.value,
                     ce.logit_grad + beta * kl.logit_grad,
                     beta * kl.adv_logit_grad)


def madry_inner_objective(logits: Matrix, labels) -> LossValue:
    """Cross-entropy on adversarial logits: the objective the worst-case
    perturbation maximizes. Same computation as cross_entropy, named so
    trainers select it explicitly."""
    return cross_entropy(logits, labels)


def error_rate(logits: Matrix, labels) -> float:
    """Fraction of rows whose argmax logit disagrees with the label."""
    logits = as_matrix(logits)
    labels = _check_labels(labels, logits.shape[1])
    if labels.size == 0:
        raise ValueError("cannot compute an error rate on zero samples")
    return float(np.mean(np.argmax(logits, axis=1) != labels))
