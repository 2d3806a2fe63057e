"""Dense float64 linear algebra: deterministic SVD and null-space projectors.

Everything here is a pure function of its inputs, and every code path is
deterministic: the SVD uses a fixed cyclic sweep order and a canonical sign
convention so repeated runs produce bit-identical factorizations, which the
projector invariants and the reproducibility guarantees downstream rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# The universal numeric carrier: a 2-D float64 ndarray, row-major semantics.
Matrix = np.ndarray

_EPS = float(np.finfo(np.float64).eps)
# A pair of columns is rotated only while |a_i . a_j| / (|a_i| |a_j|) exceeds
# this; a few machine epsilons keeps the sweeps from chasing rounding noise.
_JACOBI_TOL = 1.0e-15
_MAX_SWEEPS = 60


def as_matrix(values) -> Matrix:
    """Coerce input to a 2-D float64 array."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def require_finite(m: Matrix, what: str) -> None:
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{what} contains non-finite entries")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with shape validation.

    Accumulates sequentially over the inner index (fixed contraction order),
    so the result is reproducible bit for bit and matches a naive triple-loop
    evaluation exactly.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return np.einsum("ij,jk->ik", a, b)


def seeded_gaussian(rows: int, cols: int, seed, scale: float) -> Matrix:
    """i.i.d. normal entries with standard deviation `scale`, fixed by `seed`."""
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, cols)) * scale


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m = u @ diag(singular_values) @ v.T``.

    u and v have orthonormal columns; singular values are nonincreasing and
    nonnegative.
    """

    u: Matrix
    singular_values: np.ndarray
    v: Matrix


def _complete_orthonormal(u: Matrix, start: int) -> None:
    """Fill columns u[:, start:] with unit vectors orthogonal to the rest.

    Candidates are standard basis vectors; for each missing column the one
    with the largest residual after Gram-Schmidt is chosen, which is a
    deterministic rule and always succeeds because start < u.shape[0].
    """
    p = u.shape[0]
    for j in range(start, u.shape[1]):
        best = None
        best_norm = -1.0
        for t in range(p):
            r = np.zeros(p)
            r[t] = 1.0
            # two Gram-Schmidt passes for orthogonality near machine precision
            for _ in range(2):
                r -= u[:, :j] @ (u[:, :j].T @ r)
            norm = float(np.sqrt(r @ r))
            if norm > best_norm:
                best_norm = norm
                best = r
        u[:, j] = best / best_norm


def svd(m: Matrix) -> SvdResult:
    """Deterministic thin SVD via cyclic one-sided Jacobi rotations.

    Column pairs are swept in a fixed (i, j) order until all pairs are
    orthogonal to relative tolerance, and signs are canonicalized so the
    largest-magnitude entry of each right singular vector is positive.
    Identical input therefore yields a bit-identical factorization.
    """
    m = as_matrix(m)
    require_finite(m, "svd input")
    rows, cols = m.shape
    if rows < 1 or cols < 1:
        raise ValueError("svd requires at least one row and one column")

    transposed = rows < cols
    tall = m.T if transposed else m
    p, q = tall.shape

    # Row-major working copies: b[i] is column i of the tall matrix, vt[i] is
    # column i of the accumulated right-rotation product.
    b = np.array(tall.T, dtype=np.float64, order="C", copy=True)
    vt = np.eye(q)

    for _ in range(_MAX_SWEEPS):
        rotated = False
        for i in range(q - 1):
            for j in range(i + 1, q):
                bi = b[i]
                bj = b[j]
                aii = float(bi @ bi)
                ajj = float(bj @ bj)
                if aii == 0.0 or ajj == 0.0:
                    continue
                aij = float(bi @ bj)
                if abs(aij) <= _JACOBI_TOL * np.sqrt(aii * ajj):
                    continue
                rotated = True
                tau = (ajj - aii) / (2.0 * aij)
                if tau == 0.0:
                    t = 1.0
                else:
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                # compute both rows before writing back: bi/bj view b's memory
                new_i = c * bi - s * bj
                new_j = s * bi + c * bj
                b[i] = new_i
                b[j] = new_j
                new_vi = c * vt[i] - s * vt[j]
                new_vj = s * vt[i] + c * vt[j]
                vt[i] = new_vi
                vt[j] = new_vj
        if not rotated:
            break
    else:
        raise RuntimeError("one-sided Jacobi SVD did not converge")

    norms = np.sqrt(np.einsum("ij,ij->i", b, b))
    order = np.argsort(-norms, kind="stable")
    sigma = norms[order]
    b = b[order]
    vt = vt[order]

    u = np.zeros((p, q))
    nonzero = 0
    for k in range(q):
        if sigma[k] > 0.0:
            u[:, k] = b[k] / sigma[k]
            nonzero = k + 1
    if nonzero < q:
        _complete_orthonormal(u, nonzero)
    v = vt.T.copy()

    if transposed:
        u, v = v, u

    # canonical signs: largest-magnitude entry of each right vector positive
    for k in range(v.shape[1]):
        idx = int(np.argmax(np.abs(v[:, k])))
        if v[idx, k] < 0.0:
            v[:, k] = -v[:, k]
            u[:, k] = -u[:, k]

    return SvdResult(u=u, singular_values=sigma, v=v)


def default_rank_tolerance(sigma_max: float, max_dim: int) -> float:
    """Standard numerical-rank cutoff: sigma_max * max_dim * machine epsilon."""
    return sigma_max * max_dim * _EPS


def rank_from_singular_values(singular_values, tol: float = 0.0,
                              max_dim: int | None = None) -> int:
    """Count singular values strictly above the cutoff.

    With tol = 0 the default cutoff applies; max_dim should then be the
    largest dimension of the source matrix (it falls back to the number of
    singular values when unknown, which is only the right scale for square
    matrices).
    """
    sigma = np.asarray(singular_values, dtype=np.float64)
    if sigma.size == 0:
        return 0
    if tol <= 0.0:
        tol = default_rank_tolerance(float(sigma[0]),
                                     max_dim if max_dim is not None else sigma.size)
    return int(np.sum(sigma > tol))


@dataclass(frozen=True)
class NullProjector:
    """Orthogonal projector onto the null space of a source map.

    p is symmetric and idempotent, p.shape == (dim, dim), and the source map
    satisfies ``source_map @ p == 0`` up to rounding. source_rank is the
    numerical rank of the source map at the recorded tolerance, so
    ``trace(p) == dim - source_rank``.
    """

    p: Matrix
    source_rank: int
    dim: int
    tolerance: float


def null_projector_svd(m: Matrix, tol: float = 0.0) -> NullProjector:
    """Null-space projector of a c-by-h map via its right singular vectors.

    P = I - V_r V_r^T where V_r spans the row space (singular values above
    tol, or above the default rank cutoff when tol = 0).
    """
    m = as_matrix(m)
    res = svd(m)
    h = m.shape[1]
    sigma_max = float(res.singular_values[0]) if res.singular_values.size else 0.0
    cutoff = tol if tol > 0.0 else default_rank_tolerance(sigma_max, max(m.shape))
    r = rank_from_singular_values(res.singular_values, cutoff, max_dim=max(m.shape))
    if r == h:
        # trivial null space: exactly zero, not I - VV^T rounding noise (the
        # sign of that noise would otherwise drive full attack steps)
        p = np.zeros((h, h))
    else:
        vr = res.v[:, :r]
        p = np.eye(h) - vr @ vr.T
        p = (p + p.T) / 2.0  # make symmetry exact, not just within rounding
    return NullProjector(p=p, source_rank=r, dim=h, tolerance=cutoff)


def null_projector_closed_form(m: Matrix) -> NullProjector:
    """Null-space projector of a full-row-rank c-by-h map in closed form.

    Computes I - M^T (M M^T)^{-1} M through a dense solve, which is the
    normal-equations route and entirely independent of the Jacobi SVD path.
    Refuses maps whose Gram matrix is too ill-conditioned to invert reliably.
    """
    m = as_matrix(m)
    require_finite(m, "projector input")
    c, h = m.shape
    gram = m @ m.T
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > 1.0e12:
        raise ValueError(
            f"gram matrix condition number {cond:.3e} exceeds 1e12; "
            "the map is rank deficient, use null_projector_svd instead")
    p = np.eye(h) - m.T @ np.linalg.solve(gram, m)
    p = (p + p.T) / 2.0
    return NullProjector(p=p, source_rank=c, dim=h, tolerance=0.0)
