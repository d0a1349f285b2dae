"""Dense factorizations used by the collocation samplers."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, NumericalError


class SVDResult(NamedTuple):
    left: np.ndarray      # (rows, r)
    values: np.ndarray    # (r,), non-increasing
    right: np.ndarray     # (cols, r)


class PivotResult(NamedTuple):
    order: np.ndarray       # column indices in pivot order
    r_diagonal: np.ndarray  # |diag(R)| for the pivoted factorization


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ConfigurationError(f"expected a nonempty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries")
    return a


def svd(a) -> SVDResult:
    """Thin SVD via LAPACK; raises :class:`NumericalError` if it does not converge."""
    a = _as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return SVDResult(u, s, vt.T)


def qr_column_pivot(a, max_pivots=None) -> PivotResult:
    """Householder QR with greedy column pivoting.

    At each step the remaining column with the largest residual norm is
    chosen; ties go to the lowest original column index. Column norms are
    recomputed from the updated trailing block rather than downdated, so the
    choice is exactly the greedy rule up to rounding.

    Only the pivot order is formed, Q is never accumulated. ``max_pivots``
    stops the factorization early (the first ``max_pivots`` entries of
    ``order`` are the same as in the full run); the remaining columns are
    appended in their current order.
    """
    a = _as_matrix(a).copy()
    m, n = a.shape
    steps = min(m, n) if max_pivots is None else min(m, n, int(max_pivots))
    if not np.any(a):
        raise NumericalError("rank zero, no pivots")
    perm = np.arange(n)
    diag = np.zeros(steps)
    for j in range(steps):
        norms = np.einsum("ij,ij->j", a[j:, j:], a[j:, j:])
        # among equal maxima prefer the lowest original index
        best = norms.max()
        candidates = np.flatnonzero(norms == best)
        p = j + candidates[np.argmin(perm[j + candidates])]
        if p != j:
            a[:, [j, p]] = a[:, [p, j]]
            perm[[j, p]] = perm[[p, j]]
        x = a[j:, j]
        alpha = np.sqrt(best)
        diag[j] = alpha
        if alpha == 0.0:
            diag = diag[:j]
            break
        v = x.copy()
        v[0] += np.copysign(alpha, x[0]) if x[0] != 0 else alpha
        vnorm2 = np.dot(v, v)
        if vnorm2 > 0:
            a[j:, j:] -= np.outer(v, (2.0 / vnorm2) * (v @ a[j:, j:]))
    return PivotResult(perm, diag)


def randomized_svd(a, rank: int, oversample: int = 10, power_iters: int = 2,
                   rng=None) -> SVDResult:
    """Halko-Martinsson-Tropp randomized SVD with subspace iteration.

    Returns the ``rank`` leading approximate singular triplets. The range
    sketch is re-orthonormalized between power iterations.
    """
    a = _as_matrix(a)
    if rank <= 0:
        raise ConfigurationError("rank must be positive")
    if oversample < 0 or power_iters < 0:
        raise ConfigurationError("oversample and power_iters must be non-negative")
    m, n = a.shape
    width = rank + oversample
    if width > min(m, n):
        raise ConfigurationError(
            f"rank + oversample = {width} exceeds min(rows, cols) = {min(m, n)}")
    rng = np.random.default_rng(rng)
    omega = rng.standard_normal((n, width))
    q, _ = np.linalg.qr(a @ omega)
    for _ in range(power_iters):
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    small = svd(q.T @ a)
    return SVDResult(q @ small.left[:, :rank], small.values[:rank], small.right[:, :rank])


def leverage_sample_columns(vkt, count: int, rng=None) -> np.ndarray:
    """Sample ``count`` distinct column indices with probability proportional to squared norms."""
    vkt = _as_matrix(vkt)
    n = vkt.shape[1]
    if count < 0 or count > n:
        raise ConfigurationError(f"cannot sample {count} of {n} columns")
    weights = np.einsum("ij,ij->j", vkt, vkt)
    total = weights.sum()
    if total == 0.0:
        raise NumericalError("degenerate distribution: all columns are zero")
    if count > np.count_nonzero(weights):
        raise NumericalError(
            f"degenerate distribution: only {np.count_nonzero(weights)} nonzero columns "
            f"for {count} samples")
    rng = np.random.default_rng(rng)
    return rng.choice(n, size=count, replace=False, p=weights / total)
