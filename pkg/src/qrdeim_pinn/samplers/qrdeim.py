"""Residual-snapshot collocation updates driven by pivoted QR of a POD basis.

Every iteration the residual on a separate snapshot set S is appended as a
column of a snapshot matrix. After ``period`` columns, the leading left
singular vectors of that matrix are computed, the pivots of a column-pivoted
QR of their transpose pick which snapshot points to add to the training set,
and the training points whose residual dropped the most since the previous
update are removed. The training set keeps a constant size.

Two variants are provided: :class:`QRDeimSampler` (full SVD, rank chosen by
an energy threshold) and :class:`QRDeimRSampler` (randomized SVD at a fixed
rank, pivoted QR on a leverage-sampled column subset).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from ..errors import ConfigurationError, NumericalError
from ..linalg import leverage_sample_columns, qr_column_pivot, randomized_svd, svd
from .base import Sampler, StepContext, fresh_points_excluding, uniform_points

log = logging.getLogger(__name__)

RESIDUAL_FLOOR = 1e-300


class SnapshotBuffer:
    """Residual columns over a fixed snapshot set, at most ``period`` of them."""

    def __init__(self, points: np.ndarray, period: int):
        if period < 1:
            raise ConfigurationError("period must be >= 1")
        self.points = np.asarray(points, dtype=np.float64)
        self.period = period
        self._data = np.empty((self.points.shape[0], period))
        self.count = 0

    @property
    def ready(self) -> bool:
        return self.count == self.period

    @property
    def matrix(self) -> np.ndarray:
        return self._data[:, :self.count]

    def record(self, residuals) -> None:
        residuals = np.asarray(residuals, dtype=np.float64)
        if residuals.shape != (self.points.shape[0],):
            raise ConfigurationError(
                f"expected {self.points.shape[0]} residuals, got shape {residuals.shape}")
        if self.ready:
            raise RuntimeError("snapshot buffer is full; run the update before recording more")
        self._data[:, self.count] = residuals
        self.count += 1

    def reset(self, points: np.ndarray) -> None:
        self.points = np.asarray(points, dtype=np.float64)
        if self._data.shape[0] != self.points.shape[0]:
            self._data = np.empty((self.points.shape[0], self.period))
        self.count = 0


def select_rank(singular_values, threshold: float, squared: bool = False) -> int:
    """Smallest ``k`` with ``1 - sum(sigma[:k]) / sum(sigma) <= threshold``.

    ``squared=True`` uses ``sigma**2`` instead (the usual POD energy), for
    sensitivity studies.
    """
    s = np.asarray(singular_values, dtype=np.float64)
    if squared:
        s = s * s
    total = s.sum()
    if s.size == 0 or total <= 0.0:
        raise NumericalError("zero residual energy")
    remaining = 1.0 - np.cumsum(s) / total
    hits = np.flatnonzero(remaining <= threshold)
    return int(hits[0]) + 1 if hits.size else int(s.size)


def _full_rank(diag, k, shape) -> bool:
    if diag.size < k:
        return False
    return diag[k - 1] > diag[0] * max(shape) * np.finfo(float).eps


def qrdeim_indices(vk) -> np.ndarray:
    """First ``k`` pivots of a column-pivoted QR of ``vk.T`` (``vk`` is ``N x k``)."""
    vk = np.asarray(vk, dtype=np.float64)
    if vk.ndim == 1:
        vk = vk[:, None]
    k = vk.shape[1]
    piv = qr_column_pivot(vk.T, max_pivots=k)
    if not _full_rank(piv.r_diagonal, k, vk.shape):
        raise NumericalError(f"basis is numerically rank deficient below {k}")
    return piv.order[:k].copy()


def qrdeim_r_indices(vk, k: int, oversample: int, rng) -> np.ndarray:
    """Randomized pivot selection on ``k + oversample`` leverage-sampled columns of ``vk.T``.

    If the sampled ``k x l`` block is rank deficient, sampling is repeated
    once with a fresh sub-seed before giving up.
    """
    vkt = np.asarray(vk, dtype=np.float64).T
    if vkt.shape[0] != k:
        raise ConfigurationError(f"basis has {vkt.shape[0]} columns, expected {k}")
    ell = k + oversample
    if ell > vkt.shape[1]:
        raise ConfigurationError(f"k + z = {ell} exceeds {vkt.shape[1]} snapshot points")
    rng = np.random.default_rng(rng)
    for attempt in range(2):
        sub = np.random.default_rng(rng.integers(2 ** 63))
        cols = leverage_sample_columns(vkt, ell, sub)
        block = vkt[:, cols]
        piv = qr_column_pivot(block, max_pivots=k)
        if _full_rank(piv.r_diagonal, k, block.shape):
            return cols[piv.order[:k]]
        log.warning("leverage-sampled block is rank deficient (attempt %d)", attempt + 1)
    raise NumericalError(f"sampled block has rank < {k} after a re-draw")


def convergence_degrees(r_old, r_new) -> np.ndarray:
    """Element-wise ``log2(r_old / r_new)``; zero magnitudes are floored at 1e-300."""
    r_old = np.maximum(np.abs(np.asarray(r_old, dtype=np.float64)), RESIDUAL_FLOOR)
    r_new = np.maximum(np.abs(np.asarray(r_new, dtype=np.float64)), RESIDUAL_FLOOR)
    if r_old.shape != r_new.shape:
        raise ConfigurationError(f"length mismatch {r_old.shape} vs {r_new.shape}")
    return np.log2(r_old) - np.log2(r_new)


def top_k(values, k: int) -> np.ndarray:
    """Indices of the ``k`` largest values; ties go to the lower index."""
    return np.argsort(-np.asarray(values), kind="stable")[:k]


@dataclass
class UpdateResult:
    points: np.ndarray
    baseline: np.ndarray
    snapshot_points: np.ndarray
    k: int
    selected: np.ndarray
    pruned: np.ndarray
    skipped: bool
    singular_values: np.ndarray


def apply_update(points: np.ndarray, baseline, buffer: SnapshotBuffer, residual_fn: Callable,
                 rng, *, threshold: Optional[float] = None, rank: Optional[int] = None,
                 oversample: int = 50, squared_energy: bool = False,
                 svd_oversample: int = 10, power_iters: int = 2) -> UpdateResult:
    """One collocation update from a full snapshot buffer.

    Pass ``threshold`` for the energy-threshold variant or ``rank`` for the
    randomized fixed-rank variant. ``buffer`` is reset to fresh snapshot
    points disjoint from the returned training set.
    """
    if not buffer.ready:
        raise RuntimeError("snapshot buffer is not full")
    if (threshold is None) == (rank is None):
        raise ConfigurationError("pass exactly one of threshold or rank")
    snap = buffer.matrix
    if rank is None:
        dec = svd(snap)
        k = select_rank(dec.values, threshold, squared_energy)
        selected = qrdeim_indices(dec.left[:, :k])
    else:
        k = int(rank)
        dec = randomized_svd(snap, k, svd_oversample, power_iters, rng)
        selected = qrdeim_r_indices(dec.left, k, oversample, rng)
    if k > points.shape[0]:
        raise ConfigurationError(f"prune exceeds training set ({k} > {points.shape[0]})")

    r_new = np.abs(residual_fn(points))
    d = convergence_degrees(baseline, r_new)
    pruned = top_k(d, k)
    skipped = bool(np.any(d[pruned] < 0))
    if skipped:
        new_points, new_baseline = points, r_new
    else:
        keep = np.ones(points.shape[0], dtype=bool)
        keep[pruned] = False
        new_points = np.vstack([points[keep], buffer.points[selected]])
        new_baseline = np.abs(residual_fn(new_points))
    buffer.reset(fresh_points_excluding(buffer.points.shape[0], new_points, rng))
    return UpdateResult(new_points, new_baseline, buffer.points, k, selected, pruned, skipped,
                        dec.values.copy())


class QRDeimSampler(Sampler):
    """Full SVD, energy-threshold rank, pivoted QR on the whole basis."""

    name = "qrdeim"

    def __init__(self, n_points: int = 2000, n_snapshot: int = 1000, period: int = 1000,
                 threshold: float = 0.005, squared_energy: bool = False):
        super().__init__()
        if not 0.0 < threshold:
            raise ConfigurationError("energy threshold must be positive")
        self.n_points = n_points
        self.n_snapshot = n_snapshot
        self.period = period
        self.threshold = threshold
        self.squared_energy = squared_energy
        self.buffer: Optional[SnapshotBuffer] = None
        self.baseline: Optional[np.ndarray] = None

    def initialize(self, rng, residual_fn):
        self.rng = rng
        self.points = uniform_points(self.n_points, rng)
        self.buffer = SnapshotBuffer(
            fresh_points_excluding(self.n_snapshot, self.points, rng), self.period)
        self.baseline = np.abs(residual_fn(self.points))

    def _update_kwargs(self) -> Dict:
        return {"threshold": self.threshold, "squared_energy": self.squared_energy}

    def after_step(self, ctx: StepContext):
        self.buffer.record(ctx.residual_fn(self.buffer.points))
        if not self.buffer.ready:
            return
        res = apply_update(self.points, self.baseline, self.buffer, ctx.residual_fn, self.rng,
                           **self._update_kwargs())
        self.points, self.baseline = res.points, res.baseline
        self.updates.append({
            "iteration": ctx.iteration, "k": res.k, "skipped": res.skipped,
            "selected": res.selected.tolist(), "pruned": res.pruned.tolist(),
            "singular_values": res.singular_values[:10].tolist(),
        })


class QRDeimRSampler(QRDeimSampler):
    """Randomized SVD at fixed rank ``k``; pivoted QR on ``k + z`` sampled columns."""

    name = "qrdeim_r"

    def __init__(self, n_points: int = 2000, n_snapshot: int = 1000, period: int = 1000,
                 rank: int = 100, oversample: int = 50, svd_oversample: int = 10,
                 power_iters: int = 2):
        super().__init__(n_points, n_snapshot, period)
        if rank < 1 or oversample < 0:
            raise ConfigurationError("rank must be >= 1 and oversample >= 0")
        if rank + oversample > n_snapshot:
            raise ConfigurationError("rank + oversample exceeds the snapshot count")
        if rank + svd_oversample > min(n_snapshot, period):
            raise ConfigurationError(
                "rank + svd_oversample exceeds the snapshot matrix dimensions")
        self.rank = rank
        self.oversample = oversample
        self.svd_oversample = svd_oversample
        self.power_iters = power_iters

    def _update_kwargs(self):
        return {"rank": self.rank, "oversample": self.oversample,
                "svd_oversample": self.svd_oversample, "power_iters": self.power_iters}
