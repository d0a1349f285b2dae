"""Fixed and residual-driven baseline collocation strategies.

Defaults follow the usual settings for each method: RAR-G/RAR-D start from
1,000 points and add 10 per update from a 10,000-point pool; RAD and R3 keep
2,000 points; RAD/RAR-D sample with the ``k=2, c=0`` residual density.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import ConfigurationError
from .base import Sampler, StepContext, uniform_points

log = logging.getLogger(__name__)


def radical_inverse(i: int, base: int = 2) -> float:
    inv, f = 0.0, 1.0 / base
    while i > 0:
        inv += f * (i % base)
        i //= base
        f /= base
    return inv


def hammersley_unit(n: int) -> np.ndarray:
    """Unit-square Hammersley set ``(phi_2(i), i/n)`` for ``i = 0..n-1``."""
    if n < 1:
        raise ConfigurationError(f"need at least one point, got n={n}")
    return np.array([[radical_inverse(i), i / n] for i in range(n)])


def hammersley_points(n: int) -> np.ndarray:
    """Hammersley points mapped onto the interior of [-1, 1] x [0, 1].

    Zero unit coordinates would land on the closed boundary, so they are
    shifted by half of the smallest spacing (``1/(2n)``); all other points are
    plain affine images.
    """
    unit = hammersley_unit(n)
    unit[unit == 0.0] = 0.5 / n
    return np.column_stack([-1.0 + 2.0 * unit[:, 0], unit[:, 1]])


def residual_density(magnitudes, k: float = 2.0, c: float = 0.0) -> np.ndarray:
    """Normalized sampling probabilities ``p ~ |r|^k / mean(|r|^k) + c``.

    An all-zero residual vector (with ``c = 0``) falls back to uniform.
    """
    m = np.abs(np.asarray(magnitudes, dtype=np.float64)) ** k
    mean = m.mean()
    if mean == 0.0:
        if c == 0.0:
            log.warning("all residuals are zero; sampling uniformly from the pool")
            return np.full(m.shape, 1.0 / m.size)
        w = np.full(m.shape, c)
    else:
        w = m / mean + c
    return w / w.sum()


def draw_distinct(p: np.ndarray, count: int, rng) -> np.ndarray:
    """Draw ``count`` indices i.i.d. from ``p``, re-drawing duplicates until all are distinct."""
    support = np.count_nonzero(p)
    if count > support:
        raise ConfigurationError(f"cannot draw {count} distinct indices from support {support}")
    chosen: list = []
    seen = set()
    while len(chosen) < count:
        for i in rng.choice(p.size, size=count - len(chosen), replace=True, p=p):
            if i not in seen:
                seen.add(int(i))
                chosen.append(int(i))
    return np.array(chosen, dtype=np.int64)


def rar_g_update(points: np.ndarray, pool_magnitudes, pool: np.ndarray, count: int = 10
                 ) -> np.ndarray:
    """Append the ``count`` pool points of largest residual magnitude."""
    mags = np.abs(np.asarray(pool_magnitudes, dtype=np.float64))
    if count > pool.shape[0]:
        raise ConfigurationError(f"count {count} exceeds pool size {pool.shape[0]}")
    if count <= 0:
        return points.copy()
    # stable sort: ties keep the lower pool index
    top = np.argsort(-mags, kind="stable")[:count]
    return np.vstack([points, pool[top]])


def rad_update(pool_magnitudes, pool: np.ndarray, n: int, rng, k: float = 2.0, c: float = 0.0,
               distinct: bool = False) -> np.ndarray:
    """Resample ``n`` points from the pool with the residual density.

    With ``distinct=False`` the draws are plain i.i.d. (duplicates possible);
    the sampler uses ``distinct=True`` so the training set has no repeats.
    """
    p = residual_density(pool_magnitudes, k, c)
    if distinct:
        idx = draw_distinct(p, n, rng)
    else:
        idx = rng.choice(p.size, size=n, replace=True, p=p)
    return pool[idx]


def rar_d_update(points: np.ndarray, pool_magnitudes, pool: np.ndarray, count: int, rng,
                 k: float = 2.0, c: float = 0.0, distinct: bool = True) -> np.ndarray:
    if count <= 0:
        return points.copy()
    return np.vstack([points, rad_update(pool_magnitudes, pool, count, rng, k, c, distinct)])


def r3_update(points: np.ndarray, magnitudes, rng):
    """Keep points with ``|r| >= mean(|r|)``, replace the rest with uniform draws.

    Returns ``(new_points, retained_mask)``.
    """
    mags = np.abs(np.asarray(magnitudes, dtype=np.float64))
    keep = mags >= mags.mean()
    released = int((~keep).sum())
    if released == 0:
        return points.copy(), keep
    return np.vstack([points[keep], uniform_points(released, rng)]), keep


class UniformSampler(Sampler):
    name = "uniform"

    def __init__(self, n_points: int = 2000):
        super().__init__()
        self.n_points = n_points

    def initialize(self, rng, residual_fn):
        self.rng = rng
        self.points = uniform_points(self.n_points, rng)



class HammersleySampler(UniformSampler):
    name = "hammersley"

    def initialize(self, rng, residual_fn):
        self.rng = rng
        self.points = hammersley_points(self.n_points)


class RandomResampleSampler(UniformSampler):
    name = "random_resample"

    def __init__(self, n_points: int = 2000, interval: int = 1000):
        super().__init__(n_points)
        self.interval = interval

    def after_step(self, ctx: StepContext):
        if ctx.iteration % self.interval == 0:
            self.points = uniform_points(self.n_points, self.rng)
            self.updates.append({"iteration": ctx.iteration, "size": self.n_points})


class _PoolSampler(Sampler):
    def __init__(self, n_initial, interval=1000, pool_size=10_000):
        super().__init__()
        if interval < 1:
            raise ConfigurationError("interval must be >= 1")
        self.n_initial = n_initial
        self.interval = interval
        self.pool_size = pool_size

    def initialize(self, rng, residual_fn):
        self.rng = rng
        self.points = uniform_points(self.n_initial, rng)

    def after_step(self, ctx: StepContext):
        if ctx.iteration % self.interval:
            return
        pool = uniform_points(self.pool_size, self.rng)
        mags = np.abs(ctx.residual_fn(pool))
        self.points = self._refresh(pool, mags)
        self.updates.append({"iteration": ctx.iteration, "size": int(self.points.shape[0])})


class RARGSampler(_PoolSampler):
    name = "rar_g"

    def __init__(self, n_initial=1000, interval=1000, pool_size=10_000, count=10):
        super().__init__(n_initial, interval, pool_size)
        self.count = count

    def _refresh(self, pool, mags):
        return rar_g_update(self.points, mags, pool, self.count)


class RARDSampler(_PoolSampler):
    name = "rar_d"

    def __init__(self, n_initial=1000, interval=1000, pool_size=10_000, count=10, k=2.0, c=0.0):
        super().__init__(n_initial, interval, pool_size)
        self.count, self.k, self.c = count, k, c

    def _refresh(self, pool, mags):
        return rar_d_update(self.points, mags, pool, self.count, self.rng, self.k, self.c)


class RADSampler(_PoolSampler):
    name = "rad"

    def __init__(self, n_points=2000, interval=1000, pool_size=10_000, k=2.0, c=0.0):
        super().__init__(n_points, interval, pool_size)
        self.n_points = n_points
        self.k, self.c = k, c

    def _refresh(self, pool, mags):
        return rad_update(mags, pool, self.n_points, self.rng, self.k, self.c, distinct=True)


class R3Sampler(Sampler):
    name = "r3"
    needs_train_residuals = True

    def __init__(self, n_points: int = 2000):
        super().__init__()
        self.n_points = n_points

    def initialize(self, rng, residual_fn):
        self.rng = rng
        self.points = uniform_points(self.n_points, rng)

    def after_step(self, ctx: StepContext):
        mags = ctx.train_residuals
        if mags is None:
            mags = ctx.residual_fn(self.points)
        self.points, keep = r3_update(self.points, mags, self.rng)

