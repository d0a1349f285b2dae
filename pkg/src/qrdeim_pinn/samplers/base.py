"""Sampler contract shared by the training loop and every strategy."""

from __future__ import annotations

import inspect
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from ..errors import ConfigurationError

SPACE = (-1.0, 1.0)
TIME = (0.0, 1.0)


def uniform_points(n: int, rng, domain=(SPACE, TIME)) -> np.ndarray:
    """``n`` uniform points in the interior ``(x0, x1) x (t0, t1]``, shape ``(n, 2)``."""
    if n < 1:
        raise ConfigurationError(f"need at least one point, got n={n}")
    (x0, x1), (t0, t1) = domain
    rng = np.random.default_rng(rng)
    u = rng.random((n, 2))
    # map [0, 1) to (x0, x1) and (t0, t1]; the open x end is hit with probability 0
    x = x0 + (x1 - x0) * u[:, 0]
    t = t1 - (t1 - t0) * u[:, 1]
    on_edge = x == x0
    while np.any(on_edge):
        x[on_edge] = x0 + (x1 - x0) * rng.random(int(on_edge.sum()))
        on_edge = x == x0
    return np.column_stack([x, t])


def fresh_points_excluding(n: int, exclude: np.ndarray, rng) -> np.ndarray:
    """Uniform interior points with none equal to a row of ``exclude`` or to each other."""
    taken = {tuple(p) for p in exclude}
    out: List[np.ndarray] = []
    while len(out) < n:
        for p in uniform_points(n - len(out), rng):
            key = tuple(p)
            if key not in taken:
                taken.add(key)
                out.append(p)
    return np.array(out).reshape(n, 2)


@dataclass
class StepContext:
    """What the training loop hands a sampler after each optimizer step.

    ``residual_fn`` evaluates PDE residuals with the current (post-step)
    parameters; ``train_residuals`` are the residuals on the current training
    set computed for the loss at this iteration (pre-step parameters).
    """

    iteration: int
    residual_fn: Callable[[np.ndarray], np.ndarray]
    train_residuals: Optional[np.ndarray] = None


class Sampler:
    """Base class for collocation strategies.

    Subclasses set ``self.points`` in :meth:`initialize` and may replace it in
    :meth:`after_step`. ``self.updates`` collects one dict per update for
    diagnostics.
    """

    name = "base"
    needs_train_residuals = False

    def __init__(self):
        self.points: Optional[np.ndarray] = None
        self.updates: List[Dict] = []
        self.rng = None

    def initialize(self, rng, residual_fn: Callable[[np.ndarray], np.ndarray]) -> None:
        raise NotImplementedError

    def after_step(self, ctx: StepContext) -> None:
        """Default: fixed training set."""

    def describe(self) -> Dict:
        """Name plus every constructor argument, read back from same-named attributes."""
        sig = inspect.signature(type(self).__init__)
        out = {"name": self.name}
        for param in list(sig.parameters.values())[1:]:
            out[param.name] = getattr(self, param.name)
        return out
