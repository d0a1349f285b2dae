"""Network initialization, Adam with cosine annealing, and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import NetworkConfig, NetworkParams, parameter_gradient
from .errors import ConfigurationError, NumericalError
from .problems import PDEProblem, mse_objective, residual
from .samplers.base import Sampler, StepContext, uniform_points

log = logging.getLogger(__name__)


def init_network(config: NetworkConfig, rng) -> NetworkParams:
    """Glorot-uniform weights and zero biases."""
    rng = np.random.default_rng(rng)
    sizes = config.layer_sizes
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-bound, bound, (fan_in, fan_out)), np.zeros(fan_out)))
    return NetworkParams.from_layers(layers)


def cosine_lr(iteration: int, total: int, base: float) -> float:
    if total <= 0:
        raise ConfigurationError("total iterations must be positive")
    if not 0 <= iteration <= total:
        raise ConfigurationError(f"iteration {iteration} outside [0, {total}]")
    return max(0.0, base * 0.5 * (1.0 + math.cos(math.pi * iteration / total)))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, betas=(0.9, 0.999), eps=1e-8) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, betas[0], betas[1], eps)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, rate: float
              ) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise ConfigurationError(f"gradient shape {grad.shape} != parameter shape {params.shape}")
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise NumericalError(f"non-finite gradient at {bad.size} entries (first index {bad[0]})")
    b1, b2 = state.beta1, state.beta2
    step = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** step)
    v_hat = v / (1.0 - b2 ** step)
    new = params - rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, step, b1, b2, state.eps)


@dataclass
class TrainConfig:
    max_iterations: int = 100_000
    base_lr: float = 1e-3
    validation_size: int = 10_000
    validation_interval: int = 1_000
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    checkpoint_on_best_val: bool = True
    seed: int = 0
    hidden_layers: int = 5
    hidden_width: int = 64
    dump_iterations: Sequence[int] = ()

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.base_lr <= 0:
            raise ConfigurationError("base_lr must be positive")
        if not all(0.0 < b < 1.0 for b in self.adam_betas):
            raise ConfigurationError("adam betas must lie in (0, 1)")
        if self.validation_size < 1 or self.validation_interval < 1:
            raise ConfigurationError("validation_size and validation_interval must be >= 1")
        self.adam_betas = tuple(self.adam_betas)
        self.dump_iterations = tuple(int(i) for i in self.dump_iterations)


@dataclass
class RunRecord:
    config: Dict
    seed: int
    train_loss: List[float] = field(default_factory=list)
    learning_rate: List[float] = field(default_factory=list)
    val_iterations: List[int] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    early_fraction: List[float] = field(default_factory=list)
    point_history: Dict[int, np.ndarray] = field(default_factory=dict)
    sampler_updates: List[Dict] = field(default_factory=list)
    best_val_loss: float = math.inf
    best_iteration: int = 0
    best_params: Optional[np.ndarray] = None
    final_params: Optional[np.ndarray] = None
    network_sizes: Tuple[int, ...] = ()
    final_error: Optional[float] = None
    failed_at: Optional[int] = None
    failure: Optional[str] = None

    def best_network(self) -> NetworkParams:
        return NetworkParams(self.best_params, self.network_sizes)


def validation_loss(problem: PDEProblem, params: NetworkParams, points: np.ndarray,
                    chunk: int = 5_000) -> float:
    total = 0.0
    for start in range(0, points.shape[0], chunk):
        r = residual(problem, params, points[start:start + chunk])
        total += float(np.dot(r, r))
    return total / points.shape[0]


def _seed_streams(seed: int):
    init, val, sampler = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(val), np.random.default_rng(sampler)


def _loss_and_grad(problem, params, points, request, objective, keep_residuals):
    if not keep_residuals:
        loss, grad = parameter_gradient(params, points, request, objective, problem.transform)
        return loss, grad, None
    # keep the loss-pass residuals for samplers that reuse them
    captured = {}

    def capture(bundle):
        value, adj = objective(bundle)
        captured["r"] = problem.form.residual(bundle)
        return value, adj

    loss, grad = parameter_gradient(params, points, request, capture, problem.transform)
    return loss, grad, captured["r"]


def train(problem: PDEProblem, sampler: Sampler, cfg: TrainConfig, config_echo=None,
          progress_every: int = 0) -> RunRecord:
    """Run ``cfg.max_iterations`` full-batch Adam steps on the sampler's training set.

    All randomness derives from ``cfg.seed``. A non-finite loss or any other
    :class:`NumericalError` stops training early; the returned record then has
    ``failed_at`` and ``failure`` set and keeps everything recorded so far.
    """
    init_rng, val_rng, sampler_rng = _seed_streams(cfg.seed)
    net_cfg = NetworkConfig(input_dim=problem.input_dim, hidden_layers=cfg.hidden_layers,
                            hidden_width=cfg.hidden_width)
    params = init_network(net_cfg, init_rng)
    val_points = uniform_points(cfg.validation_size, val_rng)
    objective = mse_objective(problem)
    request = problem.derivative_request
    state = AdamState.zeros(params.size, cfg.adam_betas, cfg.adam_eps)

    record = RunRecord(config=dict(config_echo or {"train": asdict(cfg)}), seed=cfg.seed,
                       network_sizes=params.sizes)
    dumps = set(cfg.dump_iterations)

    def residual_fn(points):
        return residual(problem, params, points)

    sampler.initialize(sampler_rng, residual_fn)
    if 0 in dumps:
        record.point_history[0] = sampler.points.copy()
    best = params.flat.copy()

    for it in range(1, cfg.max_iterations + 1):
        try:
            loss, grad, train_r = _loss_and_grad(problem, params, sampler.points, request,
                                                 objective, sampler.needs_train_residuals)
            if not math.isfinite(loss):
                raise NumericalError("non-finite training loss")
            rate = cosine_lr(it - 1, cfg.max_iterations, cfg.base_lr)
            new_flat, state = adam_step(state, params.flat, grad, rate)
            params = params.with_flat(new_flat)
            record.train_loss.append(loss)
            record.learning_rate.append(rate)

            sampler.after_step(StepContext(it, residual_fn, train_r))
            record.early_fraction.append(float(np.mean(sampler.points[:, 1] < 0.5)))
            if it in dumps:
                record.point_history[it] = sampler.points.copy()

            if it % cfg.validation_interval == 0 or it == cfg.max_iterations:
                vl = validation_loss(problem, params, val_points)
                if not math.isfinite(vl):
                    raise NumericalError("non-finite validation loss")
                record.val_iterations.append(it)
                record.val_loss.append(vl)
                if vl < record.best_val_loss:
                    record.best_val_loss = vl
                    record.best_iteration = it
                    best = params.flat.copy()
        except NumericalError as exc:
            record.failed_at = it
            record.failure = f"iteration {it}: {exc}"
            log.error("training aborted at %s", record.failure)
            break
        if progress_every and it % progress_every == 0:
            log.info("iter %d loss %.3e lr %.2e |T|=%d", it, loss, rate, sampler.points.shape[0])

    if not cfg.checkpoint_on_best_val or not record.val_loss:
        best = params.flat.copy()
        if not record.val_loss:
            record.best_iteration = len(record.train_loss)
    record.best_params = best
    record.final_params = params.flat.copy()
    record.sampler_updates = list(sampler.updates)
    return record
