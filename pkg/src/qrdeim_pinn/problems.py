"""Benchmark PDEs on [-1, 1] x [0, 1]: transforms, residuals, error metric."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from .autodiff import (DerivativeBundle, DerivativeRequest, NetworkParams, OutputTransform,
                       evaluate, input_derivatives, _split_batch)
from .errors import ConfigurationError, NumericalError

PI = np.pi
SPACE = (-1.0, 1.0)
TIME = (0.0, 1.0)

WAVE_SPEED_SQ = 4.0
CONVECTION_SPEED = 20.0
ALLEN_CAHN_DIFFUSION = 1e-4
ALLEN_CAHN_REACTION = 5.0
BURGERS_VISCOSITY = 0.01 / PI


# initial conditions with first and second x-derivatives

def _wave_u0(x):
    return (np.sin(PI * x) + 0.5 * np.sin(4 * PI * x),
            PI * np.cos(PI * x) + 2 * PI * np.cos(4 * PI * x),
            -PI ** 2 * np.sin(PI * x) - 8 * PI ** 2 * np.sin(4 * PI * x))


def _sine_u0(x):
    return np.sin(PI * x), PI * np.cos(PI * x), -PI ** 2 * np.sin(PI * x)


def _neg_sine_u0(x):
    u, ux, uxx = _sine_u0(x)
    return -u, -ux, -uxx


def _allen_cahn_u0(x):
    c, s = np.cos(PI * x), np.sin(PI * x)
    return (x * x * c,
            2 * x * c - PI * x * x * s,
            2 * c - 4 * PI * x * s - PI ** 2 * x * x * c)


# multiplicative factors that vanish where the conditions are imposed

def _t_squared_bubble(x, t):
    b = 1.0 - x * x
    return {"g": t * t * b, "g_x": -2 * x * t * t, "g_xx": -2 * t * t,
            "g_t": 2 * t * b, "g_tt": 2 * b}


def _t_bubble(x, t):
    b = 1.0 - x * x
    return {"g": t * b, "g_x": -2 * x * t, "g_xx": -2 * t,
            "g_t": b, "g_tt": np.zeros_like(x)}


def _t_only(x, t):
    zero = np.zeros_like(x)
    return {"g": t, "g_x": zero, "g_xx": zero, "g_t": np.ones_like(x), "g_tt": zero}


TRANSFORMS: Dict[str, OutputTransform] = {
    # t^2 so that u_t(x, 0) = 0 holds as well as u(x, 0) = u0
    "wave": OutputTransform("wave", _wave_u0, _t_squared_bubble, "raw"),
    "convection": OutputTransform("convection", _sine_u0, _t_only, "periodic_x"),
    "allen_cahn": OutputTransform("allen_cahn", _allen_cahn_u0, _t_bubble, "raw"),
    "burgers": OutputTransform("burgers", _neg_sine_u0, _t_bubble, "raw"),
}


@dataclass(frozen=True)
class ResidualForm:
    """Pointwise residual and its adjoint with respect to the bundle quantities."""

    name: str
    requires: Tuple[str, ...]
    residual: Callable[[DerivativeBundle], np.ndarray] = field(repr=False)
    adjoint: Callable[[DerivativeBundle, np.ndarray], Dict[str, np.ndarray]] = field(repr=False)


def _wave_form():
    return ResidualForm(
        "wave", ("u_xx", "u_tt"),
        lambda b: b.u_tt - WAVE_SPEED_SQ * b.u_xx,
        lambda b, r: {"u_tt": r, "u_xx": -WAVE_SPEED_SQ * r})


def _convection_form():
    return ResidualForm(
        "convection", ("u_x", "u_t"),
        lambda b: b.u_t + CONVECTION_SPEED * b.u_x,
        lambda b, r: {"u_t": r, "u_x": CONVECTION_SPEED * r})


def _allen_cahn_form(reaction_sign):
    # reaction_sign=+1: u_t = D u_xx + 5(u^3 - u), the literal form;
    # reaction_sign=-1: the conventional u_t = D u_xx - 5(u^3 - u).
    s = float(reaction_sign) * ALLEN_CAHN_REACTION

    def residual(b):
        return b.u_t - ALLEN_CAHN_DIFFUSION * b.u_xx - s * (b.u ** 3 - b.u)

    def adjoint(b, r):
        return {"u_t": r, "u_xx": -ALLEN_CAHN_DIFFUSION * r,
                "u": -s * (3.0 * b.u ** 2 - 1.0) * r}

    return ResidualForm("allen_cahn", ("u", "u_xx", "u_t"), residual, adjoint)


def _burgers_form():
    def residual(b):
        return b.u_t - BURGERS_VISCOSITY * b.u_xx + b.u * b.u_x

    def adjoint(b, r):
        return {"u_t": r, "u_xx": -BURGERS_VISCOSITY * r, "u": b.u_x * r, "u_x": b.u * r}

    return ResidualForm("burgers", ("u", "u_x", "u_xx", "u_t"), residual, adjoint)


@dataclass(frozen=True)
class PDEProblem:
    name: str
    transform: OutputTransform
    form: ResidualForm
    allen_cahn_sign: int = 1
    spatial_domain: Tuple[float, float] = SPACE
    time_domain: Tuple[float, float] = TIME

    @property
    def derivative_request(self) -> DerivativeRequest:
        return DerivativeRequest.of(*self.form.requires)

    @property
    def input_embedding(self) -> str:
        return self.transform.embedding

    @property
    def input_dim(self) -> int:
        return self.transform.input_dim


PROBLEM_NAMES = ("wave", "convection", "allen_cahn", "burgers")


def get_problem(name: str, allen_cahn_sign: int = 1) -> PDEProblem:
    """Look up a benchmark by name.

    ``allen_cahn_sign`` selects the reaction term for Allen-Cahn: ``+1`` keeps
    ``+5(u^3 - u)`` on the right-hand side, ``-1`` uses ``-5(u^3 - u)``.
    """
    if name not in PROBLEM_NAMES:
        raise ConfigurationError(f"unknown problem {name!r}; expected one of {PROBLEM_NAMES}")
    if allen_cahn_sign not in (1, -1):
        raise ConfigurationError("allen_cahn_sign must be +1 or -1")
    forms = {"wave": _wave_form, "convection": _convection_form, "burgers": _burgers_form,
             "allen_cahn": lambda: _allen_cahn_form(allen_cahn_sign)}
    return PDEProblem(name, TRANSFORMS[name], forms[name](),
                      allen_cahn_sign if name == "allen_cahn" else 1)


def transformed_output(problem: PDEProblem, params: NetworkParams, batch) -> np.ndarray:
    x, t = _split_batch(batch)
    z, _, _ = problem.transform.embed(x, t)
    u0, _, _ = problem.transform.base(x)
    return u0 + problem.transform.factor(x, t)["g"] * evaluate(params, z)


def residual_from_bundle(problem: PDEProblem, bundle: DerivativeBundle) -> np.ndarray:
    r = problem.form.residual(bundle)
    bad = np.flatnonzero(~np.isfinite(r))
    if bad.size:
        raise NumericalError(f"non-finite residual at point index {bad[0]}")
    return r


def residual(problem: PDEProblem, params: NetworkParams, batch) -> np.ndarray:
    bundle = input_derivatives(params, batch, problem.derivative_request, problem.transform)
    return residual_from_bundle(problem, bundle)


def mse_objective(problem: PDEProblem):
    """Mean squared residual as an objective for :func:`parameter_gradient`."""

    def objective(bundle):
        r = residual_from_bundle(problem, bundle)
        n = r.shape[0]
        return float(np.dot(r, r) / n), problem.form.adjoint(bundle, 2.0 * r / n)

    return objective


def relative_l2(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ConfigurationError(f"length mismatch {pred.shape} vs {truth.shape}")
    denom = np.linalg.norm(truth)
    if denom == 0.0:
        raise NumericalError("undefined relative error: truth has zero norm")
    return float(np.linalg.norm(truth - pred) / denom)
