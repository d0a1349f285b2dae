"""Reference solutions on the (x, t) test grid and their on-disk cache.

Wave and convection have closed forms. Burgers uses the Cole-Hopf integral
representation evaluated with Gauss-Hermite quadrature whose order is
doubled until the grid values stop changing. Allen-Cahn is integrated with
a 512-mode Fourier pseudo-spectral discretization and ETDRK4 time stepping.

Cache file layout: one JSON header line (problem, nx, nt, solver parameters,
format version) terminated by ``\\n``, followed by ``nx * nt`` little-endian
float64 values in row-major order of the ``(nx, nt)`` array.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .errors import ConfigurationError, NumericalError
from .problems import (ALLEN_CAHN_DIFFUSION, ALLEN_CAHN_REACTION, BURGERS_VISCOSITY,
                       CONVECTION_SPEED, PROBLEM_NAMES)

FORMAT_VERSION = 1
MAGIC = "qrdeim-pinn-reference"


@dataclass(frozen=True)
class GridSpec:
    nx: int = 256
    nt: int = 100
    x_range: tuple = (-1.0, 1.0)
    t_range: tuple = (0.0, 1.0)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(*self.x_range, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(*self.t_range, self.nt)

    def points(self) -> np.ndarray:
        """All grid points as ``(nx * nt, 2)`` rows, x-major to match ``values.ravel()``."""
        xx, tt = np.meshgrid(self.x, self.t, indexing="ij")
        return np.column_stack([xx.ravel(), tt.ravel()])


@dataclass
class ReferenceGrid:
    problem: str
    grid: GridSpec
    values: np.ndarray           # (nx, nt)
    solver: Dict

    def flat(self) -> np.ndarray:
        return self.values.ravel()


def wave_exact(x, t):
    return (np.sin(np.pi * x) * np.cos(2 * np.pi * t)
            + 0.5 * np.sin(4 * np.pi * x) * np.cos(8 * np.pi * t))


def convection_exact(x, t, speed=CONVECTION_SPEED):
    # sin has period 2 = domain length, so the periodic wrap is automatic
    return np.sin(np.pi * (x - speed * t))


# ---------------------------------------------------------------- Burgers

def _cole_hopf_column(x, t, nu, order):
    z, w = np.polynomial.hermite.hermgauss(order)
    c = 2.0 * math.sqrt(nu * t)
    y = x[:, None] - c * z[None, :]
    expo = -np.cos(np.pi * y) / (2.0 * np.pi * nu)
    expo -= expo.max(axis=1, keepdims=True)
    weight = w[None, :] * np.exp(expo)
    return -(weight * np.sin(np.pi * y)).sum(axis=1) / weight.sum(axis=1)


def burgers_cole_hopf(x, t, nu=BURGERS_VISCOSITY, tol=1e-12, start_order=64,
                      max_order=4096):
    """Burgers solution with ``u(x, 0) = -sin(pi x)`` on an ``(len(x), len(t))`` grid.

    Returns ``(values, orders)`` where ``orders[j]`` is the quadrature order
    accepted for time ``t[j]`` (0 for ``t = 0``).
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = np.empty((x.size, t.size))
    orders = np.zeros(t.size, dtype=int)
    for j, tj in enumerate(t):
        if tj == 0.0:
            out[:, j] = -np.sin(np.pi * x)
            continue
        order = start_order
        prev = _cole_hopf_column(x, tj, nu, order)
        while True:
            order *= 2
            if order > max_order:
                raise NumericalError(
                    f"Cole-Hopf quadrature did not converge at t={tj} within order {max_order}")
            cur = _cole_hopf_column(x, tj, nu, order)
            if np.max(np.abs(cur - prev)) <= tol:
                break
            prev = cur
        out[:, j] = cur
        orders[j] = order
    return out, orders


# ------------------------------------------------------------- Allen-Cahn

def _etdrk4_coefficients(lin, h, contour_points=32):
    roots = np.exp(1j * np.pi * (np.arange(1, contour_points + 1) - 0.5) / contour_points)
    lr = h * lin[:, None] + roots[None, :]
    e = np.exp(h * lin)
    e2 = np.exp(h * lin / 2.0)
    q = h * np.real(np.mean((np.exp(lr / 2.0) - 1.0) / lr, axis=1))
    f1 = h * np.real(np.mean((-4.0 - lr + np.exp(lr) * (4.0 - 3.0 * lr + lr ** 2)) / lr ** 3, axis=1))
    f2 = h * np.real(np.mean((2.0 + lr + np.exp(lr) * (-2.0 + lr)) / lr ** 3, axis=1))
    f3 = h * np.real(np.mean((-4.0 - 3.0 * lr - lr ** 2 + np.exp(lr) * (4.0 - lr)) / lr ** 3, axis=1))
    return e, e2, q, f1, f2, f3


def _trig_interpolate(u_hat, n, x, length=2.0, x0=-1.0):
    """Evaluate the real trigonometric interpolant with rfft coefficients at ``x``."""
    m = np.arange(u_hat.size)
    weight = np.full(u_hat.size, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    phase = np.exp(2j * np.pi * np.outer(x - x0, m) / length)
    return np.real(phase @ (weight * u_hat / n))


def allen_cahn_etdrk4(x_out, t_out, modes=512, dt=1e-5, reaction_sign=1,
                      diffusion=ALLEN_CAHN_DIFFUSION, reaction=ALLEN_CAHN_REACTION):
    """Allen-Cahn ``u_t = D u_xx + s*R*(u^3 - u)`` from ``u0 = x^2 cos(pi x)``, periodic on [-1, 1).

    Between consecutive output times the step is ``interval / ceil(interval / dt)``,
    so no step exceeds ``dt`` and every output time is hit exactly.
    Returns an array of shape ``(len(x_out), len(t_out))``.
    """
    t_out = np.asarray(t_out, dtype=np.float64)
    if np.any(np.diff(t_out) <= 0) or t_out[0] < 0:
        raise ConfigurationError("output times must be non-negative and increasing")
    n = modes
    xs = -1.0 + 2.0 * np.arange(n) / n
    u = xs ** 2 * np.cos(np.pi * xs)
    k = np.pi * np.arange(n // 2 + 1)          # wavenumbers for period 2
    lin = -diffusion * k ** 2
    s = float(reaction_sign) * reaction

    def nonlinear(v_hat):
        v = np.fft.irfft(v_hat, n)
        return np.fft.rfft(s * (v ** 3 - v))

    v_hat = np.fft.rfft(u)
    out = np.empty((np.size(x_out), t_out.size))
    coeff_cache = {}
    now = 0.0
    for j, target in enumerate(t_out):
        span = target - now
        if span > 0:
            steps = int(math.ceil(span / dt - 1e-9))
            h = span / steps
            key = round(h, 18)
            if key not in coeff_cache:
                coeff_cache[key] = _etdrk4_coefficients(lin, h)
            e, e2, q, f1, f2, f3 = coeff_cache[key]
            for _ in range(steps):
                nv = nonlinear(v_hat)
                a = e2 * v_hat + q * nv
                na = nonlinear(a)
                b = e2 * v_hat + q * na
                nb = nonlinear(b)
                c = e2 * a + q * (2.0 * nb - nv)
                nc = nonlinear(c)
                v_hat = e * v_hat + f1 * nv + 2.0 * f2 * (na + nb) + f3 * nc
            now = target
        vals = _trig_interpolate(v_hat, n, np.asarray(x_out))
        if not np.all(np.isfinite(vals)):
            raise NumericalError(f"Allen-Cahn integration diverged before t={target}")
        out[:, j] = vals
    return out


# ----------------------------------------------------------- dispatch/cache

def reference_solution(problem: str, grid: GridSpec = GridSpec(), *, allen_cahn_sign: int = -1,
                       allen_cahn_dt: float = 1e-5, allen_cahn_modes: int = 512,
                       burgers_tol: float = 1e-12) -> ReferenceGrid:
    """Reference values of ``problem`` on ``grid``.

    ``allen_cahn_sign`` defaults to the conventional ``-1`` (reaction
    ``-5(u^3 - u)``), the sign under which the benchmark's phase-separation
    solution arises.
    """
    if problem not in PROBLEM_NAMES:
        raise ConfigurationError(f"unknown problem {problem!r}")
    x, t = grid.x, grid.t
    if problem == "wave":
        vals, solver = wave_exact(x[:, None], t[None, :]), {"method": "closed_form"}
    elif problem == "convection":
        vals, solver = convection_exact(x[:, None], t[None, :]), {"method": "closed_form"}
    elif problem == "burgers":
        vals, orders = burgers_cole_hopf(x, t, tol=burgers_tol)
        solver = {"method": "cole_hopf_gauss_hermite", "tol": burgers_tol,
                  "max_order": int(orders.max())}
    else:
        vals = allen_cahn_etdrk4(x, t, allen_cahn_modes, allen_cahn_dt, allen_cahn_sign)
        solver = {"method": "fourier_etdrk4", "modes": allen_cahn_modes, "dt": allen_cahn_dt,
                  "reaction_sign": allen_cahn_sign}
    return ReferenceGrid(problem, grid, np.ascontiguousarray(vals, dtype=np.float64), solver)


def _header(ref: ReferenceGrid) -> Dict:
    return {"format": MAGIC, "version": FORMAT_VERSION, "problem": ref.problem,
            "nx": ref.grid.nx, "nt": ref.grid.nt, "x_range": list(ref.grid.x_range),
            "t_range": list(ref.grid.t_range), "solver": ref.solver, "dtype": "<f8",
            "order": "row-major (nx, nt)"}


def save_reference(ref: ReferenceGrid, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write((json.dumps(_header(ref), sort_keys=True) + "\n").encode())
        fh.write(ref.values.astype("<f8").tobytes(order="C"))
    os.replace(tmp, path)
    return path


def load_reference(path) -> ReferenceGrid:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != MAGIC or header.get("version") != FORMAT_VERSION:
            raise ConfigurationError(f"{path} is not a version-{FORMAT_VERSION} reference file")
        nx, nt = header["nx"], header["nt"]
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != nx * nt:
        raise ConfigurationError(f"{path}: expected {nx * nt} values, found {data.size}")
    grid = GridSpec(nx, nt, tuple(header["x_range"]), tuple(header["t_range"]))
    return ReferenceGrid(header["problem"], grid, data.reshape(nx, nt).astype(np.float64),
                         header["solver"])


def default_cache_dir() -> Path:
    return Path(os.environ.get("QRDEIM_PINN_CACHE", Path.home() / ".cache" / "qrdeim_pinn"))


def cached_reference(problem: str, grid: GridSpec = GridSpec(), cache_dir=None,
                     allen_cahn_sign: int = -1) -> ReferenceGrid:
    """Load the reference from the cache directory, computing and saving it if absent."""
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    suffix = f"_sign{allen_cahn_sign:+d}" if problem == "allen_cahn" else ""
    path = cache_dir / f"{problem}{suffix}_{grid.nx}x{grid.nt}.ref"
    if path.exists():
        ref = load_reference(path)
        if ref.grid == grid:
            return ref
    kwargs = {"allen_cahn_sign": allen_cahn_sign} if problem == "allen_cahn" else {}
    ref = reference_solution(problem, grid, **kwargs)
    save_reference(ref, path)
    return ref
