"""Tanh MLP evaluation with exact input and parameter derivatives.

The network is small and fixed in form (dense layers, tanh hidden
activations, linear output), so derivatives are propagated analytically
layer by layer instead of through a general autodiff tape:

* input derivatives use forward-mode Taylor propagation of first and
  second order tangents along ``x`` and ``t`` separately;
* parameter gradients reverse-accumulate through that forward pass,
  which gives gradients of losses built from second-order input
  derivatives.

Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .errors import ConfigurationError, NumericalError

QUANTITIES = ("u", "u_x", "u_t", "u_xx", "u_tt")


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 2
    hidden_layers: int = 5
    hidden_width: int = 64
    activation: str = "tanh"
    output_dim: int = 1

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ConfigurationError("hidden_layers and hidden_width must be >= 1")
        if self.input_dim not in (2, 3):
            raise ConfigurationError(f"input_dim must be 2 or 3, got {self.input_dim}")
        if self.activation != "tanh":
            raise ConfigurationError(f"unsupported activation {self.activation!r}")
        if self.output_dim != 1:
            raise ConfigurationError("only scalar outputs are supported")

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]


class NetworkParams:
    """Weights and biases stored in one flat float64 vector.

    Layer ``l`` owns a row-major ``(fan_in, fan_out)`` weight block followed
    by a ``fan_out`` bias block. ``weights`` and ``biases`` are views into
    ``flat``, so optimizers can update the flat vector in place.
    """

    def __init__(self, flat: np.ndarray, sizes: Sequence[int]):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2:
            raise ConfigurationError("a network needs at least an input and an output size")
        expected = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (expected,):
            raise ConfigurationError(
                f"flat parameter vector has shape {flat.shape}, expected ({expected},)")
        self.flat = flat
        self.sizes = sizes
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        self._offsets: List[Tuple[int, int, int]] = []
        pos = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w_end = pos + fan_in * fan_out
            self.weights.append(flat[pos:w_end].reshape(fan_in, fan_out))
            self.biases.append(flat[w_end:w_end + fan_out])
            self._offsets.append((pos, w_end, w_end + fan_out))
            pos = w_end + fan_out

    @classmethod
    def from_layers(cls, layers: Sequence[Tuple[np.ndarray, np.ndarray]]) -> "NetworkParams":
        sizes = [np.shape(layers[0][0])[0]] + [np.shape(w)[1] for w, _ in layers]
        parts = []
        for w, b in layers:
            parts.append(np.asarray(w, dtype=np.float64).ravel())
            parts.append(np.asarray(b, dtype=np.float64).ravel())
        return cls(np.concatenate(parts), sizes)

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "NetworkParams":
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        return cls(np.zeros(n), sizes)

    @property
    def size(self) -> int:
        return self.flat.size

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def layers(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        return zip(self.weights, self.biases)

    def layer_slice(self, index: int) -> slice:
        start, _, stop = self._offsets[index]
        return slice(start, stop)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.flat.copy(), self.sizes)

    def with_flat(self, flat: np.ndarray) -> "NetworkParams":
        return NetworkParams(flat, self.sizes)


@dataclass(frozen=True)
class DerivativeRequest:
    u: bool = True
    u_x: bool = False
    u_t: bool = False
    u_xx: bool = False
    u_tt: bool = False

    def __post_init__(self):
        if not any(getattr(self, q) for q in QUANTITIES):
            raise ConfigurationError("derivative request is empty")

    @classmethod
    def of(cls, *names: str) -> "DerivativeRequest":
        unknown = set(names) - set(QUANTITIES)
        if unknown:
            raise ConfigurationError(f"unknown derivative quantities {sorted(unknown)}")
        return cls(**{q: (q in names) for q in QUANTITIES})

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(q for q in QUANTITIES if getattr(self, q))

    def covers(self, names) -> bool:
        return all(getattr(self, q) for q in names)


@dataclass
class DerivativeBundle:
    """Per-point values of the requested quantities; unrequested ones are None."""

    u: Optional[np.ndarray] = None
    u_x: Optional[np.ndarray] = None
    u_t: Optional[np.ndarray] = None
    u_xx: Optional[np.ndarray] = None
    u_tt: Optional[np.ndarray] = None

    def __getitem__(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        if value is None:
            raise KeyError(f"{name} was not requested")
        return value

    def items(self):
        for q in QUANTITIES:
            value = getattr(self, q)
            if value is not None:
                yield q, value


def _zero_base(x):
    z = np.zeros_like(x)
    return z, z, z


def _unit_factor(x, t):
    one, zero = np.ones_like(x), np.zeros_like(x)
    return {"g": one, "g_x": zero, "g_xx": zero, "g_t": zero, "g_tt": zero}


@dataclass(frozen=True)
class OutputTransform:
    """Strong-enforcement composition ``u_hat = base(x) + factor(x, t) * net(embed(x, t))``.

    ``base`` returns ``(u0, u0', u0'')``; ``factor`` returns a dict with keys
    ``g, g_x, g_xx, g_t, g_tt``. ``embedding`` is ``"raw"`` for net inputs
    ``(x, t)`` or ``"periodic_x"`` for ``(cos pi x, sin pi x, t)``.
    """

    name: str = "identity"
    base: Callable = field(default=_zero_base, repr=False)
    factor: Callable = field(default=_unit_factor, repr=False)
    embedding: str = "raw"

    def __post_init__(self):
        if self.embedding not in ("raw", "periodic_x"):
            raise ConfigurationError(f"unknown input embedding {self.embedding!r}")

    @property
    def input_dim(self) -> int:
        return 2 if self.embedding == "raw" else 3

    def embed(self, x, t, need_x=False, need_xx=False, need_t=False):
        """Network inputs and their x/t derivatives (second ones None when zero)."""
        n = x.shape[0]
        if self.embedding == "raw":
            z = np.column_stack([x, t])
            zx = np.tile([1.0, 0.0], (n, 1)) if need_x else None
            zt = np.tile([0.0, 1.0], (n, 1)) if need_t else None
            return z, (zx, None), (zt, None)
        c, s = np.cos(np.pi * x), np.sin(np.pi * x)
        z = np.column_stack([c, s, t])
        zx = zxx = zt = None
        if need_x:
            zx = np.column_stack([-np.pi * s, np.pi * c, np.zeros(n)])
        if need_xx:
            zxx = np.column_stack([-np.pi ** 2 * c, -np.pi ** 2 * s, np.zeros(n)])
        if need_t:
            zt = np.tile([0.0, 0.0, 1.0], (n, 1))
        return z, (zx, zxx), (zt, None)


IDENTITY = OutputTransform()


def _split_batch(batch) -> Tuple[np.ndarray, np.ndarray]:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != 2 or batch.shape[0] == 0:
        raise ConfigurationError(f"expected a nonempty (n, 2) batch of (x, t), got {batch.shape}")
    bad = np.flatnonzero(~np.all(np.isfinite(batch), axis=1))
    if bad.size:
        raise NumericalError(f"non-finite input at point index {bad[0]}")
    return batch[:, 0], batch[:, 1]


def evaluate(params: NetworkParams, inputs) -> np.ndarray:
    """Raw network output for each row of ``inputs`` (shape ``(n, input_dim)``)."""
    h = np.asarray(inputs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != params.input_dim:
        raise ConfigurationError(
            f"inputs of shape {h.shape} do not match network input_dim {params.input_dim}")
    if h.shape[0] == 0:
        raise ConfigurationError("empty batch")
    last = params.num_layers - 1
    for i, (w, b) in enumerate(params.layers()):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return h[:, 0]


class _Tape:
    """Forward Taylor propagation through the MLP, kept for the reverse sweep.

    Values and tangents travel together as one ``(C, n, width)`` channel block
    (layout in :mod:`._kernels`), so each layer costs a single matmul forward
    and one backward; only channel 0 receives the bias.
    """

    def __init__(self, params, z, streams, second):
        # streams: {"x": (d1, d2), "t": (d1, d2)}; d2 is None when identically zero
        # second: {"x": bool, "t": bool}, whether second-order tangents are carried
        self.params = params
        self.keys = list(streams)
        carried = [k for k in self.keys if second[k]]
        self.first = np.arange(1, 1 + len(self.keys), dtype=np.int64)
        self.second = np.full(len(self.keys), -1, dtype=np.int64)
        for j, k in enumerate(carried):
            self.second[self.keys.index(k)] = 1 + len(self.keys) + j
        n = z.shape[0]
        block = np.zeros((1 + len(self.keys) + len(carried), n, z.shape[1]))
        block[0] = z
        for f, q, k in zip(self.first, self.second, self.keys):
            d1, d2 = streams[k]
            block[f] = d1
            if q >= 0 and d2 is not None:
                block[q] = d2
        self.inputs, self.preacts = [], []
        last = params.num_layers - 1
        for i, (w, b) in enumerate(params.layers()):
            a = (block.reshape(-1, w.shape[0]) @ w).reshape(block.shape[0], n, w.shape[1])
            a[0] += b
            self.inputs.append(block)
            self.preacts.append(a)
            if i < last:
                block = _kernels.forward(a, self.first, self.second)
        out = self.preacts[-1][:, :, 0]
        self.out = out[0]
        self.out_d = {k: (out[f], None if q < 0 else out[q])
                      for f, q, k in zip(self.first, self.second, self.keys)}

    def backward(self, out_bar, out_d_bar) -> np.ndarray:
        """Gradient of ``sum(out_bar*N) + sum(bar*dN)`` with respect to the flat parameters."""
        params = self.params
        grad = np.zeros(params.size)
        last = params.num_layers - 1
        abar = np.zeros(self.preacts[-1].shape)
        abar[0, :, 0] = out_bar
        for f, q, k in zip(self.first, self.second, self.keys):
            b1, b2 = out_d_bar[k]
            abar[f, :, 0] = b1
            if q >= 0 and b2 is not None:
                abar[q, :, 0] = b2
        for i in range(last, -1, -1):
            w = params.weights[i]
            if i < last:
                # abar holds the adjoint of this layer's activation output block
                abar = _kernels.backward(abar, self.preacts[i], self.inputs[i + 1][0],
                                         self.first, self.second)
            flat_in = self.inputs[i].reshape(-1, w.shape[0])
            flat_bar = abar.reshape(-1, w.shape[1])
            gw = flat_in.T @ flat_bar
            gb = abar[0].sum(axis=0)
            grad[params.layer_slice(i)] = np.concatenate([gw.ravel(), gb])
            if i > 0:
                abar = (flat_bar @ w.T).reshape(abar.shape[0], abar.shape[1], w.shape[0])
        return grad


class _Composition:
    """Forward pass plus the transform coefficients needed to assemble u_hat."""

    def __init__(self, params, batch, request, transform):
        x, t = _split_batch(batch)
        if transform.input_dim != params.input_dim:
            raise ConfigurationError(
                f"transform {transform.name!r} feeds {transform.input_dim} inputs, "
                f"network expects {params.input_dim}")
        self.request = request
        need_x = request.u_x or request.u_xx
        need_t = request.u_t or request.u_tt
        z, (zx, zxx), (zt, ztt) = transform.embed(x, t, need_x, request.u_xx, need_t)
        streams, second = {}, {}
        if need_x:
            streams["x"] = (zx, zxx if request.u_xx else None)
            second["x"] = request.u_xx
        if need_t:
            streams["t"] = (zt, ztt if request.u_tt else None)
            second["t"] = request.u_tt
        self.tape = _Tape(params, z, streams, second)
        self.base = transform.base(x)
        self.coef = transform.factor(x, t)

    def bundle(self) -> DerivativeBundle:
        req, c = self.request, self.coef
        u0, u0x, u0xx = self.base
        n = self.tape.out
        nx, nxx = self.tape.out_d.get("x", (None, None))
        nt, ntt = self.tape.out_d.get("t", (None, None))
        # a second tangent left as None is identically zero (affine-only network)
        nxx = 0.0 if nxx is None else nxx
        ntt = 0.0 if ntt is None else ntt
        out = DerivativeBundle()
        if req.u:
            out.u = u0 + c["g"] * n
        if req.u_x:
            out.u_x = u0x + c["g_x"] * n + c["g"] * nx
        if req.u_xx:
            out.u_xx = u0xx + c["g_xx"] * n + 2.0 * c["g_x"] * nx + c["g"] * nxx
        if req.u_t:
            out.u_t = c["g_t"] * n + c["g"] * nt
        if req.u_tt:
            out.u_tt = c["g_tt"] * n + 2.0 * c["g_t"] * nt + c["g"] * ntt
        return out

    def pull_back(self, adj: Dict[str, np.ndarray]) -> np.ndarray:
        """Map bundle adjoints onto the network output streams and reverse-sweep."""
        c = self.coef
        zero = np.zeros_like(self.tape.out)
        ub = adj.get("u", zero)
        uxb, uxxb = adj.get("u_x", zero), adj.get("u_xx", zero)
        utb, uttb = adj.get("u_t", zero), adj.get("u_tt", zero)
        n_bar = (c["g"] * ub + c["g_x"] * uxb + c["g_xx"] * uxxb
                 + c["g_t"] * utb + c["g_tt"] * uttb)
        d_bar = {}
        if "x" in self.tape.out_d:
            d_bar["x"] = (c["g"] * uxb + 2.0 * c["g_x"] * uxxb,
                          c["g"] * uxxb if self.request.u_xx else None)
        if "t" in self.tape.out_d:
            d_bar["t"] = (c["g"] * utb + 2.0 * c["g_t"] * uttb,
                          c["g"] * uttb if self.request.u_tt else None)
        return self.tape.backward(n_bar, d_bar)


def _check_bundle(bundle: DerivativeBundle):
    for name, value in bundle.items():
        bad = np.flatnonzero(~np.isfinite(value))
        if bad.size:
            raise NumericalError(f"non-finite {name} at point index {bad[0]}")


def input_derivatives(params: NetworkParams, batch, request: DerivativeRequest,
                      transform: OutputTransform = IDENTITY) -> DerivativeBundle:
    """Exact derivatives of the transformed output at each ``(x, t)`` in ``batch``."""
    bundle = _Composition(params, batch, request, transform).bundle()
    _check_bundle(bundle)
    return bundle


def parameter_gradient(params: NetworkParams, batch, request: DerivativeRequest,
                       objective: Callable, transform: OutputTransform = IDENTITY
                       ) -> Tuple[float, np.ndarray]:
    """Value and parameter gradient of a scalar objective of the derivative bundle.

    ``objective(bundle)`` must return ``(value, adjoints)`` where ``adjoints``
    maps quantity names to d(value)/d(quantity) arrays aligned with the batch.
    """
    comp = _Composition(params, batch, request, transform)
    bundle = comp.bundle()
    _check_bundle(bundle)
    value, adj = objective(bundle)
    grad = comp.pull_back(adj)
    if not np.all(np.isfinite(grad)):
        for i in range(params.num_layers):
            if not np.all(np.isfinite(grad[params.layer_slice(i)])):
                raise NumericalError(f"non-finite gradient in layer {i}")
    return float(value), grad
