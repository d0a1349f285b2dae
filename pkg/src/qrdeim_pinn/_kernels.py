"""Elementwise Taylor rules for tanh layers, fused with numba when available.

Layer state is a channel block of shape ``(C, n, w)``: channel 0 holds values,
``first[s]`` the first-order tangent of stream ``s`` and ``second[s]`` its
second-order tangent (``-1`` when that stream carries none). Forward:

    h = tanh(a),  h1 = s1 a1,  h2 = s2 a1^2 + s1 a2

with ``s1 = 1 - h^2``, ``s2 = -2 h s1``. Backward applies the adjoint of the
same rules, where ``s3 = ds2/da = -2 s1 (s1 - 2 h^2)``.

Set ``QRDEIM_PINN_BACKEND=numpy`` to force the plain numpy path.
"""

from __future__ import annotations

import ctypes
import logging
import os
import sys

import numpy as np

log = logging.getLogger(__name__)


def forward_numpy(a, first, second):
    out = np.empty_like(a)
    h = np.tanh(a[0])
    s1 = 1.0 - h * h
    s2 = -2.0 * h * s1
    out[0] = h
    for f, q in zip(first, second):
        out[f] = s1 * a[f]
        if q >= 0:
            out[q] = s2 * a[f] * a[f] + s1 * a[q]
    return out


def backward_numpy(hbar, a, h, first, second):
    abar = np.empty_like(a)
    s1 = 1.0 - h * h
    s2 = -2.0 * h * s1
    s1bar = np.zeros_like(h)
    s2bar = np.zeros_like(h)
    for f, q in zip(first, second):
        abar[f] = s1 * hbar[f]
        s1bar += hbar[f] * a[f]
        if q >= 0:
            abar[f] += 2.0 * s2 * a[f] * hbar[q]
            abar[q] = s1 * hbar[q]
            s1bar += hbar[q] * a[q]
            s2bar += hbar[q] * a[f] * a[f]
    s3 = -2.0 * s1 * (s1 - 2.0 * h * h)
    abar[0] = s1 * hbar[0] + s2 * s1bar + s3 * s2bar
    return abar


def _build_numba():
    import numba

    @numba.njit(cache=True)
    def fused_forward(a, h_all, first, second):
        c, n, w = a.shape
        out = np.empty_like(a)
        for i in range(n):
            for j in range(w):
                h = h_all[i, j]
                s1 = 1.0 - h * h
                s2 = -2.0 * h * s1
                out[0, i, j] = h
                for s in range(first.size):
                    f = first[s]
                    q = second[s]
                    a1 = a[f, i, j]
                    out[f, i, j] = s1 * a1
                    if q >= 0:
                        out[q, i, j] = s2 * a1 * a1 + s1 * a[q, i, j]
        return out

    @numba.njit(cache=True)
    def backward(hbar, a, h, first, second):
        c, n, w = a.shape
        abar = np.empty_like(a)
        for i in range(n):
            for j in range(w):
                hv = h[i, j]
                s1 = 1.0 - hv * hv
                s2 = -2.0 * hv * s1
                s1bar = 0.0
                s2bar = 0.0
                for s in range(first.size):
                    f = first[s]
                    q = second[s]
                    a1 = a[f, i, j]
                    g1 = hbar[f, i, j]
                    s1bar += g1 * a1
                    if q >= 0:
                        g2 = hbar[q, i, j]
                        abar[f, i, j] = s1 * g1 + 2.0 * s2 * a1 * g2
                        abar[q, i, j] = s1 * g2
                        s1bar += g2 * a[q, i, j]
                        s2bar += g2 * a1 * a1
                    else:
                        abar[f, i, j] = s1 * g1
                s3 = -2.0 * s1 * (s1 - 2.0 * hv * hv)
                abar[0, i, j] = s1 * hbar[0, i, j] + s2 * s1bar + s3 * s2bar
        return abar

    def forward(a, first, second):
        # numpy's vectorized tanh is much faster than a scalar libm call per entry
        return fused_forward(a, np.tanh(a[0]), first, second)

    return forward, backward


def _select():
    choice = os.environ.get("QRDEIM_PINN_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"QRDEIM_PINN_BACKEND must be auto, numba or numpy, got {choice!r}")
    if choice != "numpy":
        try:
            fwd, bwd = _build_numba()
            return "numba", fwd, bwd
        except ImportError:
            if choice == "numba":
                raise
            log.info("numba not available, using numpy kernels")
    return "numpy", forward_numpy, backward_numpy


BACKEND, forward, backward = _select()


def tune_allocator(enable: bool | None = None) -> bool:
    """Keep large scratch blocks on the glibc heap instead of mmap/munmap per call.

    Each training step allocates and frees several multi-megabyte tapes; with default
    glibc thresholds these round-trip through the kernel and cost about a third of the
    step. Process-wide, so only entry points call it. ``QRDEIM_PINN_MALLOC_TUNE=0``
    disables it. Returns True when the settings were applied.
    """
    if enable is None:
        enable = os.environ.get("QRDEIM_PINN_MALLOC_TUNE", "1") != "0"
    if not enable or not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL("libc.so.6")
        m_trim_threshold, m_mmap_threshold = -1, -3
        ok = libc.mallopt(m_mmap_threshold, 1 << 30) and libc.mallopt(m_trim_threshold, 1 << 31)
    except (OSError, AttributeError):
        return False
    return bool(ok)
