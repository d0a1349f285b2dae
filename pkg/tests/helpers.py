"""Shared test utilities: closed-form test functions, naive oracles, FD helpers."""

import numpy as np

from qrdeim_pinn.autodiff import NetworkParams, OutputTransform

ACCEPTANCE_LINES = {}


def constant_one_net(input_dim=2, width=4):
    """Net that outputs exactly 1 everywhere (zero weights, output bias 1)."""
    params = NetworkParams.zeros([input_dim, width, 1])
    params.biases[-1][:] = 1.0
    return params


def closed_form_transform(f, fx, fxx, ft, ftt, name="closed_form"):
    """Transform whose factor is a given function, so ``u_hat = f`` with a constant-one net."""

    def factor(x, t):
        return {"g": f(x, t), "g_x": fx(x, t), "g_xx": fxx(x, t), "g_t": ft(x, t),
                "g_tt": ftt(x, t)}

    def base(x):
        z = np.zeros_like(x)
        return z, z, z

    return OutputTransform(name, base, factor, "raw")


def wave_closed_form():
    pi = np.pi
    return closed_form_transform(
        lambda x, t: np.sin(pi * x) * np.cos(2 * pi * t),
        lambda x, t: pi * np.cos(pi * x) * np.cos(2 * pi * t),
        lambda x, t: -pi ** 2 * np.sin(pi * x) * np.cos(2 * pi * t),
        lambda x, t: -2 * pi * np.sin(pi * x) * np.sin(2 * pi * t),
        lambda x, t: -4 * pi ** 2 * np.sin(pi * x) * np.cos(2 * pi * t), "wave_exact")


def convection_closed_form(speed=20.0):
    pi = np.pi
    return closed_form_transform(
        lambda x, t: np.sin(pi * (x - speed * t)),
        lambda x, t: pi * np.cos(pi * (x - speed * t)),
        lambda x, t: -pi ** 2 * np.sin(pi * (x - speed * t)),
        lambda x, t: -speed * pi * np.cos(pi * (x - speed * t)),
        lambda x, t: -(speed * pi) ** 2 * np.sin(pi * (x - speed * t)), "convection_exact")


def naive_forward(params, inputs):
    """Point-by-point forward pass with explicit loops, used as an oracle."""
    out = []
    for row in np.asarray(inputs, dtype=float):
        h = list(row)
        for li, (w, b) in enumerate(params.layers()):
            nxt = []
            for j in range(w.shape[1]):
                s = b[j]
                for i in range(w.shape[0]):
                    s += h[i] * w[i, j]
                nxt.append(np.tanh(s) if li < params.num_layers - 1 else s)
            h = nxt
        out.append(h[0])
    return np.array(out)


def interior_points(n, rng, margin=0.05):
    x = rng.uniform(-1 + margin, 1 - margin, n)
    t = rng.uniform(margin, 1 - margin, n)
    return np.column_stack([x, t])


def rel_err(approx, exact):
    """Relative l2 discrepancy of two aligned vectors."""
    approx, exact = np.asarray(approx), np.asarray(exact)
    return float(np.linalg.norm(approx - exact) / np.linalg.norm(exact))


def fd_derivatives(u_fn, points, h1=1e-4, h2=1e-3):
    """Central finite differences of a scalar field at ``points``."""
    ex, et = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    u0 = u_fn(points)
    return {
        "u": u0,
        "u_x": (u_fn(points + h1 * ex) - u_fn(points - h1 * ex)) / (2 * h1),
        "u_t": (u_fn(points + h1 * et) - u_fn(points - h1 * et)) / (2 * h1),
        "u_xx": (u_fn(points + h2 * ex) - 2 * u0 + u_fn(points - h2 * ex)) / h2 ** 2,
        "u_tt": (u_fn(points + h2 * et) - 2 * u0 + u_fn(points - h2 * et)) / h2 ** 2,
    }


def greedy_pivots(a, count=None):
    """Brute-force greedy column pivoting by explicit projection residuals."""
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    count = min(m, n) if count is None else count
    chosen = []
    for _ in range(count):
        if chosen:
            q, _ = np.linalg.qr(a[:, chosen])
            resid = a - q @ (q.T @ a)
        else:
            resid = a
        norms = np.linalg.norm(resid, axis=0)
        norms[chosen] = -1.0
        best = norms.max()
        if best <= 1e-12 * np.linalg.norm(a):
            break
        # nearly-equal norms count as ties, lowest index first
        chosen.append(int(np.flatnonzero(norms >= best * (1 - 1e-12))[0]))
    return chosen


class SyntheticField:
    """Time-varying residual field ``r(x, t; it) = sum_j a_j(it) phi_j(x, t)``.

    Stands in for a network during sampler tests; ``it`` is advanced by the driver.
    """

    def __init__(self, modes=6, seed=0, decay=0.0):
        rng = np.random.default_rng(seed)
        self.freq = rng.uniform(0.5, 4.0, (modes, 2))
        self.phase = rng.uniform(0, 2 * np.pi, modes)
        self.rate = rng.uniform(0.1, 2.0, modes)
        self.decay = decay
        self.it = 0

    def __call__(self, points):
        pts = np.asarray(points)
        s = self.it / 1000.0
        amp = np.cos(self.rate * s + self.phase) * np.exp(-self.decay * s) + 0.05
        phi = np.sin(pts[:, :1] * self.freq[:, 0] * np.pi + pts[:, 1:] * self.freq[:, 1] * 3.0
                     + self.phase)
        return phi @ amp


def drive(sampler, iterations, field=None, seed=0):
    """Run a sampler's hooks for ``iterations`` steps against a synthetic field."""
    from qrdeim_pinn.samplers import StepContext
    field = field or SyntheticField(seed=seed)
    sampler.initialize(np.random.default_rng(seed), field)
    sizes = []
    for it in range(1, iterations + 1):
        tr = field(sampler.points) if sampler.needs_train_residuals else None
        field.it = it
        sampler.after_step(StepContext(it, field, tr))
        sizes.append(sampler.points.shape[0])
    return sizes
