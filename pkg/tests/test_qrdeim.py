import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from qrdeim_pinn.errors import ConfigurationError, NumericalError
from qrdeim_pinn.linalg import leverage_sample_columns
from qrdeim_pinn.samplers import make_sampler, uniform_points
from qrdeim_pinn.samplers.qrdeim import (QRDeimRSampler, QRDeimSampler, SnapshotBuffer,
                                         apply_update, convergence_degrees, qrdeim_indices,
                                         qrdeim_r_indices, select_rank, top_k)

from helpers import SyntheticField, drive, greedy_pivots


def as_set(points):
    return {tuple(p) for p in np.asarray(points)}


def orthonormal(n, k, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, k)))
    return q


class TableField:
    """Residual lookup keyed by exact point coordinates, for hand-built update scenarios."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, points):
        return np.array([self.fn(tuple(p)) for p in points])


# ---------------------------------------------------------- buffer

def test_buffer_counts_and_readback():
    pts = uniform_points(5, np.random.default_rng(0))
    buf = SnapshotBuffer(pts, 3)
    col = np.random.default_rng(1).standard_normal(5)
    buf.record(col)
    assert buf.count == 1 and not buf.ready
    assert buf.matrix[:, 0].tobytes() == col.tobytes()
    buf.record(col)
    buf.record(col)
    assert buf.ready and buf.matrix.shape == (5, 3)
    with pytest.raises(RuntimeError):
        buf.record(col)
    with pytest.raises(ConfigurationError):
        SnapshotBuffer(pts, 0)


def test_buffer_rejects_wrong_length():
    buf = SnapshotBuffer(np.zeros((4, 2)), 2)
    with pytest.raises(ConfigurationError):
        buf.record(np.zeros(3))


# ---------------------------------------------------------- select_rank

def test_select_rank_examples():
    assert select_rank([0.9, 0.05, 0.03, 0.02], 0.1) == 1
    assert select_rank([0.5, 0.3, 0.2], 1.0) == 1
    assert select_rank([0.5, 0.3, 0.2], 5.0) == 1
    assert select_rank([1, 1, 1, 1], 0.1) == 4


def test_select_rank_squared_convention():
    s = [0.6, 0.3, 0.1]
    assert select_rank(s, 0.2) == 2
    # squares: 0.36, 0.09, 0.01 -> 1 - 0.36/0.46 = 0.217 > 0.2, 1 - 0.45/0.46 = 0.02
    assert select_rank(s, 0.2, squared=True) == 2
    assert select_rank(s, 0.25, squared=True) == 1


def test_select_rank_zero_spectrum():
    with pytest.raises(NumericalError, match="zero residual energy"):
        select_rank([0.0, 0.0], 0.1)


@settings(max_examples=60, deadline=None)
@given(vals=st.lists(st.floats(0, 10), min_size=1, max_size=30), eps=st.floats(1e-4, 0.99))
def test_select_rank_is_smallest_satisfying(vals, eps):
    s = np.sort(np.array(vals))[::-1]
    if s.sum() <= 0:
        return
    k = select_rank(s, eps)
    total = s.sum()
    assert 1 - s[:k].sum() / total <= eps + 1e-12 or k == s.size
    if k > 1:
        assert 1 - s[:k - 1].sum() / total > eps - 1e-12


# ---------------------------------------------------------- indices

def test_qrdeim_single_pivot_is_max_entry():
    v = np.random.default_rng(0).uniform(-0.5, 0.5, 20)
    v[6] = 0.9
    assert list(qrdeim_indices(v[:, None])) == [6]


def test_qrdeim_identity_columns():
    vk = np.eye(12)[:, :4]
    assert list(qrdeim_indices(vk)) == [0, 1, 2, 3]


def test_qrdeim_matches_greedy_oracle():
    vk = orthonormal(200, 5, 3)
    assert list(qrdeim_indices(vk)) == greedy_pivots(vk.T)


def test_qrdeim_rank_deficient():
    vk = np.zeros((10, 2))
    vk[:, 0] = 1.0
    vk[:, 1] = 2.0
    with pytest.raises(NumericalError):
        qrdeim_indices(vk)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 20), scale=st.floats(1e-3, 1e3))
def test_qrdeim_pivots_invariant_under_scaling(seed, scale):
    vk = orthonormal(50, 4, seed)
    assert np.array_equal(qrdeim_indices(vk), qrdeim_indices(scale * vk))


def test_qrdeim_r_square_identity_block():
    n, k = 30, 4
    rows = [3, 11, 17, 25]
    vk = np.zeros((n, k))
    vk[rows, np.arange(k)] = 1.0
    idx = qrdeim_r_indices(vk, k, 0, np.random.default_rng(1))
    assert sorted(idx) == rows


def test_qrdeim_r_exhaustive_equals_full():
    vk = orthonormal(60, 10, 5)
    full = qrdeim_indices(vk)
    rnd = qrdeim_r_indices(vk, 10, 50, np.random.default_rng(2))
    assert np.array_equal(rnd, full)


def test_qrdeim_r_structure_and_reproducibility():
    vk = orthonormal(1000, 100, 7)
    idx = qrdeim_r_indices(vk, 100, 50, np.random.default_rng(13))
    again = qrdeim_r_indices(vk, 100, 50, np.random.default_rng(13))
    assert np.array_equal(idx, again)
    assert len(set(idx.tolist())) == 100
    # the first sub-seed drawn from the generator picks the sampled columns
    sub = np.random.default_rng(np.random.default_rng(13).integers(2 ** 63))
    sampled = leverage_sample_columns(vk.T, 150, sub)
    assert set(idx.tolist()) <= set(sampled.tolist())


def test_qrdeim_r_rank_deficient_block_redraws_then_fails(caplog):
    vk = np.zeros((40, 2))
    vk[:, 0] = 1.0
    vk[0, 1] = 1e-9          # the only column with an e2 component is almost never drawn
    with caplog.at_level(logging.WARNING):
        with pytest.raises(NumericalError, match="re-draw"):
            qrdeim_r_indices(vk, 2, 0, np.random.default_rng(0))
    assert caplog.text.count("rank deficient") == 2


def test_qrdeim_r_argument_checks():
    vk = orthonormal(20, 3, 0)
    with pytest.raises(ConfigurationError):
        qrdeim_r_indices(vk, 4, 0, 0)
    with pytest.raises(ConfigurationError):
        qrdeim_r_indices(vk, 3, 18, 0)


# ---------------------------------------------------------- degrees

def test_convergence_degree_examples():
    assert convergence_degrees([4, 2], [1, 2]).tolist() == [2.0, 0.0]
    assert convergence_degrees([3, 5], [3, 5]).tolist() == [0.0, 0.0]
    assert convergence_degrees([1], [2]).tolist() == [-1.0]


def test_convergence_degree_zero_floor_ranks_first():
    d = convergence_degrees([1.0, 1.0, 1e-3], [0.0, 0.5, 0.0])
    assert np.all(np.isfinite(d))
    assert d[0] > d[1] and top_k(d, 1)[0] == 0
    with pytest.raises(ConfigurationError):
        convergence_degrees([1.0], [1.0, 2.0])


def test_top_k_ties_lower_index():
    assert list(top_k([1.0, 3.0, 3.0, 0.0, 3.0], 2)) == [1, 2]


# ---------------------------------------------------------- apply_update

def _setup(n_train=50, n_snap=40, period=6, seed=0):
    rng = np.random.default_rng(seed)
    train = uniform_points(n_train, rng)
    from qrdeim_pinn.samplers.base import fresh_points_excluding
    snap = fresh_points_excluding(n_snap, train, rng)
    return train, SnapshotBuffer(snap, period), rng


def test_safeguard_branch_all_degrees_negative():
    train, buf, rng = _setup()
    field = SyntheticField(seed=1)
    for _ in range(buf.period):
        buf.record(field(buf.points))
        field.it += 100
    r_new = np.abs(field(train))
    old_snap = buf.points.copy()
    res = apply_update(train, r_new / 2.0, buf, field, rng, threshold=0.005)
    assert res.skipped
    assert np.array_equal(res.points, train)
    assert buf.count == 0 and not np.array_equal(buf.points, old_snap)
    assert not (as_set(buf.points) & as_set(train))
    assert np.array_equal(res.baseline, r_new)


def test_accepted_update_k3_set_difference():
    train, buf, rng = _setup(n_train=30, n_snap=40, period=5)
    u = orthonormal(40, 3, 2)
    w = orthonormal(5, 3, 3)
    snapshot = u @ w.T
    for j in range(5):
        buf.record(snapshot[:, j])
    r_new = np.abs(np.random.default_rng(4).uniform(0.5, 1.0, 30))
    boost = np.arange(1, 31, dtype=float)          # distinct positive degrees
    baseline = r_new * 2.0 ** boost
    lookup = {tuple(p): r for p, r in zip(train, r_new)}
    snap_pts = buf.points.copy()
    field = TableField(lambda p: lookup.get(p, 0.25))
    res = apply_update(train, baseline, buf, field, rng, threshold=0.005)
    assert res.k == 3 and not res.skipped
    removed = as_set(train) - as_set(res.points)
    added = as_set(res.points) - as_set(train)
    assert removed == as_set(train[[29, 28, 27]])
    expect_sel = qrdeim_indices(np.linalg.svd(snapshot, full_matrices=False)[0][:, :3])
    assert added == as_set(snap_pts[expect_sel])
    assert res.points.shape == train.shape
    assert not (removed & added)
    assert not (as_set(res.points) & as_set(buf.points))
    assert np.array_equal(res.baseline, np.abs(field(res.points)))


def test_rank_one_buffer_swaps_one_point():
    train, buf, rng = _setup()
    col = np.random.default_rng(5).standard_normal(buf.points.shape[0])
    for j in range(buf.period):
        buf.record((j + 1.0) * col)
    field = TableField(lambda p: 0.1)
    res = apply_update(train, np.full(train.shape[0], 1.0), buf, field, rng, threshold=0.005)
    assert res.k == 1 and not res.skipped
    assert len(as_set(train) - as_set(res.points)) == 1


def test_apply_update_argument_errors():
    train, buf, rng = _setup()
    field = SyntheticField()
    with pytest.raises(RuntimeError):
        apply_update(train, np.ones(50), buf, field, rng, threshold=0.1)
    for _ in range(buf.period):
        buf.record(field(buf.points))
    with pytest.raises(ConfigurationError):
        apply_update(train, np.ones(50), buf, field, rng)
    with pytest.raises(ConfigurationError):
        apply_update(train, np.ones(50), buf, field, rng, threshold=0.1, rank=2)
    with pytest.raises(ConfigurationError, match="prune exceeds training set"):
        apply_update(train[:1], np.ones(1), buf, field, rng, rank=2, oversample=0,
                     svd_oversample=0)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2 ** 20), mode=st.sampled_from(["threshold", "rank"]),
       flip=st.floats(0, 1), zeros=st.floats(0, 0.5), spread=st.floats(0, 30))
def test_adversarial_streams_invariants(seed, mode, flip, zeros, spread):
    rng = np.random.default_rng(seed)
    train, buf, _ = _setup(n_train=60, n_snap=50, period=12, seed=seed)
    cols = rng.standard_normal((50, 12)) * 10.0 ** rng.uniform(-spread, 0, (50, 1))
    cols[rng.random(50) < zeros] = 0.0
    for j in range(12):
        buf.record(cols[:, j] if j else cols[:, j] + 1e-3)
    scale = {}

    def field(points):
        out = []
        for p in map(tuple, points):
            if p not in scale:
                scale[p] = float(rng.choice([0.0, 10.0 ** rng.uniform(-spread, 2)]))
            out.append(scale[p])
        return np.array(out)

    baseline = np.abs(field(train)) * np.where(rng.random(60) < flip, 0.5, 2.0)
    kw = {"threshold": 0.005} if mode == "threshold" else {"rank": 3, "oversample": 5,
                                                          "svd_oversample": 2}
    res = apply_update(train, baseline, buf, field, rng, **kw)
    assert res.points.shape == (60, 2)
    assert len(as_set(res.points)) == 60
    assert not (as_set(res.points) & as_set(buf.points))
    d = convergence_degrees(baseline, np.abs(field(train)))
    if np.any(d[top_k(d, res.k)] < 0):
        assert res.skipped and np.array_equal(res.points, train)
    else:
        assert len(as_set(train) - as_set(res.points)) == res.k


# ---------------------------------------------------------- samplers

def test_sampler_one_update_per_period_constant_size():
    s = QRDeimSampler(n_points=300, n_snapshot=120, period=25)
    sizes = drive(s, 250, seed=4)
    assert set(sizes) == {300}
    assert [u["iteration"] for u in s.updates] == list(range(25, 251, 25))
    assert s.buffer.count == 0
    assert not (as_set(s.points) & as_set(s.buffer.points))
    for u in s.updates:
        assert set(u) == {"iteration", "k", "skipped", "selected", "pruned", "singular_values"}


def test_randomized_sampler_constant_size():
    s = QRDeimRSampler(n_points=300, n_snapshot=120, period=40, rank=20, oversample=30)
    sizes = drive(s, 200, seed=6)
    assert set(sizes) == {300}
    assert len(s.updates) == 5 and all(u["k"] == 20 for u in s.updates)


def test_sampler_reproducible():
    runs = []
    for _ in range(2):
        s = make_sampler("qrdeim", n_points=100, n_snapshot=60, period=10)
        drive(s, 40, seed=2)
        runs.append(s.points)
    assert np.array_equal(*runs)


def test_randomized_sampler_validation():
    with pytest.raises(ConfigurationError):
        QRDeimRSampler(rank=0)
    with pytest.raises(ConfigurationError):
        QRDeimRSampler(rank=980, oversample=50)
    with pytest.raises(ConfigurationError):
        QRDeimRSampler(period=20)
    with pytest.raises(ConfigurationError):
        QRDeimSampler(threshold=0.0)
