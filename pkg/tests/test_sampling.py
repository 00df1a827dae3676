import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from rfsurrogate import bnn
from rfsurrogate.bnn import BayesNet, NetConfig
from rfsurrogate.core import Axis, DesignSpace, FrequencyGrid, ShapeError
from rfsurrogate.sampling import (
    MixtureConfig, UncertaintyField, aggregate_geometry, mixture_probabilities, sample_geometry, spread, uaw_afs,
    uncertainty_field,
)

SPACE = DesignSpace((Axis("a", 0.0, 4.0, 1.0), Axis("b", 10.0, 12.0, 1.0)))
GRID = FrequencyGrid.linspace(1e9, 2e9, 9)


def _net(**kw):
    cfg = dict(mode="point", geometry_dims=2, channels=3, backbone=(6, 6), head=(4,), init_rho=-1.5)
    cfg.update(kw)
    return BayesNet(NetConfig(**cfg), SPACE, (1e9, 2e9))


def _cands(n=5):
    return [SPACE.point(i) for i in range(n)]


# -- uncertainty field ---------------------------------------------------------

def test_field_zero_for_deterministic_net():
    f = uncertainty_field(_net(deterministic=True), _cands(), GRID, 4, np.random.default_rng(0))
    assert np.all(f.values == 0.0)
    f = uncertainty_field(_net(init_rho=-60.0), _cands(), GRID, 4, np.random.default_rng(0))
    assert np.max(f.values) < 1e-9


def test_field_two_sample_identity():
    net = _net()
    noises = [net.draw_noise(np.random.default_rng(s)) for s in (1, 2)]
    f = uncertainty_field(net, _cands(), GRID, noises=noises)
    x = net.norm.inputs(np.repeat([c.as_array() for c in _cands()], GRID.count, axis=0),
                        np.tile(GRID.points, 5))
    o1, o2 = (net.forward(x, nz).reshape(5, GRID.count, 3) for nz in noises)
    assert np.allclose(f.values, np.linalg.norm(o1 - o2, axis=-1) / 2, rtol=1e-12, atol=0)


def test_field_matches_brute_force_and_chunking():
    net = _net()
    net.norm.out_mean, net.norm.out_std = np.zeros(3), np.array([2.0, 0.5, 1.0])
    noises = [net.draw_noise(np.random.default_rng(s)) for s in range(7)]
    cands = _cands(6)
    f = uncertainty_field(net, cands, GRID, noises=noises)
    g = uncertainty_field(net, cands, GRID, noises=noises, chunk_cells=GRID.count)
    assert np.array_equal(f.values, g.values)
    brute = np.zeros((6, GRID.count))
    for i, c in enumerate(cands):
        for j, fr in enumerate(GRID.points):
            x = net.norm.inputs(c.as_array()[None], [fr])
            outs = np.array([net.forward(x, nz)[0] * net.norm.out_std for nz in noises])
            mu = outs.mean(axis=0)
            brute[i, j] = np.sqrt(sum(np.sum((o - mu) ** 2) for o in outs) / len(outs))
    assert np.allclose(f.values, brute, rtol=1e-12, atol=1e-15)


def test_field_vector_mode_subgrid():
    grid = FrequencyGrid.linspace(1e9, 2e9, 11)
    net = BayesNet(NetConfig(mode="vector", geometry_dims=2, channels=2, grid_count=11, backbone=(4,), head=(2, 3),
                             init_rho=-1.0), SPACE, grid=grid)
    noises = [net.draw_noise(np.random.default_rng(s)) for s in range(3)]
    full = uncertainty_field(net, _cands(3), grid, noises=noises)
    sub = uncertainty_field(net, _cands(3), grid.subset([1, 4, 9]), noises=noises)
    assert np.array_equal(sub.values, full.values[:, [1, 4, 9]])


def test_field_needs_two_members():
    with pytest.raises(ValueError):
        uncertainty_field(_net(), _cands(), GRID, 1, np.random.default_rng(0))


def test_field_validation_and_csv():
    with pytest.raises(ShapeError):
        UncertaintyField(tuple(_cands(2)), GRID, np.zeros((3, GRID.count)))
    with pytest.raises(ValueError):
        UncertaintyField(tuple(_cands(1)), GRID, -np.ones((1, GRID.count)))
    f = UncertaintyField(tuple(_cands(2)), GRID.subset([0, 8]), np.array([[0.0, 1.0], [2.0, 3.5]]))
    lines = f.to_csv(labels=[10, 11]).splitlines()
    assert lines[0] == "candidate_index,a,b,frequency_hz,uncertainty"
    assert lines[1] == "10,0,10,1000000000,0"
    assert lines[-1] == "11,0,11,2000000000,3.5"


@given(st.integers(0, 2**31))
def test_spread_population_form(seed):
    s = np.random.default_rng(seed).normal(size=(5, 4, 3))
    expected = np.sqrt(np.var(s, axis=0, ddof=0).sum(axis=-1))
    assert np.allclose(spread(s), expected, rtol=1e-12)


# -- aggregation -------------------------------------------------------------------

def test_aggregate_geometry_cases():
    assert np.array_equal(aggregate_geometry(UncertaintyField(tuple(_cands(3)), GRID, np.zeros((3, 9)))), np.zeros(3))
    one = FrequencyGrid([1.5e9])
    col = np.array([[0.3], [1.2]])
    assert np.array_equal(aggregate_geometry(UncertaintyField(tuple(_cands(2)), one, col)), col[:, 0])
    v = np.random.default_rng(4).random((4, 9))
    agg = aggregate_geometry(UncertaintyField(tuple(_cands(4)), GRID, v))
    assert np.allclose(agg, [sum(row) for row in v.tolist()], rtol=1e-14)


# -- geometry sampling ------------------------------------------------------------

def test_mixture_uniform_limit_chi_square():
    agg = np.random.default_rng(0).random(10) * 5
    rng = np.random.default_rng(123)
    counts = np.zeros(10)
    cfg = MixtureConfig(lam=1.0, batch_size=1)
    for _ in range(100_000):
        counts[sample_geometry(agg, range(10), cfg, rng).indices[0]] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_mixture_proportional_limit():
    rng = np.random.default_rng(321)
    counts = np.zeros(4)
    cfg = MixtureConfig(lam=0.0, batch_size=1)
    for _ in range(100_000):
        counts[sample_geometry([3.0, 1.0, 0.0, 0.0], range(4), cfg, rng).indices[0]] += 1
    freq = counts / counts.sum()
    assert np.allclose(freq, [0.75, 0.25, 0.0, 0.0], atol=0.02)
    assert counts[2] == counts[3] == 0


def test_mixture_formula():
    p, fb = mixture_probabilities([2.0, 6.0], 0.5)
    assert np.allclose(p, [0.5 / 2 + 0.5 * 0.25, 0.5 / 2 + 0.5 * 0.75]) and not fb


def test_mixture_zero_uncertainty_falls_back():
    draw = sample_geometry(np.zeros(5), range(5), MixtureConfig(lam=0.0, batch_size=3), np.random.default_rng(0))
    assert draw.uniform_fallback and len(set(draw.indices)) == 3


def test_sample_geometry_exhaustion_and_limits():
    agg = np.arange(8.0)
    pool = [1, 3, 4, 6]
    draw = sample_geometry(agg, pool, MixtureConfig(lam=0.3, batch_size=4), np.random.default_rng(0))
    assert sorted(draw.indices) == pool
    with pytest.raises(ValueError):
        sample_geometry(agg, pool, MixtureConfig(batch_size=5), np.random.default_rng(0))
    with pytest.raises(ValueError):
        MixtureConfig(lam=1.5)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3), st.integers(1, 6))
def test_sample_geometry_scale_invariance(seed, c, batch):
    agg = np.random.default_rng(seed).random(12)
    pool = list(range(0, 12, 1))
    a = sample_geometry(agg, pool, MixtureConfig(lam=0.0, batch_size=batch), np.random.default_rng(seed))
    b = sample_geometry(agg * c, pool, MixtureConfig(lam=0.0, batch_size=batch), np.random.default_rng(seed))
    assert np.allclose(mixture_probabilities(agg, 0.0)[0], mixture_probabilities(agg * c, 0.0)[0], rtol=1e-12)
    assert a.indices == b.indices


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(1, 10))
def test_sample_geometry_distinct_and_unexplored(seed, batch):
    rng = np.random.default_rng(seed)
    agg = rng.random(20)
    pool = sorted(rng.choice(20, 12, replace=False).tolist())
    draw = sample_geometry(agg, pool, MixtureConfig(lam=0.3, batch_size=batch), rng)
    assert len(set(draw.indices)) == batch and set(draw.indices) <= set(pool)


# -- frequency sampling -----------------------------------------------------------

def _widths(edges):
    return np.diff(edges)


def test_uaw_constant_equal_widths():
    g = FrequencyGrid.linspace(1e9, 2e9, 100)
    sel = uaw_afs(g, np.full(100, 0.7), 4, np.random.default_rng(0))
    assert np.all(np.abs(_widths(sel.edges) - 25) <= 1)
    assert not sel.uniform_fallback


def test_uaw_triangle_upper_half():
    g = FrequencyGrid.linspace(1e9, 2e9, 201)
    t = np.linspace(0, 1, 201)
    u = np.clip(1 - np.abs(t - 0.75) / 0.25, 0, None)
    for seed in range(20):
        sel = uaw_afs(g, u, 8, np.random.default_rng(seed))
        assert sum(i >= 100 for i in sel.indices) >= 6


def test_uaw_saturation_and_zero_fallback():
    g = FrequencyGrid.linspace(1e9, 2e9, 30)
    u = np.random.default_rng(0).random(30)
    assert uaw_afs(g, u, 30, np.random.default_rng(1)).indices == tuple(range(30))
    sel = uaw_afs(g, np.zeros(30), 5, np.random.default_rng(1))
    assert sel.uniform_fallback and len(sel) == 5
    assert np.all(np.abs(_widths(sel.edges) - 6) <= 1)


def test_uaw_collapsed_partitions_shift_right_then_left():
    g = FrequencyGrid.linspace(1e9, 2e9, 10)
    u = np.zeros(10)
    u[9] = 1.0  # all mass in the last cell
    sel = uaw_afs(g, u, 4, np.random.default_rng(0))
    assert len(set(sel.indices)) == 4
    assert sel.indices == (6, 7, 8, 9)


def test_uaw_input_checks():
    g = FrequencyGrid.linspace(1e9, 2e9, 10)
    with pytest.raises(ValueError):
        uaw_afs(g, np.ones(10), 11, np.random.default_rng(0))
    with pytest.raises(ValueError):
        uaw_afs(g, -np.ones(10), 2, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        uaw_afs(g, np.ones(9), 2, np.random.default_rng(0))


_u_strategy = st.lists(st.floats(0, 10), min_size=5, max_size=120)


@settings(max_examples=200)
@given(_u_strategy, st.integers(1, 40), st.integers(0, 2**31))
def test_uaw_count_distinct_sorted(u, n, seed):
    g = FrequencyGrid.linspace(1e9, 3e9, len(u))
    n = min(n, len(u))
    sel = uaw_afs(g, np.array(u), n, np.random.default_rng(seed))
    assert len(sel.indices) == n
    assert list(sel.indices) == sorted(set(sel.indices))
    assert all(0 <= i < len(u) for i in sel.indices)


@settings(max_examples=200)
@given(_u_strategy, st.integers(1, 40))
def test_uaw_equal_mass_partitions(u, n):
    u = np.array(u)
    g = FrequencyGrid.linspace(1e9, 3e9, len(u))
    n = min(n, len(u))
    sel = uaw_afs(g, u, n, np.random.default_rng(0))
    if sel.uniform_fallback:
        return
    cum = cumulative_trapezoid(u, g.points, initial=0.0)
    cell = np.max(np.diff(cum))
    at = [cum[min(e, len(u) - 1)] for e in sel.edges]
    masses = np.diff(at)
    assert np.all(np.abs(masses - cum[-1] / n) <= cell * (1 + 1e-9) + 1e-12 * cum[-1])


@settings(max_examples=100)
@given(_u_strategy, st.integers(1, 40), st.sampled_from([0.5, 2.0, 3.0, 1e-3, 7.25, 1e4]), st.integers(0, 2**31))
def test_uaw_scale_invariance(u, n, c, seed):
    u = np.array(u)
    g = FrequencyGrid.linspace(1e9, 3e9, len(u))
    n = min(n, len(u))
    a = uaw_afs(g, u, n, np.random.default_rng(seed))
    b = uaw_afs(g, u * c, n, np.random.default_rng(seed))
    assert a.edges == b.edges and a.indices == b.indices


def test_uaw_field_from_net_is_usable():
    net = _net()
    f = uncertainty_field(net, _cands(1), GRID, 8, np.random.default_rng(0))
    sel = uaw_afs(GRID, f.values[0], 4, np.random.default_rng(0))
    assert len(sel) == 4
    assert bnn.ensemble_predict(net, np.zeros((1, 3)), 2, np.random.default_rng(0))[1].shape == (2, 1, 3)
