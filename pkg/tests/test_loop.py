from dataclasses import replace

import numpy as np
import pytest

from rfsurrogate import bnn, loop
from rfsurrogate.core import Axis, DesignSpace
from rfsurrogate.loop import LoopConfig, finalize, initialize, iterate, run_baseline, run_loop, should_stop
from rfsurrogate.oracle import OracleSpec

TINY_NET = bnn.NetConfig(backbone=(8, 8), head=(8,), optimizer="adam", learning_rate=1e-2, epochs=5,
                         batch_size=64, init_rho=-4.0)


def _spec(count=41):
    return OracleSpec.default("rational", dense_count=count)


def _cfg(**kw):
    base = dict(initial_geometries=3, initial_frequencies=5, batch_geometries=3, batch_frequencies=6,
                validation_geometries=2, max_iterations=3, ensemble_size=4, net=TINY_NET, seed=1)
    base.update(kw)
    return LoopConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        LoopConfig(max_iterations=0)
    with pytest.raises(ValueError):
        LoopConfig(geometry_policy="greedy")
    with pytest.raises(ValueError):
        LoopConfig(lam=-0.1)


def test_uniform_indices():
    assert list(loop.uniform_indices(401, 20))[:3] == [0, 21, 42]
    assert list(loop.uniform_indices(5, 5)) == [0, 1, 2, 3, 4]
    assert list(loop.uniform_indices(5, 1)) == [2]


def test_initialize_counts_and_ledger():
    spec = OracleSpec.default("si")
    cfg = replace(_cfg(initial_geometries=20, initial_frequencies=10, validation_geometries=3))
    st = initialize(cfg, spec)
    assert st.dataset.n_cells == 200
    assert st.sim_points * spec.cost_per_point == pytest.approx(200 * spec.cost_per_point)
    assert len(st.explored) == 20
    assert not set(st.validation.indices) & set(st.pool)
    assert st.validation.sim_seconds == pytest.approx(3 * 401 * spec.cost_per_point)


def test_initialize_full_pool_and_determinism():
    spec = _spec()
    cfg = _cfg(validation_geometries=1, initial_geometries=20)
    st = initialize(cfg, spec)
    assert st.explored == set(st.pool) and len(st.pool) == 20
    again = initialize(cfg, spec)
    assert [r.design_index for r in again.dataset.records] == [r.design_index for r in st.dataset.records]
    assert all(np.array_equal(a.response.values, b.response.values)
               for a, b in zip(again.dataset.records, st.dataset.records))
    with pytest.raises(ValueError):
        initialize(_cfg(validation_geometries=2, initial_geometries=20), spec)


def test_iterate_zero_batch_keeps_data():
    spec = _spec()
    cfg = _cfg(batch_geometries=0)
    st0 = initialize(cfg, spec)
    st1 = iterate(st0, cfg, spec)
    assert st1.iteration == 1 and len(st1.history) == 1
    assert st1.dataset.n_cells == st0.dataset.n_cells and st1.explored == st0.explored
    assert st1.sim_points == st0.sim_points
    assert st1.history[0].selected == ()


def test_iterate_deterministic_net_flags_uniform_fallback():
    spec = _spec()
    cfg = _cfg(net=replace(TINY_NET, deterministic=True))
    st = iterate(initialize(cfg, spec), cfg, spec)
    assert st.history[0].uniform_fallback


def test_budget_conservation_and_monotone_exploration():
    spec = _spec()
    cfg = _cfg()
    st = initialize(cfg, spec)
    for k in range(1, 4):
        st = iterate(st, cfg, spec)
        assert len(st.explored) == cfg.initial_geometries + k * cfg.batch_geometries
        assert st.sim_points == sum(r.grid.count for r in st.dataset.records)
        assert st.history[-1].cumulative_sim_seconds == st.sim_points * spec.cost_per_point
        assert len(st.history) == st.iteration == k
    pairs = [(r.design_index, f) for r in st.dataset.records for f in r.grid.points]
    assert len(pairs) == len(set(pairs))
    # each iteration's geometries get their own frequency batch
    for h in st.history:
        assert all(len(idx) == cfg.batch_frequencies for _, idx in h.selected)


def test_pool_exhaustion_marks_terminal():
    spec = _spec()
    cfg = _cfg(initial_geometries=15, batch_geometries=10, validation_geometries=1, max_iterations=5)
    st = iterate(initialize(cfg, spec), cfg, spec)
    assert st.terminal and len(st.explored) == 20
    assert should_stop(st, cfg)


def test_stop_rule_threshold_and_max_iterations():
    spec = _spec()
    rep = run_loop(_cfg(val_threshold=1e9, max_iterations=4), spec)
    assert len(rep.history) == 1
    rep = run_loop(_cfg(max_iterations=2), spec)
    assert len(rep.history) == 2


def test_run_is_reproducible():
    spec = _spec()
    a = run_loop(_cfg(), spec)
    b = run_loop(_cfg(), spec)
    assert loop.history_csv(a.history) == loop.history_csv(b.history)
    assert loop.selections_csv(a.history, spec) == loop.selections_csv(b.history, spec)
    assert bnn.dumps(a.net) == bnn.dumps(b.net)


def test_finalize_single_record_and_twice():
    spec = _spec()
    cfg = _cfg(initial_geometries=1, validation_geometries=1)
    st = initialize(cfg, spec)
    r1 = finalize(st, cfg, spec)
    r2 = finalize(st, cfg, spec)
    assert bnn.dumps(r1.net) == bnn.dumps(r2.net)
    assert r1.train_size == 1


def test_conventional_on_two_point_lattice():
    space = DesignSpace((Axis("scale", 0.9, 1.0, 0.1),))
    spec = replace(_spec(), space=space)
    rep = run_baseline("conventional", _cfg(validation_geometries=0, initial_geometries=0), spec)
    assert rep.train_size == 2
    assert rep.freq_num == spec.dense_count
    assert rep.net.config.deterministic
    cfg = _cfg(validation_geometries=0, initial_geometries=0)
    assert rep.sim_seconds == pytest.approx(loop.conventional_sim_seconds(cfg, spec))


def test_random_uniform_saturated_matches_conventional():
    spec = _spec(count=9)
    n_pool = spec.space.size - 1
    cfg = _cfg(validation_geometries=1, initial_geometries=n_pool, initial_frequencies=9, conventional_fraction=1.0)
    st_rand = initialize(replace(cfg, geometry_policy="random", frequency_policy="uniform"), spec)
    st_rand = iterate(st_rand, replace(cfg, geometry_policy="random", frequency_policy="uniform"), spec)
    conv = run_baseline("conventional", cfg, spec)
    assert conv.n_cells == st_rand.dataset.n_cells == n_pool * 9
    assert conv.train_size == len(st_rand.explored)


def test_baseline_kinds():
    spec = _spec()
    for kind in ("random-uniform", "random-uaw"):
        rep = run_baseline(kind, _cfg(max_iterations=1), spec)
        assert rep.setting == kind
    with pytest.raises(ValueError):
        run_baseline("hfss", _cfg(), spec)


def test_random_uniform_uses_uniform_frequencies():
    spec = _spec()
    rep = run_baseline("random-uniform", _cfg(max_iterations=1), spec)
    uni = tuple(int(i) for i in loop.uniform_indices(spec.dense_count, 6))
    assert all(idx == uni for _, idx in rep.history[0].selected)


def test_exports():
    spec = _spec()
    rep = run_loop(_cfg(max_iterations=1), spec)
    hist = loop.history_csv(rep.history).splitlines()
    assert hist[0] == "iteration,val_rmse,val_r2,cumulative_sim_seconds,n_records"
    assert len(hist) == 2
    sel = loop.selections_csv(rep.history, spec).splitlines()
    assert sel[0] == "iteration,design_index,scale,frequency_index,frequency_hz"
    assert len(sel) == 1 + 3 * 6
    table = loop.table_csv([rep]).splitlines()
    assert table[0] == "setting,train_size,freq_num,sim_time_min,mse,rmse,r_squared,psnr"
    assert table[1].startswith("uaw,6,6,")


def test_vector_mode_loop_runs():
    spec = _spec(count=21)
    net = replace(TINY_NET, mode="vector", head=(2, 3), grid_count=21)
    rep = run_loop(_cfg(net=net, max_iterations=1), spec)
    assert rep.net.config.mode == "vector"
    assert np.isfinite(rep.metrics.rmse)


@pytest.mark.slow
def test_si_validation_error_trends_down():
    spec = OracleSpec.default("si")
    net = bnn.NetConfig(optimizer="adam", learning_rate=1e-3, batch_size=128, epochs=150)
    first, last = [], []
    for seed in range(5):
        cfg = LoopConfig(batch_geometries=20, batch_frequencies=20, max_iterations=6, ensemble_size=8,
                         candidate_cap=400, net=net, seed=seed, final_epochs=1)
        rep = run_loop(cfg, spec)
        r = [h.val_rmse for h in rep.history]
        first.append(np.mean(r[:2]))
        last.append(np.mean(r[-2:]))
    assert np.median(last) < np.median(first)
