"""Online learning loop: train, quantify, sample, simulate, repeat, then refit.

A run starts from a few random geometries swept at uniformly spaced
frequencies. Each iteration warm-starts the BNN on the newest batch only,
scores the unexplored geometries by ensemble spread, draws the next batch
from the uniform/uncertainty mixture and gives every chosen geometry its own
uncertainty-aware frequency set. The accumulated data is used once more for
a final fit from scratch.

The same machinery runs the comparison settings: swapping the geometry
policy for uniform random draws and/or the frequency policy for a fixed
uniform grid reproduces the ablation columns at an identical simulation
budget, and ``conventional`` trains a deterministic net on full sweeps of
most of the lattice.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import bnn, oracle
from .core import Dataset, FrequencyGrid, MetricReport, Record, format_number, metrics, rng_stream
from .sampling import MixtureConfig, aggregate_geometry, sample_geometry, uaw_afs, uncertainty_field

logger = logging.getLogger(__name__)

GEOMETRY_POLICIES = ("mixture", "random")
FREQUENCY_POLICIES = ("uaw", "uniform")


@dataclass(frozen=True)
class LoopConfig:
    """Schedule of one online run.

    ``online_epochs`` of ``None`` means one fifth of the net's epochs, and
    ``final_epochs`` of ``None`` reuses the net's epochs. A ``val_threshold``
    of zero disables the early stop.
    """

    initial_geometries: int = 20
    initial_frequencies: int = 10
    batch_geometries: int = 20
    batch_frequencies: int = 20
    validation_geometries: int = 20
    max_iterations: int = 6
    val_threshold: float = 0.0
    lam: float = 0.3
    ensemble_size: int = 32
    candidate_cap: int = 2000
    online_epochs: int | None = None
    final_epochs: int | None = None
    final_cold: bool = True
    geometry_policy: str = "mixture"
    frequency_policy: str = "uaw"
    conventional_fraction: float = 0.8
    net: bnn.NetConfig = field(default_factory=bnn.NetConfig)
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.geometry_policy not in GEOMETRY_POLICIES:
            raise ValueError(f"geometry_policy must be one of {GEOMETRY_POLICIES}")
        if self.frequency_policy not in FREQUENCY_POLICIES:
            raise ValueError(f"frequency_policy must be one of {FREQUENCY_POLICIES}")
        if min(self.initial_geometries, self.validation_geometries) < 0 or self.batch_geometries < 0:
            raise ValueError("geometry counts must be non-negative")
        if min(self.initial_frequencies, self.batch_frequencies) < 1:
            raise ValueError("frequency counts must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.ensemble_size < 2:
            raise ValueError("ensemble_size must be >= 2")
        if not 0.0 < self.conventional_fraction <= 1.0:
            raise ValueError("conventional_fraction must lie in (0, 1]")

    @property
    def needs_uncertainty(self) -> bool:
        return self.geometry_policy == "mixture" or self.frequency_policy == "uaw"


@dataclass(frozen=True)
class HistoryEntry:
    iteration: int
    val_rmse: float
    val_r2: float
    cumulative_sim_seconds: float
    n_records: int
    selected: tuple = ()
    uniform_fallback: bool = False


@dataclass
class Validation:
    indices: tuple
    references: tuple  # DbResponse per geometry on the dense grid
    sim_seconds: float


@dataclass
class LoopState:
    iteration: int
    dataset: Dataset
    explored: set
    pool: tuple
    net: bnn.BayesNet
    validation: Validation
    history: list = field(default_factory=list)
    last_batch: list = field(default_factory=list)
    sim_points: int = 0
    terminal: bool = False

    @property
    def unexplored(self) -> list[int]:
        return [i for i in self.pool if i not in self.explored]


@dataclass
class LoopReport:
    """Outcome of a run; ``freq_num`` is the per-geometry frequency count."""

    setting: str
    net: bnn.BayesNet
    metrics: MetricReport
    train_size: int
    freq_num: int
    sim_seconds: float
    n_cells: int
    history: list

    def table_row(self) -> dict:
        m = self.metrics
        return {"setting": self.setting, "train_size": self.train_size, "freq_num": self.freq_num,
                "sim_time_min": self.sim_seconds / 60.0, "mse": m.mse, "rmse": m.rmse,
                "r_squared": m.r_squared, "psnr": m.psnr}


# ----------------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------------

def uniform_indices(count: int, n: int) -> np.ndarray:
    """``n`` evenly spaced indices into a grid of ``count`` points, ends included."""
    n = min(n, count)
    if n == 1:
        return np.array([count // 2])
    return np.unique(np.round(np.linspace(0, count - 1, n)).astype(int))


def _record(spec: oracle.OracleSpec, index: int, grid: FrequencyGrid) -> Record:
    resp = oracle.simulate(spec, index, grid).to_db()
    return Record(index, spec.space.point(index), resp)


def _net_for(config: LoopConfig, spec: oracle.OracleSpec) -> bnn.BayesNet:
    dense = spec.dense_grid
    ncfg = replace(config.net, geometry_dims=spec.space.dims, channels=4,
                   grid_count=dense.count if config.net.mode == "vector" else config.net.grid_count)
    return bnn.BayesNet(ncfg, spec.space, (spec.fmin, spec.fmax), dense if ncfg.mode == "vector" else None)


def validate(net: bnn.BayesNet, validation: Validation, spec: oracle.OracleSpec, M: int,
             seed: int, label: str) -> MetricReport:
    """Ensemble-mean dB prediction against the dense references, pooled over all cells."""
    if not validation.indices:
        return MetricReport(*(float("nan"),) * 5)
    dense = spec.dense_grid
    geo = np.array([spec.space.values(i) for i in validation.indices])
    if net.config.deterministic:
        mean = bnn.predict_db(net, geo, dense)
    else:
        rng = rng_stream(seed, label)
        draws = [bnn.predict_db(net, geo, dense, net.draw_noise(rng)) for _ in range(M)]
        mean = np.mean(draws, axis=0)
    ref = np.stack([r.values for r in validation.references])
    return metrics(ref, mean, allow_undefined=True)


# ----------------------------------------------------------------------------
# Loop operations
# ----------------------------------------------------------------------------

def initialize(config: LoopConfig, spec: oracle.OracleSpec) -> LoopState:
    """Held-out validation set, initial random geometries and an untrained net."""
    space = spec.space
    n_val = config.validation_geometries
    if n_val + config.initial_geometries > space.size:
        raise ValueError("validation plus initial geometries exceed the design space")
    order = rng_stream(config.seed, "validation").permutation(space.size)
    val_idx = tuple(sorted(int(i) for i in order[:n_val]))
    pool = tuple(sorted(int(i) for i in order[n_val:]))
    dense = spec.dense_grid
    refs = tuple(oracle.dense_reference(spec, i) for i in val_idx)
    validation = Validation(val_idx, refs, len(val_idx) * dense.count * spec.cost_per_point)

    pick = rng_stream(config.seed, "initial-geometries").choice(len(pool), config.initial_geometries, replace=False)
    chosen = sorted(pool[int(k)] for k in pick)
    fgrid = dense.subset(uniform_indices(dense.count, config.initial_frequencies))
    records = [_record(spec, i, fgrid) for i in chosen]
    data = Dataset(list(records))
    return LoopState(0, data, set(chosen), pool, _net_for(config, spec), validation,
                     last_batch=records, sim_points=data.n_cells)


def _frequency_selection(config, spec, net, index, row, rng):
    dense = spec.dense_grid
    if config.frequency_policy == "uniform" or row is None:
        return tuple(int(i) for i in uniform_indices(dense.count, config.batch_frequencies))
    return uaw_afs(dense, row, config.batch_frequencies, rng).indices


def iterate(state: LoopState, config: LoopConfig, spec: oracle.OracleSpec) -> LoopState:
    """One train, quantify, sample, simulate round; returns a new state."""
    k = state.iteration
    seed = config.seed
    net = state.net
    first = net.trained_epochs == 0
    epochs = config.net.epochs if first else (config.online_epochs if config.online_epochs is not None
                                               else max(1, config.net.epochs // 5))
    if state.last_batch:
        net, _ = bnn.fit(net, Dataset(list(state.last_batch)), epochs=epochs, seed=seed, label=f"fit-{k}")

    dense = spec.dense_grid
    unexplored = state.unexplored
    selected = ()
    fallback = False
    new_records = []
    n_geo = min(config.batch_geometries, len(unexplored))
    if n_geo > 0:
        cand = unexplored
        if len(cand) > config.candidate_cap:
            sub = rng_stream(seed, f"candidates-{k}").choice(len(cand), config.candidate_cap, replace=False)
            cand = [cand[int(i)] for i in np.sort(sub)]
        field_ = None
        if config.needs_uncertainty:
            field_ = uncertainty_field(net, [spec.space.point(i) for i in cand], dense,
                                       config.ensemble_size, rng_stream(seed, f"ensemble-{k}"))
        lam = 1.0 if config.geometry_policy == "random" else config.lam
        agg = aggregate_geometry(field_) if field_ is not None else np.zeros(len(cand))
        draw = sample_geometry(agg, range(len(cand)), MixtureConfig(lam, n_geo), rng_stream(seed, f"geometry-{k}"))
        fallback = draw.uniform_fallback
        picks = []
        frng = rng_stream(seed, f"frequency-{k}")
        for pos in sorted(draw.indices, key=lambda p: cand[p]):
            row = field_.values[pos] if field_ is not None else None
            idx = _frequency_selection(config, spec, net, cand[pos], row, frng)
            picks.append((cand[pos], tuple(int(i) for i in idx)))
        picks.sort()
        for gi, idx in picks:
            new_records.append(_record(spec, gi, dense.subset(list(idx))))
        selected = tuple(picks)

    data = Dataset(list(state.dataset.records))
    data.extend(new_records)
    explored = set(state.explored) | {r.design_index for r in new_records}
    sim_points = state.sim_points + sum(r.grid.count for r in new_records)
    rep = validate(net, state.validation, spec, config.ensemble_size, seed, f"validation-{k}")
    entry = HistoryEntry(k + 1, rep.rmse, rep.r_squared, sim_points * spec.cost_per_point, data.n_cells,
                         selected, fallback)
    terminal = len(explored) >= len(state.pool)
    return LoopState(k + 1, data, explored, state.pool, net, state.validation,
                     state.history + [entry], new_records, sim_points, terminal)


def should_stop(state: LoopState, config: LoopConfig) -> bool:
    if state.terminal or state.iteration >= config.max_iterations:
        return True
    last = state.history[-1] if state.history else None
    return bool(last and config.val_threshold > 0 and last.val_rmse < config.val_threshold)


def finalize(state: LoopState, config: LoopConfig, spec: oracle.OracleSpec, setting: str = "uaw") -> LoopReport:
    """Refit on every accumulated record and score on the validation set."""
    if len(state.dataset) == 0:
        raise ValueError("nothing to train on")
    base = _net_for(config, spec) if config.final_cold else state.net
    epochs = config.final_epochs if config.final_epochs is not None else config.net.epochs
    net, _ = bnn.fit(base, state.dataset, epochs=epochs, seed=config.seed, label="final-fit")
    rep = validate(net, state.validation, spec, config.ensemble_size, config.seed, "validation-final")
    counts = {r.grid.count for r in state.dataset.records}
    return LoopReport(setting, net, rep, len(state.explored), max(counts),
                      state.sim_points * spec.cost_per_point, state.dataset.n_cells, list(state.history))


def run_loop(config: LoopConfig, spec: oracle.OracleSpec, setting: str = "uaw", progress=None) -> LoopReport:
    state = initialize(config, spec)
    while True:
        state = iterate(state, config, spec)
        h = state.history[-1]
        logger.info("iteration %d: val_rmse=%.4g records=%d", h.iteration, h.val_rmse, h.n_records)
        if progress:
            progress(h)
        if should_stop(state, config):
            break
    return finalize(state, config, spec, setting)


BASELINES = ("conventional", "random-uniform", "random-uaw")


def conventional_count(config: LoopConfig, pool_size: int) -> int:
    """Geometries swept densely by the conventional flow."""
    return max(1, min(pool_size, math.ceil(config.conventional_fraction * pool_size - 1e-9)))


def conventional_sim_seconds(config: LoopConfig, spec: oracle.OracleSpec) -> float:
    """Cost ledger of the conventional flow, without running it."""
    pool = spec.space.size - config.validation_geometries
    return conventional_count(config, pool) * spec.dense_count * spec.cost_per_point


def run_baseline(kind: str, config: LoopConfig, spec: oracle.OracleSpec) -> LoopReport:
    """Comparison settings at the loop's budget, or the full-sweep conventional flow."""
    if kind == "random-uniform":
        return run_loop(replace(config, geometry_policy="random", frequency_policy="uniform"), spec, kind)
    if kind == "random-uaw":
        return run_loop(replace(config, geometry_policy="random", frequency_policy="uaw"), spec, kind)
    if kind != "conventional":
        raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    cfg = replace(config, net=replace(config.net, deterministic=True))
    state = initialize(replace(cfg, initial_geometries=0), spec)
    n = conventional_count(cfg, len(state.pool))
    pick = rng_stream(cfg.seed, "conventional").choice(len(state.pool), n, replace=False)
    chosen = sorted(state.pool[int(i)] for i in pick)
    dense = spec.dense_grid
    data = Dataset([_record(spec, i, dense) for i in chosen])
    state.dataset = data
    state.explored = set(chosen)
    state.sim_points = data.n_cells
    return finalize(state, cfg, spec, kind)


# ----------------------------------------------------------------------------
# Exports
# ----------------------------------------------------------------------------

def history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "val_rmse", "val_r2", "cumulative_sim_seconds", "n_records"])
    for h in history:
        w.writerow([h.iteration, format_number(h.val_rmse), format_number(h.val_r2),
                    format_number(h.cumulative_sim_seconds), h.n_records])
    return buf.getvalue()


def selections_csv(history, spec: oracle.OracleSpec) -> str:
    """One row per simulated (iteration, geometry, frequency) for overlay plots."""
    dense = spec.dense_grid
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "design_index", *spec.space.names, "frequency_index", "frequency_hz"])
    for h in history:
        for gi, idx in h.selected:
            vals = [format_number(v) for v in spec.space.values(gi)]
            for j in idx:
                w.writerow([h.iteration, gi, *vals, j, format_number(float(dense.points[j]))])
    return buf.getvalue()


def table_csv(reports) -> str:
    """Comparison table: one row per setting, cost in simulated minutes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["setting", "train_size", "freq_num", "sim_time_min", "mse", "rmse", "r_squared", "psnr"]
    w.writerow(cols)
    for r in reports:
        row = r.table_row()
        w.writerow([row[c] if isinstance(row[c], (str, int)) else format_number(row[c], 12) for c in cols])
    return buf.getvalue()
