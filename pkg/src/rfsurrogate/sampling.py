"""Uncertainty-directed sampling over geometry and frequency.

``uncertainty_field`` turns a trained :class:`~rfsurrogate.bnn.BayesNet` into
a non-negative map over (candidate geometry, frequency). Summing a row gives
one score per geometry, which ``sample_geometry`` mixes with a uniform floor
to pick the next simulation batch. ``uaw_afs`` then places the frequency
samples for one geometry so each sample covers an equal share of the
integrated uncertainty.

Frequencies are ``s`` and geometries are ``x`` throughout.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .bnn import BayesNet
from .core import FrequencyGrid, ShapeError, format_number, rng_stream


@dataclass(frozen=True)
class UncertaintyField:
    """``values[i, j]`` is the ensemble spread at candidate ``i`` and frequency ``grid[j]``."""

    candidates: tuple
    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.candidates), self.grid.count):
            raise ShapeError(f"field shape {v.shape} != ({len(self.candidates)}, {self.grid.count})")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("uncertainty values must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "candidates", tuple(self.candidates))

    def to_csv(self, labels=None) -> str:
        """Long-format CSV: candidate index, axis values, frequency, uncertainty.

        ``labels`` replaces the positional candidate index, e.g. with design
        space indices.
        """
        names = list(self.candidates[0].names) if self.candidates else []
        labels = range(len(self.candidates)) if labels is None else labels
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["candidate_index", *names, "frequency_hz", "uncertainty"])
        for label, cand, row in zip(labels, self.candidates, self.values):
            axis = [format_number(v) for v in cand.as_array()]
            for f, u in zip(self.grid.points, row):
                w.writerow([label, *axis, format_number(f), format_number(u)])
        return buf.getvalue()


@dataclass(frozen=True)
class MixtureConfig:
    lam: float = 0.3
    batch_size: int = 10

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass(frozen=True)
class GeometryDraw:
    indices: tuple
    uniform_fallback: bool = False


@dataclass(frozen=True)
class FrequencySelection:
    """Selected grid indices, the partition edges they came from, and the fallback flag."""

    indices: tuple
    edges: tuple
    uniform_fallback: bool = False

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def spread(samples) -> np.ndarray:
    """Population spread of ``samples`` (M, ..., channels) around their mean.

    Squared deviations are summed over the trailing channel axis (Frobenius
    norm per cell) and averaged over the M draws before the square root.
    """
    s = np.asarray(samples, dtype=float)
    dev = s - s.mean(axis=0)
    return np.sqrt(np.mean(np.sum(dev * dev, axis=-1), axis=0))


def uncertainty_field(net: BayesNet, candidates, grid: FrequencyGrid, M: int | None = None,
                      rng=None, noises=None, chunk_cells: int = 40000) -> UncertaintyField:
    """Ensemble spread in dB over every (candidate, frequency) pair.

    The M noise blocks are drawn once before any forward pass so each
    realization is the same network for every chunk of candidates.
    """
    cands = list(candidates)
    if noises is None:
        M = M or net.config.ensemble_size
        if M < 2:
            raise ValueError("ensemble size must be >= 2")
        if rng is None:
            rng = rng_stream(net.config.seed, "uncertainty")
        noises = [net.draw_noise(rng) for _ in range(M)]
    geo = np.array([c.as_array() for c in cands], dtype=float).reshape(len(cands), -1)
    out = np.zeros((len(cands), grid.count))
    per = max(1, chunk_cells // (grid.count if net.config.mode == "point" else 1))
    if net.config.mode == "vector":
        idx = net.grid.index_of(grid)
    # spread in output units; an unfitted net has no output scale yet
    scale = net.norm.out_std if net.norm.out_std is not None else 1.0
    for a in range(0, len(cands), per):
        g = geo[a:a + per]
        if net.config.mode == "point":
            x = net.norm.inputs(np.repeat(g, grid.count, axis=0), np.tile(grid.points, g.shape[0]))
            s = np.stack([net.forward(x, nz) for nz in noises]) * scale
            out[a:a + per] = spread(s).reshape(g.shape[0], grid.count)
        else:
            x = net.norm.inputs(g)
            s = np.stack([net.forward(x, nz)[:, idx, :] for nz in noises]) * scale
            out[a:a + per] = spread(s)
    return UncertaintyField(tuple(cands), grid, out)


def aggregate_geometry(field: UncertaintyField) -> np.ndarray:
    """Per-candidate uncertainty summed over the frequency grid."""
    return field.values.sum(axis=1)


def mixture_probabilities(agg, lam: float) -> tuple[np.ndarray, bool]:
    """Uniform/uncertainty mixture over the given entries; flags the uniform fallback."""
    u = np.asarray(agg, dtype=float)
    n = u.size
    total = u.sum()
    if total <= 0:
        return np.full(n, 1.0 / n), lam < 1.0
    return lam / n + (1.0 - lam) * u / total, False


def sample_geometry(agg, unexplored, config: MixtureConfig, rng) -> GeometryDraw:
    """Draw ``config.batch_size`` distinct candidates from the unexplored pool.

    ``agg`` is indexed by candidate. Each draw samples the mixture restricted
    to the still-unexplored candidates, then removes the winner and
    renormalizes.
    """
    pool = [int(i) for i in unexplored]
    if config.batch_size > len(pool):
        raise ValueError(f"batch of {config.batch_size} exceeds pool of {len(pool)}")
    u = np.asarray(agg, dtype=float)[pool]
    fallback = False
    chosen = []
    remaining = list(range(len(pool)))
    for _ in range(config.batch_size):
        p, fb = mixture_probabilities(u[remaining], config.lam)
        fallback = fallback or fb
        k = int(rng.choice(len(remaining), p=p))
        chosen.append(pool[remaining.pop(k)])
    return GeometryDraw(tuple(chosen), fallback)


def _inverse_edges(cum: np.ndarray, n: int) -> list[int]:
    """Grid-index edges splitting the cumulative mass into ``n`` equal parts."""
    count = cum.size
    total = cum[-1]
    edges = [0]
    for k in range(1, n):
        c = total * k / n
        j = int(np.searchsorted(cum, c, side="left"))
        if j == 0:
            pos = 0.0
        else:
            lo, hi = cum[j - 1], cum[j]
            pos = j - 1 + ((c - lo) / (hi - lo) if hi > lo else 1.0)
        edges.append(int(np.floor(pos)))
    edges.append(count)
    return edges


def uaw_afs(grid: FrequencyGrid, u, n_samples: int, rng) -> FrequencySelection:
    """Uncertainty-aware frequency selection for one geometry.

    The cumulative trapezoidal integral of ``u`` over frequency is split into
    ``n_samples`` equal-mass partitions. Partition edges are mapped back to
    grid indices by linear inverse interpolation (floored), and one index is
    drawn uniformly from each half-open range ``[l, r)``. A partition that
    collapses, or whose draw is already taken, moves to the nearest unused
    index to the right, else to the left.

    Returns
    -------
    FrequencySelection
        Sorted, distinct indices. ``uniform_fallback`` is set when ``u`` is
        identically zero and equal-width partitions were used instead.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.count,):
        raise ShapeError(f"uncertainty of shape {u.shape} does not match grid of {grid.count}")
    if n_samples < 1 or n_samples > grid.count:
        raise ValueError(f"n_samples must be in [1, {grid.count}]")
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise ValueError("uncertainty must be finite and non-negative")
    fallback = False
    if grid.count == 1:
        return FrequencySelection((0,), (0, 1), False)
    cum = cumulative_trapezoid(u, grid.points, initial=0.0)
    if cum[-1] <= 0:
        fallback = True
        cum = np.arange(grid.count, dtype=float)
    edges = _inverse_edges(cum, n_samples)
    used = set()
    picks = []
    for l, r in zip(edges[:-1], edges[1:]):
        k = int(rng.integers(l, r)) if r > l else min(l, grid.count - 1)
        if k in used:
            k = _nearest_free(k, used, grid.count)
        used.add(k)
        picks.append(k)
    return FrequencySelection(tuple(sorted(picks)), tuple(edges), fallback)


def _nearest_free(k: int, used: set, count: int) -> int:
    for j in range(k + 1, count):
        if j not in used:
            return j
    for j in range(k - 1, -1, -1):
        if j not in used:
            return j
    raise RuntimeError("no free grid index left")
