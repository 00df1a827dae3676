"""Shared domain types, evaluation metrics and labeled random streams."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: Magnitude floor applied before converting to dB.
DB_FLOOR = 1e-12


class ShapeError(ValueError):
    """Two operands do not share a grid, channel list or matrix shape."""


class UndefinedMetricError(ArithmeticError):
    """A metric has no finite value for the given data (e.g. R² of a constant reference)."""


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


# ----------------------------------------------------------------------------
# Frequency axis and responses
# ----------------------------------------------------------------------------

class FrequencyGrid:
    """Strictly increasing set of positive frequencies in Hz.

    Grids compare equal only when every point matches exactly.
    """

    __slots__ = ("_points",)

    def __init__(self, points: Iterable[float]):
        pts = _frozen(np.atleast_1d(np.asarray(points, dtype=float)).ravel())
        if pts.size < 1:
            raise ValueError("a frequency grid needs at least one point")
        if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
            raise ValueError("frequencies must be finite and > 0")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        self._points = pts

    @classmethod
    def linspace(cls, fmin: float, fmax: float, count: int) -> "FrequencyGrid":
        if count == 1:
            return cls([fmin])
        return cls(np.linspace(fmin, fmax, count))

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def min(self) -> float:
        return float(self._points[0])

    @property
    def max(self) -> float:
        return float(self._points[-1])

    @property
    def count(self) -> int:
        return int(self._points.size)

    def __len__(self) -> int:
        return self.count

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * self._points

    @property
    def s(self) -> np.ndarray:
        """Laplace variable ``j*2*pi*f`` at each point."""
        return 1j * self.omega

    def subset(self, indices) -> "FrequencyGrid":
        idx = np.asarray(indices, dtype=int)
        return FrequencyGrid(self._points[np.sort(idx)])

    def index_of(self, other: "FrequencyGrid") -> np.ndarray:
        """Indices of ``other``'s points inside this grid (exact match required)."""
        idx = np.searchsorted(self._points, other.points)
        ok = (idx < self.count) & (self._points[np.minimum(idx, self.count - 1)] == other.points)
        if not np.all(ok):
            raise ShapeError("grid is not a subset of this grid")
        return idx

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return self.count == other.count and bool(np.all(self._points == other._points))

    def __hash__(self) -> int:
        return hash(self._points.tobytes())

    def __repr__(self) -> str:
        return f"FrequencyGrid({self.min:.6g}..{self.max:.6g} Hz, n={self.count})"


def channel_name(ch: tuple[int, int]) -> str:
    return f"S{ch[0] + 1}{ch[1] + 1}"


def all_channels(ports: int) -> tuple[tuple[int, int], ...]:
    """Every (i, j) port pair in row-major order, reciprocal duplicates included."""
    return tuple((i, j) for i in range(ports) for j in range(ports))


def to_db(mag) -> np.ndarray:
    return 20.0 * np.log10(np.maximum(np.abs(mag), DB_FLOOR))


def from_db(db) -> np.ndarray:
    return 10.0 ** (np.asarray(db, dtype=float) / 20.0)


@dataclass(frozen=True, eq=False)
class ComplexResponse:
    """Complex ``p x p`` scattering matrix sampled on a grid; ``data`` has shape (n, p, p)."""

    grid: FrequencyGrid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim == 1:
            data = data[:, None, None]
        if data.ndim != 3 or data.shape[1] != data.shape[2]:
            raise ShapeError(f"expected data of shape (n, p, p), got {data.shape}")
        if data.shape[0] != self.grid.count:
            raise ShapeError("data length does not match the grid")
        object.__setattr__(self, "data", _frozen(data, complex))

    @property
    def ports(self) -> int:
        return self.data.shape[1]

    def to_db(self, channels: Sequence[tuple[int, int]] | None = None) -> "DbResponse":
        chans = tuple(channels) if channels is not None else all_channels(self.ports)
        vals = np.stack([to_db(self.data[:, i, j]) for i, j in chans], axis=1)
        return DbResponse(self.grid, chans, vals)

    def subset(self, indices) -> "ComplexResponse":
        idx = np.sort(np.asarray(indices, dtype=int))
        return ComplexResponse(self.grid.subset(idx), self.data[idx])

    def is_reciprocal(self, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.data - np.swapaxes(self.data, 1, 2)), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class DbResponse:
    """Per-channel ``|S_ij|`` in dB; ``values`` has shape (grid count, channels)."""

    grid: FrequencyGrid
    channels: tuple
    values: np.ndarray

    def __post_init__(self):
        chans = tuple((int(i), int(j)) for i, j in self.channels)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (self.grid.count, len(chans)):
            raise ShapeError(f"values shape {vals.shape} != ({self.grid.count}, {len(chans)})")
        if not np.all(np.isfinite(vals)):
            raise ValueError("dB values must be finite")
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def channel_names(self) -> list[str]:
        return [channel_name(c) for c in self.channels]

    def magnitude(self) -> np.ndarray:
        return from_db(self.values)

    def subset(self, indices) -> "DbResponse":
        idx = np.sort(np.asarray(indices, dtype=int))
        return DbResponse(self.grid.subset(idx), self.channels, self.values[idx])


# ----------------------------------------------------------------------------
# Design space
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    step: float
    unit: str = ""

    def __post_init__(self):
        if self.step <= 0 or self.max < self.min:
            raise ValueError(f"axis {self.name!r}: need step > 0 and max >= min")
        n = (self.max - self.min) / self.step
        if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
            raise ValueError(f"axis {self.name!r}: (max - min)/step is not integral")

    @property
    def count(self) -> int:
        return int(round((self.max - self.min) / self.step)) + 1

    @property
    def values(self) -> np.ndarray:
        return self.min + self.step * np.arange(self.count)


@dataclass(frozen=True)
class DesignPoint:
    names: tuple
    values: tuple

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def __getitem__(self, name: str) -> float:
        return self.values[self.names.index(name)]


@dataclass(frozen=True)
class DesignSpace:
    """Lattice of geometric parameters, enumerated row-major in axis order.

    A space with no axes has exactly one (empty) point.
    """

    axes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError("axis names must be unique")

    @property
    def names(self) -> tuple:
        return tuple(a.name for a in self.axes)

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.axes else 1

    @property
    def lower(self) -> np.ndarray:
        return np.array([a.min for a in self.axes], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([a.max for a in self.axes], dtype=float)

    def coords(self, index) -> np.ndarray:
        """Per-axis integer lattice coordinates of one or many flat indices."""
        index = np.asarray(index, dtype=np.int64)
        if np.any(index < 0) or np.any(index >= self.size):
            raise IndexError("design index out of range")
        if not self.axes:
            return np.zeros(index.shape + (0,), dtype=np.int64)
        return np.stack(np.unravel_index(index, self.shape), axis=-1)

    def values(self, index) -> np.ndarray:
        """Parameter values for flat indices; shape (..., dims)."""
        c = self.coords(index)
        if not self.axes:
            return c.astype(float)
        steps = np.array([a.step for a in self.axes])
        return self.lower + c * steps

    def point(self, index: int) -> DesignPoint:
        return DesignPoint(self.names, tuple(float(v) for v in self.values(int(index))))

    def index(self, point) -> int:
        vals = point.as_array() if isinstance(point, DesignPoint) else np.asarray(point, dtype=float)
        if vals.shape != (self.dims,):
            raise ShapeError("point dimension does not match the design space")
        coords = []
        for a, v in zip(self.axes, vals):
            k = (v - a.min) / a.step
            kr = round(k)
            if abs(k - kr) > 1e-6 or kr < 0 or kr >= a.count:
                raise ValueError(f"value {v} is off the lattice of axis {a.name!r}")
            coords.append(int(kr))
        if not self.axes:
            return 0
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def contains(self, point) -> bool:
        try:
            self.index(point)
        except (ValueError, ShapeError):
            return False
        return True

    def normalize(self, values) -> np.ndarray:
        """Affine map of each axis onto [-1, 1] using the axis bounds."""
        v = np.asarray(values, dtype=float)
        lo, hi = self.lower, self.upper
        span = np.where(hi > lo, hi - lo, 1.0)
        return np.where(hi > lo, 2.0 * (v - lo) / span - 1.0, 0.0)


# ----------------------------------------------------------------------------
# Dataset
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    design_index: int
    point: DesignPoint
    response: DbResponse
    split: str = "train"

    @property
    def grid(self) -> FrequencyGrid:
        return self.response.grid


@dataclass
class Dataset:
    """Labeled (geometry, frequency subset, dB response) records."""

    records: list = field(default_factory=list)

    def __post_init__(self):
        self._seen = set()
        for r in self.records:
            self._register(r)

    def _register(self, rec: Record):
        if rec.split != "train":
            return
        keys = {(rec.design_index, float(f)) for f in rec.grid.points}
        dup = keys & self._seen
        if dup:
            raise ValueError(f"duplicate (design point, frequency) training pair: {sorted(dup)[0]}")
        self._seen |= keys

    def add(self, rec: Record) -> None:
        self._register(rec)
        self.records.append(rec)

    def extend(self, recs: Iterable[Record]) -> None:
        for r in recs:
            self.add(r)

    def split(self, tag: str) -> "Dataset":
        return Dataset([r for r in self.records if r.split == tag])

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def n_cells(self) -> int:
        return sum(r.grid.count for r in self.records)

    @property
    def design_indices(self) -> list[int]:
        return [r.design_index for r in self.records]


# ----------------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricReport:
    mae: float
    mse: float
    rmse: float
    r_squared: float
    psnr: float

    def as_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse,
                "r_squared": self.r_squared, "psnr": self.psnr}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in self.as_dict().items():
            w.writerow([k, format_number(v, 12)])
        return buf.getvalue()


def format_number(x: float, digits: int = 17) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{digits}g}"


def _values(x) -> tuple[np.ndarray, object]:
    if isinstance(x, DbResponse):
        return x.values, (x.grid, x.channels)
    if isinstance(x, ComplexResponse):
        return x.data, (x.grid, x.ports)
    return np.asarray(x), None


def metrics(reference, estimate, *, allow_undefined: bool = False) -> MetricReport:
    """Error metrics of ``estimate`` against ``reference`` pooled over every cell.

    Accepts two DbResponses, two ComplexResponses or two equally-shaped arrays
    (complex arrays use ``|difference|``). MAE/MSE/RMSE are symmetric in the
    arguments; R² (centred on the reference mean) and PSNR (peak taken as
    ``max|reference|``) are not. A perfect estimate has PSNR ``inf``.

    Raises
    ------
    ShapeError
        Grids, channel lists or array shapes differ.
    UndefinedMetricError
        The reference is constant, so R² is undefined. With ``allow_undefined``
        R² is reported as ``nan`` instead.
    """
    ref, ref_key = _values(reference)
    est, est_key = _values(estimate)
    if type(reference) is not type(estimate) and (ref_key is not None or est_key is not None):
        raise ShapeError("reference and estimate have different types")
    if ref.shape != est.shape:
        raise ShapeError(f"shape mismatch {ref.shape} vs {est.shape}")
    if ref_key is not None:
        if ref_key[0] != est_key[0] or ref_key[1] != est_key[1]:
            raise ShapeError("grid or channel mismatch")
    if ref.size == 0:
        raise ShapeError("empty operands")
    err2 = np.abs(est - ref) ** 2
    n = ref.size
    mae = float(np.sum(np.sqrt(err2)) / n)
    mse = float(np.sum(err2) / n)
    rmse = math.sqrt(mse)
    ss_tot = float(np.sum(np.abs(ref - np.sum(ref) / n) ** 2))
    if ss_tot == 0.0:
        if not allow_undefined:
            raise UndefinedMetricError("R² undefined: reference is constant")
        r2 = float("nan")
    else:
        r2 = 1.0 - float(np.sum(err2)) / ss_tot
    peak = float(np.max(np.abs(ref)))
    psnr = float("inf") if rmse == 0.0 else 20.0 * math.log10(peak / rmse) if peak > 0 else float("-inf")
    return MetricReport(mae, mse, rmse, r2, psnr)


def frobenius_deviation(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2)))


# ----------------------------------------------------------------------------
# Random streams
# ----------------------------------------------------------------------------

def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator keyed by ``(seed, label)``.

    Same key, same stream; every stochastic step in the package draws from
    one of these so runs are a pure function of the seed.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF, *words])
    return np.random.Generator(np.random.PCG64(ss))
