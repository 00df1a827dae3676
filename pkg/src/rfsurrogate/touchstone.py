"""Touchstone v1 reader and writer for 2-port S-parameters.

Data lines hold nine numbers: frequency then S11, S21, S12, S22 as pairs.
The file order puts S21 before S12; arrays in memory are ``data[k, i, j]``
with ``S(i+1)(j+1)``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .core import ComplexResponse, FrequencyGrid

UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
FORMATS = ("RI", "MA", "DB")
# (row, col) of each pair on a data line
_ORDER = ((0, 0), (1, 0), (0, 1), (1, 1))


class TouchstoneError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class OptionLineError(TouchstoneError):
    pass


class FrequencyOrderError(TouchstoneError):
    pass


class ColumnCountError(TouchstoneError):
    pass


def _parse_options(text: str, lineno: int) -> tuple[float, str, float]:
    tokens = text[1:].split()
    unit, fmt, ref = "GHZ", "MA", 50.0
    i = 0
    while i < len(tokens):
        t = tokens[i].upper()
        if t in UNITS:
            unit = t
        elif t in FORMATS:
            fmt = t
        elif t == "S":
            pass
        elif t in ("Y", "Z", "H", "G"):
            raise OptionLineError(f"only S parameters are supported, got {tokens[i]!r}", lineno)
        elif t == "R":
            if i + 1 >= len(tokens):
                raise OptionLineError("R without a reference impedance", lineno)
            try:
                ref = float(tokens[i + 1])
            except ValueError:
                raise OptionLineError(f"bad reference impedance {tokens[i + 1]!r}", lineno) from None
            if not ref > 0:
                raise OptionLineError("reference impedance must be positive", lineno)
            i += 1
        else:
            raise OptionLineError(f"unknown option {tokens[i]!r}", lineno)
        i += 1
    return UNITS[unit], fmt, ref


def _to_complex(a: np.ndarray, b: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "RI":
        return a + 1j * b
    mag = a if fmt == "MA" else 10.0 ** (a / 20.0)
    ang = np.deg2rad(b)
    return mag * (np.cos(ang) + 1j * np.sin(ang))


def loads(text: str) -> tuple[ComplexResponse, float]:
    """Parse Touchstone text; returns the response and the reference impedance.

    Raises
    ------
    OptionLineError, FrequencyOrderError, ColumnCountError
        Each carries the offending 1-based line number.
    """
    scale, fmt, ref = 1e9, "MA", 50.0
    seen_option = False
    rows = []
    last_f = -math.inf
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if not seen_option:
                scale, fmt, ref = _parse_options(line, lineno)
                seen_option = True
            continue
        parts = line.split()
        if len(parts) != 9:
            raise ColumnCountError(f"expected 9 columns for a 2-port line, found {len(parts)}", lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError as e:
            raise ColumnCountError(f"non-numeric value: {e}", lineno) from None
        if vals[0] <= last_f:
            raise FrequencyOrderError("frequencies must be strictly increasing", lineno)
        last_f = vals[0]
        rows.append(vals)
    if not rows:
        raise TouchstoneError("no data lines")
    arr = np.array(rows)
    data = np.empty((len(rows), 2, 2), dtype=complex)
    for k, (i, j) in enumerate(_ORDER):
        data[:, i, j] = _to_complex(arr[:, 1 + 2 * k], arr[:, 2 + 2 * k], fmt)
    return ComplexResponse(FrequencyGrid(arr[:, 0] * scale), data), ref


def read(path) -> ComplexResponse:
    return loads(Path(path).read_text())[0]


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dumps(resp: ComplexResponse, fmt: str = "RI", unit: str = "Hz", z_ref: float = 50.0) -> str:
    """Touchstone text with 17 significant digits; byte-identical for equal input."""
    fmt = fmt.upper()
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if unit.upper() not in UNITS:
        raise ValueError("unit must be one of Hz, kHz, MHz, GHz")
    if resp.ports != 2:
        raise ValueError("only 2-port responses can be written")
    if resp.grid.count == 0:
        raise ValueError("empty response")
    scale = UNITS[unit.upper()]
    lines = [f"# {unit} S {fmt} R {_fmt(z_ref)}"]
    tiny = np.finfo(float).tiny
    for k, f in enumerate(resp.grid.points):
        cols = [_fmt(f / scale)]
        for i, j in _ORDER:
            z = complex(resp.data[k, i, j])
            if fmt == "RI":
                a, b = z.real, z.imag
            else:
                mag = abs(z)
                a = mag if fmt == "MA" else 20.0 * math.log10(max(mag, tiny))
                b = math.degrees(math.atan2(z.imag, z.real))
            cols += [_fmt(a), _fmt(b)]
        lines.append(" ".join(cols))
    return "\n".join(lines) + "\n"


def write(resp: ComplexResponse, path, fmt: str = "RI", unit: str = "Hz", z_ref: float = 50.0) -> None:
    text = dumps(resp, fmt, unit, z_ref)
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise OSError(f"directory {path.parent} does not exist")
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
