"""Closed-form two-port S-parameter generators standing in for a field solver.

Three parametric structures plus an exact rational target:

``mtl``
    Pair of parallel microstrip lines of length ``L``; ports sit at the two
    ends of the first line and the second line is matched at both ends. The
    through path is the average of even- and odd-mode lossy line responses
    (telegrapher ABCD matrices, Hammerstad-Jensen quasi-static impedances).
``bclf``
    Parallel coupled-line band-pass filter: 50-ohm-ish feed line, four
    coupled sections (1 = 4, 2 = 3) with open-circuited far ends, feed line.
``si``
    Square spiral inductor as a lumped pi network: modified-Wheeler series
    inductance, skin-effect series resistance, underpass capacitance, and an
    oxide / substrate R-C shunt branch at each port.
``rational``
    A stored :class:`~rfsurrogate.vecfit.RationalModel`; its optional
    ``scale`` axis stretches every pole and residue by a common factor.

Lengths on the design axes are in millimetres (``mtl``, ``bclf``) or micrometres
(``si``); frequencies in Hz. Every response is reciprocal and passive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .core import Axis, ComplexResponse, DbResponse, DesignPoint, DesignSpace, FrequencyGrid
from .vecfit import RationalModel

C0 = 299_792_458.0
MU0 = 4e-7 * math.pi
EPS0 = 1.0 / (MU0 * C0 ** 2)


class OracleSpecError(ValueError):
    """Invalid design point or non-physical derived element value."""


# ----------------------------------------------------------------------------
# Two-port helpers
# ----------------------------------------------------------------------------

def abcd_to_s(abcd: np.ndarray, z0: float = 50.0) -> np.ndarray:
    A, B, C, D = abcd[:, 0, 0], abcd[:, 0, 1], abcd[:, 1, 0], abcd[:, 1, 1]
    den = A + B / z0 + C * z0 + D
    s = np.empty_like(abcd)
    s[:, 0, 0] = (A + B / z0 - C * z0 - D) / den
    s[:, 0, 1] = 2.0 * (A * D - B * C) / den
    s[:, 1, 0] = 2.0 / den
    s[:, 1, 1] = (-A + B / z0 - C * z0 + D) / den
    return s


def y_to_s(y: np.ndarray, z0: float = 50.0) -> np.ndarray:
    eye = np.eye(y.shape[-1])
    return np.linalg.solve((eye + z0 * y).transpose(0, 2, 1), (eye - z0 * y).transpose(0, 2, 1)).transpose(0, 2, 1)


def line_abcd(gamma_l: np.ndarray, zc: np.ndarray) -> np.ndarray:
    ch, sh = np.cosh(gamma_l), np.sinh(gamma_l)
    out = np.empty(gamma_l.shape + (2, 2), dtype=complex)
    out[:, 0, 0] = ch
    out[:, 0, 1] = zc * sh
    out[:, 1, 0] = sh / zc
    out[:, 1, 1] = ch
    return out


def cascade(*mats: np.ndarray) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


# ----------------------------------------------------------------------------
# Microstrip quasi-static model
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Substrate:
    er: float
    h: float  # m
    tan_d: float
    sigma: float  # metal conductivity, S/m


def microstrip_z0(w: float, h: float, t: float, er: float) -> tuple[float, float]:
    """Characteristic impedance and effective permittivity (Hammerstad-Jensen, thickness-corrected)."""
    if w <= 0 or h <= 0 or t < 0:
        raise OracleSpecError("microstrip dimensions must be positive")
    we = w + (t / math.pi) * (1.0 + math.log(2.0 * h / t)) if t > 0 else w
    u = we / h
    eeff = (er + 1) / 2 + (er - 1) / 2 / math.sqrt(1 + 12 / u) - (er - 1) * (t / h) / (4.6 * math.sqrt(u))
    if u <= 1:
        z0 = 60.0 / math.sqrt(eeff) * math.log(8.0 / u + u / 4.0)
    else:
        z0 = 120.0 * math.pi / (math.sqrt(eeff) * (u + 1.393 + 0.667 * math.log(u + 1.444)))
    return z0, eeff


def coupling_coefficient(s: float, h: float) -> float:
    """Empirical edge-coupling coefficient of two parallel strips at spacing ``s``."""
    return 0.6 * math.exp(-s / (0.8 * h))


def _mode_line(f: np.ndarray, z0: float, eeff: float, w: float, t: float, sub: Substrate):
    """Propagation constant per metre and complex characteristic impedance of one quasi-TEM mode."""
    w_ = 2 * np.pi * f
    Lp = z0 * math.sqrt(eeff) / C0
    Cp = math.sqrt(eeff) / (z0 * C0)
    delta = 1.0 / np.sqrt(np.pi * f * MU0 * sub.sigma)
    Rp = 1.0 / (sub.sigma * w * delta * (1.0 - np.exp(-t / delta)))
    q = sub.er * (eeff - 1) / (eeff * (sub.er - 1))
    Gp = w_ * Cp * sub.tan_d * q
    Z = Rp + 1j * w_ * Lp
    Y = Gp + 1j * w_ * Cp
    return np.sqrt(Z * Y), np.sqrt(Z / Y)


def coupled_modes(f, w, s, t, sub: Substrate):
    if s <= 0:
        raise OracleSpecError("coupled-line spacing must be positive")
    z0, eeff = microstrip_z0(w, sub.h, t, sub.er)
    k = coupling_coefficient(s, sub.h)
    z0e, z0o = z0 * math.sqrt((1 + k) / (1 - k)), z0 * math.sqrt((1 - k) / (1 + k))
    ee, eo = eeff * (1 + 0.1 * k), eeff * (1 - 0.3 * k)
    return _mode_line(f, z0e, ee, w, t, sub), _mode_line(f, z0o, eo, w, t, sub)


# ----------------------------------------------------------------------------
# Structures
# ----------------------------------------------------------------------------

MTL_SUBSTRATE = Substrate(er=2.2, h=0.787e-3, tan_d=9e-4, sigma=5.8e7)
BCLF_SUBSTRATE = Substrate(er=3.38, h=0.508e-3, tan_d=2.7e-3, sigma=5.8e7)
BCLF_METAL_T = 35e-6


def mtl_response(f: np.ndarray, S: float, L: float, T: float, W: float,
                 sub: Substrate = MTL_SUBSTRATE, z_ref: float = 50.0) -> np.ndarray:
    """Through path of a coupled microstrip pair; S, L, W in mm, T in um."""
    if L < 0:
        raise OracleSpecError("line length L must be >= 0")
    (ge, ze), (go, zo) = coupled_modes(f, W * 1e-3, S * 1e-3, T * 1e-6, sub)
    se = abcd_to_s(line_abcd(ge * L * 1e-3, ze), z_ref)
    so = abcd_to_s(line_abcd(go * L * 1e-3, zo), z_ref)
    return 0.5 * (se + so)


def coupled_section_abcd(f, length, w, s, t, sub: Substrate) -> np.ndarray:
    """Coupled-line section between diagonal ports, other two ends open."""
    (ge, ze), (go, zo) = coupled_modes(f, w, s, t, sub)
    ce, co = 1.0 / np.tanh(ge * length), 1.0 / np.tanh(go * length)
    se, so = 1.0 / np.sinh(ge * length), 1.0 / np.sinh(go * length)
    z11 = 0.5 * (ze * ce + zo * co)
    z21 = 0.5 * (ze * se - zo * so)
    out = np.empty(np.shape(f) + (2, 2), dtype=complex)
    out[:, 0, 0] = z11 / z21
    out[:, 0, 1] = (z11 * z11 - z21 * z21) / z21
    out[:, 1, 0] = 1.0 / z21
    out[:, 1, 1] = z11 / z21
    return out


def bclf_response(f: np.ndarray, g: dict, sub: Substrate = BCLF_SUBSTRATE, t: float = BCLF_METAL_T,
                  z_ref: float = 50.0) -> np.ndarray:
    """Four-section coupled-line band-pass filter; all dimensions in mm."""
    mm = 1e-3
    z0, eeff = microstrip_z0(g["W"] * mm, sub.h, t, sub.er)
    gam, zc = _mode_line(f, z0, eeff, g["W"] * mm, t, sub)
    feed = line_abcd(gam * g["L"] * mm, zc)
    s1 = coupled_section_abcd(f, g["L1"] * mm, g["W1"] * mm, g["S1"] * mm, t, sub)
    s2 = coupled_section_abcd(f, g["L2"] * mm, g["W2"] * mm, g["S2"] * mm, t, sub)
    return abcd_to_s(cascade(feed, s1, s2, s2, s1, feed), z_ref)


@dataclass(frozen=True)
class SpiralProcess:
    turns: float = 3.5
    sigma: float = 3.0e7  # top metal, S/m
    t_metal: float = 3e-6
    t_ox: float = 5e-6  # spiral to substrate
    t_ox_under: float = 1e-6  # spiral to underpass
    eps_ox: float = 3.9
    c_sub: float = 1.6e-6  # F/m^2
    g_sub: float = 1.0e5  # S/m^2


def spiral_elements(Din: float, S: float, W: float, proc: SpiralProcess = SpiralProcess()) -> dict:
    """Lumped pi-model element values; geometry in um."""
    um = 1e-6
    n = proc.turns
    din, s, w = Din * um, S * um, W * um
    for name, v in (("Din", din), ("S", s), ("W", w)):
        if not v > 0:
            raise OracleSpecError(f"spiral dimension {name} must be positive, got {v / um!r} um")
    dout = din + 2 * n * w + 2 * (n - 1) * s
    davg = 0.5 * (din + dout)
    rho = (dout - din) / (dout + din)
    length = 4 * n * davg
    eox = proc.eps_ox * EPS0
    el = {
        "Ls": 2.34 * MU0 * n ** 2 * davg / (1 + 2.75 * rho),
        "Cs": n * w ** 2 * eox / proc.t_ox_under,
        "Cox": 0.5 * length * w * eox / proc.t_ox,
        "Csi": 0.5 * length * w * proc.c_sub,
        "Rsi": 2.0 / (length * w * proc.g_sub),
        "length": length,
        "w": w,
    }
    for k in ("Ls", "Cs", "Cox", "Csi", "Rsi"):
        if not el[k] > 0:
            raise OracleSpecError(f"non-physical {k}={el[k]!r}")
    return el


def si_response(f: np.ndarray, Din: float, S: float, W: float, proc: SpiralProcess = SpiralProcess(),
                z_ref: float = 50.0) -> np.ndarray:
    el = spiral_elements(Din, S, W, proc)
    w_ = 2 * np.pi * f
    delta = 1.0 / np.sqrt(np.pi * f * MU0 * proc.sigma)
    rs = el["length"] / (proc.sigma * el["w"] * delta * (1.0 - np.exp(-proc.t_metal / delta)))
    y_series = 1.0 / (rs + 1j * w_ * el["Ls"]) + 1j * w_ * el["Cs"]
    z_sub = 1.0 / (1.0 / el["Rsi"] + 1j * w_ * el["Csi"])
    y_shunt = 1.0 / (1.0 / (1j * w_ * el["Cox"]) + z_sub)
    y = np.empty(f.shape + (2, 2), dtype=complex)
    y[:, 0, 0] = y[:, 1, 1] = y_shunt + y_series
    y[:, 0, 1] = y[:, 1, 0] = -y_series
    return y_to_s(y, z_ref)


def default_rational_model() -> RationalModel:
    """Two-port with narrow resonances at 2.2, 3.9, 5.3, 6.6 and 8.4 GHz."""
    w = 2 * np.pi * 1e9
    spec = [(2.2, 40, 0.30, 0.10), (3.9, 25, 0.25, -0.20), (5.3, 60, 0.20, 0.15),
            (6.6, 35, 0.30, -0.10), (8.4, 20, 0.35, 0.20)]
    poles, res = [], []
    for fr, q, a, b in spec:
        p = complex(-fr * w / (2 * q), fr * w)
        sigma = -p.real
        r = np.array([[a, b], [b, a * 0.8]], dtype=complex) * sigma
        poles += [p, np.conj(p)]
        res += [r, np.conj(r)]
    return RationalModel(np.array(poles), np.array(res), np.zeros((2, 2)), np.zeros((2, 2)))


# ----------------------------------------------------------------------------
# Oracle specification and entry points
# ----------------------------------------------------------------------------

TABLE_SPACES = {
    "bclf": (
        Axis("L", 7.7, 7.9, 0.1, "mm"), Axis("L1", 8.0, 8.2, 0.1, "mm"), Axis("L2", 7.8, 8.0, 0.1, "mm"),
        Axis("W", 0.9, 1.1, 0.1, "mm"), Axis("W1", 0.7, 0.9, 0.1, "mm"), Axis("W2", 0.9, 1.1, 0.1, "mm"),
        Axis("S1", 0.13, 0.16, 0.03, "mm"), Axis("S2", 0.55, 0.6, 0.05, "mm"),
    ),
    "si": (
        Axis("Din", 55.0, 60.0, 1.0, "um"), Axis("S", 1.5, 2.0, 0.1, "um"), Axis("W", 15.0, 20.0, 0.5, "um"),
    ),
    "mtl": (
        Axis("S", 1.5, 2.0, 0.1, "mm"), Axis("L", 25.0, 30.0, 1.0, "mm"),
        Axis("T", 25.0, 30.0, 1.0, "um"), Axis("W", 2.5, 3.0, 0.1, "mm"),
    ),
    "rational": (Axis("scale", 0.9, 1.1, 0.01, ""),),
}

DEFAULT_BANDS = {"bclf": (1e9, 8e9), "si": (0.1e9, 20e9), "mtl": (0.1e9, 10e9), "rational": (1e9, 10e9)}

# seconds per frequency point: a 401-point sweep costs roughly the per-sample minutes of the reference flow
DEFAULT_COST = {"bclf": 21.5 * 60 / 401, "si": 34.0 * 60 / 664, "mtl": 16.8 * 60 / 401, "rational": 1.0}


@dataclass(frozen=True)
class OracleSpec:
    kind: str
    space: DesignSpace
    fmin: float
    fmax: float
    dense_count: int = 401
    cost_per_point: float = 1.0
    z_ref: float = 50.0
    constants: dict = field(default_factory=dict)
    model: RationalModel | None = None

    def __post_init__(self):
        if self.kind not in TABLE_SPACES:
            raise OracleSpecError(f"unknown oracle kind {self.kind!r}")
        if not (0 < self.fmin <= self.fmax):
            raise OracleSpecError("band must satisfy 0 < fmin <= fmax")
        if self.dense_count < 1:
            raise OracleSpecError("dense_count must be >= 1")
        if self.kind == "rational" and self.model is None:
            object.__setattr__(self, "model", default_rational_model())
        if self.kind != "rational":
            need = {a.name for a in TABLE_SPACES[self.kind]}
            if set(self.space.names) != need:
                raise OracleSpecError(f"{self.kind} space must have axes {sorted(need)}")

    @classmethod
    def default(cls, kind: str, **overrides) -> "OracleSpec":
        if kind not in TABLE_SPACES:
            raise OracleSpecError(f"unknown oracle kind {kind!r}")
        kw = dict(kind=kind, space=DesignSpace(TABLE_SPACES[kind]), fmin=DEFAULT_BANDS[kind][0],
                  fmax=DEFAULT_BANDS[kind][1], cost_per_point=DEFAULT_COST[kind])
        kw.update(overrides)
        return cls(**kw)

    @property
    def dense_grid(self) -> FrequencyGrid:
        return FrequencyGrid.linspace(self.fmin, self.fmax, self.dense_count)


def _substrate(spec: OracleSpec, base: Substrate) -> Substrate:
    c = spec.constants
    return Substrate(er=c.get("er", base.er), h=c.get("h", base.h), tan_d=c.get("tan_d", base.tan_d),
                     sigma=c.get("sigma", base.sigma))


def simulate(spec: OracleSpec, x, frequencies: FrequencyGrid) -> ComplexResponse:
    """Closed-form two-port response of design ``x`` at ``frequencies``.

    ``x`` is a :class:`DesignPoint`, a flat lattice index, or a value vector.

    Raises
    ------
    OracleSpecError
        ``x`` is off the design lattice, a frequency is outside the band, or
        a derived element value is non-physical.
    """
    if isinstance(x, (int, np.integer)):
        point = spec.space.point(int(x))
    elif isinstance(x, DesignPoint):
        point = x
    else:
        point = DesignPoint(spec.space.names, tuple(float(v) for v in np.asarray(x, dtype=float)))
    if not spec.space.contains(point):
        raise OracleSpecError(f"design point {point.as_dict()} is outside the design space")
    f = frequencies.points
    tol = 1e-9 * spec.fmax
    if f[0] < spec.fmin - tol or f[-1] > spec.fmax + tol:
        raise OracleSpecError("frequencies outside the oracle band")
    g = point.as_dict()
    if spec.kind == "mtl":
        data = mtl_response(f, g["S"], g["L"], g["T"], g["W"], _substrate(spec, MTL_SUBSTRATE), spec.z_ref)
    elif spec.kind == "bclf":
        data = bclf_response(f, g, _substrate(spec, BCLF_SUBSTRATE), spec.constants.get("t", BCLF_METAL_T),
                             spec.z_ref)
    elif spec.kind == "si":
        proc = SpiralProcess(**{k: v for k, v in spec.constants.items() if k in SpiralProcess.__dataclass_fields__})
        data = si_response(f, g["Din"], g["S"], g["W"], proc, spec.z_ref)
    else:
        scale = g.get("scale", 1.0)
        m = spec.model
        if scale != 1.0:
            m = RationalModel(m.poles * scale, m.residues * scale, m.d, m.e / scale, m.include_linear)
        data = m(frequencies.s)
    return ComplexResponse(frequencies, data)


def dense_reference(spec: OracleSpec, x) -> DbResponse:
    return simulate(spec, x, spec.dense_grid).to_db()


def cost_ledger(events: Iterable, cost_per_point: float) -> float:
    """Synthetic simulation seconds for ``(design point, frequency count)`` events."""
    return float(sum(int(n) for _, n in events) * cost_per_point)
