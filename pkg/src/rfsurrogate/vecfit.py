"""Rational macromodels ``h(s) = d + s*e + sum_n r_n / (s - p_n)`` and their fitting.

The fitter is a relaxed vector-fitting loop run in real arithmetic: every
complex equation is split into real and imaginary rows and conjugate pole
pairs use the real basis ``1/(s-a) + 1/(s-a*)``, ``j/(s-a) - j/(s-a*)``, so
fitted coefficients come out exactly conjugate-paired. All elements of a
multiport response share one pole set. Frequencies are scaled by the band
maximum while solving and scaled back on return.

Also contains the ensemble-of-orders uncertainty and the classic adaptive
frequency sampling loop built on it, used as a baseline.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import ComplexResponse, FrequencyGrid, frobenius_deviation

logger = logging.getLogger(__name__)


#: Residue systems above this (column-scaled) condition number count as rank deficient.
MAX_CONDITION = 1e15


class SingularityError(ArithmeticError):
    pass


class ConditioningError(np.linalg.LinAlgError):
    def __init__(self, msg: str, condition: float):
        super().__init__(f"{msg} (condition estimate {condition:.3e})")
        self.condition = condition


class FitFailure(RuntimeError):
    """Fitting one member of an ensemble failed; ``order`` names it."""

    def __init__(self, order: int, cause: Exception):
        super().__init__(f"fit of order {order} failed: {cause}")
        self.order = order
        self.cause = cause


class OracleFailure(RuntimeError):
    """The response oracle raised; ``partial`` holds what had been selected."""

    def __init__(self, frequency: float, cause: Exception, partial: "AFSResult"):
        super().__init__(f"oracle failed at {frequency:.6g} Hz: {cause}")
        self.frequency = frequency
        self.cause = cause
        self.partial = partial


@dataclass
class FitInfo:
    converged: bool
    iterations: int
    rms_history: list = field(default_factory=list)
    condition: float = float("nan")


@dataclass(eq=False)
class RationalModel:
    """Pole-residue model with real offset ``d`` and real linear term ``e``.

    Poles are in rad/s. Complex poles are stored as adjacent conjugate pairs
    ``(p, conj(p))`` with ``Im p > 0`` first; residues follow the same order.
    """

    poles: np.ndarray
    residues: np.ndarray
    d: np.ndarray
    e: np.ndarray
    include_linear: bool = False
    info: FitInfo | None = None

    def __post_init__(self):
        self.poles = np.asarray(self.poles, dtype=complex).reshape(-1)
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        p = d.shape[0]
        self.d = d
        self.e = np.atleast_2d(np.asarray(self.e, dtype=float)) if self.e is not None else np.zeros_like(d)
        res = np.asarray(self.residues, dtype=complex)
        self.residues = res.reshape(self.poles.size, p, p)

    @property
    def order(self) -> int:
        return int(self.poles.size)

    @property
    def ports(self) -> int:
        return int(self.d.shape[0])

    @property
    def is_stable(self) -> bool:
        return bool(np.all(self.poles.real < 0))

    def __call__(self, s) -> np.ndarray:
        """Evaluate at arbitrary complex ``s``; returns shape (len(s), p, p)."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        if self.order:
            dist = np.abs(s[:, None] - self.poles[None, :])
            if np.any(dist < 1e-30):
                raise SingularityError("evaluation point coincides with a pole")
            h = np.einsum("kn,nij->kij", 1.0 / (s[:, None] - self.poles[None, :]), self.residues)
        else:
            h = np.zeros((s.size, self.ports, self.ports), dtype=complex)
        h = h + self.d[None]
        if self.include_linear:
            h = h + s[:, None, None] * self.e[None]
        return h


def evaluate(model: RationalModel, grid: FrequencyGrid) -> ComplexResponse:
    return ComplexResponse(grid, model(grid.s))


@dataclass(frozen=True)
class FitConfig:
    order: int = 10
    iterations: int = 20
    initial_poles: str = "linear"  # or "log"
    tolerance: float = 1e-8
    include_linear: bool = False

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.initial_poles not in ("linear", "log"):
            raise ValueError("initial_poles must be 'linear' or 'log'")


# ----------------------------------------------------------------------------
# Fitting internals (normalized frequency, real arithmetic)
# ----------------------------------------------------------------------------

def _initial_poles(w: np.ndarray, order: int, strategy: str) -> np.ndarray:
    """Conjugate pairs spread over the band with Re = -Im/100 (+1 real pole if odd)."""
    n_pairs = order // 2
    wmin = max(w.min(), w.max() * 1e-3)
    if strategy == "log":
        imag = np.geomspace(wmin, w.max(), n_pairs) if n_pairs else np.empty(0)
    else:
        imag = np.linspace(wmin, w.max(), n_pairs) if n_pairs else np.empty(0)
    poles = []
    for b in imag:
        poles += [complex(-b / 100, b), complex(-b / 100, -b)]
    if order % 2:
        poles.append(complex(-0.5 * (w.min() + w.max()), 0.0))
    return np.array(poles, dtype=complex)


def _pole_layout(poles: np.ndarray) -> list:
    """List of (index, is_pair) over the stored pole vector."""
    layout, k = [], 0
    while k < poles.size:
        if poles[k].imag != 0.0:
            layout.append((k, True))
            k += 2
        else:
            layout.append((k, False))
            k += 1
    return layout


def _basis(s: np.ndarray, poles: np.ndarray, layout) -> np.ndarray:
    cols = []
    for k, pair in layout:
        a = poles[k]
        if pair:
            g1 = 1.0 / (s - a)
            g2 = 1.0 / (s - np.conj(a))
            cols += [g1 + g2, 1j * g1 - 1j * g2]
        else:
            cols.append(1.0 / (s - a))
    return np.stack(cols, axis=1) if cols else np.zeros((s.size, 0), dtype=complex)


def _split(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a.real, a.imag], axis=0)


def _coeffs_to_residues(c: np.ndarray, layout, n: int) -> np.ndarray:
    """Real basis coefficients (N, ...) to complex residues on the stored poles."""
    res = np.zeros((n,) + c.shape[1:], dtype=complex)
    j = 0
    for k, pair in layout:
        if pair:
            res[k] = c[j] + 1j * c[j + 1]
            res[k + 1] = c[j] - 1j * c[j + 1]
            j += 2
        else:
            res[k] = c[j]
            j += 1
    return res


def _canonical(eigs: np.ndarray) -> np.ndarray:
    """Stabilize poles and order them as real poles / conjugate pairs."""
    eigs = np.where(eigs.real > 0, -eigs.real + 1j * eigs.imag, eigs)
    eigs = np.where(eigs.real == 0, eigs - 1e-12 * max(1.0, np.max(np.abs(eigs))), eigs)
    real = sorted(e.real for e in eigs if e.imag == 0)
    upper = sorted((e for e in eigs if e.imag > 0), key=lambda z: (z.imag, z.real))
    out = [complex(r, 0.0) for r in real]
    for z in upper:
        out += [z, np.conj(z)]
    return np.array(out, dtype=complex)


def _relocate(s: np.ndarray, H: np.ndarray, poles: np.ndarray, include_linear: bool) -> np.ndarray:
    """One relaxed pole-identification step.

    ``H`` has shape (Ns, K) for K scalar responses. Each response's own
    numerator unknowns are eliminated by QR so only the shared scaling
    function coefficients remain in the stacked system.
    """
    ns, K = H.shape
    layout = _pole_layout(poles)
    phi = _basis(s, poles, layout)
    N = phi.shape[1]
    num = [phi, np.ones((ns, 1))]
    if include_linear:
        num.append(s[:, None])
    num = np.concatenate(num, axis=1)
    n_num = num.shape[1]
    sig = np.concatenate([phi, np.ones((ns, 1))], axis=1)  # N + 1 unknowns

    blocks = []
    for k in range(K):
        A = np.concatenate([num, -H[:, k:k + 1] * sig], axis=1)
        Ar = _split(A)
        scale = np.linalg.norm(Ar, axis=0)
        scale[scale == 0] = 1.0
        R = np.linalg.qr(Ar / scale, mode="r")
        blocks.append(R[n_num:n_num + N + 1, n_num:] * scale[n_num:])
    # relaxation row: sum over s of Re(sigma(s)) equals Ns
    weight = np.linalg.norm(H) / ns
    relax = weight * np.real(np.sum(sig, axis=0))
    Aall = np.concatenate(blocks + [relax[None, :]], axis=0)
    ball = np.zeros(Aall.shape[0])
    ball[-1] = weight * ns
    col = np.linalg.norm(Aall, axis=0)
    col[col == 0] = 1.0
    x = np.linalg.lstsq(Aall / col, ball, rcond=None)[0] / col
    c_tilde, d_tilde = x[:N], x[N]

    tol_low = 1e-8
    if abs(d_tilde) < tol_low or not np.isfinite(d_tilde):
        # relaxation degenerated: refit with d_tilde pinned away from zero
        d_tilde = tol_low if not np.isfinite(d_tilde) or d_tilde == 0 else tol_low * np.sign(d_tilde)
        A2 = np.concatenate(blocks, axis=0)
        b2 = -A2[:, N] * d_tilde
        A2 = A2[:, :N]
        col = np.linalg.norm(A2, axis=0)
        col[col == 0] = 1.0
        c_tilde = np.linalg.lstsq(A2 / col, b2, rcond=None)[0] / col

    Amat = np.zeros((N, N))
    bvec = np.zeros(N)
    j = 0
    for k, pair in layout:
        a = poles[k]
        if pair:
            Amat[j, j] = Amat[j + 1, j + 1] = a.real
            Amat[j, j + 1] = a.imag
            Amat[j + 1, j] = -a.imag
            bvec[j] = 2.0
            j += 2
        else:
            Amat[j, j] = a.real
            bvec[j] = 1.0
            j += 1
    zeros = np.linalg.eigvals(Amat - np.outer(bvec, c_tilde) / d_tilde)
    return _canonical(zeros)


def _residues(s: np.ndarray, H: np.ndarray, poles: np.ndarray, include_linear: bool):
    """Least-squares residues, offset and linear term for fixed poles."""
    ns, K = H.shape
    layout = _pole_layout(poles)
    phi = _basis(s, poles, layout)
    N = phi.shape[1]
    cols = [phi, np.ones((ns, 1))]
    if include_linear:
        cols.append(s[:, None])
    A = _split(np.concatenate(cols, axis=1))
    b = _split(H.astype(complex))
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    sv = np.linalg.svd(As, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    x = np.linalg.lstsq(As, b, rcond=None)[0] / scale[:, None]
    res = _coeffs_to_residues(x[:N], layout, poles.size)
    d = x[N]
    e = x[N + 1] if include_linear else np.zeros(K)
    return res, d, e, cond


def fit(samples: ComplexResponse, config: FitConfig = FitConfig()) -> RationalModel:
    """Fit a stable real-coefficient rational model to a sampled response.

    Runs up to ``config.iterations`` pole relocations, stopping early once the
    largest relative pole movement drops below ``config.tolerance``. The model
    with the lowest RMS error over all iterations is returned; ``model.info``
    records convergence, the per-iteration RMS history and the condition
    estimate of the final residue system.

    Raises
    ------
    ValueError
        Fewer than ``2*order + 2`` samples, or non-finite samples.
    ConditioningError
        The residue least-squares system is numerically rank deficient.
    """
    N = config.order
    if samples.grid.count < 2 * N + 2:
        raise ValueError(f"need at least {2 * N + 2} samples for order {N}, got {samples.grid.count}")
    if not np.all(np.isfinite(samples.data)):
        raise ValueError("samples must be finite")
    p = samples.ports
    w_scale = float(samples.grid.omega.max())
    s = samples.grid.s / w_scale
    H = samples.data.reshape(samples.grid.count, p * p)

    poles = _initial_poles(samples.grid.omega / w_scale, N, config.initial_poles)
    best = None
    worst_cond = 0.0
    history = []
    converged = False
    it = 0
    for it in range(1, config.iterations + 1):
        new = _relocate(s, H, poles, config.include_linear)
        if new.size != poles.size:  # pragma: no cover - eigvals always returns N values
            raise RuntimeError("pole count changed during relocation")
        move = np.max(np.abs(new - poles) / np.maximum(np.abs(poles), 1e-300))
        poles = new
        res, d, e, cond = _residues(s, H, poles, config.include_linear)
        if not cond < MAX_CONDITION:
            worst_cond = max(worst_cond, cond)
            history.append(float("nan"))
            continue
        model_h = np.einsum("kn,nj->kj", 1.0 / (s[:, None] - poles[None, :]), res) + d[None, :]
        if config.include_linear:
            model_h = model_h + s[:, None] * e[None, :]
        rms = float(np.sqrt(np.mean(np.abs(model_h - H) ** 2)))
        history.append(rms)
        if best is None or rms <= best[0]:
            best = (rms, poles.copy(), res, d, e, cond)
        if move < config.tolerance:
            converged = True
            break

    if best is None:
        raise ConditioningError("rank-deficient residue system at every iteration", worst_cond)
    rms, poles, res, d, e, cond = best
    model = RationalModel(
        poles=poles * w_scale,
        residues=(res * w_scale).reshape(N, p, p),
        d=np.real(d).reshape(p, p),
        e=(np.real(e) / w_scale).reshape(p, p),
        include_linear=config.include_linear,
        info=FitInfo(converged=converged, iterations=it, rms_history=history, condition=cond),
    )
    return model


# ----------------------------------------------------------------------------
# Ensemble uncertainty and the classic AFS baseline
# ----------------------------------------------------------------------------

def fit_ensemble(samples: ComplexResponse, orders: Sequence[int], config: FitConfig = FitConfig()):
    models = []
    for n in orders:
        try:
            models.append(fit(samples, replace(config, order=int(n))))
        except Exception as exc:  # noqa: BLE001 - re-raised with the failing order
            raise FitFailure(int(n), exc) from exc
    return models


def _pairwise(models, grid: FrequencyGrid):
    evals = [m(grid.s) for m in models]
    for a, b in itertools.combinations(range(len(evals)), 2):
        yield np.sqrt(np.sum(np.abs(evals[a] - evals[b]) ** 2, axis=(1, 2)))


def ensemble_uncertainty(samples: ComplexResponse, orders: Sequence[int], dense_grid: FrequencyGrid,
                         config: FitConfig = FitConfig(), models=None) -> np.ndarray:
    """Per-frequency maximum pairwise Frobenius deviation between fits of different orders."""
    if len(orders) < 2:
        raise ValueError("need at least two orders")
    if models is None:
        models = fit_ensemble(samples, orders, config)
    return np.max(np.stack(list(_pairwise(models, dense_grid))), axis=0)


def band_rmsd(samples: ComplexResponse, orders: Sequence[int], dense_grid: FrequencyGrid,
              config: FitConfig = FitConfig(), models=None) -> float:
    """Scalar band-level form: max over pairs of the RMS (over frequency) Frobenius deviation."""
    if len(orders) < 2:
        raise ValueError("need at least two orders")
    if models is None:
        models = fit_ensemble(samples, orders, config)
    return float(max(np.sqrt(np.mean(dev ** 2)) for dev in _pairwise(models, dense_grid)))


@dataclass
class AFSResult:
    indices: list
    samples: ComplexResponse | None
    model: RationalModel | None
    best_order: int | None
    refinement_steps: int
    fit_calls: int


def classic_afs(oracle: Callable[[float], np.ndarray], band: FrequencyGrid, budget: int,
                orders: Sequence[int], config: FitConfig = FitConfig()) -> AFSResult:
    """Greedy ensemble-driven frequency sampling over the points of ``band``.

    Seeds with ``2*max(orders) + 2`` uniformly spaced band points, then adds
    the unsampled point of highest ensemble uncertainty (lowest frequency on
    ties) until ``budget`` points are simulated. The final model is the
    ensemble member with the smallest RMS error on the samples.
    """
    orders = [int(n) for n in orders]
    n_seed = 2 * max(orders) + 2
    if budget < n_seed:
        raise ValueError(f"budget {budget} below the seed count {n_seed}")
    if budget > band.count:
        raise ValueError("budget exceeds the number of band points")
    chosen = sorted(set(np.round(np.linspace(0, band.count - 1, n_seed)).astype(int).tolist()))
    values: dict[int, np.ndarray] = {}
    fit_calls = 0

    def simulate(idx):
        try:
            values[idx] = np.asarray(oracle(float(band.points[idx])), dtype=complex)
        except Exception as exc:  # noqa: BLE001
            sel = sorted(values)
            raise OracleFailure(float(band.points[idx]), exc,
                                AFSResult(sel, None, None, None, len(sel) - n_seed, fit_calls)) from exc

    def current():
        idx = sorted(values)
        data = np.stack([np.atleast_2d(values[i]) for i in idx])
        return idx, ComplexResponse(band.subset(idx), data)

    for i in chosen:
        simulate(i)
    steps = 0
    while True:
        idx, resp = current()
        models = fit_ensemble(resp, orders, config)
        fit_calls += len(orders)
        if len(idx) >= budget:
            break
        u = ensemble_uncertainty(resp, orders, band, models=models)
        u[idx] = -np.inf
        nxt = int(np.argmax(u))  # first maximum = lowest frequency
        simulate(nxt)
        steps += 1

    errs = [np.sqrt(np.mean(np.abs(m(resp.grid.s) - resp.data) ** 2)) for m in models]
    k = int(np.argmin(errs))
    return AFSResult(idx, resp, models[k], orders[k], steps, fit_calls)


# ----------------------------------------------------------------------------
# Text serialization
# ----------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dumps(model: RationalModel) -> str:
    """Plain-text form with 17 significant digits; :func:`loads` restores it exactly."""
    p = model.ports
    lines = ["# rational model", f"order {model.order}", f"ports {p}",
             f"include_linear {int(model.include_linear)}", "poles"]
    lines += [f"{_fmt(z.real)} {_fmt(z.imag)}" for z in model.poles]
    lines.append("residues")
    for r in model.residues:
        lines.append(" ".join(f"{_fmt(z.real)} {_fmt(z.imag)}" for z in r.ravel()))
    lines.append("d")
    lines.append(" ".join(_fmt(v) for v in model.d.ravel()))
    lines.append("e")
    lines.append(" ".join(_fmt(v) for v in model.e.ravel()))
    return "\n".join(lines) + "\n"


def loads(text: str) -> RationalModel:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    it = iter(rows)

    def keyed(key):
        k, v = next(it).split()
        if k != key:
            raise ValueError(f"expected {key!r}, found {k!r}")
        return int(v)

    n, p, lin = keyed("order"), keyed("ports"), keyed("include_linear")
    if next(it) != "poles":
        raise ValueError("missing 'poles' section")
    poles = []
    for _ in range(n):
        re, im = map(float, next(it).split())
        poles.append(complex(re, im))
    if next(it) != "residues":
        raise ValueError("missing 'residues' section")
    res = []
    for _ in range(n):
        v = np.array(next(it).split(), dtype=float)
        res.append((v[0::2] + 1j * v[1::2]).reshape(p, p))
    if next(it) != "d":
        raise ValueError("missing 'd' section")
    d = np.array(next(it).split(), dtype=float).reshape(p, p)
    if next(it) != "e":
        raise ValueError("missing 'e' section")
    e = np.array(next(it).split(), dtype=float).reshape(p, p)
    return RationalModel(np.array(poles, dtype=complex),
                         np.array(res, dtype=complex).reshape(n, p, p), d, e, bool(lin))
