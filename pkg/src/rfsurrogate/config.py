"""JSON run configuration.

Every field has a default, unknown keys are rejected at every level, and
``dumps(loads(text))`` is a fixed point. The top-level ``seed`` is pushed
into the loop and net sections when the run is built.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields, replace

from . import oracle
from .bnn import NetConfig
from .loop import LoopConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    """Oracle choice; ``None`` band edges and cost take the kind's defaults."""

    kind: str = "si"
    fmin: float | None = None
    fmax: float | None = None
    dense_count: int = 401
    cost_per_point: float | None = None
    z_ref: float = 50.0
    constants: dict = field(default_factory=dict)

    def build(self) -> oracle.OracleSpec:
        if self.kind not in oracle.TABLE_SPACES:
            raise ConfigError(f"unknown oracle kind {self.kind!r}")
        kw = {"dense_count": self.dense_count, "z_ref": self.z_ref, "constants": dict(self.constants)}
        for k in ("fmin", "fmax", "cost_per_point"):
            if getattr(self, k) is not None:
                kw[k] = getattr(self, k)
        try:
            return oracle.OracleSpec.default(self.kind, **kw)
        except oracle.OracleSpecError as e:
            raise ConfigError(str(e)) from None


@dataclass(frozen=True)
class FitSection:
    """Source for ``fit``: a Touchstone path, or the oracle at ``design_index``.

    ``samples`` picks that many evenly spaced points of the source grid;
    ``None`` fits every point.
    """

    touchstone: str | None = None
    design_index: int | None = None
    order: int = 12
    iterations: int = 20
    samples: int | None = None


@dataclass(frozen=True)
class AfsSection:
    """Uniform versus uncertainty-aware frequency placement at equal budget.

    A pilot BNN is trained on ``pilot_geometries`` random geometries swept at
    ``pilot_frequencies`` uniform points; each trial then fits a held-out
    geometry from ``budget`` points at order ``(budget - 2) // 2`` unless
    ``order`` is given.
    """

    kinds: tuple = ("bclf", "mtl")
    budget: int = 20
    trials: int = 10
    order: int | None = None
    pilot_geometries: int = 60
    pilot_frequencies: int = 20
    pilot_epochs: int = 300
    ensemble_size: int = 32


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    oracle: OracleConfig = field(default_factory=OracleConfig)
    net: NetConfig = field(default_factory=NetConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    fit: FitSection = field(default_factory=FitSection)
    afs: AfsSection = field(default_factory=AfsSection)
    baselines: tuple = ("conventional", "random-uniform", "random-uaw")

    def loop_config(self) -> LoopConfig:
        net = replace(self.net, seed=self.seed)
        return replace(self.loop, net=net, seed=self.seed)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))


_NESTED = {"oracle": OracleConfig, "net": NetConfig, "loop": LoopConfig, "fit": FitSection, "afs": AfsSection}
# the loop's net and seed live at the top level of the document
_LOOP_SKIP = {"net", "seed"}


def _build(cls, doc, where: str, skip=frozenset()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls) if f.name not in skip}
    extra = sorted(set(doc) - set(known))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")
    kw = {}
    for name, value in doc.items():
        if cls is RunConfig and name in _NESTED:
            kw[name] = _build(_NESTED[name], value, f"{where}.{name}", _LOOP_SKIP if name == "loop" else frozenset())
        elif isinstance(value, list):
            kw[name] = tuple(value)
        else:
            kw[name] = value
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc, "config")


def loads(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}") from None
    return from_dict(doc)


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None


def _plain(obj, skip=frozenset()):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name), _LOOP_SKIP if f.name == "loop" else frozenset())
                for f in fields(obj) if f.name not in skip}
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def to_dict(cfg: RunConfig) -> dict:
    return _plain(cfg)


def dumps(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"
