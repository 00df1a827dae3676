"""Frequency-placement comparison for rational fitting at a fixed point budget.

For each oracle a pilot BNN is trained on random geometries swept at
uniform frequencies. Held-out geometries are then fitted twice from the
same number of simulated points: once on an evenly spaced grid and once on
the points ``uaw_afs`` picks from the pilot's uncertainty row. Errors are
measured on the complex S-parameters over the dense band.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from . import bnn, oracle, vecfit
from .core import Dataset, MetricReport, Record, format_number, metrics, rng_stream
from .loop import uniform_indices
from .sampling import uaw_afs, uncertainty_field

METHODS = ("uniform", "uaw")


@dataclass(frozen=True)
class AfsTrial:
    kind: str
    seed: int
    design_index: int
    method: str
    indices: tuple
    metrics: MetricReport


def pilot_net(spec: oracle.OracleSpec, net_config: bnn.NetConfig, n_geometries: int, n_frequencies: int,
              epochs: int, seed: int, exclude=()) -> bnn.BayesNet:
    """Point-mode BNN trained on random geometries at uniform frequencies."""
    pool = [i for i in range(spec.space.size) if i not in set(exclude)]
    pick = rng_stream(seed, f"pilot-{spec.kind}").choice(len(pool), min(n_geometries, len(pool)), replace=False)
    dense = spec.dense_grid
    grid = dense.subset(uniform_indices(dense.count, n_frequencies))
    data = Dataset([Record(pool[int(k)], spec.space.point(pool[int(k)]), oracle.simulate(spec, pool[int(k)], grid).to_db())
                    for k in sorted(pick)])
    cfg = replace(net_config, mode="point", geometry_dims=spec.space.dims, channels=4, seed=seed)
    net = bnn.BayesNet(cfg, spec.space, (spec.fmin, spec.fmax))
    net, _ = bnn.fit(net, data, epochs=epochs, seed=seed, label=f"pilot-fit-{spec.kind}")
    return net


def fit_error(spec: oracle.OracleSpec, index: int, sel, order: int, iterations: int = 20) -> MetricReport:
    """Fit the chosen dense-grid points of design ``index``; complex error over the dense band."""
    dense = spec.dense_grid
    ref = oracle.simulate(spec, index, dense)
    try:
        model = vecfit.fit(ref.subset(list(sel)), vecfit.FitConfig(order=order, iterations=iterations))
    except (vecfit.ConditioningError, np.linalg.LinAlgError):
        inf = float("inf")
        return MetricReport(inf, inf, inf, float("nan"), -inf)
    return metrics(ref, vecfit.evaluate(model, dense), allow_undefined=True)


def compare_afs(spec: oracle.OracleSpec, net_config: bnn.NetConfig, budget: int = 20, trials: int = 1,
                seed: int = 0, order: int | None = None, pilot_geometries: int = 60, pilot_frequencies: int = 20,
                pilot_epochs: int = 300, ensemble_size: int = 32) -> list[AfsTrial]:
    """Uniform versus uncertainty-aware placement on ``trials`` held-out geometries."""
    dense = spec.dense_grid
    if budget > dense.count:
        raise ValueError("budget exceeds the dense grid")
    order = order if order is not None else max(1, (budget - 2) // 2)
    targets = rng_stream(seed, f"afs-targets-{spec.kind}").choice(spec.space.size, trials, replace=False)
    targets = [int(t) for t in targets]
    net = pilot_net(spec, net_config, pilot_geometries, pilot_frequencies, pilot_epochs, seed, exclude=targets)
    uni = tuple(int(i) for i in uniform_indices(dense.count, budget))
    out = []
    for t, index in enumerate(targets):
        field_ = uncertainty_field(net, [spec.space.point(index)], dense, ensemble_size,
                                   rng_stream(seed, f"afs-ensemble-{t}"))
        sel = uaw_afs(dense, field_.values[0], budget, rng_stream(seed, f"afs-select-{t}")).indices
        for method, idx in (("uniform", uni), ("uaw", sel)):
            out.append(AfsTrial(spec.kind, seed, index, method, idx, fit_error(spec, index, idx, order)))
    return out


def afs_table_csv(trials) -> str:
    """Mean error over trials, one row per structure and placement method."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["structure", "method", "mae", "rmse", "psnr"])
    kinds = sorted({t.kind for t in trials})
    for kind in kinds:
        for method in METHODS:
            rows = [t.metrics for t in trials if t.kind == kind and t.method == method]
            if not rows:
                continue
            w.writerow([kind, method] + [format_number(float(np.mean([getattr(m, k) for m in rows])), 12)
                                         for k in ("mae", "rmse", "psnr")])
    return buf.getvalue()


def afs_trials_csv(trials) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["structure", "seed", "design_index", "method", "mae", "rmse", "psnr", "frequency_indices"])
    for t in trials:
        w.writerow([t.kind, t.seed, t.design_index, t.method, format_number(t.metrics.mae, 12),
                    format_number(t.metrics.rmse, 12), format_number(t.metrics.psnr, 12),
                    " ".join(str(i) for i in t.indices)])
    return buf.getvalue()
