"""Command-line entry points.

Every subcommand takes ``--config <json> --seed <int> --out <dir>`` and
writes only below ``--out``. Exit status is 0 on success, 1 for a bad
configuration and 2 for a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bnn, config, experiments, loop, oracle, sampling, touchstone, vecfit
from .core import format_number, metrics, rng_stream

logger = logging.getLogger("rfsurrogate")

THREADS_ENV = "RF_SURROGATE_THREADS"


def thread_cap() -> int | None:
    """Parallelism cap from the environment; results never depend on it."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise config.ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise config.ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def _row_csv(report: loop.LoopReport) -> str:
    return loop.table_csv([report])


def _save_report(out: Path, report: loop.LoopReport, spec: oracle.OracleSpec, with_net: bool = True):
    _write(out, "history.csv", loop.history_csv(report.history))
    _write(out, "selections.csv", loop.selections_csv(report.history, spec))
    _write(out, "metrics.csv", report.metrics.to_csv())
    _write(out, "row.csv", _row_csv(report))
    if with_net:
        _write(out, "net.json", bnn.dumps(report.net))


# ----------------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------------

def cmd_fit(cfg: config.RunConfig, out: Path) -> int:
    sec = cfg.fit
    if sec.touchstone:
        try:
            source = touchstone.read(sec.touchstone)
        except OSError as e:
            raise config.ConfigError(f"cannot read {sec.touchstone}: {e}") from None
    else:
        spec = cfg.oracle.build()
        index = sec.design_index if sec.design_index is not None else spec.space.size // 2
        if not 0 <= index < spec.space.size:
            raise config.ConfigError(f"design_index {index} outside [0, {spec.space.size})")
        source = oracle.simulate(spec, index, spec.dense_grid)
    samples = source
    if sec.samples is not None:
        samples = source.subset(loop.uniform_indices(source.grid.count, sec.samples))
    if samples.grid.count < 2 * sec.order + 2:
        raise config.ConfigError(f"order {sec.order} needs at least {2 * sec.order + 2} samples, "
                                 f"got {samples.grid.count}")
    model = vecfit.fit(samples, vecfit.FitConfig(order=sec.order, iterations=sec.iterations))
    fitted = vecfit.evaluate(model, source.grid)
    _write(out, "model.txt", vecfit.dumps(model))
    _write(out, "metrics.csv", metrics(source, fitted, allow_undefined=True).to_csv())
    _write(out, "fitted.s2p", touchstone.dumps(fitted))
    return 0


def cmd_afs(cfg: config.RunConfig, out: Path) -> int:
    sec = cfg.afs
    trials = []
    for kind in sec.kinds:
        spec = replace(cfg.oracle, kind=kind, fmin=None, fmax=None, cost_per_point=None, constants={}).build()
        trials += experiments.compare_afs(spec, cfg.net, sec.budget, sec.trials, cfg.seed, sec.order,
                                          sec.pilot_geometries, sec.pilot_frequencies, sec.pilot_epochs,
                                          sec.ensemble_size)
    _write(out, "afs_table.csv", experiments.afs_table_csv(trials))
    _write(out, "afs_trials.csv", experiments.afs_trials_csv(trials))
    return 0


def cmd_loop(cfg: config.RunConfig, out: Path) -> int:
    spec = cfg.oracle.build()
    report = loop.run_loop(cfg.loop_config(), spec)
    _save_report(out, report, spec)
    return 0


def cmd_baseline(cfg: config.RunConfig, out: Path) -> int:
    spec = cfg.oracle.build()
    for kind in cfg.baselines:
        report = loop.run_baseline(kind, cfg.loop_config(), spec)
        _save_report(out / kind, report, spec, with_net=False)
    return 0


def _surface_csv(net: bnn.BayesNet, spec: oracle.OracleSpec, M: int, seed: int) -> str:
    """Aggregated uncertainty over the first two axes, other axes at their middle value."""
    space = spec.space
    shape = space.shape
    mids = [n // 2 for n in shape]
    cands, coords = [], []
    a1 = range(shape[1]) if len(shape) > 1 else [0]
    for i in range(shape[0]):
        for j in a1:
            c = list(mids)
            c[0] = i
            if len(shape) > 1:
                c[1] = j
            idx = int(np.ravel_multi_index(c, shape))
            cands.append(space.point(idx))
            coords.append(idx)
    field_ = sampling.uncertainty_field(net, cands, spec.dense_grid, M, rng_stream(seed, "report-surface"))
    agg = sampling.aggregate_geometry(field_)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["design_index", *space.names, "uncertainty"])
    for idx, p, u in zip(coords, cands, agg):
        w.writerow([idx, *[format_number(v) for v in p.as_array()], format_number(float(u))])
    return buf.getvalue()


def _curves_csv(net: bnn.BayesNet, spec: oracle.OracleSpec, index: int, M: int, seed: int) -> str:
    """Reference, ensemble mean and min/max envelope per channel for one geometry."""
    dense = spec.dense_grid
    ref = oracle.dense_reference(spec, index)
    geo = spec.space.values(index)[None, :]
    rng = rng_stream(seed, "report-curves")
    draws = np.stack([bnn.predict_db(net, geo, dense, net.draw_noise(rng))[0] for _ in range(M)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = ref.channel_names
    w.writerow(["frequency_hz"] + [f"{n}_{k}" for n in names for k in ("ref", "mean", "min", "max")])
    mean, lo, hi = draws.mean(0), draws.min(0), draws.max(0)
    for j, f in enumerate(dense.points):
        row = [format_number(float(f))]
        for c in range(len(names)):
            row += [format_number(float(v)) for v in (ref.values[j, c], mean[j, c], lo[j, c], hi[j, c])]
        w.writerow(row)
    return buf.getvalue()


def cmd_report(cfg: config.RunConfig, out: Path) -> int:
    """Join ``row.csv`` files found under ``out`` and export plot data for a saved net."""
    rows = sorted(out.rglob("row.csv"))
    header, body = None, []
    for p in rows:
        with open(p, newline="") as fh:
            r = list(csv.reader(fh))
        if not r:
            continue
        header = header or r[0]
        body += r[1:]
    if header:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        _write(out, "table.csv", buf.getvalue())
    net_path = out / "net.json"
    if net_path.exists():
        spec = cfg.oracle.build()
        net = bnn.loads(net_path.read_text())
        M = cfg.loop.ensemble_size
        _write(out, "surface.csv", _surface_csv(net, spec, M, cfg.seed))
        val = loop.initialize(replace(cfg.loop_config(), initial_geometries=0), spec).validation
        index = val.indices[0] if val.indices else spec.space.size // 2
        _write(out, "curves.csv", _curves_csv(net, spec, index, M, cfg.seed))
    if not header and not net_path.exists():
        logger.warning("nothing to report under %s", out)
    return 0


COMMANDS = {"fit": cmd_fit, "afs": cmd_afs, "loop": cmd_loop, "baseline": cmd_baseline, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfsurrogate", description="Bayesian surrogate modeling of RF two-ports.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration (defaults apply when omitted)")
        sp.add_argument("--seed", type=int, help="overrides the configuration seed")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cap = thread_cap()
        cfg = config.load(args.config) if args.config else config.RunConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if cap is not None:
            logger.info("thread cap %d", cap)
        if args.command != "report":
            _write(out, "config.json", config.dumps(cfg))
        return COMMANDS[args.command](cfg, out)
    except (config.ConfigError, oracle.OracleSpecError, touchstone.TouchstoneError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (ArithmeticError, np.linalg.LinAlgError, vecfit.FitFailure) as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
