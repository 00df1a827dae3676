import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from rfsurrogate import cli, config

GOLDEN = Path(__file__).parent / "golden"

TINY = {
    "oracle": {"kind": "rational", "dense_count": 41},
    "net": {"backbone": [8, 8], "head": [8], "optimizer": "adam", "learning_rate": 0.01, "epochs": 4},
    "loop": {"initial_geometries": 3, "initial_frequencies": 5, "batch_geometries": 3, "batch_frequencies": 6,
             "validation_geometries": 2, "max_iterations": 2, "ensemble_size": 4},
    "afs": {"kinds": ["rational"], "budget": 30, "trials": 2, "order": 10, "pilot_geometries": 4,
            "pilot_frequencies": 8, "pilot_epochs": 3, "ensemble_size": 4},
    "fit": {"order": 10},
    "baselines": ["conventional", "random-uniform"],
}


def _config(tmp_path, doc=TINY, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _rows(path: Path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fit_oracle_writes_model_metrics_and_touchstone(tmp_path):
    out = tmp_path / "fit"
    assert cli.main(["fit", "--config", _config(tmp_path), "--out", str(out)]) == 0
    assert sorted(_tree(out)) == ["config.json", "fitted.s2p", "metrics.csv", "model.txt"]
    metrics = dict(_rows(out / "metrics.csv")[1:])
    assert float(metrics["rmse"]) < 1e-8
    assert (out / "model.txt").read_text().startswith("# rational model")


def test_fit_touchstone_source(tmp_path):
    doc = {"fit": {"touchstone": str(GOLDEN / "plain_ri_hz.s2p"), "order": 1, "samples": None},
           "oracle": {"kind": "rational"}}
    cfg = _config(tmp_path, {**doc, "fit": {**doc["fit"], "samples": 2}})
    assert cli.main(["fit", "--config", cfg, "--out", str(tmp_path / "o1")]) == 1
    doc["fit"]["touchstone"] = str(tmp_path / "nowhere.s2p")
    assert cli.main(["fit", "--config", _config(tmp_path, doc), "--out", str(tmp_path / "o2")]) == 1


def test_fit_dense_touchstone_file(tmp_path):
    from rfsurrogate import touchstone
    from rfsurrogate.oracle import OracleSpec, simulate
    spec = OracleSpec.default("rational", dense_count=101)
    src = tmp_path / "dense.s2p"
    touchstone.write(simulate(spec, 4, spec.dense_grid), src, fmt="MA", unit="GHz")
    cfg = _config(tmp_path, {"fit": {"touchstone": str(src), "order": 10, "samples": 40}})
    out = tmp_path / "fit"
    assert cli.main(["fit", "--config", cfg, "--out", str(out)]) == 0
    back = touchstone.read(out / "fitted.s2p")
    assert back.grid.count == 101
    assert float(dict(_rows(out / "metrics.csv")[1:])["rmse"]) < 1e-6


def test_afs_table_shape(tmp_path):
    out = tmp_path / "afs"
    assert cli.main(["afs", "--config", _config(tmp_path), "--seed", "3", "--out", str(out)]) == 0
    table = _rows(out / "afs_table.csv")
    assert table[0] == ["structure", "method", "mae", "rmse", "psnr"]
    assert [r[:2] for r in table[1:]] == [["rational", "uniform"], ["rational", "uaw"]]
    trials = _rows(out / "afs_trials.csv")
    assert len(trials) == 1 + 2 * 2
    assert all(len(r[-1].split()) == 30 for r in trials[1:])
    # both placements reach roundoff on the exact rational target
    by_target = {}
    for r in trials[1:]:
        by_target.setdefault(r[2], {})[r[3]] = float(r[5])
    assert all(e["uaw"] <= e["uniform"] + 1e-12 for e in by_target.values())


def test_loop_is_byte_identical_across_runs_and_thread_caps(tmp_path, monkeypatch):
    cfg = _config(tmp_path)
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    assert cli.main(["loop", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv(cli.THREADS_ENV, "4")
    assert cli.main(["loop", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "b")]) == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a == b
    assert set(a) == {"config.json", "history.csv", "selections.csv", "metrics.csv", "row.csv", "net.json"}
    assert config.loads(a["config.json"].decode()).seed == 1


def test_baseline_and_report_join(tmp_path):
    cfg = _config(tmp_path)
    out = tmp_path / "runs"
    assert cli.main(["loop", "--config", cfg, "--out", str(out)]) == 0
    assert cli.main(["baseline", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "conventional" / "row.csv").exists() and (out / "random-uniform" / "row.csv").exists()
    assert cli.main(["report", "--config", cfg, "--out", str(out)]) == 0
    table = _rows(out / "table.csv")
    assert table[0] == ["setting", "train_size", "freq_num", "sim_time_min", "mse", "rmse", "r_squared", "psnr"]
    assert sorted(r[0] for r in table[1:]) == ["conventional", "random-uniform", "uaw"]
    conv = next(r for r in table[1:] if r[0] == "conventional")
    assert conv[2] == "41"
    surface = _rows(out / "surface.csv")
    assert surface[0] == ["design_index", "scale", "uncertainty"] and len(surface) == 1 + 21
    curves = _rows(out / "curves.csv")
    assert curves[0][:5] == ["frequency_hz", "S11_ref", "S11_mean", "S11_min", "S11_max"]
    assert len(curves) == 1 + 41


def test_report_on_empty_directory(tmp_path):
    assert cli.main(["report", "--out", str(tmp_path / "empty")]) == 0
    assert _tree(tmp_path / "empty") == {}


@pytest.mark.parametrize("doc", [{"bogus": True}, {"net": {"mode": "matrix"}}, {"oracle": {"kind": "hfss"}}])
def test_config_errors_exit_1(tmp_path, doc, capsys):
    assert cli.main(["loop", "--config", _config(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1
    assert "config error" in capsys.readouterr().err


def test_missing_config_and_bad_thread_cap_exit_1(tmp_path, monkeypatch):
    assert cli.main(["loop", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 1
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    assert cli.main(["loop", "--config", _config(tmp_path), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exits_2(tmp_path, capsys):
    doc = json.loads(json.dumps(TINY))
    doc["net"].update(optimizer="gd", learning_rate=1e12, init_rho=3.0)
    assert cli.main(["loop", "--config", _config(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_writes_only_under_out(tmp_path):
    work = tmp_path / "cwd"
    work.mkdir()
    cfg = _config(tmp_path)
    out = tmp_path / "out"
    env = {**os.environ, "PYTHONPATH": os.pathsep.join(sys.path)}
    res = subprocess.run([sys.executable, "-m", "rfsurrogate", "fit", "--config", cfg, "--out", str(out)],
                         cwd=work, env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert list(work.iterdir()) == []
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cwd", "out", "run.json"]
