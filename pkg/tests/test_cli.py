import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from compoda.cli import main
from compoda.diagnostics import read_trace_csv
from compoda.problems import load_csv_dataset, load_softmax

CONFIGS = Path(__file__).parents[1] / "configs"

SMALL = """
seed = 0
[problem]
d = 50
k = 256
[clients]
n = 4
[noise]
sigma = 5.0
[compressor]
k_frac = 0.2
[composite]
kind = "l1"
lambda = 0.1
[algorithm]
kind = "{kind}"
T = {T}
[algorithm.stepsize]
{step}
"""


def write_cfg(tmp_path, name="c.toml", kind="econtrol_da", T=60, step="inv_gamma = 0.01"):
    path = tmp_path / name
    path.write_text(SMALL.format(kind=kind, T=T, step=step))
    return str(path)


def error_lines(capsys):
    return [l for l in capsys.readouterr().err.splitlines() if l]


def test_run_shipped_config(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(CONFIGS / "synthetic_softmax.toml"), "--out", str(out)]) == 0
    records = read_trace_csv(out / "trace.csv")
    assert len(records) == 2000
    summary = json.loads((out / "summary.json").read_text())
    for key in ("F_real", "F_virtual", "F_bar", "comm_cost", "tau_bits"):
        assert key in summary
    assert summary["comm_cost"] == 2000 + 2 * 10


def test_run_sanity_exact(tmp_path):
    assert main(["run", "--config", str(CONFIGS / "sanity_exact.toml"), "--out", str(tmp_path)]) == 0
    records = read_trace_csv(tmp_path / "trace.csv")
    assert len(records) <= 2000
    assert records[-1].F_real <= 1e-6


def test_summary_has_nine_significant_digits(tmp_path):
    assert main(["run", "--config", write_cfg(tmp_path), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    v = summary["F_real"]
    assert v == float(f"{v:.9g}")


def test_rerun_is_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    for name in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for f in ("trace.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_override(tmp_path):
    cfg = write_cfg(tmp_path)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "3"])
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert (a["seed"], b["seed"]) == (0, 3)
    assert a["F_real"] != b["F_real"]


def test_negative_sigma_is_config_error(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[noise]\nsigma = -1.0\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 2
    lines = error_lines(capsys)
    assert len(lines) == 1 and lines[0].startswith("compoda: error[config]: ")
    assert not (tmp_path / "trace.csv").exists()


@pytest.mark.parametrize("argv", [
    ["run"],
    ["frobnicate"],
    ["run", "--config", "/nonexistent/c.toml"],
    ["gen", "softmax", "d=x", "--out", "/tmp/never"],
    ["gen", "softmax", "depth=3", "--out", "/tmp/never"],
])
def test_usage_and_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_sweep_softmax_grid(tmp_path, capsys):
    out = tmp_path / "sw"
    grid = "0.1,0.05,0.01,0.005,0.001,0.0005,0.0001"
    assert main(["sweep", "--config", write_cfg(tmp_path), "--grid", grid, "--out", str(out)]) == 0
    dirs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert len(dirs) == 7
    for d in dirs:
        assert len(read_trace_csv(out / d / "trace.csv")) == 60
    table = json.loads((out / "sweep_summary.json").read_text())
    assert len(table["runs"]) == 7
    best = min(table["runs"], key=lambda r: r["F_real"])
    assert table["best_value"] == best["value"]
    assert "*" in capsys.readouterr().out


def test_sweep_grid_from_config_for_baselines(tmp_path):
    cfg = write_cfg(tmp_path, kind="prox_ef21", step="grid = [0.1, 0.01, 0.001, 0.0001]")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "sw")]) == 0
    table = json.loads((tmp_path / "sw" / "sweep_summary.json").read_text())
    assert [r["value"] for r in table["runs"]] == [0.1, 0.01, 0.001, 0.0001]
    assert all(r["algorithm"] == "prox_ef21" for r in table["runs"])


def test_single_point_sweep_matches_run(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "run")]) == 0
    assert main(["sweep", "--config", cfg, "--grid", "0.01", "--out", str(tmp_path / "sw")]) == 0
    a = (tmp_path / "run" / "trace.csv").read_bytes()
    b = (tmp_path / "sw" / "grid_0.01" / "trace.csv").read_bytes()
    assert a == b


def test_sweep_without_grid_is_config_error(tmp_path):
    assert main(["sweep", "--config", write_cfg(tmp_path), "--out", str(tmp_path)]) == 2


def test_sweep_thread_env_does_not_change_results(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    grid = "0.1,0.01,0.001"
    monkeypatch.setenv("COMPODA_THREADS", "1")
    main(["sweep", "--config", cfg, "--grid", grid, "--out", str(tmp_path / "a")])
    monkeypatch.setenv("COMPODA_THREADS", "3")
    main(["sweep", "--config", cfg, "--grid", grid, "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "sweep_summary.json").read_bytes()
    assert a == (tmp_path / "b" / "sweep_summary.json").read_bytes()
    monkeypatch.setenv("COMPODA_THREADS", "zero")
    assert main(["sweep", "--config", cfg, "--grid", grid, "--out", str(tmp_path / "c")]) == 2


def test_check_default_battery_passes(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    for name in ("contraction", "prox", "virtual_real", "error sum", "consecutive_distance", "sampling"):
        assert name in out


def test_check_identity_battery_has_zero_sides(capsys):
    assert main(["check", "--config", str(CONFIGS / "battery_identity.toml")]) == 0
    out = capsys.readouterr().out
    assert "PASS error sum, client 0: lhs=0 rhs=0" in out


def test_check_corrupted_eta_reports_without_crashing(capsys):
    code = main(["check", "--config", str(CONFIGS / "battery_corrupt_eta.toml")])
    captured = capsys.readouterr()
    assert code in (0, 1)
    assert "checks passed" in captured.out
    if code == 1:
        assert captured.err.startswith("compoda: error[check]: ")


def test_check_failure_exits_1(monkeypatch, capsys):
    from compoda import cli, diagnostics
    original = cli.battery

    def broken(cfg=None):
        reports = original(cfg)
        return reports + [diagnostics.CheckReport("injected", False, 2.0, 1.0, -1.0)]

    monkeypatch.setattr(cli, "battery", broken)
    assert main(["check"]) == 1
    err = error_lines(capsys)
    assert len(err) == 1 and err[0].startswith("compoda: error[check]: FAIL injected")


def test_gen_softmax_recentred_and_deterministic(tmp_path):
    a, b = tmp_path / "a.npz", tmp_path / "b.npz"
    for path in (a, b):
        assert main(["gen", "softmax", "d=200", "k=2048", "seed=7", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    p = load_softmax(a)
    assert (p.d, p.k) == (200, 2048)
    assert np.linalg.norm(p.gradient(np.zeros(200))) <= 1e-10


def test_gen_logistic_round_trip(tmp_path):
    path = tmp_path / "data.csv"
    assert main(["gen", "logistic", "N=1000", "d=20", "--out", str(path)]) == 0
    X, y = load_csv_dataset(path)
    assert X.shape == (1000, 20) and y.shape == (1000,)
    assert set(np.unique(y).tolist()) <= {0, 1}


def test_gen_unwritable_path_exits_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["gen", "softmax", "d=5", "k=8", "--out", str(blocker / "x.npz")]) == 1
    assert error_lines(capsys)[0].startswith("compoda: error[runtime]: ")


def test_run_unwritable_output_exits_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", write_cfg(tmp_path), "--out", str(blocker / "o")]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "compoda", "run", "--config", "/nonexistent.toml"],
                          capture_output=True, text=True, env={**os.environ, "PYTHONWARNINGS": "ignore"})
    assert proc.returncode == 2
    assert proc.stderr.startswith("compoda: error[config]: cannot read config")
