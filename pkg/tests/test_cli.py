"""CLI tests: exit codes, JSON/CSV output contracts, config plumbing.

Everything runs in-process through cli.main(argv) (which returns the exit
code instead of raising SystemExit) except one subprocess check of the
installed console script.
"""
import csv
import io
import json
import shutil
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from ccmgeo import cli


def _metric_path():
    return str(resources.files("ccmgeo.data") / "case_study_metric.json")


def _fixture_doc():
    with open(_metric_path()) as fh:
        return json.load(fh)


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    # tests opt in to the environment fallback explicitly
    monkeypatch.delenv(cli.ENV_METRIC, raising=False)


def _run(capsys, *argv):
    code = cli.main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


# ---------------------------------------------------------------------------
# argument and config errors -> exit 1
# ---------------------------------------------------------------------------

def test_no_subcommand_is_usage_error(capsys):
    code, _, err = _run(capsys)
    assert code == 1
    assert "usage" in err


def test_unknown_subcommand_is_usage_error(capsys):
    code, _, err = _run(capsys, "frobnicate")
    assert code == 1


def test_bad_controller_choice(capsys):
    code, _, err = _run(capsys, "simulate", "--metric", _metric_path(),
                        "--x0", "1,1,1", "--controller", "pid")
    assert code == 1
    assert "controller" in err


def test_bad_vector_flag(capsys):
    code, _, err = _run(capsys, "geodesic", "--metric", _metric_path(),
                        "--x0", "1,foo,3")
    assert code == 1
    assert "--x0" in err


def test_missing_x0(capsys):
    code, _, err = _run(capsys, "geodesic", "--metric", _metric_path())
    assert code == 1
    assert "--x0" in err


def test_wrong_dimension_endpoint(capsys):
    code, _, err = _run(capsys, "geodesic", "--metric", _metric_path(),
                        "--x0", "1,2")
    assert code == 1
    assert "dimension 3" in err


def test_bad_segments_flag(capsys):
    code, _, err = _run(capsys, "bench", "--metric", _metric_path(),
                        "--segments", "5,x")
    assert code == 1
    assert "--segments" in err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = _run(capsys, "geodesic", "--config", str(cfg),
                        "--x0", "1,1,1")
    assert code == 1
    assert "bogus" in err


def test_config_not_json(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("not json {")
    code, _, err = _run(capsys, "geodesic", "--config", str(cfg),
                        "--x0", "1,1,1")
    assert code == 1
    assert "JSON" in err


# ---------------------------------------------------------------------------
# metric resolution: flag > config > environment
# ---------------------------------------------------------------------------

def test_no_metric_anywhere(capsys):
    code, _, err = _run(capsys, "geodesic", "--x0", "1,1,1")
    assert code == 1
    assert cli.ENV_METRIC in err


def test_metric_from_environment(monkeypatch, capsys):
    monkeypatch.setenv(cli.ENV_METRIC, _metric_path())
    code, out, _ = _run(capsys, "geodesic", "--x0", "0,0,0")
    assert code == 0
    assert json.loads(out)["energy"] == 0.0


def test_flag_beats_environment(monkeypatch, tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text("{}")
    monkeypatch.setenv(cli.ENV_METRIC, str(bad))
    code, _, _ = _run(capsys, "geodesic", "--metric", _metric_path(),
                      "--x0", "0,0,0")
    assert code == 0


def test_unreadable_metric_file(capsys):
    code, _, err = _run(capsys, "geodesic", "--metric", "/no/such/file.json",
                        "--x0", "1,1,1")
    assert code == 1
    assert "cannot read metric file" in err


def test_malformed_metric_names_missing_field(tmp_path, capsys):
    doc = _fixture_doc()
    del doc["rho"]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    code, _, err = _run(capsys, "geodesic", "--metric", str(path),
                        "--x0", "1,1,1")
    assert code == 1
    assert "'rho'" in err


def test_malformed_metric_names_bad_shape(tmp_path, capsys):
    doc = _fixture_doc()
    doc["W"][0] = [[1.0, 0.0], [0.0, 1.0]]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    code, _, err = _run(capsys, "geodesic", "--metric", str(path),
                        "--x0", "1,1,1")
    assert code == 1
    assert "'W'" in err and "(2, 2)" in err


def test_config_file_supplies_everything(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"metric": _metric_path(),
                               "x0": [1.0, 1.0, 1.0],
                               "repeats": 1}))
    code, out, _ = _run(capsys, "geodesic", "--config", str(cfg))
    doc = json.loads(out)
    assert code == 0
    assert doc["repeats"] == 1
    assert doc["x_end"] == [1.0, 1.0, 1.0]


def test_flags_override_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"metric": _metric_path(),
                               "x0": [1.0, 1.0, 1.0],
                               "repeats": 1}))
    code, out, _ = _run(capsys, "geodesic", "--config", str(cfg),
                        "--x0", "0,0,0")
    assert code == 0
    assert json.loads(out)["energy"] == 0.0


def test_solver_config_plumbing(tmp_path, capsys):
    # capping the degree at 3 makes the far corner unreachable: the summary
    # is still printed (converged false) but the exit code reports failure
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"metric": _metric_path(),
                               "repeats": 1,
                               "solver": {"D_max": 3}}))
    code, out, err = _run(capsys, "geodesic", "--config", str(cfg),
                          "--x0", "9,9,9")
    doc = json.loads(out)
    assert code == 2
    assert doc["converged"] is False
    assert doc["accepted_D"] == 3
    assert "rejected" in err


# ---------------------------------------------------------------------------
# geodesic subcommand
# ---------------------------------------------------------------------------

GEODESIC_KEYS = {"x_start", "x_end", "accepted_D", "N", "energy",
                 "uniformity_error", "iterations", "converged", "repeats",
                 "solve_time_mean_s", "solve_time_min_s"}


def test_geodesic_json_summary(capsys):
    code, out, _ = _run(capsys, "geodesic", "--metric", _metric_path(),
                        "--x0", "1,1,1", "--repeats", "2")
    doc = json.loads(out)
    assert code == 0
    assert set(doc) == GEODESIC_KEYS
    assert doc["x_start"] == [0.0, 0.0, 0.0]
    assert doc["converged"] is True
    assert doc["uniformity_error"] < 1e-6
    assert doc["energy"] == pytest.approx(3.484648481, rel=1e-6)
    assert doc["N"] == doc["accepted_D"] + 4
    assert doc["repeats"] == 2
    assert doc["solve_time_min_s"] <= doc["solve_time_mean_s"]


def test_geodesic_equal_endpoints(capsys):
    code, out, _ = _run(capsys, "geodesic", "--metric", _metric_path(),
                        "--x0", "2,-1,3", "--target", "2,-1,3",
                        "--repeats", "1")
    doc = json.loads(out)
    assert code == 0
    assert doc["energy"] == 0.0
    assert doc["iterations"] == 0


def test_geodesic_curve_csv(tmp_path, capsys):
    out_path = tmp_path / "curve.csv"
    code, _, _ = _run(capsys, "geodesic", "--metric", _metric_path(),
                      "--x0", "1,1,1", "--repeats", "1",
                      "--out", str(out_path))
    assert code == 0
    lines = out_path.read_text().splitlines()
    assert lines[0] == "s,x1,x2,x3"
    assert len(lines) == 202
    data = np.loadtxt(str(out_path), delimiter=",", skiprows=1)
    assert data.shape == (201, 4)
    np.testing.assert_allclose(data[0], [0.0, 0.0, 0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(data[-1], [1.0, 1.0, 1.0, 1.0], atol=1e-9)
    # parameter column is the uniform plot grid, not the solver nodes
    np.testing.assert_allclose(data[:, 0], np.linspace(0, 1, 201),
                               atol=1e-15)


def test_geodesic_deterministic_modulo_timing(capsys):
    argv = ("geodesic", "--metric", _metric_path(), "--x0", "3,3,3",
            "--repeats", "1")
    _, out1, _ = _run(capsys, *argv)
    _, out2, _ = _run(capsys, *argv)
    d1, d2 = json.loads(out1), json.loads(out2)
    for key in ("solve_time_mean_s", "solve_time_min_s"):
        d1.pop(key), d2.pop(key)
    assert d1 == d2


# ---------------------------------------------------------------------------
# validate-metric subcommand
# ---------------------------------------------------------------------------

def _coarse_grid_cfg(tmp_path, metric):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"metric": str(metric), "grid_step": 2.5}))
    return str(cfg)


def test_validate_metric_passes(tmp_path, capsys):
    code, out, _ = _run(capsys, "validate-metric", "--config",
                        _coarse_grid_cfg(tmp_path, _metric_path()))
    doc = json.loads(out)
    assert code == 0
    assert doc["passed"] is True
    assert doc["lambda"] == 0.5
    assert doc["worst_eigenvalue"] < 0.0
    assert len(doc["worst_point"]) == 3


def test_validate_metric_fails_inflated_rate(tmp_path, capsys):
    doc = _fixture_doc()
    doc["lambda"] = doc["lambda"] * 100.0
    path = tmp_path / "hot.json"
    path.write_text(json.dumps(doc))
    code, out, err = _run(capsys, "validate-metric", "--config",
                          _coarse_grid_cfg(tmp_path, path))
    report = json.loads(out)
    assert code == 2
    assert report["passed"] is False
    assert report["worst_eigenvalue"] > 0.0
    assert "contraction" in err


def test_validate_metric_rejects_non_contracting(tmp_path, capsys):
    # identity W with zero rho leaves the open-loop dynamics untouched,
    # which are not contracting on the box
    zero = [[0.0] * 3 for _ in range(3)]
    eye = [[float(i == j) for j in range(3)] for i in range(3)]
    doc = {"n": 3, "var_index": 0, "W": [eye, zero, zero],
           "rho": [0.0, 0.0, 0.0], "lambda": 0.5}
    path = tmp_path / "flat.json"
    path.write_text(json.dumps(doc))
    code, out, _ = _run(capsys, "validate-metric", "--config",
                        _coarse_grid_cfg(tmp_path, path))
    assert code == 2
    assert json.loads(out)["passed"] is False


# ---------------------------------------------------------------------------
# simulate subcommand
# ---------------------------------------------------------------------------

SIMULATE_KEYS = {"controller", "x0", "horizon", "dt_ctrl", "dt_int", "steps",
                 "status", "verdict", "final_state", "mean_solve_time_s"}


def test_simulate_lqr_stabilizes_unit_corner(capsys):
    code, out, _ = _run(capsys, "simulate", "--metric", _metric_path(),
                        "--controller", "lqr", "--x0", "1,1,1")
    doc = json.loads(out)
    assert code == 0
    assert set(doc) == SIMULATE_KEYS
    assert doc["controller"] == "lqr"
    assert doc["status"] == "converged"
    assert doc["verdict"] == "stabilized"
    assert max(abs(v) for v in doc["final_state"]) < 0.05


def test_simulate_lqr_divergence_is_a_result_not_an_error(capsys):
    # the experiment ran to its verdict; a diverging plant is exit code 0
    code, out, _ = _run(capsys, "simulate", "--metric", _metric_path(),
                        "--controller", "lqr", "--x0", "4,4,6",
                        "--horizon", "6")
    doc = json.loads(out)
    assert code == 0
    assert doc["status"] == "diverged"
    assert doc["verdict"] == "not_stabilized"


def test_simulate_trajectory_csv(tmp_path, capsys):
    out_path = tmp_path / "traj.csv"
    code, out, _ = _run(capsys, "simulate", "--metric", _metric_path(),
                        "--controller", "lqr", "--x0", "0.5,0.5,0.5",
                        "--horizon", "0.05", "--out", str(out_path))
    assert code == 0
    lines = out_path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3,u1,energy,solve_time"
    data = np.loadtxt(str(out_path), delimiter=",", skiprows=1)
    assert data.shape == (50, 7)
    np.testing.assert_allclose(data[:, 0],
                               np.arange(1, 51) * 1e-3, rtol=1e-12)
    assert json.loads(out)["steps"] == 50


def test_simulate_ccm_short_run(capsys):
    code, out, _ = _run(capsys, "simulate", "--metric", _metric_path(),
                        "--controller", "ccm", "--x0", "0.1,0.1,0.1",
                        "--horizon", "0.1")
    doc = json.loads(out)
    assert code == 0
    assert doc["controller"] == "ccm"
    assert doc["steps"] == 100
    assert doc["mean_solve_time_s"] > 0.0
    # no blowup in a tenth of a second from a benign start
    assert max(abs(v) for v in doc["final_state"]) < 1.0


# ---------------------------------------------------------------------------
# bench subcommand
# ---------------------------------------------------------------------------

BENCH_HEADER = ["sweep", "label", "D", "N", "energy", "uniformity_error",
                "mean_time_s", "min_time_s", "converged"]


def test_bench_csv_layout(tmp_path, capsys):
    out_path = tmp_path / "bench.csv"
    code, _, _ = _run(capsys, "bench", "--metric", _metric_path(),
                      "--repeats", "1", "--shooting", "--segments", "10,20",
                      "--out", str(out_path))
    assert code == 0
    with open(out_path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == BENCH_HEADER
    body = rows[1:]
    sweeps = [r[0] for r in body]
    assert sweeps == (["endpoint"] * 5 + ["a-sweep"] * 4
                      + ["shooting"] * 2 + ["shooting-ref"])
    # endpoint labels are comma-carrying vectors, intact after csv quoting
    assert [r[1] for r in body[:5]] == ["1,1,1", "3,3,3", "5,5,5",
                                        "7,7,7", "9,9,9"]
    assert [r[1] for r in body[5:9]] == ["a=2", "a=4", "a=6", "a=8"]
    assert [r[1] for r in body[9:11]] == ["segments=10", "segments=20"]
    # every pseudospectral cell converged and all energies are positive
    for r in body:
        assert float(r[4]) > 0.0
    assert all(r[8] == "True" for r in body[:9])
    # the a-sweep holds D fixed at the accepted endpoint degree
    assert len({r[2] for r in body[5:9]}) == 1
    assert body[5:9][1][2] == body[4][2]


def test_bench_stdout_when_no_out(capsys):
    code, out, _ = _run(capsys, "bench", "--metric", _metric_path(),
                        "--repeats", "1")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == BENCH_HEADER
    assert len(rows) == 1 + 5 + 4


# ---------------------------------------------------------------------------
# installed console script
# ---------------------------------------------------------------------------

def test_console_script_roundtrip():
    exe = shutil.which("ccmgeo")
    assert exe is not None, "console script not installed"
    proc = subprocess.run(
        [exe, "geodesic", "--metric", _metric_path(), "--x0", "1,1,1",
         "--repeats", "1"],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    assert doc["converged"] is True
    assert doc["energy"] == pytest.approx(3.484648481, rel=1e-6)
