import csv
import io
import json
import math

import numpy as np
import pytest

from glory import cli
from glory.basis import eigenvalues
from glory.config import RunConfig
from glory.diagnostics import CSV_COLUMNS
from glory.domain import RectDomain
from glory.errors import ConfigError
from glory.harness import (
    EXIT_BLOWUP,
    EXIT_CERTIFICATE,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_STEP_FAILURE,
    convergence_study,
    max_workers,
    run,
    semiflow_test,
    trajectory_from_trace,
)
from glory.timestepper import Status
from glory.trace import file_checksum, read_trace

LINEAR = {
    "params": {"mu": 1.0, "alpha": 0.0, "beta": 0.0},
    "grid": {"nx": 6, "ny": 6},
    "initial": {"kind": "mode", "j": 1, "m": 1, "amplitude": 1.0},
    "model": {"nonlinear": False},
    "integrator": {"adaptive": False, "dt_init": 0.05, "dt_min": 0.05, "dt_max": 0.05},
    "t_end": 1.0,
    "output": {"dt": 0.1},
}

SMALL = {
    "params": {"mu": 0.5, "alpha": 0.2, "beta": 0.5},
    "grid": {"nx": 8, "ny": 6},
    "initial": {"kind": "random", "seed": 2, "decay": 0.05},
    "forcing": {"kind": "closed_form", "expr": "sin(pi*y)*exp(-x^2)"},
    "integrator": {"rel_tol": 1e-9},
    "t_end": 0.5,
    "output": {"dt": 0.05},
}


def write_config(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_run_outputs_and_closed_form(tmp_path):
    res = run(RunConfig.from_dict(LINEAR), tmp_path / "out")
    assert res.exit_code == EXIT_OK and res.status is Status.FINISHED
    out = tmp_path / "out"
    for name in ("trace.gstr", "energy_w.csv", "energy_u.csv", "summary.json"):
        assert (out / name).exists()
    lam = eigenvalues(RectDomain(1), 1, 1)[0, 0]
    c = -(1.0 + lam)
    for form in ("w", "u"):
        recs = rows(out / f"energy_{form}.csv")
        assert list(recs[0]) == list(CSV_COLUMNS) and len(recs) == 11
        for r in recs:
            t = float(r["t"])
            assert float(r["energy_w"]) == pytest.approx(0.5 * math.exp(2 * c * t), rel=1e-9, abs=1e-16)
            assert float(r["slack"]) == pytest.approx(0.25 * (1 - math.exp(2 * c * t)), abs=1e-9)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "finished" and summary["certificates"]["w"]["passed"]
    tf = read_trace(out / "trace.gstr")
    assert len(tf.frames) == 11 and tf.footer["exit_code"] == 0
    assert tf.header["config_hash"] == RunConfig.from_dict(LINEAR).config_hash()


def test_zero_data_gives_zero_frames(tmp_path):
    res = run(RunConfig.from_dict({"t_end": 0.3}), tmp_path)
    assert res.exit_code == EXIT_OK
    tf = read_trace(tmp_path / "trace.gstr")
    assert all(not c.any() for c in tf.coeffs)
    assert all(float(r["slack"]) == 0.0 for r in rows(tmp_path / "energy_w.csv"))


def test_runs_are_deterministic(tmp_path):
    cfg = RunConfig.from_dict(SMALL)
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for name in ("trace.gstr", "energy_w.csv", "energy_u.csv"):
        assert file_checksum(tmp_path / "a" / name) == file_checksum(tmp_path / "b" / name)


def test_exit_codes(tmp_path):
    blow = dict(LINEAR, integrator={"blowup_norm_threshold": 1e-3})
    res = run(RunConfig.from_dict(blow), tmp_path / "blow")
    assert res.exit_code == EXIT_BLOWUP and res.trajectory.final.t_blow is not None
    assert read_trace(tmp_path / "blow" / "trace.gstr").footer["status"] == "blowup"

    stuck = dict(LINEAR, integrator=dict(LINEAR["integrator"], max_steps=3))
    assert run(RunConfig.from_dict(stuck)).exit_code == EXIT_STEP_FAILURE

    strict = dict(SMALL, certify={"test_functions": ["gauss_bump"], "max_relative_residual": 1e-30})
    res = run(RunConfig.from_dict(strict))
    assert res.exit_code == EXIT_CERTIFICATE and res.residuals


@pytest.mark.parametrize("data, code", [
    (LINEAR, EXIT_OK),
    ({"t_end": 0.2}, EXIT_OK),
    (dict(LINEAR, integrator={"blowup_norm_threshold": 1e-3}), EXIT_BLOWUP),
    (dict(LINEAR, integrator=dict(LINEAR["integrator"], max_steps=3)), EXIT_STEP_FAILURE),
    ({"colour": "red"}, EXIT_CONFIG),
    ({"schema_version": 9}, EXIT_CONFIG),
])
def test_cli_run_exit_codes(tmp_path, data, code):
    p = write_config(tmp_path, data)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == code


def test_cli_missing_config(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json"), "--quiet"]) == EXIT_CONFIG


def test_cli_certify_and_inspect(tmp_path, capsys):
    p = write_config(tmp_path, SMALL)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    trace = tmp_path / "o" / "trace.gstr"
    assert cli.main(["certify", str(trace), "--out", str(tmp_path / "c"), "--quiet"]) == 0
    cert = json.loads((tmp_path / "c" / "certificate.json").read_text())
    assert cert["passed"]
    # recertifying reproduces the slacks written by the run
    assert (tmp_path / "c" / "energy_w.csv").read_text() == (tmp_path / "o" / "energy_w.csv").read_text()
    capsys.readouterr()
    assert cli.main(["inspect", str(trace)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["frames"] == 11 and info["t_last"] == pytest.approx(0.5)
    assert "config" not in info["header"]
    raw = trace.read_bytes()
    trace.write_bytes(raw[:-7])
    assert cli.main(["certify", str(trace), "--quiet"]) == EXIT_CONFIG


def test_trajectory_from_trace(tmp_path):
    cfg = RunConfig.from_dict(SMALL)
    res = run(cfg, tmp_path)
    traj, cfg2 = trajectory_from_trace(tmp_path / "trace.gstr")
    assert cfg2.config_hash() == cfg.config_hash()
    assert traj.final.status is Status.FINISHED
    for a, b in zip(traj.frames, res.trajectory.frames):
        assert a.t == b.t and np.array_equal(a.coeffs, b.coeffs)


def test_levels_parser():
    assert cli._levels("1/40,1/80") == [0.025, 0.0125]
    assert cli._levels("16, 32,64") == [16, 32, 64]
    assert cli._levels("0.5,1.0") == [0.5, 1.0]


def test_max_workers(monkeypatch):
    monkeypatch.setenv("GLORY_THREADS", "1")
    assert max_workers(8) == 1
    monkeypatch.setenv("GLORY_THREADS", "3")
    assert max_workers(8) == 3 and max_workers(2) == 2
    monkeypatch.setenv("GLORY_THREADS", "many")
    with pytest.raises(ConfigError):
        max_workers(2)


MMS = {
    "params": {"mu": 1.0},
    "grid": {"nx": 8, "ny": 8},
    "forcing": {"kind": "manufactured", "solution": "exp(-t)*sin(pi*(x+L)/(2*L))*sin(pi*y)"},
    "initial": {"kind": "manufactured"},
    "t_end": 1.0,
    "output": {"dt": 1.0},
}


def test_time_step_study_on_manufactured_solution(monkeypatch):
    monkeypatch.setenv("GLORY_THREADS", "1")
    rep = convergence_study(RunConfig.from_dict(MMS), "time_step", [1 / 40, 1 / 80, 1 / 160])
    errs = rep.errors[1.0]
    assert errs[0] > errs[1] > errs[2] > 0
    slope = np.polyfit(np.log(rep.levels), np.log(errs), 1)[0]
    assert 3.5 < slope < 4.5 and all(q > 3.5 for q in rep.error_orders[1.0])
    assert rep.monotone[1.0]
    d = rep.to_dict()
    assert d["axis"] == "time_step" and d["statuses"] == ["finished"] * 3


def test_modes_study_converges(monkeypatch):
    monkeypatch.setenv("GLORY_THREADS", "1")
    cfg = RunConfig.from_dict({
        "params": {"mu": 0.2, "beta": 0.5},
        "grid": {"ny": 8},
        "initial": {"kind": "bump", "radii": (0.8, 0.3), "amplitude": 0.5},
        "integrator": {"adaptive": False, "dt_init": 0.01, "dt_min": 0.01, "dt_max": 0.01},
        "t_end": 0.5,
    })
    rep = convergence_study(cfg, "modes", [8, 16, 32, 64])
    d = rep.differences[0.5]
    assert rep.monotone[0.5] and d[0] / d[-1] > 1e2
    assert rep.errors is None


def test_study_rejects_bad_requests():
    cfg = RunConfig.from_dict(LINEAR)
    with pytest.raises(ConfigError):
        convergence_study(cfg, "colour", [1, 2, 3])
    with pytest.raises(ConfigError):
        convergence_study(cfg, "modes", [8, 16])


def test_semiflow():
    rep = semiflow_test(RunConfig.from_dict(LINEAR))
    assert rep.passed and rep.discrepancy <= 1e-12
    assert rep.split_time == 0.5 and rep.horizon == 1.0
    zero = semiflow_test(RunConfig.from_dict({"t_end": 0.4}))
    assert zero.discrepancy == 0.0 and zero.passed
    nl = semiflow_test(RunConfig.from_dict(SMALL), 0.2, 0.5)
    assert nl.passed and nl.tolerance == pytest.approx(5e-9)
    with pytest.raises(ConfigError):
        semiflow_test(RunConfig.from_dict(LINEAR), 1.0, 1.0)


def test_cli_study_and_semiflow(tmp_path, monkeypatch):
    monkeypatch.setenv("GLORY_THREADS", "1")
    p = write_config(tmp_path, MMS)
    code = cli.main(["study", "--config", str(p), "--axis", "time-step", "--levels", "1/20,1/40,1/80",
                     "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_OK
    study = json.loads((tmp_path / "study.json").read_text())
    assert study["axis"] == "time_step" and len(study["levels"]) == 3
    assert cli.main(["study", "--config", str(p), "--quiet"]) == EXIT_CONFIG
    p = write_config(tmp_path, LINEAR, "lin.json")
    assert cli.main(["semiflow", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    assert json.loads((tmp_path / "semiflow.json").read_text())["passed"]
