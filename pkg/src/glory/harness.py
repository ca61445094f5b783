"""Run orchestration: single runs, convergence studies and the semiflow test."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import SpectralField
from .config import RunConfig
from .diagnostics import (
    ResidualReport,
    certify_energy_u,
    certify_energy_w,
    energy_csv,
    weak_residual,
)
from .errors import ConfigError, GloryError
from .timestepper import Frame, Status, Trajectory, from_u, initial_state, integrate, to_u
from .trace import TraceWriter, read_trace

__all__ = [
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_CERTIFICATE",
    "EXIT_BLOWUP",
    "EXIT_STEP_FAILURE",
    "RunResult",
    "simulate",
    "run",
    "trace_header",
    "trajectory_from_trace",
    "certify_trajectory",
    "StudyReport",
    "convergence_study",
    "SemiflowReport",
    "semiflow_test",
    "max_workers",
]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CERTIFICATE = 2
EXIT_BLOWUP = 3
EXIT_STEP_FAILURE = 4

_STATUS_EXIT = {Status.BLOWUP: EXIT_BLOWUP, Status.STEP_FAILURE: EXIT_STEP_FAILURE}


def max_workers(n_jobs: int) -> int:
    env = os.environ.get("GLORY_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"GLORY_THREADS must be an integer, got {env!r}") from exc
    return max(1, min(cap, n_jobs))


def trace_header(config: RunConfig) -> dict:
    return {
        "format": "glory-trace",
        "level": config.domain().level,
        "nx": config.nx,
        "ny": config.ny,
        "pad": config.pad,
        "params": config.params().to_dict(),
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
    }


def simulate(config: RunConfig, observers=()) -> Trajectory:
    """Integrate the configured problem and collect frames at the output times."""
    split = config.build_split()
    t0, w0, e0 = config.initial()
    traj = Trajectory(split, config=config.integrator(), initial_energy=e0)
    state = initial_state(w0, t0, split)
    out = config.output_times(t0)
    traj.final = integrate(state, split, max(config.t_end, t0), traj.config, out,
                           observers=[traj.record, *observers])
    return traj


@dataclass
class RunResult:
    trajectory: Trajectory
    exit_code: int
    certificates: dict = field(default_factory=dict)
    residuals: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    @property
    def status(self) -> Status:
        return self.trajectory.final.status

    def summary(self) -> dict:
        fin = self.trajectory.final
        return {
            "status": fin.status.value,
            "t_final": fin.t,
            "t_blow": fin.t_blow,
            "message": fin.message,
            "steps": fin.steps,
            "rejected": fin.rejected,
            "exit_code": self.exit_code,
            "certificates": {k: c.summary() for k, c in self.certificates.items()},
            "weak_residuals": [r.to_dict() for r in self.residuals],
        }


def certify_trajectory(traj: Trajectory, certify: dict | None = None):
    """Energy certificates plus configured weak residuals; returns (certs, residuals, passed)."""
    certify = certify or {}
    certs = {"w": certify_energy_w(traj), "u": certify_energy_u(traj)}
    residuals: list[ResidualReport] = []
    ok = all(c.passed for c in certs.values())
    tfs = certify.get("test_functions") or []
    if tfs and len(traj.frames) >= 2:
        t1, t2 = certify.get("window", (traj.frames[0].t, traj.frames[-1].t))
        limit = certify.get("max_relative_residual")
        for xi in tfs:
            r = weak_residual(traj, xi, t1, t2)
            residuals.append(r)
            if limit is not None and r.relative_residual > limit:
                ok = False
    return certs, residuals, ok


def run(config: RunConfig, out_dir=None, quiet: bool = True) -> RunResult:
    """Run, certify and (when ``out_dir`` is given) write trace, CSV and summary."""
    outputs = {}
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs["trace"] = out_dir / "trace.gstr"
        writer = TraceWriter(outputs["trace"], trace_header(config))
    try:
        traj = simulate(config, observers=[writer] if writer else [])
    except BaseException:
        if writer:
            writer.close({"status": "aborted"})
        raise
    fin = traj.final
    result = RunResult(traj, EXIT_OK)
    if fin.status is Status.FINISHED:
        certs, residuals, ok = certify_trajectory(traj, config.data.get("certify"))
        result.certificates, result.residuals = certs, residuals
        result.exit_code = EXIT_OK if ok else EXIT_CERTIFICATE
    else:
        result.exit_code = _STATUS_EXIT[fin.status]
        if traj.frames:
            result.certificates = {"w": certify_energy_w(traj), "u": certify_energy_u(traj)}
    summary = result.summary()
    if writer:
        writer.close(summary)
        for form, cert in result.certificates.items():
            p = out_dir / f"energy_{form}.csv"
            p.write_text(energy_csv(cert.records))
            outputs[f"energy_{form}"] = p
        p = out_dir / "summary.json"
        p.write_text(json.dumps(summary, indent=2, sort_keys=True))
        outputs["summary"] = p
    result.outputs = outputs
    if not quiet:
        log.info("run finished: %s (exit %d)", fin.status.value, result.exit_code)
    return result


def trajectory_from_trace(path, config: RunConfig | None = None) -> tuple[Trajectory, RunConfig]:
    """Rebuild a trajectory (and its configuration) from a trace file."""
    tf = read_trace(path)
    if config is None:
        if "config" not in tf.header:
            raise ConfigError(f"{path}: trace carries no configuration; pass one explicitly")
        config = RunConfig.from_dict(tf.header["config"], base_dir=Path(path).parent)
    split = config.build_split()
    _, _, e0 = config.initial()
    traj = Trajectory(split, config=config.integrator(), initial_energy=e0)
    for fr in tf.frames:
        traj.frames.append(Frame(fr.t, fr.coeffs, fr.dissipation_accum, fr.dissipation_u_accum,
                                 fr.forcing_accum, fr.error_accum))
    try:
        status = Status((tf.footer or {}).get("status", "finished"))
    except ValueError:
        status = Status.STEP_FAILURE
    last = tf.frames[-1] if tf.frames else None
    traj.final = initial_state(SpectralField(split.domain, last.coeffs), last.t) if last else None
    if traj.final is not None:
        from dataclasses import replace

        traj.final = replace(traj.final, status=status)
    return traj, config


# -- studies -------------------------------------------------------------------------

AXES = ("modes", "domain_level", "time_step")


def _level_config(config: RunConfig, axis: str, level, first_level, times) -> RunConfig:
    over = {"output": {"times": list(times)}}
    if axis == "modes":
        over["grid"] = {"nx": int(level)}
    elif axis == "time_step":
        dt = float(level)
        over["integrator"] = {"adaptive": False, "dt_init": dt, "dt_min": dt, "dt_max": dt}
    else:
        scale = 2 ** (int(level) - int(first_level))
        over["domain"] = {"level": int(level)}
        over["grid"] = {"nx": int(config.nx * scale)}
    return config.with_overrides(**over)


def _study_job(data: dict, base_dir: str):
    cfg = RunConfig.from_dict(data, base_dir)
    traj = simulate(cfg)
    return traj.final.status.value, {fr.t: fr.coeffs for fr in traj.frames}


def _values_on(coeffs: np.ndarray, level: int, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    L = float(2 ** level)
    nx, ny = coeffs.shape
    j = np.arange(1, nx + 1)
    m = np.arange(1, ny + 1)
    Sx = np.sin(np.pi * np.outer((X + L) / (2 * L), j)) / math.sqrt(L)
    Sy = math.sqrt(2.0) * np.sin(np.pi * np.outer(Y, m))
    return Sx @ coeffs @ Sy.T


def _gl(n, a, b):
    s, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * s + 0.5 * (a + b), 0.5 * (b - a) * w


@dataclass
class StudyReport:
    axis: str
    levels: list
    times: list
    differences: dict  # t -> list of ||sol_{i+1} - sol_i||
    orders: dict
    monotone: dict
    errors: dict | None = None
    error_orders: dict | None = None
    statuses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        f = lambda d: None if d is None else {repr(k): [float(x) for x in v] for k, v in d.items()}
        return {"axis": self.axis, "levels": self.levels, "times": self.times,
                "differences": f(self.differences), "orders": f(self.orders),
                "monotone": {repr(k): bool(v) for k, v in self.monotone.items()},
                "errors": f(self.errors), "error_orders": f(self.error_orders), "statuses": self.statuses}


def _orders(values, levels, axis):
    out = []
    for i in range(len(values) - 1):
        a, b = values[i], values[i + 1]
        r = levels[i] / levels[i + 1] if axis == "time_step" else levels[i + 1] / levels[i]
        out.append(math.log(a / b) / math.log(r) if a > 0 and b > 0 and r != 1 else float("nan"))
    return out


def convergence_study(config: RunConfig, axis: str, levels, times=None) -> StudyReport:
    """Solve at each refinement level and compare consecutive levels.

    ``modes``: levels are ``nx`` values.  ``time_step``: fixed step sizes.
    ``domain_level``: rectangle levels, with ``nx`` scaled to keep the
    resolution per unit length; differences are measured on the smallest
    rectangle.  With a manufactured solution the errors against it are
    reported as well.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown study axis {axis!r}; expected one of {AXES}")
    levels = list(levels)
    if len(levels) < 3:
        raise ConfigError("a convergence study needs at least three levels")
    times = [float(t) for t in (times if times is not None else [config.t_end])]
    cfgs = [_level_config(config, axis, lv, levels[0], times) for lv in levels]
    jobs = [(c.to_dict(), str(c.base_dir)) for c in cfgs]
    nw = max_workers(len(jobs))
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(_study_job, *zip(*jobs)))
    else:
        results = [_study_job(*j) for j in jobs]
    statuses = [r[0] for r in results]
    bad = [s for s in statuses if s != Status.FINISHED.value]
    if bad:
        raise GloryError(f"study run ended with status {bad[0]}")

    exact = config.manufactured_solution()
    gamma = config.params().gamma
    M = min(int(c.domain().level) for c in cfgs)
    diffs, errs = {}, {}
    for t in times:
        sols = []
        for (_, frames), c in zip(results, cfgs):
            key = min(frames, key=lambda s: abs(s - t))
            sols.append((c, frames[key]))
        d, e = [], []
        if axis == "domain_level":
            LM = float(2 ** M)
            nmax = max(c.nx * 2.0 ** (M - c.domain().level) for c, _ in sols)
            X, wx = _gl(int(3 * nmax) + 64, -LM, LM)
            Y, wy = _gl(3 * max(c.ny for c, _ in sols) + 32, 0.0, 1.0)
            vals = [_values_on(cf, c.domain().level, X, Y) for c, cf in sols]
            for a, b in zip(vals[:-1], vals[1:]):
                d.append(math.sqrt(max(float(wx @ ((a - b) ** 2) @ wy), 0.0)))
        else:
            nx = max(cf.shape[0] for _, cf in sols)
            ny = max(cf.shape[1] for _, cf in sols)
            padded = []
            for _, cf in sols:
                z = np.zeros((nx, ny))
                z[:cf.shape[0], :cf.shape[1]] = cf
                padded.append(z)
            for a, b in zip(padded[:-1], padded[1:]):
                d.append(float(np.linalg.norm(a - b)))
        if exact is not None:
            for c, cf in sols:
                dom = c.domain()
                L = dom.half_width
                nq = 3 * cf.shape[0] + 32
                X, wx = _gl(nq, -L, L)
                Y, wy = _gl(3 * cf.shape[1] + 32, 0.0, 1.0)
                XX, YY = np.meshgrid(X, Y, indexing="ij")
                ref = math.exp(-gamma * t) * exact(t, XX, YY, L)
                num = _values_on(cf, dom.level, X, Y)
                e.append(math.sqrt(max(float(wx @ ((num - ref) ** 2) @ wy), 0.0)))
            errs[t] = e
        diffs[t] = d
    report = StudyReport(
        axis, levels, times, diffs,
        {t: _orders(v, levels, axis) for t, v in diffs.items()},
        {t: bool(np.all(np.diff(v) < 0)) for t, v in diffs.items()},
        errs or None,
        {t: _orders(v, levels, axis) for t, v in errs.items()} or None,
        statuses,
    )
    return report


# -- semiflow ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SemiflowReport:
    split_time: float
    horizon: float
    discrepancy: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def semiflow_test(config: RunConfig, split_time: float | None = None, horizon: float | None = None,
                  factor: float = 5.0) -> SemiflowReport:
    """Compare ``u(t)`` from one run with a restart at ``s`` through the u-variables."""
    t = float(horizon if horizon is not None else config.t_end)
    s = float(split_time if split_time is not None else 0.5 * t)
    if not 0 < s < t:
        raise ConfigError(f"need 0 < split time < horizon, got s={s}, t={t}")
    split = config.build_split()
    params = config.params()
    icfg = config.integrator()
    t0, w0, _ = config.initial()
    if t0 != 0.0:
        raise ConfigError("the semiflow test starts from t = 0")
    times = sorted(set(config.output_times().tolist()) | {s, t})
    times = [x for x in times if x <= t]
    one = integrate(initial_state(w0, 0.0, split), split, t, icfg, times)
    first = integrate(initial_state(w0, 0.0, split), split, s, icfg, [x for x in times if x <= s])
    for st in (one, first):
        if st.status is not Status.FINISHED:
            return SemiflowReport(s, t, float("inf"), factor * icfg.rel_tol, False)
    ts, u_s = to_u(first, params)
    restart = from_u(ts, u_s, params)
    second = integrate(restart, split, t, icfg, [x for x in times if x > s])
    if second.status is not Status.FINISHED:
        return SemiflowReport(s, t, float("inf"), factor * icfg.rel_tol, False)
    _, u1 = to_u(one, params)
    _, u2 = to_u(second, params)
    nrm = u1.norm()
    disc = (u1 - u2).norm() / nrm if nrm > 0 else (u1 - u2).norm()
    tol = factor * icfg.rel_tol
    return SemiflowReport(s, t, float(disc), float(tol), bool(disc <= tol))
