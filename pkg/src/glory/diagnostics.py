"""Energies, energy certificates, weak-form residuals and velocity reconstruction."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate as sint

from .basis import (
    GridField,
    QuadraturePlan,
    SpectralField,
    derivative_fields,
    diff_y,
    eigenvalues,
    l2_norm,
    mode_table,
)
from .domain import GridSpec, Parameters, RectDomain, build_grid
from .errors import TestFunctionNotAdmissible
from .expr import ClosedForm
from .forcing import ForcingKind, ForcingSpec, _closed_tilde, forcing_budget, mollified_points
from .galerkin import growth_factor
from .nonlocal_op import TMethod, apply_T
from .timestepper import Trajectory, log_mean_integral

__all__ = [
    "energy",
    "EnergyRecord",
    "Certificate",
    "certify_energy_w",
    "certify_energy_u",
    "CSV_COLUMNS",
    "energy_csv",
    "TestFunction",
    "test_function_library",
    "ResidualReport",
    "weak_residual",
    "weak_residual_u",
    "reconstruct_v",
    "divergence_check",
    "AprioriReport",
    "apriori_monitor",
    "energy_balance",
]


def energy(f: SpectralField, params: Parameters | float = 1.0):
    """``(1/2 sum F^2, mu sum lam F^2, sum F^2)``."""
    mu = params.mu if isinstance(params, Parameters) else float(params)
    lam = eigenvalues(f.domain, f.nx, f.ny)
    z = float(np.sum(f.coeffs ** 2))
    return 0.5 * z, mu * float(np.sum(lam * f.coeffs ** 2)), z


# -- energy certificates ---------------------------------------------------------

@dataclass(frozen=True)
class EnergyRecord:
    t: float
    energy_w: float
    grad_sq: float
    zero_order_sq: float
    dissipation_accum: float
    forcing_accum: float
    bound: float
    slack: float


CSV_COLUMNS = ("t", "energy_w", "grad_sq", "zero_order_sq", "dissipation_accum",
               "forcing_accum", "bound", "slack")


@dataclass
class Certificate:
    form: str
    records: list[EnergyRecord]
    tolerance: float
    initial_energy: float
    initial_energy_N: float

    @property
    def slacks(self) -> np.ndarray:
        return np.array([r.slack for r in self.records])

    @property
    def min_slack(self) -> float:
        return float(self.slacks.min()) if self.records else 0.0

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tolerance

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def summary(self) -> dict:
        return {"form": self.form, "passed": self.passed, "min_slack": self.min_slack,
                "tolerance": self.tolerance, "initial_energy": self.initial_energy,
                "initial_energy_N": self.initial_energy_N, "samples": len(self.records)}


def _initial_energies(traj: Trajectory):
    eN = 0.5 * float(np.sum(traj.frames[0].coeffs ** 2)) if traj.frames else 0.0
    e0 = traj.initial_energy if traj.initial_energy is not None else eN
    return e0, eN


def _tolerance(e0: float, err: float) -> float:
    return 1e-8 * max(1.0, e0) + err


def certify_energy_w(traj: Trajectory) -> Certificate:
    """Check ``E_N(w) + D/2 <= E(u0) + (int K_n^2) / 2`` at every frame."""
    p = traj.params
    lam = eigenvalues(traj.domain, traj.split.nx, traj.split.ny)
    e0, eN = _initial_energies(traj)
    recs = []
    for fr in traj.frames:
        c2 = fr.coeffs ** 2
        z = float(np.sum(c2))
        g = p.mu * float(np.sum(lam * c2))
        bound = e0 + 0.5 * fr.forcing_accum
        slack = bound - 0.5 * z - 0.5 * fr.dissipation_accum
        recs.append(EnergyRecord(fr.t, 0.5 * z, g, z, fr.dissipation_accum, fr.forcing_accum, bound, slack))
    err = traj.frames[-1].error_accum if traj.frames else 0.0
    return Certificate("w", recs, _tolerance(e0, err), e0, eN)


def certify_energy_u(traj: Trajectory) -> Certificate:
    """The same inequality written in ``u = e^{gamma t} w`` with ``e^{-2 gamma t}`` weights."""
    p = traj.params
    lam = eigenvalues(traj.domain, traj.split.nx, traj.split.ny)
    e0, eN = _initial_energies(traj)
    recs = []
    for fr in traj.frames:
        u = growth_factor(p.gamma, fr.t) * fr.coeffs
        wt = np.exp(-2.0 * p.gamma * fr.t)
        u2 = u * u
        z = wt * float(np.sum(u2))
        g = wt * p.mu * float(np.sum(lam * u2))
        bound = e0 + 0.5 * fr.forcing_accum
        slack = bound - 0.5 * z - 0.5 * fr.dissipation_u_accum
        recs.append(EnergyRecord(fr.t, 0.5 * z, g, z, fr.dissipation_u_accum, fr.forcing_accum, bound, slack))
    err = traj.frames[-1].error_accum if traj.frames else 0.0
    return Certificate("u", recs, _tolerance(e0, err), e0, eN)


def energy_csv(records, stream=None) -> str:
    """Write records as CSV with a header row; returns the text when no stream is given."""
    own = stream is None
    stream = stream or io.StringIO()
    wr = csv.writer(stream, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for r in records:
        wr.writerow([repr(float(getattr(r, c))) for c in CSV_COLUMNS])
    return stream.getvalue() if own else ""


def energy_balance(split, t: float, coeffs: np.ndarray):
    """``(<F, Psi(t, F)>, the same without the nonlinear part)``.

    The two agree up to quadrature rounding because the nonlinear terms do
    not change the energy.
    """
    p = split.params
    full = float(np.sum(coeffs * split(t, coeffs)))
    lam = split.lam
    z = float(np.sum(coeffs ** 2))
    pred = (-p.mu * float(np.sum(lam * coeffs ** 2)) + (p.alpha - p.gamma) * z
            - p.beta * float(np.sum(coeffs * split.coupling.apply(coeffs))) * split.use_beta
            + float(np.sum(coeffs * split.forcing_coeffs(t))))
    return full, pred


# -- test functions -----------------------------------------------------------------

@dataclass
class TestFunction:
    """A test function given by a closed form in ``(t, x, y)``."""

    __test__ = False

    id: str
    expr: ClosedForm
    grad: tuple = field(init=False, repr=False)
    dt: ClosedForm = field(init=False, repr=False)

    def __post_init__(self):
        self.expr = ClosedForm(self.expr)
        self.grad = (self.expr.diff("x"), self.expr.diff("y"))
        self.dt = self.expr.diff("t")

    def check_admissible(self, domain: RectDomain, tol: float = 1e-6, times=(0.0,)):
        L = domain.half_width
        xs = np.linspace(-L, L, 65)
        ys = np.linspace(0.0, 1.0, 33)
        scale = 0.0
        edge = 0.0
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        for t in times:
            inner = self.expr(t, X, Y, L)
            scale = max(scale, float(np.max(np.abs(inner))))
            e = np.concatenate([self.expr(t, xs, 0.0, L), self.expr(t, xs, 1.0, L),
                                self.expr(t, -L, ys, L), self.expr(t, L, ys, L)])
            edge = max(edge, float(np.max(np.abs(e))))
        if scale == 0.0:
            raise TestFunctionNotAdmissible(f"test function {self.id} vanishes identically")
        if edge > tol * scale:
            raise TestFunctionNotAdmissible(
                f"test function {self.id} is {edge / scale:.2e} (relative) on the boundary")


def eigenmode_text(j: int, m: int) -> str:
    return f"(2/L)^(1/2)*sin({j}*pi*(x+L)/(2*L))*sin({m}*pi*y)"


BUMPS = {
    "poly_bump": "(L^2 - x^2)^2*y^2*(1-y)^2/L^4",
    "gauss_bump": "exp(-4*x^2)*sin(pi*y)^2",
}


def test_function_library(domain: RectDomain, n_modes: int = 10, extra: dict | None = None) -> dict:
    """``phi_1 .. phi_n`` by eigenvalue rank, two bumps, and user entries."""
    j, m, _ = mode_table(domain, 32, 8)
    lib = {f"phi_{k + 1}": TestFunction(f"phi_{k + 1}", eigenmode_text(j[k], m[k])) for k in range(n_modes)}
    for key, text in {**BUMPS, **(extra or {})}.items():
        lib[key] = TestFunction(key, text)
    return lib


test_function_library.__test__ = False  # not a pytest test despite the name


def _as_test_function(xi, domain) -> TestFunction:
    if isinstance(xi, TestFunction):
        return xi
    if isinstance(xi, str):
        lib = test_function_library(domain)
        if xi in lib:
            return lib[xi]
        return TestFunction(xi, xi)
    return TestFunction(str(xi), ClosedForm(xi))


# -- weak residual ------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    test_function: str
    t1: float
    t2: float
    residual_value: float
    scale: float
    relative_residual: float
    quadrature_error: float
    terms: dict

    def to_dict(self) -> dict:
        return {"test_function": self.test_function, "t1": self.t1, "t2": self.t2,
                "residual_value": self.residual_value, "scale": self.scale,
                "relative_residual": self.relative_residual, "quadrature_error": self.quadrature_error}


SCALE_FLOOR = 1e-300


def _forcing_at(spec: ForcingSpec, t, X, Y, L):
    if spec.is_zero:
        return np.zeros_like(X)
    if spec.kind is ForcingKind.CLOSED_FORM:
        if spec.mollification_index:
            return mollified_points(spec, spec.mollification_index, t, X, Y, L)
        return _closed_tilde(spec.expr, t, X, Y, L)
    raise NotImplementedError


def _series_forcing_inner(spec, t, xi: TestFunction, L):
    from .forcing import mollify

    g = spec.series.grid
    X, Y = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
    if spec.mollification_index:
        v = mollify(spec, spec.mollification_index, t, g).values
    else:
        v = spec.series.at(t)
    return float(np.sum(v * xi.expr(t, X, Y, L)) * g.hx * g.hy)


def _time_integral(ts, vals):
    """Composite Simpson plus an error estimate from the coarser trapezoid rule."""
    vals = np.asarray(vals)
    if len(ts) < 3:
        return float(np.trapezoid(vals, ts)), 0.0
    s = float(sint.simpson(vals, x=ts))
    if len(ts) >= 5 and (len(ts) - 1) % 2 == 0:
        coarse = float(sint.simpson(vals[::2], x=ts[::2]))
        est = abs(s - coarse) / 15.0
    else:
        est = abs(s - float(np.trapezoid(vals, ts))) / 3.0
    return s, est


def _window(traj: Trajectory, t1, t2):
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    i1, i2 = traj.index_of(t1, 1e-9), traj.index_of(t2, 1e-9)
    return list(range(i1, i2 + 1))


def _space_plan(traj: Trajectory, plan):
    if plan is not None:
        return plan
    nx, ny = traj.split.nx, traj.split.ny
    return QuadraturePlan(traj.domain, nx, ny, 2 * nx + 48, 2 * ny + 24)


def weak_residual(traj: Trajectory, xi, t1: float, t2: float, *, plan: QuadraturePlan | None = None,
                  admissibility_tol: float = 1e-6) -> ResidualReport:
    """Residual of the integrated-in-time weak form of the ``w``-equation.

    ``int w(t2) xi - int w(t1) xi + int_{t1}^{t2} int [mu grad w . grad xi
    + e^{g t} xi_y w T w_x + 2 e^{g t} xi w w_x - (alpha - g) w xi
    + beta xi T w_x - e^{-g t} K xi]`` with frames as time nodes.
    """
    dom = traj.domain
    xi = _as_test_function(xi, dom)
    xi.check_admissible(dom, admissibility_tol)
    if xi.expr.time_dependent:
        raise ValueError("use weak_residual_u for time-dependent test functions")
    p = traj.params
    plan = _space_plan(traj, plan)
    L = dom.half_width
    X, Y = plan.mesh()
    xv = xi.expr(0.0, X, Y, L)
    gx = xi.grad[0](0.0, X, Y, L)
    gy = xi.grad[1](0.0, X, Y, L)
    idx = _window(traj, t1, t2)
    spec = traj.split.forcing
    names = ("diffusion", "transport_y", "transport_x", "linear", "beta", "forcing")
    series = {k: [] for k in names}
    ts = []
    for i in idx:
        fr = traj.frames[i]
        c = fr.coeffs
        w = plan.evaluate(c, "S", "S")
        wx = plan.evaluate(c, "D", "S")
        wy = plan.evaluate(c, "S", "D")
        twx = plan.evaluate(c, "D", "T")
        eg = growth_factor(p.gamma, fr.t)
        series["diffusion"].append(p.mu * plan.integrate(wx * gx + wy * gy))
        series["transport_y"].append(eg * plan.integrate(gy * w * twx))
        series["transport_x"].append(2.0 * eg * plan.integrate(xv * w * wx))
        series["linear"].append(-(p.alpha - p.gamma) * plan.integrate(w * xv))
        series["beta"].append(p.beta * plan.integrate(xv * twx) if traj.split.use_beta else 0.0)
        emg = np.exp(-p.gamma * fr.t)
        if spec.is_zero:
            kf = 0.0
        elif spec.kind is ForcingKind.GRID_SERIES:
            kf = _series_forcing_inner(spec, fr.t, xi, L)
        else:
            kf = plan.integrate(_forcing_at(spec, fr.t, X, Y, L) * xv)
        series["forcing"].append(-emg * kf)
        ts.append(fr.t)
    ts = np.asarray(ts)
    if not traj.split.nonlinear:
        series["transport_y"] = [0.0] * len(ts)
        series["transport_x"] = [0.0] * len(ts)
    first = plan.integrate(plan.evaluate(traj.frames[idx[0]].coeffs, "S", "S") * xv)
    last = plan.integrate(plan.evaluate(traj.frames[idx[-1]].coeffs, "S", "S") * xv)
    return _assemble(xi.id, t1, t2, first, last, ts, series)


def _assemble(name, t1, t2, first, last, ts, series):
    terms = {"boundary_t2": last, "boundary_t1": -first}
    total = last - first
    scale = abs(last) + abs(first)
    qerr = 0.0
    for k, v in series.items():
        val, est = _time_integral(ts, v)
        terms[k] = val
        total += val
        scale += abs(val)
        qerr += est
    rel = abs(total) / max(scale, SCALE_FLOOR)
    return ResidualReport(name, float(t1), float(t2), float(total), float(scale), float(rel),
                          float(qerr / max(scale, SCALE_FLOOR)), terms)


def weak_residual_u(traj: Trajectory, phi, t1: float, t2: float, *, plan: QuadraturePlan | None = None,
                    admissibility_tol: float = 1e-6) -> ResidualReport:
    """Weak form of the ``u``-equation with a possibly time-dependent test function.

    ``int u(t2) phi(t2) - int u(t1) phi(t1) + int_{t1}^{t2} int [-u phi_t
    + mu grad u . grad phi + phi_y u T u_x + 2 phi u u_x - alpha u phi
    + beta phi T u_x - K phi]``.
    """
    dom = traj.domain
    phi = _as_test_function(phi, dom)
    p = traj.params
    idx = _window(traj, t1, t2)
    phi.check_admissible(dom, admissibility_tol, times=(traj.frames[idx[0]].t, traj.frames[idx[-1]].t))
    plan = _space_plan(traj, plan)
    L = dom.half_width
    X, Y = plan.mesh()
    spec = traj.split.forcing
    names = ("time", "diffusion", "transport_y", "transport_x", "linear", "beta", "forcing")
    series = {k: [] for k in names}
    ts = []
    for i in idx:
        fr = traj.frames[i]
        t = fr.t
        c = growth_factor(p.gamma, t) * fr.coeffs
        u = plan.evaluate(c, "S", "S")
        ux = plan.evaluate(c, "D", "S")
        uy = plan.evaluate(c, "S", "D")
        tux = plan.evaluate(c, "D", "T")
        pv = phi.expr(t, X, Y, L)
        px = phi.grad[0](t, X, Y, L)
        py = phi.grad[1](t, X, Y, L)
        pt = phi.dt(t, X, Y, L)
        nl = 1.0 if traj.split.nonlinear else 0.0
        series["time"].append(-plan.integrate(u * pt))
        series["diffusion"].append(p.mu * plan.integrate(ux * px + uy * py))
        series["transport_y"].append(nl * plan.integrate(py * u * tux))
        series["transport_x"].append(nl * 2.0 * plan.integrate(pv * u * ux))
        series["linear"].append(-p.alpha * plan.integrate(u * pv))
        series["beta"].append(p.beta * plan.integrate(pv * tux) if traj.split.use_beta else 0.0)
        if spec.is_zero:
            kf = 0.0
        elif spec.kind is ForcingKind.GRID_SERIES:
            kf = _series_forcing_inner(spec, t, phi, L)
        else:
            kf = plan.integrate(_forcing_at(spec, t, X, Y, L) * pv)
        series["forcing"].append(-kf)
        ts.append(t)

    def boundary(i):
        fr = traj.frames[i]
        c = growth_factor(p.gamma, fr.t) * fr.coeffs
        return plan.integrate(plan.evaluate(c, "S", "S") * phi.expr(fr.t, X, Y, L))

    return _assemble(phi.id, t1, t2, boundary(idx[0]), boundary(idx[-1]), np.asarray(ts), series)


# -- vertical velocity -------------------------------------------------------------------

def reconstruct_v(f: SpectralField, grid: GridSpec | None = None,
                  method: TMethod | str = TMethod.SPECTRAL) -> GridField:
    """``v = -T u_x`` on the grid, cosine parity in both directions."""
    if grid is None:
        grid = build_grid(f.domain, f.nx, f.ny, 2.0)
    dx, _ = derivative_fields(f, grid)
    return -apply_T(dx, method)


@dataclass(frozen=True)
class DivergenceReport:
    relative_divergence: float
    boundary_max: float
    boundary_scale: float


def divergence_check(f: SpectralField, grid: GridSpec | None = None,
                     method: TMethod | str = TMethod.SPECTRAL) -> DivergenceReport:
    """Relative ``||u_x + v_y||`` and ``max |v(., 0)|`` (with ``dy max |u_x|`` as scale)."""
    if grid is None:
        grid = build_grid(f.domain, f.nx, f.ny, 2.0)
    dx, _ = derivative_fields(f, grid)
    v = -apply_T(dx, method)
    div = dx + diff_y(v)
    nx_ = l2_norm(dx)
    rel = l2_norm(div) / nx_ if nx_ > 0 else l2_norm(div)
    bmax = float(np.max(np.abs(v.values[:, 0])))
    bscale = grid.hy * float(np.max(np.abs(dx.values))) if nx_ > 0 else 0.0
    return DivergenceReport(float(rel), bmax, bscale)


# -- a priori monitor ---------------------------------------------------------------------

@dataclass
class AprioriReport:
    times: np.ndarray
    h1_integral: np.ndarray
    denominator: np.ndarray
    ratio: np.ndarray

    @property
    def constant(self) -> float:
        return float(self.ratio.max()) if len(self.ratio) else 0.0


def apriori_monitor(traj: Trajectory, eps: float = 1e-14) -> AprioriReport:
    """Running ``int_0^t ||w||_{H^1}^2 / (E(u0) + k(t) + eps)``.

    The numerator is integrated mode by mode between frames with the
    exponentially fitted rule, which is exact for linear decay.
    """
    lam = eigenvalues(traj.domain, traj.split.nx, traj.split.ny)
    wts = lam + 1.0
    e0, _ = _initial_energies(traj)
    ts = traj.times
    acc = [0.0]
    for a, b in zip(traj.frames[:-1], traj.frames[1:]):
        inc = float(np.sum(wts * log_mean_integral(a.coeffs ** 2, b.coeffs ** 2, b.t - a.t)))
        acc.append(acc[-1] + inc)
    acc = np.asarray(acc)
    spec = traj.split.forcing
    if spec.is_zero:
        k = np.zeros_like(ts)
    else:
        k = np.array([forcing_budget(spec, t, traj.domain, mollified=bool(spec.mollification_index)) for t in ts])
    den = e0 + k + eps
    return AprioriReport(ts, acc, den, acc / den)
