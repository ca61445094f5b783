"""Forcing terms: evaluation, zero extension, mollification and budgets.

The forcing is zero-extended outside ``[0, inf) x strip`` before
mollification, so the regularised field ramps up over ``0 <= t < 1/n`` and is
smeared slightly across ``y = 0`` and ``y = 1``.  The smearing is kept as is;
it is what the convolution of the zero extension produces.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.integrate as sint
import scipy.ndimage as ndi
import sympy as sp

from .basis import GridField, QuadraturePlan, analyze
from .domain import GridSpec, Parameters, RectDomain
from .errors import EvaluationError, InsufficientSamples, UnsupportedExpression
from .expr import T_SYM, X_SYM, Y_SYM, ClosedForm

__all__ = [
    "ForcingKind",
    "ForcingSpec",
    "GridSeries",
    "MollifierConfig",
    "kernel_rule",
    "kernel_constant",
    "evaluate_K",
    "mollify",
    "forcing_norm_sq",
    "forcing_budget",
    "manufactured_forcing",
    "ForcingProjector",
]


class ForcingKind(str, enum.Enum):
    ZERO = "zero"
    CLOSED_FORM = "closed_form"
    GRID_SERIES = "grid_series"


@dataclass(frozen=True)
class GridSeries:
    """Time-stamped samples at the interior nodes of ``grid``."""

    grid: GridSpec
    times: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        frames = np.asarray(self.frames, dtype=float)
        if times.ndim != 1 or len(times) < 1:
            raise ValueError("need at least one time stamp")
        if np.any(np.diff(times) <= 0):
            raise ValueError("grid series time stamps must be strictly increasing")
        if frames.shape != (len(times),) + self.grid.shape:
            raise ValueError(f"frames shape {frames.shape} does not match {len(times)} x {self.grid.shape}")
        if not np.all(np.isfinite(frames)):
            raise EvaluationError("grid series contains non-finite samples")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "frames", frames)

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation in time; zero outside the stored window."""
        ts = self.times
        if len(ts) == 1:
            return self.frames[0].copy() if t == ts[0] else np.zeros(self.grid.shape)
        if t < ts[0] or t > ts[-1]:
            return np.zeros(self.grid.shape)
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        s = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - s) * self.frames[i] + s * self.frames[i + 1]

    @classmethod
    def from_trace(cls, path, grid: GridSpec | None = None) -> "GridSeries":
        """Read a trace file and synthesise its frames as forcing samples."""
        from .basis import SpectralField, synthesize
        from .domain import build_grid
        from .trace import read_trace

        tr = read_trace(path)
        h = tr.header
        if grid is None:
            grid = build_grid(RectDomain(h["level"]), h["nx"], h["ny"], h.get("pad", 2.0))
        frames = [synthesize(SpectralField(grid.domain, c), grid).values for c in tr.coeffs]
        return cls(grid, np.asarray(tr.times), np.asarray(frames))


@dataclass(frozen=True)
class ForcingSpec:
    kind: ForcingKind = ForcingKind.ZERO
    expr: ClosedForm | None = None
    series: GridSeries | None = None
    mollification_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ForcingKind(self.kind))
        n = self.mollification_index
        if n is not None and (int(n) != n or n < 1):
            raise ValueError(f"mollification index must be an integer >= 1, got {n!r}")
        if self.kind is ForcingKind.CLOSED_FORM and self.expr is None:
            raise ValueError("closed-form forcing needs an expression")
        if self.kind is ForcingKind.GRID_SERIES and self.series is None:
            raise ValueError("grid-series forcing needs a series")

    @classmethod
    def zero(cls):
        return cls(ForcingKind.ZERO)

    @classmethod
    def closed_form(cls, expr, mollification_index=None):
        return cls(ForcingKind.CLOSED_FORM, expr=ClosedForm(expr), mollification_index=mollification_index)

    @classmethod
    def grid_series(cls, series, mollification_index=None):
        return cls(ForcingKind.GRID_SERIES, series=series, mollification_index=mollification_index)

    @property
    def is_zero(self) -> bool:
        return self.kind is ForcingKind.ZERO or (self.expr is not None and self.expr.is_zero)

    @property
    def epsilon(self) -> float | None:
        n = self.mollification_index
        return None if n is None else 1.0 / n

    def time_independent_after(self) -> float | None:
        """Time after which the (possibly mollified) forcing stops changing."""
        if self.kind is ForcingKind.ZERO:
            return 0.0
        if self.kind is ForcingKind.CLOSED_FORM and not self.expr.time_dependent:
            return self.epsilon or 0.0
        return None

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.expr is not None:
            d["expr"] = self.expr.text
        if self.mollification_index is not None:
            d["mollification_index"] = self.mollification_index
        return d


# -- mollifier ----------------------------------------------------------------

@dataclass(frozen=True)
class MollifierConfig:
    """Standard bump ``c exp(1/(|z|^2 - 1))`` on the unit ball of R^3, scaled to ``epsilon``."""

    epsilon: float
    n_radial: int = 12
    n_polar: int = 6
    n_azimuth: int = 8

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("mollifier width must be positive")


def _bump(r2):
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 / (r2[inside] - 1.0))
    return out


@lru_cache(maxsize=1)
def kernel_constant() -> float:
    """Normalisation making the 3-D bump a unit-mass kernel."""
    val, _ = sint.quad(lambda r: r * r * np.exp(1.0 / (r * r - 1.0)) if r < 1 else 0.0, 0.0, 1.0,
                       epsabs=1e-15, epsrel=1e-14, limit=200)
    return 1.0 / (4.0 * np.pi * val)


def kernel_density(s, a, b) -> np.ndarray:
    """Unit-width kernel ``rho(s, a, b)`` (time, x, y offsets)."""
    return kernel_constant() * _bump(np.asarray(s) ** 2 + np.asarray(a) ** 2 + np.asarray(b) ** 2)


@lru_cache(maxsize=16)
def kernel_rule(n_radial=12, n_polar=6, n_azimuth=8):
    """Symmetric product rule on the unit ball for the kernel.

    Returns offsets ``(s, a, b)`` and weights summing to one.  The rule is
    invariant under point reflection, so first moments vanish exactly.
    """
    sr, wr = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * (sr + 1.0)
    wr = 0.5 * wr * r * r * _bump(r * r)
    ct, wt = np.polynomial.legendre.leggauss(n_polar)
    ph = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    R, C, P = np.meshgrid(r, ct, ph, indexing="ij")
    W = wr[:, None, None] * wt[None, :, None] * np.full(n_azimuth, 2.0 * np.pi / n_azimuth)[None, None, :]
    st = np.sqrt(1.0 - C * C)
    pts = np.stack([R * C, R * st * np.cos(P), R * st * np.sin(P)], axis=-1).reshape(-1, 3)
    w = W.ravel()
    w = w / w.sum()
    return pts, w


# -- evaluation ---------------------------------------------------------------

def _closed_tilde(expr: ClosedForm, t, X, Y, L):
    """Zero extension: K for t >= 0 and 0 < y < 1, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    if np.ndim(t) == 0 and t < 0:
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)))
    vals = expr(t, X, Y, L)
    inside = (np.asarray(Y) > 0) & (np.asarray(Y) < 1) & (t >= 0)
    return np.where(inside, vals, 0.0)


def _check_t(t):
    if t < 0:
        raise ValueError(f"forcing evaluated at negative time {t}")


def evaluate_K(spec: ForcingSpec, t: float, grid: GridSpec) -> GridField:
    """Samples of ``K(t, .)`` at the interior collocation nodes."""
    _check_t(t)
    if spec.kind is ForcingKind.ZERO:
        v = np.zeros(grid.shape)
    elif spec.kind is ForcingKind.CLOSED_FORM:
        X, Y = np.meshgrid(grid.x_nodes, grid.y_nodes, indexing="ij")
        v = spec.expr(t, X, Y, grid.domain.half_width)
    else:
        _same_series_grid(spec.series, grid)
        v = spec.series.at(t)
    return GridField(grid, v, ("none", "none"))


def _same_series_grid(series: GridSeries, grid: GridSpec):
    if series.grid.shape != grid.shape or series.grid.domain != grid.domain:
        raise ValueError("grid series was sampled on a different grid")


def mollified_points(spec: ForcingSpec, n: int, t: float, X, Y, L, rule=None) -> np.ndarray:
    """``(K~ * rho_{1/n})(t, X, Y)`` for a closed-form forcing at arbitrary points."""
    if spec.kind is ForcingKind.ZERO:
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)))
    if spec.kind is not ForcingKind.CLOSED_FORM:
        raise ValueError("point evaluation of the mollified field needs a closed form")
    eps = 1.0 / n
    pts, w = rule if rule is not None else kernel_rule()
    out = np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)))
    for (s, a, b), wi in zip(pts, w):
        ts = t - eps * s
        if ts < 0:
            continue
        out += wi * _closed_tilde(spec.expr, ts, X - eps * a, Y - eps * b, L)
    return out


def _series_kernel(series: GridSeries, eps: float, n_time: int = 8):
    g = series.grid
    hx, hy = g.hx, g.hy
    gaps = np.diff(series.times)
    if hx > eps or hy > eps or (len(gaps) and gaps.max() > eps):
        raise InsufficientSamples(
            f"grid series spacing (hx={hx:.3g}, hy={hy:.3g}, dt={gaps.max() if len(gaps) else 0:.3g}) "
            f"is coarser than the mollifier width {eps:.3g}"
        )
    rx = int(np.floor(eps / hx))
    ry = int(np.floor(eps / hy))
    a = np.arange(-rx, rx + 1) * hx
    b = np.arange(-ry, ry + 1) * hy
    st, wt = np.polynomial.legendre.leggauss(n_time)
    s = eps * st
    kern = []
    for sk, wk in zip(s, wt):
        A, B = np.meshgrid(a, b, indexing="ij")
        kern.append(wk * kernel_density(sk / eps, A / eps, B / eps))
    kern = np.asarray(kern)
    total = kern.sum()
    if total <= 0:
        raise InsufficientSamples("mollifier support contains no lattice points")
    return s, kern / total


def mollify(spec: ForcingSpec, n: int, t: float, grid: GridSpec) -> GridField:
    """Samples of ``K_n = K~ * rho_{1/n}`` at the interior nodes."""
    _check_t(t)
    if n < 1:
        raise ValueError("mollification index must be >= 1")
    if spec.kind is ForcingKind.ZERO:
        return GridField(grid, np.zeros(grid.shape), ("none", "none"))
    if spec.kind is ForcingKind.CLOSED_FORM:
        X, Y = np.meshgrid(grid.x_nodes, grid.y_nodes, indexing="ij")
        v = mollified_points(spec, n, t, X, Y, grid.domain.half_width)
        return GridField(grid, v, ("none", "none"))
    series = spec.series
    _same_series_grid(series, grid)
    s, kern = _series_kernel(series, 1.0 / n)
    v = np.zeros(grid.shape)
    for sk, kk in zip(s, kern):
        ts = t - sk
        if ts < 0:
            continue
        v += ndi.correlate(series.at(ts), kk, mode="constant", cval=0.0)
    return GridField(grid, v, ("none", "none"))


# -- norms and budgets ----------------------------------------------------------

def _space_sq(spec, t, domain, mollified, plan: QuadraturePlan | None):
    if spec.kind is ForcingKind.ZERO:
        return 0.0
    if spec.kind is ForcingKind.GRID_SERIES:
        g = spec.series.grid
        if mollified and spec.mollification_index:
            v = mollify(spec, spec.mollification_index, t, g).values
        else:
            v = spec.series.at(t) if t >= 0 else np.zeros(g.shape)
        return float(np.sum(v * v) * g.hx * g.hy)
    if plan is None:
        plan = QuadraturePlan(domain, 1, 1, 96, 48)
    X, Y = plan.mesh()
    L = domain.half_width
    if mollified and spec.mollification_index:
        v = mollified_points(spec, spec.mollification_index, t, X, Y, L)
    else:
        v = _closed_tilde(spec.expr, t, X, Y, L)
    return plan.integrate(v * v)


def _time_breaks(spec, t0, t1, mollified):
    pts = {t0, t1}
    if spec.kind is ForcingKind.GRID_SERIES:
        pts.update(float(x) for x in spec.series.times if t0 < x < t1)
    eps = spec.epsilon if mollified else None
    if eps:
        pts.update(x for x in (eps, 2 * eps) if t0 < x < t1)
        if spec.kind is ForcingKind.GRID_SERIES:
            for tt in spec.series.times:
                pts.update(x for x in (tt - eps, tt + eps) if t0 < x < t1)
    pts = sorted(pts)
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(np.ceil((b - a) / 0.25)))
        out.extend(np.linspace(a, b, n + 1)[1:])
    return np.asarray(out)


def forcing_norm_sq(spec: ForcingSpec, t0: float, t1: float, domain: RectDomain, *,
                    mollified: bool = False, plan: QuadraturePlan | None = None,
                    points_per_panel: int = 8) -> float:
    """``int_{t0}^{t1} int_{Omega^N} K^2 dz dt`` by panelled Gauss-Legendre in time."""
    if spec.is_zero or t1 <= t0:
        return 0.0
    s, w = np.polynomial.legendre.leggauss(points_per_panel)
    brk = _time_breaks(spec, t0, t1, mollified)
    total = 0.0
    for a, b in zip(brk[:-1], brk[1:]):
        for sk, wk in zip(s, w):
            tau = 0.5 * (a + b) + 0.5 * (b - a) * sk
            total += 0.5 * (b - a) * wk * _space_sq(spec, tau, domain, mollified, plan)
    return total


def forcing_budget(spec: ForcingSpec, t: float, domain: RectDomain, **kw) -> float:
    """``k(t)``: squared space-time norm of the forcing over ``(0, t + 1)``.

    The spatial integral runs over the computational rectangle; data beyond
    it never enter a run.
    """
    if t < 0:
        raise ValueError("budget needs t >= 0")
    return forcing_norm_sq(spec, 0.0, t + 1.0, domain, **kw)


# -- manufactured solutions -------------------------------------------------------

def _t_of(expr: sp.Expr) -> sp.Expr:
    s = sp.Symbol("s_", real=True)
    res = sp.integrate(expr.subs(Y_SYM, s), (s, 0, Y_SYM))
    if res.has(sp.Integral):
        raise UnsupportedExpression(f"no closed form for the vertical antiderivative of {expr}")
    return res


def manufactured_forcing(u_star, params: Parameters, nonlinear: bool = True,
                         domain: RectDomain | None = None) -> ForcingSpec:
    """Forcing that makes ``u_star`` an exact solution of the u-equation.

    ``K = u_t - mu Lap u + u u_x - u_y T u_x - alpha u + beta T u_x``.
    With ``nonlinear=False`` the two quadratic terms are left out.
    """
    u = ClosedForm(u_star).expr
    bad = u.atoms(sp.Pow)
    if any(p.exp.is_number and not p.exp.is_integer and p.base.free_symbols for p in bad):
        raise UnsupportedExpression(f"{u} is not smooth enough for manufactured forcing")
    ux = sp.diff(u, X_SYM)
    Tux = _t_of(ux)
    K = (sp.diff(u, T_SYM) - params.mu * (sp.diff(u, X_SYM, 2) + sp.diff(u, Y_SYM, 2))
         - params.alpha * u + params.beta * Tux)
    if nonlinear:
        K = K + u * ux - sp.diff(u, Y_SYM) * Tux
    if domain is not None:
        _check_dirichlet(ClosedForm(u), domain)
    return ForcingSpec.closed_form(ClosedForm(sp.expand(K)))


def _check_dirichlet(u: ClosedForm, domain: RectDomain, tol: float = 1e-10):
    L = domain.half_width
    s = np.linspace(0.0, 1.0, 17)
    xs = np.linspace(-L, L, 17)
    for t in (0.0, 0.5, 1.0):
        edge = np.concatenate([u(t, xs, 0.0, L), u(t, xs, 1.0, L), u(t, -L, s, L), u(t, L, s, L)])
        if np.max(np.abs(edge)) > tol:
            raise UnsupportedExpression(f"{u.text} does not vanish on the boundary")


# -- projection onto the Galerkin space -------------------------------------------

class ForcingProjector:
    """Galerkin coordinates ``<phi_jm, K_n(t)>`` and ``int K_n(t)^2``.

    Closed forms are projected with a Gauss-Legendre rule on the rectangle;
    grid series through the sine-transform quadrature of their grid.
    Time-independent results are cached.
    """

    def __init__(self, spec: ForcingSpec, domain: RectDomain, nx: int, ny: int,
                 plan: QuadraturePlan | None = None):
        self.spec = spec
        self.domain = domain
        self.nx, self.ny = nx, ny
        self._plan = plan
        self._steady_from = spec.time_independent_after()
        self._steady = None
        self._last = {}
        if spec.kind is ForcingKind.GRID_SERIES:
            sg = spec.series.grid
            if sg.domain != domain:
                raise ValueError("grid series lives on another domain")
            if sg.px < nx or sg.py < ny:
                raise ValueError("grid series grid cannot resolve the requested modes")

    @property
    def plan(self) -> QuadraturePlan:
        if self._plan is None:
            self._plan = QuadraturePlan(self.domain, self.nx, self.ny)
        return self._plan

    def values_at_plan(self, t: float) -> np.ndarray:
        """Samples of the forcing used by the scheme at the plan nodes."""
        spec = self.spec
        X, Y = self.plan.mesh()
        L = self.domain.half_width
        if spec.mollification_index:
            return mollified_points(spec, spec.mollification_index, t, X, Y, L)
        return _closed_tilde(spec.expr, t, X, Y, L)

    def _compute(self, t: float):
        spec = self.spec
        if spec.is_zero:
            return np.zeros((self.nx, self.ny)), 0.0
        if spec.kind is ForcingKind.CLOSED_FORM:
            v = self.values_at_plan(t)
            return self.plan.project(v), self.plan.integrate(v * v)
        g = spec.series.grid
        if spec.mollification_index:
            field = mollify(spec, spec.mollification_index, t, g)
        else:
            field = GridField(g, spec.series.at(t), ("none", "none"))
        coeffs = analyze(field, self.nx, self.ny).coeffs
        return coeffs, float(np.sum(field.values ** 2) * g.hx * g.hy)

    def __call__(self, t: float):
        if self._steady_from is not None and t >= self._steady_from:
            if self._steady is None:
                self._steady = self._compute(max(t, self._steady_from))
            return self._steady
        hit = self._last.get(t)
        if hit is None:
            hit = self._compute(t)
            if len(self._last) > 16:
                self._last.clear()
            self._last[t] = hit
        return hit
