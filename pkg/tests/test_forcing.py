import math

import numpy as np
import pytest
import scipy.integrate as sint

from glory.basis import QuadraturePlan
from glory.domain import Parameters, RectDomain, build_grid
from glory.errors import EvaluationError, InsufficientSamples, UnsupportedExpression
from glory.expr import ClosedForm
from glory.forcing import (
    ForcingProjector,
    ForcingSpec,
    GridSeries,
    MollifierConfig,
    evaluate_K,
    forcing_budget,
    forcing_norm_sq,
    kernel_constant,
    kernel_density,
    kernel_rule,
    manufactured_forcing,
    mollified_points,
    mollify,
)

SMOOTH = "sin(pi*y)*exp(-x^2)"


def test_kernel_unit_mass():
    # independent route: radial integral of the isotropic kernel
    val, _ = sint.quad(lambda r: 4 * np.pi * r * r * kernel_density(r, 0.0, 0.0), 0, 1, epsabs=1e-14, limit=200)
    assert abs(val - 1.0) < 1e-10
    # frozen from an adaptive-quadrature evaluation of 1 / int_{|z|<1} exp(1/(|z|^2-1))
    assert kernel_constant() == pytest.approx(2.2671167396083267, rel=1e-12)


def test_kernel_rule_moments():
    pts, w = kernel_rule()
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(w > 0)
    assert np.all(np.einsum("ij,ij->i", pts, pts) < 1.0)
    assert np.abs(w @ pts).max() < 1e-15
    # second moment against the exact radial integral
    ref, _ = sint.quad(lambda r: 4 * np.pi * r ** 4 * kernel_density(r, 0.0, 0.0), 0, 1, epsabs=1e-15)
    assert w @ pts[:, 0] ** 2 == pytest.approx(ref / 3, rel=1e-4)


def test_mollifier_config_validates():
    with pytest.raises(ValueError):
        MollifierConfig(0.0)


def test_zero_forcing(dom1):
    g = build_grid(dom1, 8, 8)
    z = ForcingSpec.zero()
    assert not evaluate_K(z, 3.0, g).values.any()
    for n in (1, 4, 50):
        assert not mollify(z, n, 1.0, g).values.any()
    assert forcing_budget(z, 5.0, dom1) == 0.0


def test_time_constant_closed_form(dom1):
    g = build_grid(dom1, 8, 8)
    spec = ForcingSpec.closed_form(SMOOTH)
    a = evaluate_K(spec, 0.0, g).values
    b = evaluate_K(spec, 7.3, g).values
    assert np.array_equal(a, b)
    X, Y = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
    assert np.allclose(a, np.sin(np.pi * Y) * np.exp(-X ** 2), atol=1e-15)


def test_negative_time_rejected(dom1):
    with pytest.raises(ValueError):
        evaluate_K(ForcingSpec.closed_form(SMOOTH), -0.1, build_grid(dom1, 4, 4))


def test_non_finite_closed_form(dom1):
    with pytest.raises(EvaluationError):
        evaluate_K(ForcingSpec.closed_form("1/(x*0)"), 0.0, build_grid(dom1, 4, 4))


def test_grid_series_interpolation(dom1, rng):
    g = build_grid(dom1, 4, 4)
    frames = rng.standard_normal((2,) + g.shape)
    spec = ForcingSpec.grid_series(GridSeries(g, [0.0, 1.0], frames))
    assert np.allclose(evaluate_K(spec, 0.5, g).values, frames.mean(axis=0))
    assert np.allclose(evaluate_K(spec, 1.0, g).values, frames[1])
    # zero extension outside the stored window
    assert not evaluate_K(spec, 1.5, g).values.any()


def test_grid_series_validation(dom1):
    g = build_grid(dom1, 4, 4)
    with pytest.raises(ValueError):
        GridSeries(g, [0.0, 0.0], np.zeros((2,) + g.shape))
    with pytest.raises(ValueError):
        GridSeries(g, [0.0], np.zeros((1, 3, 3)))


def test_mollification_index_validated():
    with pytest.raises(ValueError):
        ForcingSpec.closed_form(SMOOTH, 0)
    with pytest.raises(ValueError):
        ForcingSpec.closed_form(SMOOTH, 2.5)
    assert ForcingSpec.closed_form(SMOOTH, 4).epsilon == 0.25


def test_mollified_converges_to_forcing():
    spec = ForcingSpec.closed_form("sin(pi*y)*exp(-x^2)")
    t, x, y = 2.0, 0.3, 0.4
    exact = math.sin(math.pi * y) * math.exp(-x * x)
    errs = []
    for n in (4, 8, 16, 32):
        errs.append(abs(mollified_points(spec, n, t, np.array(x), np.array(y), 2.0) - exact))
    errs = np.array(errs, dtype=float)
    assert np.all(np.diff(errs) < 0)
    # smooth interior point: error is O(eps^2), well inside C / n
    assert np.all(errs * np.array([4, 8, 16, 32]) < 1.0)
    assert errs[-1] < 1e-3


def test_mollified_against_fine_convolution():
    # independent tensor Gauss-Legendre convolution in (s, a, b)
    spec = ForcingSpec.closed_form("exp(-t)*cos(x)*sin(pi*y)")
    n, t, x, y = 5, 1.0, 0.2, 0.5
    eps = 1.0 / n
    s, w = np.polynomial.legendre.leggauss(40)
    S, A, B = np.meshgrid(s, s, s, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    rho = kernel_density(S, A, B)
    vals = np.exp(-(t - eps * S)) * np.cos(x - eps * A) * np.sin(np.pi * (y - eps * B))
    ref = float(np.sum(W * rho * vals))
    got = float(mollified_points(spec, n, t, np.array(x), np.array(y), 2.0))
    assert got == pytest.approx(ref, rel=1e-4)


def test_mollified_ramps_up_from_zero():
    spec = ForcingSpec.closed_form("1")
    v0 = float(mollified_points(spec, 4, 0.0, np.array(0.0), np.array(0.5), 2.0))
    v1 = float(mollified_points(spec, 4, 0.5, np.array(0.0), np.array(0.5), 2.0))
    assert v0 == pytest.approx(0.5, abs=1e-12)
    assert v1 == pytest.approx(1.0, abs=1e-12)


def test_series_mollification_needs_resolution(dom1):
    g = build_grid(dom1, 4, 4)
    spec = ForcingSpec.grid_series(GridSeries(g, [0.0, 1.0], np.ones((2,) + g.shape)), 10)
    with pytest.raises(InsufficientSamples):
        mollify(spec, 10, 0.5, g)


def test_budget_unit_mode(dom1):
    # on level 1 the normalising factor sqrt(2/L) is 1
    spec = ForcingSpec.closed_form("sin(pi*(x+L)/(2*L))*sin(pi*y)")
    plan = QuadraturePlan(dom1, 4, 4)
    for t in (0.0, 1.0, 2.5):
        assert forcing_budget(spec, t, dom1, plan=plan) == pytest.approx(t + 1.0, rel=1e-12)
    with pytest.raises(ValueError):
        forcing_budget(spec, -1.0, dom1)


def test_mollification_contracts_budget(dom1):
    spec = ForcingSpec.closed_form("exp(-t)*sin(pi*y)*exp(-x^2)", 4)
    plan = QuadraturePlan(dom1, 16, 16)
    raw = forcing_norm_sq(spec, 0.0, 2.0, dom1, plan=plan)
    mol = forcing_norm_sq(spec, 0.0, 2.0, dom1, mollified=True, plan=plan)
    assert mol <= raw + 1e-8
    diffs = []
    for n in (2, 4, 8):
        s = ForcingSpec.closed_form(spec.expr, n)
        X, Y = plan.mesh()
        tq, wq = np.polynomial.legendre.leggauss(24)
        tq = tq + 1.0
        d = 0.0
        for tk, wk in zip(tq, wq):
            a = mollified_points(s, n, tk, X, Y, 2.0)
            b = spec.expr(tk, X, Y, 2.0)
            d += wk * plan.integrate((a - b) ** 2)
        diffs.append(d)
    assert diffs[0] > diffs[1] > diffs[2]


def test_manufactured_zero(dom1):
    assert manufactured_forcing("0", Parameters(1.0, 0.0, 0.0)).is_zero


def _residual_by_differences(u, K, params, t, x, y, L, h=1e-4):
    """Pointwise residual of the u-equation using only finite differences and quad."""
    f = lambda t, x, y: float(u(t, x, y, L))
    ut = (f(t + h, x, y) - f(t - h, x, y)) / (2 * h)
    ux = (f(t, x + h, y) - f(t, x - h, y)) / (2 * h)
    uy = (f(t, x, y + h) - f(t, x, y - h)) / (2 * h)
    uxx = (f(t, x + h, y) - 2 * f(t, x, y) + f(t, x - h, y)) / h ** 2
    uyy = (f(t, x, y + h) - 2 * f(t, x, y) + f(t, x, y - h)) / h ** 2
    dx = lambda s: (f(t, x + h, s) - f(t, x - h, s)) / (2 * h)
    tux, _ = sint.quad(dx, 0.0, y, epsabs=1e-13)
    uu = f(t, x, y)
    rhs = params.mu * (uxx + uyy) - uu * ux + uy * tux + params.alpha * uu - params.beta * tux
    return (ut - rhs - float(K(t, x, y, L))) / max(1.0, abs(ut))


@pytest.mark.parametrize("params", [Parameters(1.0, 0.0, 0.0), Parameters(0.5, 0.3, 0.7)])
def test_manufactured_residual_at_probes(dom1, rng, params):
    u = ClosedForm("exp(-t)*sin(pi*(x+L)/(2*L))*sin(pi*y)*(1 + x*y)")
    K = manufactured_forcing(u, params, domain=dom1).expr
    for _ in range(6):
        t, x, y = rng.uniform(0.1, 1), rng.uniform(-1.8, 1.8), rng.uniform(0.05, 0.95)
        assert abs(_residual_by_differences(u, K, params, t, x, y, 2.0)) < 1e-6


def test_manufactured_single_mode_closed_form(dom1):
    L = 2.0
    params = Parameters(1.0, 0.0, 0.0)
    text = "exp(-t)*sin(pi*(x+L)/(2*L))*sin(pi*y)"
    K = manufactured_forcing(text, params, domain=dom1).expr
    u = ClosedForm(text)
    lam = (math.pi / (2 * L)) ** 2 + math.pi ** 2
    for x, y, t in [(0.3, 0.2, 0.5), (-1.0, 0.7, 1.0)]:
        uu = float(u(t, x, y, L))
        ux = math.exp(-t) * math.pi / (2 * L) * math.cos(math.pi * (x + L) / (2 * L)) * math.sin(math.pi * y)
        uy = math.exp(-t) * math.sin(math.pi * (x + L) / (2 * L)) * math.pi * math.cos(math.pi * y)
        tux = math.exp(-t) * math.pi / (2 * L) * math.cos(math.pi * (x + L) / (2 * L)) * (1 - math.cos(math.pi * y)) / math.pi
        ref = (-1 + lam) * uu + uu * ux - uy * tux
        assert float(K(t, x, y, L)) == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_manufactured_linear_part(dom1):
    params = Parameters(0.7, 0.2, 0.4)
    u = "exp(-2*t)*sin(pi*(x+L)/(2*L))*sin(2*pi*y)"
    lin = manufactured_forcing(u, params, nonlinear=False).expr
    full = manufactured_forcing(u, params).expr
    X, Y = np.meshgrid(np.linspace(-1.9, 1.9, 7), np.linspace(0.05, 0.95, 5), indexing="ij")
    assert not np.allclose(lin(0.3, X, Y, 2.0), full(0.3, X, Y, 2.0))
    # the linear part is linear in u
    lin2 = manufactured_forcing(f"3*({u})", params, nonlinear=False).expr
    assert np.allclose(lin2(0.3, X, Y, 2.0), 3 * lin(0.3, X, Y, 2.0), rtol=1e-12)


def test_manufactured_rejects_boundary_values(dom1):
    with pytest.raises(UnsupportedExpression):
        manufactured_forcing("exp(-t)*sin(pi*y)", Parameters(1.0, 0.0, 0.0), domain=dom1)


def test_projector_cache_and_values(dom1):
    spec = ForcingSpec.closed_form(SMOOTH)
    proj = ForcingProjector(spec, dom1, 8, 8)
    a = proj(0.0)
    assert proj(5.0) is a
    c, nsq = a
    ref, _ = sint.dblquad(lambda y, x: (math.sin(math.pi * y) * math.exp(-x * x)) ** 2, -2, 2, 0, 1, epsabs=1e-13)
    assert nsq == pytest.approx(ref, rel=1e-10)
    # Bessel: sum of squared coordinates is at most the squared norm
    assert np.sum(c ** 2) <= nsq * (1 + 1e-12)


def test_projector_grid_series_resolution(dom1, rng):
    g = build_grid(dom1, 4, 4, 1)
    spec = ForcingSpec.grid_series(GridSeries(g, [0.0, 1.0], rng.standard_normal((2,) + g.shape)))
    with pytest.raises(ValueError):
        ForcingProjector(spec, dom1, 8, 8)
    c, _ = ForcingProjector(spec, dom1, 4, 4)(0.5)
    assert c.shape == (4, 4)
    with pytest.raises(ValueError):
        ForcingProjector(spec, RectDomain(2), 4, 4)
