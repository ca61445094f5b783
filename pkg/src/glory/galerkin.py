"""Right-hand side of the Galerkin system for the rescaled unknown ``w``.

With ``w = u exp(-gamma t)`` the coordinates ``F`` of ``w`` in the sine
eigenbasis obey

    F' = (alpha - gamma - mu lam) F  -  beta C F  +  e^{gamma t} P[-w w_x + w_y T w_x]
         + e^{-gamma t} <phi, K_n(t)>

where ``C`` holds the inner products ``<phi_l, T d/dx phi_k>`` and ``P`` is
the L2 projection onto the resolved modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import (
    GridField,
    QuadraturePlan,
    SpectralField,
    analyze,
    derivative_fields,
    eigenvalues,
    rank_mask,
    synthesize,
)
from .domain import GridSpec, Parameters, RectDomain, build_grid
from .errors import EvaluationError, GloryOverflow, NotIntegrable
from .expr import ClosedForm
from .forcing import ForcingProjector, ForcingSpec
from .nonlocal_op import apply_Tdx

__all__ = [
    "BetaCoupling",
    "beta_coupling_matrix",
    "project_initial_data",
    "strip_energy",
    "nonlinear_term",
    "growth_factor",
    "RhsSplit",
    "build_rhs",
    "rhs",
]

# exp overflows just above this
MAX_EXPONENT = 709.0


def growth_factor(gamma: float, t: float, sign: int = 1) -> float:
    """``exp(sign * gamma * t)``, raising :class:`GloryOverflow` past float64 range."""
    z = sign * gamma * t
    if z > MAX_EXPONENT:
        raise GloryOverflow(f"exp({z:.1f}) is not representable")
    return float(np.exp(z))


# -- beta coupling --------------------------------------------------------------

@dataclass(frozen=True)
class BetaCoupling:
    """Kronecker factors of ``C[(j,m), (j',m')] = ax[j, j'] * ay[m, m']``."""

    ax: np.ndarray
    ay: np.ndarray

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return self.ax @ coeffs @ self.ay.T

    def dense(self) -> np.ndarray:
        """Matrix acting on ``coeffs.ravel()`` (row-major ``(j, m)``)."""
        return np.kron(self.ax, self.ay)

    def nnz(self) -> int:
        return int(np.count_nonzero(self.ax) * np.count_nonzero(self.ay))


def _x_factor(nx: int, L: float) -> np.ndarray:
    j = np.arange(1, nx + 1, dtype=float)[:, None]
    jp = np.arange(1, nx + 1, dtype=float)[None, :]
    odd = ((j + jp) % 2) == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(odd, 2.0 * j * jp / (L * (j * j - jp * jp)), 0.0)


def _y_factor(ny: int) -> np.ndarray:
    m = np.arange(1, ny + 1, dtype=float)[:, None]
    mp = np.arange(1, ny + 1, dtype=float)[None, :]
    odd = ((m + mp) % 2) == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        sc = np.where(odd, 2.0 * m / (np.pi * (m * m - mp * mp)), 0.0)
    s = (1.0 - (-1.0) ** m) / (m * np.pi)
    return (2.0 / (mp * np.pi)) * (s - sc)


def beta_coupling_matrix(domain: RectDomain, nx: int, ny: int) -> BetaCoupling:
    """Exact Galerkin inner products ``<phi_jm, T d/dx phi_j'm'>``.

    The x factor vanishes unless ``j + j'`` is odd (in particular on the
    diagonal), so the full matrix is half empty.
    """
    return BetaCoupling(_x_factor(nx, domain.half_width), _y_factor(ny))


# -- initial data -------------------------------------------------------------------

def project_initial_data(u0, domain: RectDomain, nx: int, ny: int, *,
                         plan: QuadraturePlan | None = None) -> SpectralField:
    """Coordinates ``<u0, phi_k>`` of the restriction of ``u0`` to the rectangle.

    ``u0`` may be a closed form (text or :class:`ClosedForm`, evaluated at
    ``t = 0``), a callable ``u0(x, y)``, a :class:`GridField` or a
    :class:`SpectralField` (truncated or zero padded).
    """
    if isinstance(u0, SpectralField):
        if u0.domain != domain:
            raise ValueError("initial coefficients live on another domain")
        c = np.zeros((nx, ny))
        a, b = min(nx, u0.nx), min(ny, u0.ny)
        c[:a, :b] = u0.coeffs[:a, :b]
        if not np.all(np.isfinite(c)):
            raise NotIntegrable("initial coefficients are not finite")
        return SpectralField(domain, c)
    if isinstance(u0, GridField):
        if not np.all(np.isfinite(u0.values)):
            raise NotIntegrable("initial samples are not finite")
        return analyze(u0, nx, ny)
    if plan is None:
        plan = QuadraturePlan(domain, nx, ny)
    X, Y = plan.mesh()
    try:
        vals = _sample(u0, X, Y, domain.half_width)
    except EvaluationError as exc:
        raise NotIntegrable(str(exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise NotIntegrable("initial data evaluate to non-finite values")
    return SpectralField(domain, plan.project(vals))


def _sample(u0, X, Y, L):
    if isinstance(u0, (str, ClosedForm)):
        return ClosedForm(u0)(0.0, X, Y, L)
    if callable(u0):
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(u0(X, Y), dtype=float), X.shape)
    raise TypeError(f"unsupported initial data {type(u0).__name__}")


def strip_energy(u0, domain: RectDomain | None = None, n_y: int = 64) -> float:
    """``E(u0) = 1/2 int u0^2`` over ``R x (0, 1)``.

    Closed forms that refer to ``L`` are tied to a rectangle; for those (and
    whenever ``domain`` is given) the integral is taken over that rectangle.
    """
    import scipy.integrate as sint

    sy, wy = np.polynomial.legendre.leggauss(n_y)
    y = 0.5 * (sy + 1.0)
    wy = 0.5 * wy
    L = domain.half_width if domain is not None else 1.0

    if isinstance(u0, (str, ClosedForm)):
        cf = ClosedForm(u0)
        fn = lambda x: cf(0.0, x, y, L)
        if domain is None and "L" in {s.name for s in cf.expr.free_symbols}:
            raise ValueError("data depending on L need a domain")
    else:
        fn = lambda x: np.asarray(u0(np.full_like(y, x), y), dtype=float)

    def col(x):
        v = fn(x)
        return float(np.dot(wy, v * v))

    if domain is None:
        val, _ = sint.quad(col, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    else:
        val, _ = sint.quad(col, -L, L, epsabs=1e-14, epsrel=1e-12, limit=400)
    return 0.5 * val


# -- nonlinearity ------------------------------------------------------------------------

def _quadratic(f: SpectralField, grid: GridSpec, nx: int, ny: int) -> np.ndarray:
    w = synthesize(f, grid)
    dx, dy = derivative_fields(f, grid)
    tdx = apply_Tdx(f, grid)
    prod = dy * tdx - w * dx
    return analyze(prod, nx, ny).coeffs


def nonlinear_term(t: float, f: SpectralField, params: Parameters,
                   grid: GridSpec | None = None) -> SpectralField:
    """Projection of ``e^{gamma t} (-w w_x + w_y T w_x)`` onto the resolved modes.

    With the default padding of two every product is integrated exactly, so
    the only error is rounding.
    """
    if t < 0:
        raise ValueError("nonlinear term needs t >= 0")
    if grid is None:
        grid = build_grid(f.domain, f.nx, f.ny, 2.0)
    scale = growth_factor(params.gamma, t)
    if not np.any(f.coeffs):
        return SpectralField(f.domain, np.zeros_like(f.coeffs))
    with np.errstate(over="raise", invalid="raise"):
        try:
            c = scale * _quadratic(f, grid, f.nx, f.ny)
        except FloatingPointError as exc:
            raise GloryOverflow(str(exc)) from exc
    return SpectralField(f.domain, c)


# -- assembly ----------------------------------------------------------------------------

@dataclass
class RhsSplit:
    """The pieces of ``Psi(t, F)``; see :func:`build_rhs`."""

    params: Parameters
    domain: RectDomain
    grid: GridSpec
    linear_diag: np.ndarray
    coupling: BetaCoupling
    forcing: ForcingSpec
    projector: ForcingProjector
    mask: np.ndarray | None = None
    nonlinear: bool = True
    use_beta: bool = True
    lam: np.ndarray = field(default=None, repr=False)

    @property
    def nx(self) -> int:
        return self.linear_diag.shape[0]

    @property
    def ny(self) -> int:
        return self.linear_diag.shape[1]

    def restrict(self, c: np.ndarray) -> np.ndarray:
        return c if self.mask is None else np.where(self.mask, c, 0.0)

    def linear(self, c: np.ndarray) -> np.ndarray:
        return self.linear_diag * c

    def beta_term(self, c: np.ndarray) -> np.ndarray:
        if not self.use_beta or self.params.beta == 0.0:
            return np.zeros_like(c)
        return -self.params.beta * self.restrict(self.coupling.apply(c))

    def nonlinear_part(self, t: float, c: np.ndarray) -> np.ndarray:
        if not self.nonlinear:
            return np.zeros_like(c)
        f = SpectralField(self.domain, c)
        return self.restrict(nonlinear_term(t, f, self.params, self.grid).coeffs)

    def forcing_coeffs(self, t: float) -> np.ndarray:
        if self.forcing.is_zero:
            return np.zeros((self.nx, self.ny))
        coeffs, _ = self.projector(t)
        return self.restrict(growth_factor(self.params.gamma, t, -1) * coeffs)

    def forcing_norm_sq(self, t: float) -> float:
        """``int K_n(t)^2`` over the rectangle (unweighted)."""
        if self.forcing.is_zero:
            return 0.0
        return self.projector(t)[1]

    def explicit(self, t: float, c: np.ndarray, include_beta: bool = True) -> np.ndarray:
        """Everything except the diagonal linear part."""
        out = self.nonlinear_part(t, c) + self.forcing_coeffs(t)
        if include_beta:
            out = out + self.beta_term(c)
        return out

    def __call__(self, t: float, c: np.ndarray) -> np.ndarray:
        return self.linear(c) + self.explicit(t, c)

    def dissipation_weights(self) -> np.ndarray:
        """Per-mode weights of ``int mu |grad w|^2 + w^2``."""
        return self.params.mu * self.lam + 1.0


def build_rhs(params: Parameters, domain: RectDomain, nx: int, ny: int,
              forcing: ForcingSpec | None = None, *, pad: float = 2.0,
              n_modes: int | None = None, nonlinear: bool = True, use_beta: bool = True,
              plan: QuadraturePlan | None = None) -> RhsSplit:
    """Assemble the right-hand side on ``nx x ny`` modes.

    ``n_modes`` switches from the rectangular cut to the span of the
    ``n_modes`` lowest eigenvalues inside the ``nx x ny`` block.
    """
    forcing = forcing or ForcingSpec.zero()
    grid = build_grid(domain, nx, ny, pad)
    lam = eigenvalues(domain, nx, ny)
    diag = params.alpha - params.gamma - params.mu * lam
    mask = rank_mask(domain, nx, ny, n_modes) if n_modes is not None else None
    projector = ForcingProjector(forcing, domain, nx, ny, plan=plan)
    return RhsSplit(params, domain, grid, diag, beta_coupling_matrix(domain, nx, ny), forcing,
                    projector, mask, nonlinear, use_beta, lam)


def rhs(t: float, xi: SpectralField, forcing: ForcingSpec, params: Parameters,
        split: RhsSplit | None = None) -> SpectralField:
    """``Psi(t, xi)`` as a field; builds a one-off split when none is given."""
    if split is None:
        split = build_rhs(params, xi.domain, xi.nx, xi.ny, forcing)
    return SpectralField(xi.domain, split(t, xi.coeffs))
