"""Dirichlet-Laplacian eigenbasis on the rectangle and the fast transforms.

On ``(-L, L) x (0, 1)`` the eigenfunctions are tensor sine products

    phi_jm(x, y) = sqrt(2/L) sin(j pi X) sin(m pi y),   X = (x + L) / (2L),

with eigenvalue ``(j pi / 2L)**2 + (m pi)**2``.  Coefficient arrays are laid
out as ``coeffs[j - 1, m - 1]``; the eigenvalue-sorted flat rank is available
through :func:`mode_table`.

Grid data carry a parity tag per axis:

``"sin"``
    a sine series in the normalised coordinate, sampled at the interior
    type-I sine nodes (vanishes at both ends);
``"cos"``
    a cosine series, sampled at the interior nodes *and* the two end points
    (type-I cosine nodes), so that it can be transformed exactly;
``"none"``
    arbitrary samples at the interior nodes; transforms reduce to the
    interior trapezoid rule.

Products follow the parity algebra sin*sin = cos, sin*cos = sin,
cos*cos = cos, which keeps every Galerkin projection of quadratic and cubic
terms exact on a grid padded by a factor two.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .domain import GridSpec, RectDomain
from .errors import DomainMismatch

__all__ = [
    "eigenpair",
    "eigenvalues",
    "mode_table",
    "rank_mask",
    "SpectralField",
    "GridField",
    "synthesize",
    "analyze",
    "AnalysisReport",
    "derivative_fields",
    "diff_x",
    "diff_y",
    "integrate",
    "inner",
    "l2_norm",
    "QuadraturePlan",
]

PARITIES = ("sin", "cos", "none")


# -- eigenpairs -------------------------------------------------------------

def eigenpair(domain: RectDomain, j: int, m: int) -> tuple[float, float]:
    """Eigenvalue and L2 normaliser of the mode ``(j, m)``."""
    if j < 1 or m < 1:
        raise ValueError(f"mode indices must be >= 1, got ({j}, {m})")
    L = domain.half_width
    lam = (j * np.pi / (2 * L)) ** 2 + (m * np.pi) ** 2
    return lam, np.sqrt(2.0 / L)


def eigenvalues(domain: RectDomain, nx: int, ny: int) -> np.ndarray:
    L = domain.half_width
    j = np.arange(1, nx + 1)[:, None]
    m = np.arange(1, ny + 1)[None, :]
    return (j * np.pi / (2 * L)) ** 2 + (m * np.pi) ** 2


def mode_table(domain: RectDomain, nx: int, ny: int):
    """Enumerate modes by ascending eigenvalue.

    Returns ``(j, m, lam)`` arrays of length ``nx * ny`` ordered by flat rank
    (rank 1 first).  Ties are exact (the key ``j**2 + 4 L**2 m**2`` is an
    integer) and broken lexicographically in ``(j, m)``.
    """
    L = int(domain.half_width)
    j, m = np.meshgrid(np.arange(1, nx + 1), np.arange(1, ny + 1), indexing="ij")
    j = j.ravel()
    m = m.ravel()
    key = j.astype(np.int64) ** 2 + 4 * L * L * m.astype(np.int64) ** 2
    order = np.lexsort((m, j, key))
    lam = (j * np.pi / (2 * L)) ** 2 + (m * np.pi) ** 2
    return j[order], m[order], lam[order]


def rank_mask(domain: RectDomain, nx: int, ny: int, n_modes: int) -> np.ndarray:
    """Boolean ``(nx, ny)`` mask selecting the ``n_modes`` lowest-ranked modes."""
    if not 1 <= n_modes <= nx * ny:
        raise ValueError(f"n_modes must lie in [1, {nx * ny}], got {n_modes}")
    j, m, _ = mode_table(domain, nx, ny)
    mask = np.zeros((nx, ny), dtype=bool)
    mask[j[:n_modes] - 1, m[:n_modes] - 1] = True
    return mask


# -- containers -------------------------------------------------------------

@dataclass
class SpectralField:
    """Galerkin coordinates ``coeffs[j-1, m-1]`` on ``domain``."""

    domain: RectDomain
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2:
            raise ValueError("coeffs must be a 2-D (nx, ny) array")

    @classmethod
    def zeros(cls, domain, nx, ny):
        return cls(domain, np.zeros((nx, ny)))

    @classmethod
    def unit(cls, domain, nx, ny, j, m, value=1.0):
        f = cls.zeros(domain, nx, ny)
        f.coeffs[j - 1, m - 1] = value
        return f

    @classmethod
    def from_flat(cls, domain, nx, ny, flat):
        """Build from a vector ordered by eigenvalue rank."""
        j, m, _ = mode_table(domain, nx, ny)
        c = np.zeros((nx, ny))
        c[j - 1, m - 1] = np.asarray(flat, dtype=float)
        return cls(domain, c)

    @property
    def nx(self) -> int:
        return self.coeffs.shape[0]

    @property
    def ny(self) -> int:
        return self.coeffs.shape[1]

    def flat(self) -> np.ndarray:
        j, m, _ = mode_table(self.domain, self.nx, self.ny)
        return self.coeffs[j - 1, m - 1].copy()

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def copy(self) -> "SpectralField":
        return SpectralField(self.domain, self.coeffs.copy())

    def __add__(self, other):
        _same_domain(self.domain, other.domain)
        return SpectralField(self.domain, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_domain(self.domain, other.domain)
        return SpectralField(self.domain, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return SpectralField(self.domain, self.coeffs * c)

    __rmul__ = __mul__


def _same_domain(a: RectDomain, b: RectDomain):
    if a != b:
        raise DomainMismatch(f"domain level {a.level} != {b.level}")


def _axis_len(grid: GridSpec, axis: int, parity: str) -> int:
    n = grid.px if axis == 0 else grid.py
    return n + 2 if parity == "cos" else n


@dataclass
class GridField:
    """Samples on the collocation grid, tagged by parity per axis."""

    grid: GridSpec
    values: np.ndarray
    parity: tuple = ("sin", "sin")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.parity = tuple(self.parity)
        if len(self.parity) != 2 or any(p not in PARITIES for p in self.parity):
            raise ValueError(f"bad parity tag {self.parity!r}")
        want = (_axis_len(self.grid, 0, self.parity[0]), _axis_len(self.grid, 1, self.parity[1]))
        if self.values.shape != want:
            raise ValueError(f"values shape {self.values.shape} != {want} for parity {self.parity}")

    def interior(self) -> np.ndarray:
        """Values at the interior collocation nodes only."""
        v = self.values
        if self.parity[0] == "cos":
            v = v[1:-1, :]
        if self.parity[1] == "cos":
            v = v[:, 1:-1]
        return v

    def nodes(self):
        """Meshgrid ``(X, Y)`` matching :attr:`values`."""
        xs = self.grid.x_nodes_ext() if self.parity[0] == "cos" else self.grid.x_nodes
        ys = self.grid.y_nodes_ext() if self.parity[1] == "cos" else self.grid.y_nodes
        return np.meshgrid(xs, ys, indexing="ij")

    def _layout(self, ext: tuple) -> np.ndarray:
        v = self.values
        for axis in (0, 1):
            par = self.parity[axis]
            if ext[axis] and par != "cos":
                if par == "none":
                    raise ValueError("cannot extend generic samples to the boundary")
                width = [(0, 0), (0, 0)]
                width[axis] = (1, 1)
                v = np.pad(v, width)
            elif not ext[axis] and par == "cos":
                v = v[1:-1, :] if axis == 0 else v[:, 1:-1]
        return v

    def _check(self, other: "GridField"):
        if other.grid != self.grid:
            raise DomainMismatch("grid fields live on different grids")

    def __mul__(self, other):
        if not isinstance(other, GridField):
            return GridField(self.grid, self.values * other, self.parity)
        self._check(other)
        par = tuple(_mul_parity(a, b) for a, b in zip(self.parity, other.parity))
        ext = tuple(p == "cos" for p in par)
        return GridField(self.grid, self._layout(ext) * other._layout(ext), par)

    __rmul__ = __mul__

    def __add__(self, other):
        self._check(other)
        if self.parity == other.parity:
            return GridField(self.grid, self.values + other.values, self.parity)
        par = tuple(a if a == b else "none" for a, b in zip(self.parity, other.parity))
        ext = tuple(p == "cos" for p in par)
        return GridField(self.grid, self._layout(ext) + other._layout(ext), par)

    def __neg__(self):
        return GridField(self.grid, -self.values, self.parity)

    def __sub__(self, other):
        return self + (-other)


def _mul_parity(a: str, b: str) -> str:
    if a == "none" or b == "none":
        return "none"
    return "cos" if a == b else "sin"


# -- 1-D transforms along one axis --------------------------------------------

def _pad_to(a: np.ndarray, n: int, axis: int) -> np.ndarray:
    k = a.shape[axis]
    if k == n:
        return a
    if k > n:
        raise ValueError(f"{k} modes do not fit on {n} nodes")
    width = [(0, 0)] * a.ndim
    width[axis] = (0, n - k)
    return np.pad(a, width)


def sin_eval(a: np.ndarray, n_nodes: int, axis: int) -> np.ndarray:
    """Values of ``sum_k a_k sin(k pi s)`` at the interior nodes."""
    return 0.5 * sfft.dst(_pad_to(a, n_nodes, axis), type=1, axis=axis)


def sin_coef(v: np.ndarray, axis: int) -> np.ndarray:
    return sfft.dst(v, type=1, axis=axis) / (v.shape[axis] + 1)


def cos_eval(c: np.ndarray, n_nodes: int, axis: int) -> np.ndarray:
    """Values of ``sum_k c_k cos(k pi s)`` at the interior nodes and both ends."""
    x = np.moveaxis(_pad_to(c, n_nodes + 2, axis), axis, -1).copy()
    x[..., 1:-1] *= 0.5
    return np.moveaxis(sfft.dct(x, type=1, axis=-1), -1, axis)


def cos_coef(v: np.ndarray, axis: int) -> np.ndarray:
    x = np.moveaxis(sfft.idct(v, type=1, axis=axis), axis, -1).copy()
    x[..., 1:-1] *= 2.0
    return np.moveaxis(x, -1, axis)


@lru_cache(maxsize=64)
def _sin_cos_gram(n_test: int, n_fam: int) -> np.ndarray:
    """``G[l-1, k] = int_0^1 sin(l pi s) cos(k pi s) ds`` for ``k = 0 .. n_fam-1``."""
    l = np.arange(1, n_test + 1)[:, None].astype(float)
    k = np.arange(0, n_fam)[None, :].astype(float)
    odd = ((l + k) % 2) == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(odd, 2.0 * l / (np.pi * (l * l - k * k)), 0.0)
    g.setflags(write=False)
    return g


@lru_cache(maxsize=64)
def _nodal_weights(n: int, parity: str) -> np.ndarray:
    """Quadrature weights on ``[0, 1]`` for samples of the given parity."""
    if parity == "cos":
        w = np.full(n + 2, 1.0 / (n + 1))
        w[0] = w[-1] = 0.5 / (n + 1)
    elif parity == "sin":
        k = np.arange(1, n + 1)
        moments = (1.0 - (-1.0) ** k) / (k * np.pi)
        w = sfft.dst(moments, type=1) / (n + 1)
    else:
        w = np.full(n, 1.0 / (n + 1))
    w.setflags(write=False)
    return w


def _native_coef(values: np.ndarray, parity: str, axis: int) -> np.ndarray:
    return cos_coef(values, axis) if parity == "cos" else sin_coef(values, axis)


def _projection(parity: str, n_test: int, n_fam: int, length_scale: float) -> np.ndarray:
    """Map native coefficients along one axis to orthonormal sine coordinates.

    ``length_scale`` is ``sqrt(L)`` along x (basis ``L**-0.5 sin``, Jacobian
    ``2L``) and ``1/sqrt(2)`` along y (basis ``sqrt(2) sin``).
    """
    if parity == "cos":
        # orthonormal test sin integrated against cos family:
        # x: 2L * L**-0.5 * G = 2 sqrt(L) G ; y: sqrt(2) G
        return 2.0 * length_scale * _sin_cos_gram(n_test, n_fam)
    r = np.zeros((n_test, n_fam))
    k = min(n_test, n_fam)
    r[np.arange(k), np.arange(k)] = length_scale
    return r


# -- synthesis / analysis -----------------------------------------------------

def _check_fit(f: SpectralField, grid: GridSpec):
    _same_domain(f.domain, grid.domain)
    if f.nx > grid.px or f.ny > grid.py:
        raise ValueError(f"{f.nx}x{f.ny} modes exceed the {grid.px}x{grid.py} grid")


def synthesize(f: SpectralField, grid: GridSpec) -> GridField:
    """Point values of ``sum F_jm phi_jm`` at the interior nodes."""
    _check_fit(f, grid)
    L = grid.domain.half_width
    a = f.coeffs * np.sqrt(2.0 / L)
    v = sin_eval(sin_eval(a, grid.px, 0), grid.py, 1)
    return GridField(grid, v, ("sin", "sin"))


@dataclass(frozen=True)
class AnalysisReport:
    truncated: bool
    discarded_fraction: float


def analyze(g: GridField, nx: int, ny: int, return_report: bool = False):
    """L2 projection of grid data onto the first ``nx x ny`` tensor modes.

    Exact for sine/cosine tagged data resolved on the grid; samples tagged
    ``"none"`` are integrated with the interior trapezoid rule.
    """
    grid = g.grid
    L = grid.domain.half_width
    c = _native_coef(_native_coef(g.values, g.parity[0], 0), g.parity[1], 1)
    rx = _projection(g.parity[0], nx, c.shape[0], np.sqrt(L))
    ry = _projection(g.parity[1], ny, c.shape[1], 1.0 / np.sqrt(2.0))
    f = SpectralField(grid.domain, rx @ c @ ry.T)
    if not return_report:
        return f
    total = integrate(g * g) if "none" not in g.parity else float(np.sum(g.interior() ** 2) * grid.hx * grid.hy)
    kept = float(np.sum(f.coeffs ** 2))
    frac = max(0.0, total - kept) / total if total > 0 else 0.0
    return f, AnalysisReport(truncated=frac > 1e-12, discarded_fraction=frac)


def derivative_fields(f: SpectralField, grid: GridSpec) -> tuple[GridField, GridField]:
    """Exact ``(d/dx w, d/dy w)`` of the trigonometric polynomial ``w``."""
    _check_fit(f, grid)
    L = grid.domain.half_width
    a = f.coeffs * np.sqrt(2.0 / L)
    j = np.arange(1, f.nx + 1)[:, None]
    m = np.arange(1, f.ny + 1)[None, :]
    # cosine coefficient arrays start at k = 0
    cx = np.concatenate([np.zeros((1, f.ny)), a * (j * np.pi / (2 * L))], axis=0)
    dx = sin_eval(cos_eval(cx, grid.px, 0), grid.py, 1)
    cy = np.concatenate([np.zeros((f.nx, 1)), a * (m * np.pi)], axis=1)
    dy = cos_eval(sin_eval(cy, grid.px, 0), grid.py, 1)
    return GridField(grid, dx, ("cos", "sin")), GridField(grid, dy, ("sin", "cos"))


def _diff_axis(values, parity, n_nodes, axis, scale):
    if parity == "sin":
        s = sin_coef(values, axis)
        k = np.arange(1, s.shape[axis] + 1) * np.pi * scale
        shape = [1, 1]
        shape[axis] = -1
        c = s * k.reshape(shape)
        zeros = np.zeros_like(np.take(c, [0], axis=axis))
        return cos_eval(np.concatenate([zeros, c], axis=axis), n_nodes, axis), "cos"
    if parity == "cos":
        c = cos_coef(values, axis)
        k = np.arange(0, c.shape[axis]) * np.pi * scale
        shape = [1, 1]
        shape[axis] = -1
        s = -(c * k.reshape(shape))
        s = np.take(s, np.arange(1, n_nodes + 1), axis=axis)
        return sin_eval(s, n_nodes, axis), "sin"
    raise ValueError("spectral differentiation needs sine or cosine tagged data")


def diff_x(g: GridField) -> GridField:
    L = g.grid.domain.half_width
    v, par = _diff_axis(g.values, g.parity[0], g.grid.px, 0, 1.0 / (2 * L))
    return GridField(g.grid, v, (par, g.parity[1]))


def diff_y(g: GridField) -> GridField:
    v, par = _diff_axis(g.values, g.parity[1], g.grid.py, 1, 1.0)
    return GridField(g.grid, v, (g.parity[0], par))


def integrate(g: GridField) -> float:
    """``int g dz`` over the rectangle, exact for resolved tagged data."""
    grid = g.grid
    wx = _nodal_weights(grid.px, g.parity[0])
    wy = _nodal_weights(grid.py, g.parity[1])
    return float(2.0 * grid.domain.half_width * (wx @ g.values @ wy))


def inner(a: GridField, b: GridField) -> float:
    return integrate(a * b)


def l2_norm(g: GridField) -> float:
    return float(np.sqrt(max(integrate(g * g), 0.0)))


# -- Gauss-Legendre evaluation plan ---------------------------------------------

class QuadraturePlan:
    """Tensor Gauss-Legendre rule with the basis evaluated at its nodes.

    Independent of the fast transforms; used for projecting closed-form data
    and for brute-force spatial integrals in the certifier.
    """

    def __init__(self, domain: RectDomain, nx: int, ny: int, mx: int | None = None, my: int | None = None):
        self.domain = domain
        self.nx, self.ny = nx, ny
        self.mx = mx or 3 * nx + 32
        self.my = my or 3 * ny + 32
        L = domain.half_width
        sx, wx = np.polynomial.legendre.leggauss(self.mx)
        sy, wy = np.polynomial.legendre.leggauss(self.my)
        self.x = L * sx
        self.wx = L * wx
        self.y = 0.5 * (sy + 1.0)
        self.wy = 0.5 * wy
        X = (self.x + L) / (2 * L)
        j = np.arange(1, nx + 1)
        m = np.arange(1, ny + 1)
        self.Sx = np.sin(np.pi * np.outer(X, j)) / np.sqrt(L)
        self.Dx = np.cos(np.pi * np.outer(X, j)) * (j * np.pi / (2 * L)) / np.sqrt(L)
        self.Sy = np.sqrt(2.0) * np.sin(np.pi * np.outer(self.y, m))
        self.Dy = np.sqrt(2.0) * np.cos(np.pi * np.outer(self.y, m)) * (m * np.pi)
        self.Ty = np.sqrt(2.0) * (1.0 - np.cos(np.pi * np.outer(self.y, m))) / (m * np.pi)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def evaluate(self, coeffs: np.ndarray, x_kind: str = "S", y_kind: str = "S") -> np.ndarray:
        ax = {"S": self.Sx, "D": self.Dx}[x_kind]
        ay = {"S": self.Sy, "D": self.Dy, "T": self.Ty}[y_kind]
        return ax @ coeffs @ ay.T

    def project(self, values: np.ndarray) -> np.ndarray:
        """``<phi_jm, g>`` for samples ``g`` at the quadrature nodes."""
        return self.Sx.T @ (self.wx[:, None] * values * self.wy[None, :]) @ self.Sy

    def integrate(self, values: np.ndarray) -> float:
        return float(self.wx @ values @ self.wy)
