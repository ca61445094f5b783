"""The vertical antiderivative ``(Tu)(x, y) = int_0^y u(x, s) ds``.

Two independent implementations are provided.  The spectral route maps
``sin(m pi y)`` to ``(1 - cos(m pi y)) / (m pi)`` mode by mode; the quadrature
route integrates a local interpolating polynomial cell by cell.  Each is the
oracle for the other.
"""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np

from .basis import (
    GridField,
    SpectralField,
    _check_fit,
    cos_eval,
    l2_norm,
    sin_coef,
)
from .domain import GridSpec
from .errors import ZeroField

__all__ = ["TMethod", "apply_T", "apply_Tdx", "check_norm_bound"]


class TMethod(str, enum.Enum):
    SPECTRAL = "spectral"
    QUADRATURE = "quadrature"


def apply_T(g: GridField, method: TMethod | str = TMethod.SPECTRAL, order: int = 12) -> GridField:
    """Apply ``T`` along y.

    The input must be sampled at the interior y nodes (parity ``"sin"`` or
    ``"none"``).  The result carries cosine parity in y, i.e. it includes the
    values at ``y = 0`` (always zero) and ``y = 1``.
    """
    method = TMethod(method)
    if g.parity[1] == "cos":
        raise ValueError("apply_T expects data at the interior y nodes")
    if method is TMethod.SPECTRAL:
        v = _t_spectral(g.values, g.grid.py)
    else:
        v = _t_cumulative(g.values, g.parity[1] == "sin", order)
    return GridField(g.grid, v, (g.parity[0], "cos"))


def _t_spectral(values: np.ndarray, ny_nodes: int) -> np.ndarray:
    b = sin_coef(values, axis=1)
    mpi = np.arange(1, b.shape[1] + 1) * np.pi
    c = np.empty((b.shape[0], b.shape[1] + 1))
    c[:, 0] = (b / mpi).sum(axis=1)
    c[:, 1:] = -b / mpi
    return cos_eval(c, ny_nodes, axis=1)


@lru_cache(maxsize=256)
def _cell_weights(n_points: int, offset: int) -> np.ndarray:
    """Weights integrating the Lagrange interpolant through nodes ``0..n-1``
    (unit spacing) over the cell ``[offset, offset + 1]``."""
    nodes = np.arange(n_points, dtype=float)
    V = np.vander(nodes, n_points, increasing=True).T
    k = np.arange(1, n_points + 1)
    moments = ((offset + 1.0) ** k - float(offset) ** k) / k
    w = np.linalg.solve(V, moments)
    w.setflags(write=False)
    return w


def _t_cumulative(values: np.ndarray, odd: bool, order: int) -> np.ndarray:
    nxv, Q = values.shape
    h = 1.0 / (Q + 1)
    if odd:
        # odd reflection about y = 0 and y = 1 keeps sine data smooth
        ghost = order
        core = np.concatenate([np.zeros((nxv, 1)), values, np.zeros((nxv, 1))], axis=1)
        left = -core[:, 1:ghost + 1][:, ::-1]
        right = -core[:, -ghost - 1:-1][:, ::-1]
        ext = np.concatenate([left, core, right], axis=1)
        first = -ghost  # node index of ext[:, 0]
    else:
        ext = values
        first = 1
    n_avail = ext.shape[1]
    S = min(order, n_avail)
    out = np.zeros((nxv, Q + 2))
    acc = np.zeros(nxv)
    for i in range(Q + 1):  # cell [y_i, y_{i+1}]
        start = i - S // 2 + 1
        start = min(max(start, first), first + n_avail - S)
        w = _cell_weights(S, i - start)
        lo = start - first
        acc = acc + h * (ext[:, lo:lo + S] @ w)
        out[:, i + 1] = acc
    return out


def apply_Tdx(f: SpectralField, grid: GridSpec) -> GridField:
    """Exact values of ``T d/dx w`` on the grid (cosine parity in x and y)."""
    _check_fit(f, grid)
    L = grid.domain.half_width
    a = f.coeffs * np.sqrt(2.0 / L)
    j = np.arange(1, f.nx + 1)[:, None]
    mpi = np.arange(1, f.ny + 1)[None, :] * np.pi
    ax = a * (j * np.pi / (2 * L))
    c = np.zeros((f.nx + 1, f.ny + 1))
    c[1:, 0] = (ax / mpi).sum(axis=1)
    c[1:, 1:] = -ax / mpi
    v = cos_eval(cos_eval(c, grid.px, 0), grid.py, 1)
    return GridField(grid, v, ("cos", "cos"))


def check_norm_bound(g: GridField, method: TMethod | str = TMethod.SPECTRAL) -> float:
    """Ratio ``||Tu||_2 / ||u||_2``; the operator norm bound says this is <= 1."""
    nu = l2_norm(g)
    if nu == 0.0:
        raise ZeroField("norm ratio undefined for the zero field")
    return l2_norm(apply_T(g, method)) / nu
