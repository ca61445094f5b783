"""Shared fixtures and independent oracles.

The oracles here use only numpy/scipy quadrature on explicitly written basis
functions, never the package's transforms, so they can serve as a second
route for the transform-based results.
"""

import math

import numpy as np
import pytest

from glory.basis import SpectralField, eigenvalues
from glory.domain import RectDomain


def gl_nodes(n, a, b):
    s, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * s + 0.5 * (a + b), 0.5 * (b - a) * w


class BruteForce:
    """Tensor Gauss-Legendre evaluation of sine-series fields and their pieces."""

    def __init__(self, level, nx, ny, mx=None, my=None):
        self.L = L = float(2 ** level)
        self.x, self.wx = gl_nodes(mx or 4 * nx + 40, -L, L)
        self.y, self.wy = gl_nodes(my or 4 * ny + 40, 0.0, 1.0)
        X = (self.x + L) / (2 * L)
        j = np.arange(1, nx + 1)
        m = np.arange(1, ny + 1)
        kx = j * math.pi / (2 * L)
        self.S = np.sqrt(2.0 / L) * np.sin(math.pi * np.outer(X, j))
        self.C = np.sqrt(2.0 / L) * np.cos(math.pi * np.outer(X, j)) * kx
        self.sy = np.sin(math.pi * np.outer(self.y, m))
        self.cy = np.cos(math.pi * np.outer(self.y, m)) * (m * math.pi)
        self.ty = (1.0 - np.cos(math.pi * np.outer(self.y, m))) / (m * math.pi)

    def w(self, c):
        return self.S @ c @ self.sy.T

    def wx_(self, c):
        return self.C @ c @ self.sy.T

    def wy_(self, c):
        return self.S @ c @ self.cy.T

    def twx(self, c):
        return self.C @ c @ self.ty.T

    def integrate(self, v):
        return float(self.wx @ v @ self.wy)

    def project(self, v):
        return self.S.T @ (self.wx[:, None] * v * self.wy[None, :]) @ self.sy


def random_field(rng, domain, nx, ny, decay=0.0):
    c = rng.standard_normal((nx, ny))
    if decay:
        c *= np.exp(-decay * eigenvalues(domain, nx, ny))
    return SpectralField(domain, c)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def dom1():
    return RectDomain(1)


@pytest.fixture
def dom2():
    return RectDomain(2)


MMS_SOLUTION = "exp(-t)*sin(pi*(x+L)/(2*L))*sin(pi*y)"


def mms_problem(nx=8, ny=8, params=None, level=1):
    """Manufactured single-mode problem; returns (split, w0, exact w at time t)."""
    from glory.domain import Parameters
    from glory.forcing import manufactured_forcing
    from glory.galerkin import build_rhs, project_initial_data

    params = params or Parameters(1.0, 0.0, 0.0)
    dom = RectDomain(level)
    K = manufactured_forcing(MMS_SOLUTION, params, domain=dom)
    split = build_rhs(params, dom, nx, ny, K)
    w0 = project_initial_data(MMS_SOLUTION, dom, nx, ny)

    def exact(t):
        return w0.coeffs * math.exp(-t) * math.exp(-params.gamma * t)

    return split, w0, exact
