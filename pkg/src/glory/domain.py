"""Physical parameters, the dyadic rectangles and the collocation grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooSmall, InvalidLevel, NonPositiveGamma

__all__ = [
    "Parameters",
    "RectDomain",
    "GridSpec",
    "derive_gamma",
    "build_domain",
    "build_grid",
]


def derive_gamma(mu: float, alpha: float, beta: float) -> float:
    """Return ``1 + alpha + beta**2 / (2 mu)``.

    This is the exponential rate of the substitution ``w = u exp(-gamma t)``
    that turns the L2 energy into a Liapunov functional.

    Raises
    ------
    NonPositiveGamma
        If the result is not strictly positive.
    ValueError
        If ``mu <= 0``.
    """
    if not mu > 0:
        raise ValueError(f"viscosity mu must be positive, got {mu!r}")
    gamma = 1.0 + alpha + beta * beta / (2.0 * mu)
    if not gamma > 0:
        raise NonPositiveGamma(
            f"gamma = 1 + alpha + beta^2/(2 mu) = {gamma!r} is not positive "
            f"(mu={mu}, alpha={alpha}, beta={beta})"
        )
    return gamma


@dataclass(frozen=True)
class Parameters:
    """Model constants; ``gamma`` is derived and never passed in."""

    mu: float
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "gamma", derive_gamma(self.mu, self.alpha, self.beta))

    def to_dict(self) -> dict:
        return {"mu": self.mu, "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class RectDomain:
    """The rectangle ``(-2**level, 2**level) x (0, 1)``."""

    level: int

    def __post_init__(self):
        if int(self.level) != self.level or self.level < 1:
            raise InvalidLevel(f"domain level must be an integer >= 1, got {self.level!r}")
        object.__setattr__(self, "level", int(self.level))

    @property
    def half_width(self) -> float:
        return float(2 ** self.level)

    @property
    def x_range(self) -> tuple[float, float]:
        L = self.half_width
        return (-L, L)

    @property
    def y_range(self) -> tuple[float, float]:
        return (0.0, 1.0)

    @property
    def area(self) -> float:
        return 2.0 * self.half_width

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        L = self.half_width
        return (x > -L) & (x < L) & (y > 0) & (y < 1)


def build_domain(level: int) -> RectDomain:
    return RectDomain(level)


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid of interior type-I sine-transform nodes.

    ``nx`` and ``ny`` are the resolved mode counts, ``px`` and ``py`` the
    padded node counts.  Node ``p`` (1-based) sits at the normalised
    coordinate ``p / (px + 1)``.  Axes carrying cosine data additionally use
    the two boundary nodes (normalised coordinates 0 and 1); see
    :mod:`glory.basis`.
    """

    domain: RectDomain
    nx: int
    ny: int
    pad: float = 2.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise GridTooSmall(f"need nx, ny >= 4, got nx={self.nx}, ny={self.ny}")
        if not self.pad >= 1:
            raise ValueError(f"dealiasing factor must be >= 1, got {self.pad}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "pad", float(self.pad))

    @property
    def px(self) -> int:
        return _padded(self.pad, self.nx)

    @property
    def py(self) -> int:
        return _padded(self.pad, self.ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.px, self.py)

    @property
    def hx(self) -> float:
        return 2.0 * self.domain.half_width / (self.px + 1)

    @property
    def hy(self) -> float:
        return 1.0 / (self.py + 1)

    @property
    def x_nodes(self) -> np.ndarray:
        L = self.domain.half_width
        return -L + 2.0 * L * np.arange(1, self.px + 1) / (self.px + 1)

    @property
    def y_nodes(self) -> np.ndarray:
        return np.arange(1, self.py + 1) / (self.py + 1)

    def x_nodes_ext(self) -> np.ndarray:
        L = self.domain.half_width
        return -L + 2.0 * L * np.arange(0, self.px + 2) / (self.px + 1)

    def y_nodes_ext(self) -> np.ndarray:
        return np.arange(0, self.py + 2) / (self.py + 1)

    def to_dict(self) -> dict:
        return {"level": self.domain.level, "nx": self.nx, "ny": self.ny, "pad": self.pad}


def _padded(pad: float, n: int) -> int:
    # round before ceil so pad=1.5, n=10 gives 15 rather than 16
    return int(math.ceil(round(pad * n, 9)))


def build_grid(domain: RectDomain, nx: int, ny: int, pad: float = 2.0) -> GridSpec:
    return GridSpec(domain, nx, ny, pad)
