"""Time integration of the Galerkin system.

The diagonal linear part ``alpha - gamma - mu lam`` is integrated exactly
(ETDRK4) or implicitly (Crank-Nicolson).  Adaptive steps are controlled by
step doubling.  Alongside the coefficients the integrator accumulates the
dissipation ``int mu |grad w|^2 + w^2`` and the forcing ``int K_n^2`` so the
energy certificate can be checked after the fact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
import scipy.linalg as sla

from .basis import SpectralField
from .domain import Parameters
from .errors import GloryOverflow
from .galerkin import MAX_EXPONENT, RhsSplit, growth_factor

__all__ = [
    "Method",
    "Status",
    "IntegratorConfig",
    "SolverState",
    "Frame",
    "Trajectory",
    "phi_functions",
    "initial_state",
    "step",
    "integrate",
    "solve",
    "to_u",
    "from_u",
    "log_mean_integral",
]


class Method(str, enum.Enum):
    ETDRK4 = "etdrk4"
    IMEX_CN = "imex_cn"


class Status(str, enum.Enum):
    RUNNING = "running"
    FINISHED = "finished"
    BLOWUP = "blowup"
    STEP_FAILURE = "step_failure"


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.ETDRK4
    dt_init: float = 1e-2
    dt_min: float = 1e-8
    dt_max: float = 0.1
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    adaptive: bool = True
    # an explicit threshold on ||F||_2; by default 1e12 max(1, E_N(w0)) on the energy
    blowup_norm_threshold: float | None = None
    blowup_energy_factor: float = 1e12
    implicit_beta: bool = False
    estimate_error: bool | None = None
    max_steps: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.implicit_beta and self.method is not Method.IMEX_CN:
            raise ValueError("implicit beta coupling is only available with imex_cn")

    @property
    def doubling(self) -> bool:
        return self.adaptive if self.estimate_error is None else bool(self.estimate_error)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["method"] = self.method.value
        return d


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    w: SpectralField
    dissipation_accum: float = 0.0
    dissipation_u_accum: float = 0.0
    forcing_accum: float = 0.0
    status: Status = Status.RUNNING
    t_blow: float | None = None
    error_accum: float = 0.0
    steps: int = 0
    rejected: int = 0
    message: str = ""

    @property
    def coeffs(self) -> np.ndarray:
        return self.w.coeffs


@dataclass(frozen=True, eq=False)
class Frame:
    t: float
    coeffs: np.ndarray
    dissipation_accum: float
    dissipation_u_accum: float
    forcing_accum: float
    error_accum: float = 0.0


@dataclass(eq=False)
class Trajectory:
    """Frames at the output times plus the data needed to interpret them."""

    split: RhsSplit
    frames: list[Frame] = field(default_factory=list)
    final: SolverState | None = None
    config: IntegratorConfig | None = None
    initial_energy: float | None = None

    @property
    def params(self) -> Parameters:
        return self.split.params

    @property
    def domain(self):
        return self.split.domain

    @property
    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.frames])

    def coeffs(self) -> np.ndarray:
        return np.array([f.coeffs for f in self.frames])

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.domain, self.frames[i].coeffs)

    def index_of(self, t: float, tol: float = 1e-12) -> int:
        ts = self.times
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"no frame at t={t}")
        return i

    def record(self, state: SolverState):
        self.frames.append(Frame(state.t, state.coeffs.copy(), state.dissipation_accum,
                                 state.dissipation_u_accum, state.forcing_accum, state.error_accum))


# -- phi functions ------------------------------------------------------------------

def phi_functions(z: np.ndarray):
    """``phi_1, phi_2, phi_3`` of ``z`` with a Taylor switch for ``|z| < 1``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1.0
    zs = np.where(small, z, 0.0)
    p1 = np.zeros_like(z)
    p2 = np.zeros_like(z)
    p3 = np.zeros_like(z)
    term = np.ones_like(z)
    fact = [math.factorial(k) for k in range(25)]
    for n in range(20):
        if n:
            term = term * zs
        p1 += term / fact[n + 1]
        p2 += term / fact[n + 2]
        p3 += term / fact[n + 3]
    zb = np.where(small, 1.0, z)
    ez = np.exp(zb)
    q1 = np.expm1(zb) / zb
    q2 = (ez - 1.0 - zb) / zb ** 2
    q3 = (ez - 1.0 - zb - 0.5 * zb ** 2) / zb ** 3
    return np.where(small, p1, q1), np.where(small, p2, q2), np.where(small, p3, q3)


class _EtdCoefficients:
    def __init__(self, lin: np.ndarray):
        self.lin = lin
        self._cache: dict[float, tuple] = {}

    def get(self, h: float):
        c = self._cache.get(h)
        if c is None:
            z = h * self.lin
            p1, p2, p3 = phi_functions(z)
            hp1, _, _ = phi_functions(0.5 * z)
            c = (
                np.exp(z),
                np.exp(0.5 * z),
                0.5 * h * hp1,
                h * (p1 - 3.0 * p2 + 4.0 * p3),
                h * (2.0 * p2 - 4.0 * p3),
                h * (-p2 + 4.0 * p3),
            )
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[h] = c
        return c


class _CnSolver:
    """Crank-Nicolson linear algebra, diagonal or with the beta coupling folded in."""

    def __init__(self, split: RhsSplit, implicit_beta: bool):
        self.split = split
        self.implicit_beta = implicit_beta and split.params.beta != 0.0 and split.use_beta
        self._cache: dict[float, object] = {}
        if self.implicit_beta:
            A = np.diag(split.linear_diag.ravel()) - split.params.beta * split.coupling.dense()
            if split.mask is not None:
                keep = split.mask.ravel()
                A = A * keep[:, None] * keep[None, :] + np.diag(np.where(keep, 0.0, split.linear_diag.ravel()))
            self.A = A

    def linear(self, c):
        if self.implicit_beta:
            return (self.A @ c.ravel()).reshape(c.shape)
        return self.split.linear(c)

    def solve(self, h, rhs):
        if not self.implicit_beta:
            return rhs / (1.0 - 0.5 * h * self.split.linear_diag)
        lu = self._cache.get(h)
        if lu is None:
            lu = sla.lu_factor(np.eye(self.A.shape[0]) - 0.5 * h * self.A)
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[h] = lu
        return sla.lu_solve(lu, rhs.ravel()).reshape(rhs.shape)


class _Engine:
    def __init__(self, split: RhsSplit, config: IntegratorConfig):
        self.split = split
        self.config = config
        if config.method is Method.ETDRK4:
            self.etd = _EtdCoefficients(split.linear_diag)
        else:
            self.cn = _CnSolver(split, config.implicit_beta)

    def explicit(self, t, c):
        if self.config.method is Method.IMEX_CN and self.cn.implicit_beta:
            return self.split.explicit(t, c, include_beta=False)
        return self.split.explicit(t, c)

    def single(self, t, c, h):
        if self.config.method is Method.ETDRK4:
            return self._etdrk4(t, c, h)
        return self._cn(t, c, h)

    def _etdrk4(self, t, u, h):
        E, E2, Q, f1, f2, f3 = self.etd.get(h)
        N = self.explicit
        Nu = N(t, u)
        a = E2 * u + Q * Nu
        Na = N(t + 0.5 * h, a)
        b = E2 * u + Q * Na
        Nb = N(t + 0.5 * h, b)
        c = E2 * a + Q * (2.0 * Nb - Nu)
        Nc = N(t + h, c)
        return E * u + f1 * Nu + f2 * (Na + Nb) + f3 * Nc

    def _cn(self, t, u, h):
        cn = self.cn
        base = u + 0.5 * h * cn.linear(u)
        Nu = self.explicit(t, u)
        pred = cn.solve(h, base + h * Nu)
        Np = self.explicit(t + h, pred)
        return cn.solve(h, base + 0.5 * h * (Nu + Np))


# -- accumulators -----------------------------------------------------------------------

def log_mean_integral(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """``int_0^h q`` for ``q`` exponential between the samples ``a`` and ``b``.

    Falls back to the trapezoid rule where the samples are (nearly) equal or
    not both positive.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = 0.5 * h * (a + b)
    ok = (a > 0) & (b > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(ok, b / np.where(ok, a, 1.0), 1.0)
        lr = np.log(r)
        far = ok & (np.abs(lr) > 1e-6)
        lm = np.where(far, (b - a) / np.where(far, lr, 1.0), 0.0)
        # second-order series of the log mean near r = 1
        near = ok & ~far
        series = np.sqrt(a * b) * (1.0 + lr * lr / 24.0)
    out = np.where(far, h * lm, out)
    out = np.where(near, h * series, out)
    return out


def _dissipation_increment(split, t0, c0, t1, c1):
    wts = split.dissipation_weights()
    h = t1 - t0
    dw = float(np.sum(wts * log_mean_integral(c0 * c0, c1 * c1, h)))
    # same integrand written through u = e^{gamma t} w with the e^{-2 gamma t} weight
    g = split.params.gamma
    u0 = growth_factor(g, t0) * c0
    u1 = growth_factor(g, t1) * c1
    a = np.exp(-2.0 * g * t0) * (u0 * u0)
    b = np.exp(-2.0 * g * t1) * (u1 * u1)
    du = float(np.sum(wts * log_mean_integral(a, b, h)))
    return dw, du


def _forcing_increment(split, t0, t1):
    if split.forcing.is_zero:
        return 0.0
    return 0.5 * (t1 - t0) * (split.forcing_norm_sq(t0) + split.forcing_norm_sq(t1))


# -- states -------------------------------------------------------------------------------

def initial_state(w0: SpectralField, t0: float = 0.0, split: RhsSplit | None = None) -> SolverState:
    c = w0.coeffs.copy()
    if split is not None:
        c = split.restrict(c)
    return SolverState(t0, SpectralField(w0.domain, c))


def to_u(state: SolverState, params: Parameters):
    """``(t, u)`` with ``u = e^{gamma t} w``."""
    if not state.w.is_finite():
        raise ValueError("state is not finite")
    s = growth_factor(params.gamma, state.t)
    return state.t, SpectralField(state.w.domain, s * state.w.coeffs)


def from_u(t: float, u: SpectralField, params: Parameters) -> SolverState:
    """State with ``w = e^{-gamma t} u`` and zero accumulators."""
    s = math.exp(-params.gamma * t)
    return SolverState(t, SpectralField(u.domain, s * u.coeffs))


def _norm_threshold(config: IntegratorConfig, w0: SpectralField) -> float:
    if config.blowup_norm_threshold is not None:
        return float(config.blowup_norm_threshold)
    e0 = 0.5 * float(np.sum(w0.coeffs ** 2))
    return math.sqrt(2.0 * config.blowup_energy_factor * max(1.0, e0))


def _blown(c: np.ndarray, threshold: float) -> bool:
    return not np.all(np.isfinite(c)) or float(np.linalg.norm(c)) > threshold


# -- one step ------------------------------------------------------------------------------

def _advance(engine: _Engine, state: SolverState, h: float, doubling: bool):
    """Raw step; returns (new coeffs, list of (t, c) sub-samples, error norm)."""
    t, c = state.t, state.coeffs
    if not doubling:
        c1 = engine.single(t, c, h)
        return c1, [(t + h, c1)], 0.0
    big = engine.single(t, c, h)
    mid = engine.single(t, c, 0.5 * h)
    c1 = engine.single(t + 0.5 * h, mid, 0.5 * h)
    return c1, [(t + 0.5 * h, mid), (t + h, c1)], float(np.linalg.norm(c1 - big))


def _accumulate(split, state, samples, err, h, new_status=Status.RUNNING):
    D, Du, Kacc = state.dissipation_accum, state.dissipation_u_accum, state.forcing_accum
    t_prev, c_prev = state.t, state.coeffs
    for ts, cs in samples:
        dw, du = _dissipation_increment(split, t_prev, c_prev, ts, cs)
        D += dw
        Du += du
        Kacc += _forcing_increment(split, t_prev, ts)
        t_prev, c_prev = ts, cs
    c1 = samples[-1][1]
    # error in the energy implied by the coefficient error
    e_err = err * max(float(np.linalg.norm(c1)), float(np.linalg.norm(state.coeffs)))
    return replace(state, t=t_prev, w=SpectralField(state.w.domain, c1), dissipation_accum=D,
                   dissipation_u_accum=Du, forcing_accum=Kacc, status=new_status,
                   error_accum=state.error_accum + e_err, steps=state.steps + 1)


def step(state: SolverState, split: RhsSplit, dt: float, config: IntegratorConfig | None = None):
    """One step of size ``dt``; returns ``(new_state, error_estimate)``.

    The error estimate is the scaled step-doubling difference (accept when
    ``<= 1``).  Raises :class:`GloryOverflow` if a growth factor overflows.
    """
    config = config or IntegratorConfig(dt_init=dt, dt_min=min(dt, 1e-8), dt_max=max(dt, 0.1))
    if state.status is not Status.RUNNING:
        raise ValueError(f"cannot step a {state.status.value} state")
    engine = _Engine(split, config)
    c1, samples, err = _advance(engine, state, dt, True)
    scale = config.abs_tol + config.rel_tol * max(np.linalg.norm(c1), np.linalg.norm(state.coeffs))
    return _accumulate(split, state, samples, err, dt), err / scale


# -- driver ---------------------------------------------------------------------------------

Observer = Callable[[SolverState], None]


def _output_schedule(t0, t_end, output_times):
    if output_times is None:
        return [t_end]
    out = sorted(float(x) for x in output_times if t0 < x <= t_end + 1e-14 * max(1.0, abs(t_end)))
    if not out or out[-1] < t_end:
        out.append(t_end)
    return out


def integrate(state: SolverState, split: RhsSplit, t_end: float, config: IntegratorConfig | None = None,
              output_times: Iterable[float] | None = None, observers: Iterable[Observer] = ()) -> SolverState:
    """Advance ``state`` to ``t_end``.

    Steps are shortened so that every output time is hit exactly; observers
    see the state at ``state.t`` (if it is running) and at each output time.
    The returned state is Finished, BlowUp or StepFailure.
    """
    config = config or IntegratorConfig()
    observers = list(observers)
    if t_end < state.t:
        raise ValueError("t_end lies before the current time")
    if state.status is not Status.RUNNING:
        return state
    threshold = _norm_threshold(config, state.w)
    for obs in observers:
        obs(state)
    if _blown(state.coeffs, threshold):
        return replace(state, status=Status.BLOWUP, t_blow=state.t, message="threshold exceeded at start")
    if t_end == state.t:
        return replace(state, status=Status.FINISHED)

    engine = _Engine(split, config)
    doubling = config.doubling
    h = config.dt_init
    targets = _output_schedule(state.t, t_end, output_times)
    eps_t = 1e-13 * max(1.0, abs(t_end))
    for target in targets:
        while target - state.t > eps_t:
            if state.steps >= config.max_steps:
                return replace(state, status=Status.STEP_FAILURE, message="step budget exhausted")
            remaining = target - state.t
            hh = min(h, config.dt_max, remaining)
            clipped = hh == remaining
            # avoid a sliver step just before the target
            if not clipped and remaining - hh < 0.25 * hh:
                hh = 0.5 * remaining if remaining > hh else remaining
                clipped = hh == remaining
            try:
                c1, samples, err = _advance(engine, state, hh, doubling)
            except (GloryOverflow, FloatingPointError) as exc:
                # an overflowing product may just mean the trial step was too long
                in_range = split.params.gamma * (state.t + hh) <= MAX_EXPONENT
                if config.adaptive and hh > config.dt_min and in_range:
                    h = max(config.dt_min, 0.25 * hh)
                    state = replace(state, rejected=state.rejected + 1)
                    continue
                return replace(state, status=Status.BLOWUP, t_blow=state.t, message=str(exc))
            if not np.all(np.isfinite(c1)):
                if config.adaptive and hh > config.dt_min:
                    h = max(config.dt_min, 0.25 * hh)
                    state = replace(state, rejected=state.rejected + 1)
                    continue
                return replace(state, status=Status.BLOWUP, t_blow=state.t, message="non-finite coefficients")
            scale = config.abs_tol + config.rel_tol * max(np.linalg.norm(c1), np.linalg.norm(state.coeffs))
            ratio = err / scale
            if config.adaptive and ratio > 1.0:
                if hh <= config.dt_min * (1 + 1e-12):
                    return replace(state, status=Status.STEP_FAILURE,
                                   message=f"error {ratio:.3g} x tolerance at dt_min")
                h = max(config.dt_min, hh * max(0.2, 0.9 * ratio ** -0.2))
                state = replace(state, rejected=state.rejected + 1)
                continue
            state = _accumulate(split, state, samples, err, hh)
            if _blown(state.coeffs, threshold):
                return replace(state, status=Status.BLOWUP, t_blow=state.t, message="threshold exceeded")
            if config.adaptive:
                grow = 4.0 if ratio == 0 else min(4.0, max(0.2, 0.9 * ratio ** -0.2))
                new_h = hh * grow
                # a step clipped to an output time says little about the natural size
                h = max(h, new_h) if clipped else new_h
                h = min(max(h, config.dt_min), config.dt_max)
        state = replace(state, t=target)
        for obs in observers:
            obs(state)
    return replace(state, status=Status.FINISHED)


def solve(w0: SpectralField, split: RhsSplit, t_end: float, config: IntegratorConfig | None = None,
          output_times: Iterable[float] | None = None, t0: float = 0.0,
          initial_energy: float | None = None) -> Trajectory:
    """Integrate from ``w0`` and record a frame at each output time."""
    traj = Trajectory(split, config=config or IntegratorConfig())
    state = initial_state(w0, t0, split)
    if initial_energy is None:
        initial_energy = 0.5 * float(np.sum(state.coeffs ** 2))
    traj.initial_energy = initial_energy
    traj.final = integrate(state, split, t_end, traj.config, output_times, observers=[traj.record])
    return traj
