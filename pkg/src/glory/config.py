"""Run configuration: a versioned JSON document.

Example::

    {
      "schema_version": 1,
      "params": {"mu": 1.0, "alpha": 0.0, "beta": 0.0},
      "domain": {"level": 1},
      "grid": {"nx": 16, "ny": 8, "pad": 2, "n_modes": null},
      "integrator": {"method": "etdrk4", "dt_init": 0.01, "rel_tol": 1e-8},
      "forcing": {"kind": "closed_form", "expr": "sin(pi*y)*exp(-x^2)",
                  "mollification_index": null},
      "initial": {"kind": "mode", "j": 1, "m": 1, "amplitude": 1.0},
      "t_end": 1.0,
      "output": {"dt": 0.1},
      "model": {"nonlinear": true, "beta_term": true},
      "certify": {"test_functions": ["phi_1"], "window": [0.0, 1.0]}
    }

Forcing kinds: ``zero``, ``closed_form`` (``expr``), ``grid_series``
(``trace``: path to a trace file) and ``manufactured`` (``solution``: the
exact u in the expression grammar).  Initial kinds: ``zero``,
``closed_form`` (``expr``), ``mode`` (``j``, ``m``, ``amplitude``),
``random`` (``seed``, ``decay``, ``energy``), ``bump`` (``center``,
``radii``, ``amplitude``), ``manufactured`` (the manufactured solution at
``t = 0``) and ``checkpoint`` (``path``, optional ``frame``).
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import SpectralField, eigenvalues
from .domain import Parameters, RectDomain, build_grid
from .errors import ConfigError, GloryError
from .expr import ClosedForm
from .forcing import ForcingSpec, GridSeries, manufactured_forcing
from .galerkin import RhsSplit, build_rhs, project_initial_data, strip_energy
from .timestepper import IntegratorConfig

__all__ = ["SCHEMA_VERSION", "RunConfig", "load_config", "bump_function"]

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "params": {"mu": 1.0, "alpha": 0.0, "beta": 0.0},
    "domain": {"level": 1},
    "grid": {"nx": 16, "ny": 8, "pad": 2.0, "n_modes": None},
    "integrator": {},
    "forcing": {"kind": "zero"},
    "initial": {"kind": "zero"},
    "t_end": 1.0,
    "output": {"dt": 0.1},
    "model": {"nonlinear": True, "beta_term": True},
    "certify": {},
}

_TOP = set(DEFAULTS) | {"name", "exact_solution", "study", "semiflow"}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def bump_function(center=(0.0, 0.5), radii=(1.0, 0.4), amplitude=1.0):
    """Smooth bump ``A exp(1 - 1/(1 - r^2))`` supported in an axis-aligned ellipse."""
    x0, y0 = map(float, center)
    rx, ry = map(float, radii)
    A = float(amplitude)

    def u0(x, y):
        r2 = ((np.asarray(x) - x0) / rx) ** 2 + ((np.asarray(y) - y0) / ry) ** 2
        out = np.zeros(np.broadcast(x, y).shape)
        inside = r2 < 1.0
        out[inside] = A * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out

    return u0


@dataclass
class RunConfig:
    data: dict
    base_dir: Path = Path(".")

    # -- construction -----------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - _TOP
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        ver = d.get("schema_version", SCHEMA_VERSION)
        if ver != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {ver} is not supported (expected {SCHEMA_VERSION})")
        cfg = cls(_merge(DEFAULTS, d), Path(base_dir))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def with_overrides(self, **sections) -> "RunConfig":
        return RunConfig.from_dict(_merge(self.data, sections), self.base_dir)

    def config_hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def _path(self, p) -> Path:
        p = Path(os.path.expanduser(str(p)))
        return p if p.is_absolute() else self.base_dir / p

    def validate(self):
        try:
            self.params()
            self.domain()
            g = self.data["grid"]
            build_grid(self.domain(), g["nx"], g["ny"], g.get("pad", 2.0))
            self.integrator()
            self.output_times()
            if not float(self.data["t_end"]) >= 0:
                raise ConfigError("t_end must be >= 0")
            for sec, key in (("forcing", "trace"), ("initial", "path")):
                ref = self.data[sec].get(key)
                if ref is not None and not self._path(ref).exists():
                    raise ConfigError(f"{sec}.{key} refers to a missing file: {ref}")
            if self.data["forcing"].get("kind") not in ("zero", "closed_form", "grid_series", "manufactured"):
                raise ConfigError(f"unknown forcing kind {self.data['forcing'].get('kind')!r}")
            if self.data["initial"].get("kind") not in (
                    "zero", "closed_form", "mode", "random", "bump", "manufactured", "checkpoint"):
                raise ConfigError(f"unknown initial kind {self.data['initial'].get('kind')!r}")
            if self.data["initial"]["kind"] == "manufactured" and self.data["forcing"]["kind"] != "manufactured":
                raise ConfigError("manufactured initial data need a manufactured forcing")
            for sec in ("forcing", "initial"):
                for k in ("expr", "solution"):
                    if k in self.data[sec]:
                        ClosedForm(self.data[sec][k])
        except ConfigError:
            raise
        except (GloryError, ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    # -- typed views ------------------------------------------------------------------

    def params(self) -> Parameters:
        p = self.data["params"]
        return Parameters(float(p["mu"]), float(p.get("alpha", 0.0)), float(p.get("beta", 0.0)))

    def domain(self) -> RectDomain:
        return RectDomain(self.data["domain"]["level"])

    @property
    def nx(self) -> int:
        return int(self.data["grid"]["nx"])

    @property
    def ny(self) -> int:
        return int(self.data["grid"]["ny"])

    @property
    def pad(self) -> float:
        return float(self.data["grid"].get("pad", 2.0))

    @property
    def t_end(self) -> float:
        return float(self.data["t_end"])

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(**self.data["integrator"])

    def output_times(self, t0: float = 0.0) -> np.ndarray:
        out = self.data["output"]
        t_end = float(self.data["t_end"])
        if "times" in out:
            ts = np.asarray(out["times"], dtype=float)
        else:
            dt = float(out.get("dt", t_end))
            if not dt > 0:
                raise ConfigError("output.dt must be positive")
            n = int(round((t_end - t0) / dt)) if t_end > t0 else 0
            ts = t0 + dt * np.arange(1, n + 1)
            if n and abs(ts[-1] - t_end) < 1e-9 * max(1.0, t_end):
                ts[-1] = t_end
        return ts[(ts > t0) & (ts <= t_end)]

    def manufactured_solution(self) -> ClosedForm | None:
        f = self.data["forcing"]
        if f.get("kind") == "manufactured":
            return ClosedForm(f["solution"])
        if self.data.get("exact_solution"):
            return ClosedForm(self.data["exact_solution"])
        return None

    def forcing(self) -> ForcingSpec:
        f = self.data["forcing"]
        n = f.get("mollification_index")
        kind = f.get("kind", "zero")
        if kind == "zero":
            return ForcingSpec.zero()
        if kind == "closed_form":
            return ForcingSpec.closed_form(f["expr"], n)
        if kind == "manufactured":
            spec = manufactured_forcing(f["solution"], self.params(),
                                        nonlinear=self.data["model"].get("nonlinear", True), domain=self.domain())
            return ForcingSpec.closed_form(spec.expr, n)
        series = GridSeries.from_trace(self._path(f["trace"]))
        if series.grid.domain != self.domain():
            raise ConfigError("grid-series forcing was recorded on another domain")
        return ForcingSpec.grid_series(series, n)

    def build_split(self) -> RhsSplit:
        m = self.data["model"]
        return build_rhs(self.params(), self.domain(), self.nx, self.ny, self.forcing(), pad=self.pad,
                         n_modes=self.data["grid"].get("n_modes"), nonlinear=m.get("nonlinear", True),
                         use_beta=m.get("beta_term", True))

    def initial(self):
        """``(t0, w0, E(u0))`` for the configured initial data."""
        ini = self.data["initial"]
        dom = self.domain()
        nx, ny = self.nx, self.ny
        kind = ini.get("kind", "zero")
        if kind == "zero":
            return 0.0, SpectralField.zeros(dom, nx, ny), 0.0
        if kind == "mode":
            f = SpectralField.unit(dom, nx, ny, int(ini.get("j", 1)), int(ini.get("m", 1)),
                                   float(ini.get("amplitude", 1.0)))
            return 0.0, f, 0.5 * f.norm() ** 2
        if kind == "random":
            rng = np.random.default_rng(int(ini.get("seed", 0)))
            lam = eigenvalues(dom, nx, ny)
            c = rng.standard_normal((nx, ny)) * np.exp(-float(ini.get("decay", 0.02)) * lam)
            e = float(ini.get("energy", 1.0))
            nrm = 0.5 * float(np.sum(c * c))
            c = c * np.sqrt(e / nrm) if nrm > 0 else c
            return 0.0, SpectralField(dom, c), e
        if kind == "checkpoint":
            from .trace import read_trace

            tr = read_trace(self._path(ini["path"]))
            fr = tr.frames[int(ini.get("frame", -1))]
            h = tr.header
            if h["level"] != dom.level:
                raise ConfigError("checkpoint was written on another domain")
            stored = SpectralField(dom, fr.coeffs)
            w = project_initial_data(stored, dom, nx, ny)
            return fr.t, w, 0.5 * w.norm() ** 2
        if kind == "bump":
            u0 = bump_function(ini.get("center", (0.0, 0.5)), ini.get("radii", (1.0, 0.4)),
                               ini.get("amplitude", 1.0))
            w = project_initial_data(u0, dom, nx, ny)
            return 0.0, w, _bump_energy(ini, u0)
        expr = ini["expr"] if kind == "closed_form" else self.data["forcing"]["solution"]
        cf = ClosedForm(expr)
        w = project_initial_data(cf, dom, nx, ny)
        uses_L = "L" in {s.name for s in cf.expr.free_symbols}
        e = strip_energy(cf, dom if uses_L else None)
        return 0.0, w, e


def _bump_energy(ini, u0):
    import scipy.integrate as sint

    x0, y0 = map(float, ini.get("center", (0.0, 0.5)))
    rx, ry = map(float, ini.get("radii", (1.0, 0.4)))
    lo, hi = max(0.0, y0 - ry), min(1.0, y0 + ry)
    val, _ = sint.dblquad(lambda y, x: float(u0(x, y)) ** 2, x0 - rx, x0 + rx, lo, hi,
                          epsabs=1e-14, epsrel=1e-12)
    return 0.5 * val


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return RunConfig.from_dict(data, base_dir=path.parent)
