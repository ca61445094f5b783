"""Spectral Galerkin simulation and energy certification for a nonlocal
advection-diffusion model of roll-cloud flows on dyadic rectangles."""

from .basis import (
    GridField,
    QuadraturePlan,
    SpectralField,
    analyze,
    derivative_fields,
    eigenpair,
    eigenvalues,
    mode_table,
    synthesize,
)
from .config import RunConfig, load_config
from .diagnostics import (
    apriori_monitor,
    certify_energy_u,
    certify_energy_w,
    divergence_check,
    energy,
    reconstruct_v,
    test_function_library,
    weak_residual,
    weak_residual_u,
)
from .domain import GridSpec, Parameters, RectDomain, build_domain, build_grid, derive_gamma
from .errors import *  # noqa: F401,F403
from .expr import ClosedForm
from .forcing import (
    ForcingSpec,
    GridSeries,
    MollifierConfig,
    evaluate_K,
    forcing_budget,
    manufactured_forcing,
    mollify,
)
from .galerkin import beta_coupling_matrix, build_rhs, nonlinear_term, project_initial_data, rhs
from .harness import convergence_study, run, semiflow_test
from .nonlocal_op import TMethod, apply_T, apply_Tdx, check_norm_bound
from .timestepper import IntegratorConfig, Method, SolverState, Status, from_u, integrate, solve, step, to_u

__version__ = "0.1.0"
