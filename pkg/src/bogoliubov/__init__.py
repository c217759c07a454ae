"""Ground states of the zero-temperature Bogoliubov energy functional on a radial momentum grid."""

from .functional import (
    DomainError,
    EnergyBreakdown,
    State,
    densities,
    derivatives,
    energy,
    load_state,
    pure_gamma_of_alpha,
    pure_gradient,
    pure_state,
    save_state,
    vacuum,
)
from .grid import ConvolutionKernel, RadialGrid, apply_kernel, build_grid, build_kernel, integrate
from .potential import AdmissibilityError, PotentialSpec, check_admissible, derived_constants, vhat_eval
from .solver import (
    SolverConfig,
    SolverReport,
    kappa_sweep,
    minimize,
    minimize_fixed_density,
    minimize_restricted,
    mu_sweep,
)
from .verify import VerificationReport, run_suite

__all__ = [
    "AdmissibilityError", "ConvolutionKernel", "DomainError", "EnergyBreakdown", "PotentialSpec",
    "RadialGrid", "SolverConfig", "SolverReport", "State", "VerificationReport", "apply_kernel",
    "build_grid", "build_kernel", "check_admissible", "densities", "derivatives", "derived_constants",
    "energy", "integrate", "kappa_sweep", "load_state", "minimize", "minimize_fixed_density",
    "minimize_restricted", "mu_sweep", "pure_gamma_of_alpha", "pure_gradient", "pure_state", "run_suite",
    "save_state", "vacuum", "vhat_eval",
]
