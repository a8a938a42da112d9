"""Identification of radial memory kernels in heat equations with memory on spherical shells."""

from .coefficients import (
    CoefficientSpec,
    build_coefficients,
    conormal_vector,
    ellipticity_bounds,
    radial_trace,
    spherical_rep,
    trace_profile,
)
from .errors import (
    AdmissibilityError,
    ConfigurationError,
    ConvergenceError,
    DataError,
    DegeneracyError,
    MemkernelError,
    ShapeError,
    SolvabilityError,
    SolverError,
    UnsupportedFamilyError,
)
from .forward import ForwardProblem, SpaceTimeField, manufacture, solve_forward
from .functionals import MeasurementSpec, U0Data, j_quantities, phi1_apply, phi_apply, psi1_apply, psi_apply
from .grid import AngularGrid, RadialGrid, ShellGrid, TimeGrid, integrate
from .inverse_radial import RadialInverseInput, identify
from .kernel_init import ProblemData, compute_k0, initial_hq, validate_consistency
from .reduction import ReductionState, picard_update, source_profiles

__all__ = [
    "AdmissibilityError",
    "AngularGrid",
    "CoefficientSpec",
    "ConfigurationError",
    "ConvergenceError",
    "DataError",
    "DegeneracyError",
    "ForwardProblem",
    "MeasurementSpec",
    "MemkernelError",
    "ProblemData",
    "RadialGrid",
    "RadialInverseInput",
    "ReductionState",
    "ShapeError",
    "ShellGrid",
    "SolvabilityError",
    "SolverError",
    "SpaceTimeField",
    "TimeGrid",
    "U0Data",
    "UnsupportedFamilyError",
    "build_coefficients",
    "compute_k0",
    "conormal_vector",
    "ellipticity_bounds",
    "identify",
    "initial_hq",
    "integrate",
    "j_quantities",
    "manufacture",
    "phi1_apply",
    "phi_apply",
    "picard_update",
    "psi1_apply",
    "psi_apply",
    "radial_trace",
    "solve_forward",
    "source_profiles",
    "spherical_rep",
    "trace_profile",
    "validate_consistency",
]
