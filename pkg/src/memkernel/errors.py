"""Exception hierarchy shared by every module.

Each class carries the process exit code the command-line front end maps it to.
"""


class MemkernelError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ShapeError(MemkernelError, ValueError):
    """Sample arrays do not match the grid they are paired with."""

    exit_code = 2


class ConfigurationError(MemkernelError, ValueError):
    """Invalid grid, rule, or configuration value."""

    exit_code = 2


class AdmissibilityError(MemkernelError, ValueError):
    """Coefficients or measurement weights violate a structural requirement."""

    exit_code = 2


class UnsupportedFamilyError(MemkernelError, ValueError):
    """Operation is only defined for a particular coefficient family."""

    exit_code = 2


class DataError(MemkernelError, ValueError):
    """Problem data are missing a required ingredient."""

    exit_code = 2


class DegeneracyError(MemkernelError, ArithmeticError):
    """A quantity that must stay away from zero (a divisor profile) vanishes."""

    exit_code = 4


class SolvabilityError(MemkernelError, ArithmeticError):
    """A scalar normalisation constant is zero within tolerance."""

    exit_code = 5


class ConvergenceError(MemkernelError, RuntimeError):
    """An iteration failed to reach its tolerance."""

    exit_code = 6

    def __init__(self, message: str, contraction_factor: float | None = None):
        super().__init__(message)
        self.contraction_factor = contraction_factor


class SolverError(MemkernelError, RuntimeError):
    """A linear system could not be solved."""

    exit_code = 6
