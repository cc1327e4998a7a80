"""
Exception hierarchy shared by every core module.

Each error carries the exit code the command-line interface returns for it.
"""


class SeisLocError(Exception):
    """Base class for all errors raised by the inversion package."""

    exit_code = 1


class ConfigError(SeisLocError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class GridFormatError(SeisLocError, ValueError):
    """Malformed grid, model or spectra file."""

    exit_code = 2


class DimensionMismatchError(SeisLocError, ValueError):
    """Array lengths do not match the grid or the operator."""


class NonFiniteError(SeisLocError, ValueError):
    """NaN or infinite values where finite values are required."""


class SolverError(SeisLocError):
    """A linear solve could not be completed."""

    exit_code = 3


class FactorizationError(SolverError):
    """Sparse factorization failed or the matrix is not Hermitian positive definite."""

    def __init__(self, message, pivot_index=None, pivot_value=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class IterativeSolverError(SolverError):
    """Conjugate gradient did not reach the requested tolerance."""


class SingularBlockError(SolverError):
    """The event block of the augmented system is rank deficient."""


class EmptyPickSetError(SeisLocError):
    """The peak finder found no event above threshold."""
