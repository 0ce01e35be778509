"""Exception types shared across the package."""


class MeanFieldError(Exception):
    """Base class for all package errors."""


class ModelError(MeanFieldError, ValueError):
    """Invalid lattice model parameters or inconsistent model data."""


class BasisMismatchError(MeanFieldError, ValueError):
    """Operands live on incompatible bases or spaces."""


class BudgetError(MeanFieldError):
    """A computation would exceed a configured size guard.

    ``guard`` names the guard that refused the request.
    """

    def __init__(self, guard, message):
        super().__init__(f"{guard}: {message}")
        self.guard = guard


class ConvergenceError(MeanFieldError, RuntimeError):
    """An iterative method failed to reach its tolerance."""
