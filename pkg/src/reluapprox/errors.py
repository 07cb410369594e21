"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(ValueError):
    """Array dimensions do not match what the operation expects."""


class InvalidInputError(ValueError):
    """A network or spec violates the precondition of a transformation."""


class UseMonteCarloError(ValueError):
    """Tensor quadrature was requested for a dimension it does not support."""


class IntegrationError(RuntimeError):
    """Adaptive quadrature failed to reach its tolerance."""

    def __init__(self, message, achieved_tolerance):
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class SolverError(RuntimeError):
    """The regularized least-squares system could not be factorized."""


class BudgetInfeasibleError(RuntimeError):
    """A builder could not meet its error budget within its resource caps."""

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved
