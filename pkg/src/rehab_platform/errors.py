class PlatformError(Exception):
    """Base class for domain errors raised by this package."""


class WorkspaceError(PlatformError, ValueError):
    """A pose, length or reference lies outside the mechanical workspace."""


class ConvergenceError(PlatformError, ArithmeticError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, residual_norm=float("nan"), iterations=0):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations


class SingularityError(PlatformError, ArithmeticError):
    """A matrix or configuration is singular (or numerically close to it)."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition
