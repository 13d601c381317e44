"""Exception types shared across the package."""


class DegeneratePointError(ValueError):
    """Electronic eigenvectors are undefined: the gap vanishes at this point."""


class SolverFailureError(RuntimeError):
    """Eigensolver did not reach the requested residual tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EmptyEventsError(ValueError):
    """No re-initialization events were found on the trajectory."""


class InsufficientDataError(ValueError):
    """Too few samples to compute the requested statistic."""


class NumericalUnderflowError(ArithmeticError):
    """A norm collapsed below representable range."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
