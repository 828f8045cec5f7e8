"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad grid, rule, or flag values."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class BracketError(ValueError):
    """Root bracket does not enclose a sign change."""


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted before reaching tolerance.

    Carries the best estimate so callers can degrade gracefully.
    """

    def __init__(self, message: str, best_estimate: float | None = None):
        super().__init__(message)
        self.best_estimate = best_estimate
