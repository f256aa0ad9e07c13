"""Exception hierarchy shared by all ssadt modules."""


class SsadtError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SsadtError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(SsadtError, ArithmeticError):
    """A computation overflowed or produced a non-finite result."""


class ConditioningError(NumericalError):
    """An information matrix is singular or not positive definite."""

    def __init__(self, message, plan=None):
        super().__init__(message)
        self.plan = plan


class InfeasibleBudgetError(SsadtError):
    """The budget admits no test plan with n >= 1, f >= 1 and M >= 2."""


class UnsupportedConfigurationError(SsadtError):
    """The requested configuration is outside what is implemented (e.g. m != 2)."""


class OptimizationFailure(SsadtError):
    """No optimizer start converged. ``best`` carries the best point found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(SsadtError):
    """A configuration file is malformed or fails schema validation."""
