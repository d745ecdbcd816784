"""Exception hierarchy shared across the package."""


class AopuError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AopuError, ValueError):
    """An argument violates a documented precondition."""


class NumericalError(AopuError, RuntimeError):
    """A numerical routine failed (e.g. a decomposition did not converge)."""


class DivergenceError(NumericalError):
    """Training produced a non-finite loss or gradient.

    Carries the rank ratio of the offending batch so that failed runs can be
    attributed to low-RR regimes.
    """

    def __init__(self, message, rank_ratio=None):
        super().__init__(message)
        self.rank_ratio = rank_ratio


class UndefinedConditionalError(InvalidInputError):
    """A conditional expectation was requested at a zero-probability point."""


class ConstantTargetError(InvalidInputError):
    """R-squared is undefined because the target series is constant."""
