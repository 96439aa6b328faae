"""Exception types shared across the package."""


class AlignKinError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AlignKinError, ValueError):
    """Inconsistent inputs: grid mismatch, missing fields, bad history span."""


class DomainError(AlignKinError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class NumericalError(AlignKinError, ArithmeticError):
    """A solver produced NaN/Inf or exceeded a clipping budget."""


class AbsorbingState(AlignKinError):
    """The stochastic process has no enabled reaction channel."""
