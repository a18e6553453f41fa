"""Exception types raised across the package."""


class KnowSRError(Exception):
    """Base class for all package errors."""


class DimensionError(KnowSRError, ValueError):
    """Array shapes do not line up."""


class ParameterError(KnowSRError, ValueError):
    """A scalar hyperparameter is outside its valid range."""


class DomainError(KnowSRError, ValueError):
    """Input violates a mathematical precondition (e.g. absolute continuity)."""


class NumericError(KnowSRError, ArithmeticError):
    """A non-finite value appeared in a loss or gradient."""


class StateError(KnowSRError, RuntimeError):
    """Operation is not valid in the current environment state."""


class InsufficientDataError(KnowSRError, ValueError):
    """Not enough stored transitions to satisfy a request."""


class ConfigError(KnowSRError, ValueError):
    """Invalid or inconsistent configuration."""
