"""Exception types. Each maps to a CLI exit code in :mod:`hompvar.cli`."""


class HompvarError(Exception):
    """Base class."""


class DomainError(HompvarError, ValueError):
    """An argument lies outside the domain of the operation."""


class DivergenceError(DomainError):
    """The requested constant is infinite (integral diverges)."""


class ConfigurationError(HompvarError, ValueError):
    """An experiment or simulation configuration is invalid or too expensive."""


class NumericalError(HompvarError, ArithmeticError):
    """A computation produced a non-finite or inaccurate result."""
