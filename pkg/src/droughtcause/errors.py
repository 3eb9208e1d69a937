"""Exception hierarchy shared across the pipeline stages."""


class DroughtCauseError(Exception):
    """Base class for all package errors."""


class ConfigError(DroughtCauseError, ValueError):
    """Invalid or unknown configuration."""


class DataError(DroughtCauseError, ValueError):
    """Input data violates a documented format or precondition."""


class NumericalError(DroughtCauseError, ArithmeticError):
    """A numerical routine could not produce a usable result."""
