"""Exception hierarchy. The CLI maps each family onto an exit code."""


class SemiAdaptError(Exception):
    """Base class for all package errors."""


class ConfigError(SemiAdaptError, ValueError):
    """Invalid configuration value or inconsistent settings."""


class DimensionError(SemiAdaptError, ValueError):
    """Array or vector length does not match what the model expects."""


class InputError(SemiAdaptError, ValueError):
    """Bad data: NaN values, empty datasets, unusable files."""


class ParseError(InputError):
    """Malformed model, trajectory or config file."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class StreamError(InputError):
    """Measurement stream violates ordering requirements."""


class NumericalError(SemiAdaptError, ArithmeticError):
    """Numerical breakdown (non-finite values, degenerate denominators)."""
