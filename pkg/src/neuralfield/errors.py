"""Exception types shared across the package."""


class NeuralFieldError(Exception):
    """Base class for all package errors."""


class ConfigError(NeuralFieldError, ValueError):
    """Invalid configuration, argument or shape mismatch."""


class DomainError(NeuralFieldError, ValueError):
    """Input coordinate outside the supported domain."""


class NumericError(NeuralFieldError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class FormatError(NeuralFieldError, ValueError):
    """Malformed or corrupted file contents."""
