"""Exception types shared across the package."""


class SodaError(Exception):
    """Base class for all package errors."""


class ShapeError(SodaError, ValueError):
    """Operand shapes are incompatible with an operation."""


class DomainError(SodaError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigError(SodaError, ValueError):
    """Invalid configuration or hyper-parameter combination."""


class NonFiniteError(SodaError, FloatingPointError):
    """A gradient or loss term contains NaN or Inf."""


class CheckpointError(SodaError, ValueError):
    """A checkpoint file is malformed or incompatible."""
