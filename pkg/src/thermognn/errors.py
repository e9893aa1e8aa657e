class ThermoGNNError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(ThermoGNNError, ValueError):
    """Shapes, dimensions or settings that cannot work together."""


class ValidationError(ThermoGNNError, ValueError):
    """Input data that violates a container invariant."""


class NumericError(ThermoGNNError, FloatingPointError):
    """A computation produced NaN or Inf."""
