"""Exception types shared across the package."""


class PopBiasError(Exception):
    """Base class for every error this package raises on purpose."""


class ValidationError(PopBiasError):
    """Bad input data, configuration, or arguments."""


class ParseError(ValidationError):
    """A data file failed to parse; the message carries the line number."""


class UndefinedMetricError(PopBiasError):
    """The requested metric is undefined for the given inputs."""


class NumericalError(PopBiasError):
    """Non-finite values or a failed numerical routine."""


class TuningError(PopBiasError):
    """Every grid point failed during hyperparameter tuning."""
