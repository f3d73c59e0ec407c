"""Implicit-feedback recommenders with accuracy and popularity-bias measurement."""

__version__ = "0.1.0"

from .errors import (
    NumericalError,
    ParseError,
    PopBiasError,
    TuningError,
    UndefinedMetricError,
    ValidationError,
)

__all__ = [
    "NumericalError",
    "ParseError",
    "PopBiasError",
    "TuningError",
    "UndefinedMetricError",
    "ValidationError",
    "__version__",
]
