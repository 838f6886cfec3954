"""Constrained-learning PDE surrogates trained against worst-case losses."""

from .errors import (
    BoundaryPointError,
    CoefficientError,
    ConfigError,
    DimensionError,
    NoOracleError,
    NonFiniteError,
    PdesclError,
    SamplerError,
    TrainingAborted,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryPointError",
    "CoefficientError",
    "ConfigError",
    "DimensionError",
    "NoOracleError",
    "NonFiniteError",
    "PdesclError",
    "SamplerError",
    "TrainingAborted",
    "__version__",
]
