"""Exception types raised across the package."""

from __future__ import annotations

from typing import Any, Sequence


class PdesclError(ValueError):
    """Base class for every error raised on purpose by this package."""


class DimensionError(PdesclError):
    pass


class NonFiniteError(PdesclError):
    """A value that must be finite was NaN or infinite.

    ``index`` and ``point`` name the offending batch entry when known.
    """

    def __init__(self, message: str, index: int | None = None, point: Any = None):
        if index is not None:
            message = f"{message} (batch index {index}, point {_fmt_point(point)})"
        super().__init__(message)
        self.index = index
        self.point = point


class CoefficientError(PdesclError):
    pass


class BoundaryPointError(PdesclError):
    pass


class NoOracleError(PdesclError):
    pass


class SamplerError(PdesclError):
    pass


class TrainingAborted(PdesclError):
    """Training stopped by a guardrail; ``diagnostics`` holds the state at abort."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(PdesclError):
    """Configuration rejected; ``issues`` lists every violation found."""

    def __init__(self, issues: Sequence[str]):
        self.issues = list(issues)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {i}" for i in self.issues))


def _fmt_point(point: Any) -> str:
    try:
        return "(" + ", ".join(f"{float(v):.6g}" for v in point) + ")"
    except TypeError:
        return repr(point)
