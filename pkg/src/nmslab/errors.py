"""Exception hierarchy shared by every module."""

from __future__ import annotations


class NmsError(Exception):
    """Base class for all library errors."""

    kind = "error"

    def to_record(self) -> dict:
        return {"kind": self.kind, "message": str(self)}


class ConfigurationError(NmsError):
    kind = "configuration"


class CapacityError(NmsError):
    kind = "capacity"


class ParameterError(NmsError):
    kind = "parameter"


class UsageError(NmsError):
    kind = "usage"


class NumericError(NmsError):
    kind = "numeric"

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def to_record(self) -> dict:
        rec = super().to_record()
        rec["diagnostics"] = {k: _plain(v) for k, v in self.diagnostics.items()}
        return rec


class IterationLimitError(NumericError):
    kind = "iteration_limit"

    def __init__(self, message: str, residual: float, iterations: int, **extra):
        super().__init__(message, {"residual": residual, "iterations": iterations, **extra})
        self.residual = residual
        self.iterations = iterations


class ConfigParseError(ConfigurationError):
    kind = "parse"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column

    def to_record(self) -> dict:
        rec = super().to_record()
        rec["line"] = self.line
        rec["column"] = self.column
        return rec


def check_s(s: float) -> float:
    s = float(s)
    if not (0.0 < s < 1.0):
        raise ParameterError(f"s must lie in (0, 1), got {s}")
    return s


def _plain(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return str(v)
