"""Error hierarchy shared by solvers, diagnostics and the CLI."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Any


class FsiHeatError(Exception):
    """Base class for every error raised by fsiheat."""


class DomainError(FsiHeatError, ValueError):
    """An input lies outside the domain of a function (negative density, point outside the tube, ...)."""


class GeometryDegeneracyError(FsiHeatError):
    """The deformed configuration lost injectivity or its Jacobian became singular."""

    def __init__(self, message: str, *, margin: float | None = None, window: int | None = None) -> None:
        super().__init__(message)
        self.margin = margin
        self.window = window


class ConfigError(FsiHeatError, ValueError):
    """Run configuration could not be parsed or violates a hypothesis."""

    def __init__(self, message: str, *, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(FsiHeatError, ValueError):
    """Inputs violate a precondition; `offending` lists what was rejected."""

    def __init__(self, message: str, offending: Sequence[Any] = ()) -> None:
        self.offending = list(offending)
        detail = f" (offending: {self.offending[:8]}{' ...' if len(self.offending) > 8 else ''})" if offending else ""
        super().__init__(f"{message}{detail}")


class SolverError(FsiHeatError, RuntimeError):
    """A sub-solver failed; `window` is the time window index when known."""

    def __init__(self, message: str, *, window: int | None = None) -> None:
        self.window = window
        super().__init__(f"window {window}: {message}" if window is not None else message)


class OutputError(FsiHeatError):
    """Writing or reading a result file failed; `path` names the file."""

    def __init__(self, message: str, *, path: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")
