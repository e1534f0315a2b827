from __future__ import annotations

import sys
from collections.abc import Callable
from fractions import Fraction
from typing import TYPE_CHECKING, Any

from loguru import logger

if TYPE_CHECKING:
    from fsiheat.builtin.settings import SimSettings

_LEVELS = ("WARNING", "INFO", "DEBUG")


def exclude_none(d: dict[str, Any]) -> dict[str, Any]:
    """Exclude None values from a dictionary."""
    return {k: v for k, v in d.items() if v is not None}


def log_level_for(verbose: int, default: str | None = None) -> str:
    """`-v` count to a loguru level; an explicit default wins when nothing was asked for."""
    if verbose <= 0 and default:
        return default.upper()
    return _LEVELS[min(max(verbose, 0), len(_LEVELS) - 1)]


def telemetry_handler(settings: SimSettings) -> dict[str, Any] | None:
    """Loguru handler that forwards run events to logfire, when enabled and installed."""
    if not settings.telemetry:
        return None
    try:
        import logfire
    except ImportError:
        logger.warning("telemetry.unavailable reason=logfire is not installed")
        return None
    logfire.configure(service_name="fsi-heat-sim", send_to_logfire="if-token-present", console=False)
    return dict(logfire.loguru_handler())


def configure_logging(verbose: int = 0) -> None:
    from fsiheat.builtin.settings import load_settings

    settings = load_settings()
    level = log_level_for(verbose or settings.verbose, settings.log_level)
    logger.remove()
    logger.add(sys.stderr, level=level, format="{time:HH:mm:ss} | {level: <7} | {message}")
    handler = telemetry_handler(settings)
    if handler is not None:
        logger.add(**handler)


def parse_number(text: str) -> float:
    """A float or a p/q fraction."""
    text = text.strip()
    if "/" in text:
        return float(Fraction(text.replace(" ", "")))
    return float(text)


def parse_list[T](text: str, convert: Callable[[str], T]) -> list[T]:
    """Comma-separated values; empty items are rejected."""
    items = [item.strip() for item in text.split(",")]
    if any(not item for item in items):
        raise ValueError(f"empty item in {text!r}")
    return [convert(item) for item in items]


def parse_sweep(text: str) -> tuple[str, list[float]]:
    """`name=v1,v2,...` as used by `study --sweep`."""
    name, sep, values = text.partition("=")
    if not sep or not name.strip():
        raise ValueError(f"expected name=v1,v2,..., got {text!r}")
    return name.strip(), parse_list(values, parse_number)
