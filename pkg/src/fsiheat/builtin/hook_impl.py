from __future__ import annotations

from typing import Any

import typer
from loguru import logger

from fsiheat.config import RunConfig
from fsiheat.constitutive import GasModel
from fsiheat.framework import SimulationFramework
from fsiheat.hookspecs import hookimpl
from fsiheat.ledger import LedgerRow
from fsiheat.manufactured import ManufacturedCase, builtin_cases
from fsiheat.trajectory import Frame


class BuiltinImpl:
    """Default hook implementations: the prototype gas, the shipped cases and the CLI."""

    def __init__(self, framework: SimulationFramework) -> None:
        self.framework = framework

    @hookimpl
    def register_cli_commands(self, app: typer.Typer) -> None:
        from fsiheat.builtin import cli

        app.command("run")(cli.run)
        app.command("study")(cli.study)
        app.command("mms")(cli.mms)
        app.command("check")(cli.check)
        app.command("validate-model")(cli.validate_model)
        app.command("hooks", hidden=True)(cli.list_hooks)

    @hookimpl
    def provide_gas_model(self, config: RunConfig) -> GasModel:
        return config.gas_model()

    @hookimpl
    def provide_manufactured_cases(self) -> list[ManufacturedCase]:
        return builtin_cases()

    @hookimpl
    def on_window(self, row: LedgerRow, state: Frame) -> None:
        logger.debug("window.done index={} time={:.5f} slack={:.3e}", row.window, state.time, row.slack)

    @hookimpl
    def on_error(self, stage: str, error: Exception, context: dict[str, Any] | None) -> None:
        logger.error(
            "sim.error stage={} kind={} error={} context={}", stage, type(error).__name__, error, context or {}
        )
