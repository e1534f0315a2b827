"""Pluggy hook namespace and simulator hook specifications."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

import pluggy

if TYPE_CHECKING:
    from fsiheat.config import RunConfig
    from fsiheat.constitutive import GasModel
    from fsiheat.ledger import LedgerRow
    from fsiheat.manufactured import ManufacturedCase
    from fsiheat.trajectory import Frame

FSIHEAT_HOOK_NAMESPACE = "fsiheat"
hookspec = pluggy.HookspecMarker(FSIHEAT_HOOK_NAMESPACE)
hookimpl = pluggy.HookimplMarker(FSIHEAT_HOOK_NAMESPACE)


class FsiHeatHookSpecs:
    """Hook contract for simulator extensions."""

    @hookspec
    def register_cli_commands(self, app: Any) -> None:
        """Register CLI commands onto the root Typer application."""

    @hookspec(firstresult=True)
    def provide_gas_model(self, config: RunConfig) -> GasModel:
        """Provide the gas model of a run; the configured prototype law is the fallback."""
        raise NotImplementedError

    @hookspec
    def provide_manufactured_cases(self) -> list[ManufacturedCase]:
        """Provide manufactured-solution cases for the `mms` command.

        Cases from later plugins shadow earlier ones with the same name.
        """
        raise NotImplementedError

    @hookspec
    def on_window(self, row: LedgerRow, state: Frame) -> None:
        """Observe the ledger row and end state of each completed window."""

    @hookspec
    def on_error(self, stage: str, error: Exception, context: dict[str, Any] | None) -> None:
        """Observe framework errors from any stage."""
