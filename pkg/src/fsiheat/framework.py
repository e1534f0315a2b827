"""Hook-first simulator runtime."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import pluggy
import typer
from dotenv import load_dotenv
from loguru import logger

from fsiheat.hook_runtime import HookRuntime
from fsiheat.hookspecs import FSIHEAT_HOOK_NAMESPACE, FsiHeatHookSpecs

if TYPE_CHECKING:
    from fsiheat.config import RunConfig
    from fsiheat.constitutive import GasModel
    from fsiheat.coupling import RunResult, StudyReport
    from fsiheat.ledger import LedgerRow
    from fsiheat.manufactured import ManufacturedCase
    from fsiheat.trajectory import Frame


load_dotenv()


@dataclass(frozen=True)
class PluginStatus:
    is_success: bool
    detail: str | None = None


class SimulationFramework:
    """Framework core: plugins supply gas models, cases, commands and observers."""

    def __init__(self) -> None:
        self._plugin_manager = pluggy.PluginManager(FSIHEAT_HOOK_NAMESPACE)
        self._plugin_manager.add_hookspecs(FsiHeatHookSpecs)
        self._hook_runtime = HookRuntime(self._plugin_manager)
        self._plugin_status: dict[str, PluginStatus] = {}
        self.verbose = 0

    def _load_builtin_hooks(self) -> None:
        from fsiheat.builtin.hook_impl import BuiltinImpl

        impl = BuiltinImpl(self)

        try:
            self._plugin_manager.register(impl, name="builtin")
        except Exception as exc:
            self._plugin_status["builtin"] = PluginStatus(is_success=False, detail=str(exc))
        else:
            self._plugin_status["builtin"] = PluginStatus(is_success=True)

    def load_hooks(self) -> None:
        import importlib.metadata

        self._load_builtin_hooks()
        for entry_point in importlib.metadata.entry_points(group="fsiheat"):
            try:
                plugin = entry_point.load()
                if callable(plugin):  # Support entry points that are classes
                    plugin = plugin(self)
                self._plugin_manager.register(plugin, name=entry_point.name)
            except Exception as exc:
                logger.warning("plugin.load_failed name={} error={}", entry_point.name, exc)
                self._plugin_status[entry_point.name] = PluginStatus(is_success=False, detail=str(exc))
            else:
                self._plugin_status[entry_point.name] = PluginStatus(is_success=True)

    def register(self, plugin: Any, name: str) -> None:
        """Register an in-process plugin; it takes precedence over earlier ones."""
        self._plugin_manager.register(plugin, name=name)
        self._plugin_status[name] = PluginStatus(is_success=True)

    @property
    def plugin_status(self) -> dict[str, PluginStatus]:
        return dict(self._plugin_status)

    def create_cli_app(self) -> typer.Typer:
        """Create CLI app by collecting commands from hooks. Can be used for custom CLI entry point."""
        from fsiheat.utils import configure_logging

        app = typer.Typer(
            name="fsi-heat-sim",
            help="Heat-conducting compressible fluid coupled to a thermoelastic shell",
            add_completion=False,
        )

        @app.callback(invoke_without_command=True)
        def _main(
            ctx: typer.Context,
            verbose: int = typer.Option(0, "--verbose", "-v", count=True, help="Repeat for more log output"),
        ) -> None:
            self.verbose = verbose
            configure_logging(verbose)
            ctx.obj = self

        self._hook_runtime.call_many("register_cli_commands", app=app)
        return app

    def gas_model(self, config: RunConfig) -> GasModel | None:
        """Plugin-supplied gas model, or None for the configured prototype law."""
        return self._hook_runtime.call_first("provide_gas_model", config=config)

    def manufactured_cases(self) -> list[ManufacturedCase]:
        cases: list[ManufacturedCase] = []
        # call_many yields later plugins first; keep registration order so later ones shadow
        for batch in reversed(self._hook_runtime.call_many("provide_manufactured_cases")):
            cases.extend(batch or [])
        return cases

    def run(self, config: RunConfig, windows: int | None = None) -> RunResult:
        """Build and march one coupled run, forwarding every window to the on_window observers."""
        from fsiheat.coupling import build_problem, run_splitting

        def observe(row: LedgerRow, frame: Frame) -> None:
            self._hook_runtime.notify_window(row=row, state=frame)

        problem = build_problem(config, gas=self.gas_model(config))
        return run_splitting(problem, windows=windows, on_window=observe)

    def study(self, config: RunConfig, parameter: str, sweep: Sequence[float], threads: int) -> StudyReport:
        from fsiheat.coupling import continuation_study

        return continuation_study(config, parameter, sweep, threads=threads, gas=self.gas_model(config))

    def notify_error(self, stage: str, error: Exception, context: dict[str, Any] | None = None) -> None:
        self._hook_runtime.notify_error(stage=stage, error=error, context=context)

    def hook_report(self) -> dict[str, list[str]]:
        """Return hook implementation summary for diagnostics."""

        return self._hook_runtime.hook_report()
