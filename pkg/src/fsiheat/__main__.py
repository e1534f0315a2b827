"""Entry point of ``fsi-heat-sim``; ``python -m fsiheat`` runs the same app."""

from __future__ import annotations

import typer
from loguru import logger

from fsiheat.framework import SimulationFramework

SIMULATOR_COMMANDS = ("run", "study", "mms", "check", "validate-model")


def create_cli_app() -> typer.Typer:
    """Collect the commands of every loaded plugin; warn when one of the simulator commands is absent."""
    framework = SimulationFramework()
    framework.load_hooks()
    app = framework.create_cli_app()
    registered = {info.name for info in app.registered_commands}
    missing = [name for name in SIMULATOR_COMMANDS if name not in registered]
    if missing:
        logger.warning("cli.commands_missing names={}", missing)
    return app


app = create_cli_app()

if __name__ == "__main__":
    app()
