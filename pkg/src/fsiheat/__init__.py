"""Heat-conducting compressible fluid coupled to a thermoelastic shell."""

from fsiheat.framework import SimulationFramework
from fsiheat.hookspecs import hookimpl

__all__ = ["SimulationFramework", "hookimpl"]
__version__ = "0.1.0"
