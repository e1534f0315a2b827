from __future__ import annotations

import os
import pathlib
from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict, YamlConfigSettingsSource

DEFAULT_HOME = pathlib.Path.home() / ".fsiheat"
DEFAULT_CONFIG_FILE = DEFAULT_HOME / "config.yml"


class SimSettings(BaseSettings):
    """Process-wide settings of the simulator, separate from the per-run configuration file."""

    model_config = SettingsConfigDict(env_prefix="FSI_HEAT_", env_parse_none_str="null", extra="ignore")
    home: pathlib.Path = Field(default=DEFAULT_HOME)
    threads: int = Field(default=1, ge=1, description="Upper bound on worker threads for study and mms.")
    log_level: Literal["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"] | None = None
    verbose: int = Field(default=0, description="Verbosity level for logging. Higher means more verbose.", ge=0, le=2)
    telemetry: bool = Field(default=False, description="Forward log events to logfire when the extra is installed.")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        home = os.getenv("FSI_HEAT_HOME", str(DEFAULT_HOME))
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            YamlConfigSettingsSource(settings_cls, yaml_file=pathlib.Path(home) / "config.yml"),
            file_secret_settings,
        )

    def worker_count(self, jobs: int) -> int:
        return max(1, min(self.threads, jobs))


@lru_cache(maxsize=1)
def load_settings() -> SimSettings:
    return SimSettings()
