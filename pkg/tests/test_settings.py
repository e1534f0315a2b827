from __future__ import annotations

from pathlib import Path
from unittest.mock import patch

import pydantic
import pytest

from fsiheat.builtin.settings import SimSettings, load_settings


def _settings_with_env(env: dict[str, str]) -> SimSettings:
    with patch.dict("os.environ", env, clear=True):
        return SimSettings()


def _write_config(home: Path, content: str) -> None:
    home.mkdir(parents=True, exist_ok=True)
    (home / "config.yml").write_text(content, encoding="utf-8")


def test_settings_defaults() -> None:
    settings = _settings_with_env({"FSI_HEAT_HOME": "/nonexistent-fsiheat-home"})

    assert settings.threads == 1
    assert settings.verbose == 0
    assert settings.log_level is None


def test_threads_env_var_caps_workers() -> None:
    settings = _settings_with_env({"FSI_HEAT_THREADS": "3", "FSI_HEAT_HOME": "/nonexistent-fsiheat-home"})

    assert settings.threads == 3
    assert settings.worker_count(8) == 3
    assert settings.worker_count(2) == 2
    assert settings.worker_count(0) == 1


def test_threads_must_be_positive() -> None:
    with pytest.raises(pydantic.ValidationError):
        _settings_with_env({"FSI_HEAT_THREADS": "0", "FSI_HEAT_HOME": "/nonexistent-fsiheat-home"})


def test_log_level_can_be_disabled() -> None:
    settings = _settings_with_env({"FSI_HEAT_LOG_LEVEL": "null", "FSI_HEAT_HOME": "/nonexistent-fsiheat-home"})

    assert settings.log_level is None


def test_settings_load_values_from_yaml(tmp_path: Path) -> None:
    _write_config(
        tmp_path,
        """
threads: 4
log_level: DEBUG
verbose: 1
""".strip(),
    )

    with patch.dict("os.environ", {"FSI_HEAT_HOME": str(tmp_path)}, clear=True):
        settings = SimSettings()

    assert settings.threads == 4
    assert settings.log_level == "DEBUG"
    assert settings.verbose == 1


def test_env_settings_override_yaml(tmp_path: Path) -> None:
    _write_config(tmp_path, "threads: 4\nlog_level: DEBUG\n")

    with patch.dict(
        "os.environ",
        {"FSI_HEAT_HOME": str(tmp_path), "FSI_HEAT_THREADS": "2", "FSI_HEAT_LOG_LEVEL": "INFO"},
        clear=True,
    ):
        settings = SimSettings()

    assert settings.threads == 2
    assert settings.log_level == "INFO"


def test_load_settings_reads_yaml_from_fsiheat_home(tmp_path: Path) -> None:
    _write_config(tmp_path, "threads: 6\n")

    load_settings.cache_clear()
    try:
        with patch.dict("os.environ", {"FSI_HEAT_HOME": str(tmp_path)}, clear=True):
            settings = load_settings()
    finally:
        load_settings.cache_clear()

    assert settings.threads == 6
