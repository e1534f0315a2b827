import pytest

from fsiheat.builtin.settings import SimSettings
from fsiheat.utils import exclude_none, log_level_for, parse_list, parse_number, parse_sweep, telemetry_handler


def test_exclude_none_keeps_non_none_values() -> None:
    payload = {"a": 1, "b": None, "c": "x", "d": False}
    assert exclude_none(payload) == {"a": 1, "c": "x", "d": False}


def test_parse_number_accepts_fractions() -> None:
    assert parse_number("1/32") == 1.0 / 32.0
    assert parse_number(" 0.25 ") == 0.25
    assert parse_number("5 / 3") == 5.0 / 3.0


def test_parse_sweep_splits_name_and_values() -> None:
    assert parse_sweep("k=0.5,0.35,0.25") == ("k", [0.5, 0.35, 0.25])
    assert parse_sweep("dt = 1/16, 1/32") == ("dt", [1.0 / 16.0, 1.0 / 32.0])


@pytest.mark.parametrize("text", ["0.5,0.25", "=0.5", "k=0.5,,0.25", "k=abc"])
def test_parse_sweep_rejects_malformed_text(text: str) -> None:
    with pytest.raises(ValueError):
        parse_sweep(text)


def test_parse_list_converts_every_item() -> None:
    assert parse_list("1, 2,3", int) == [1, 2, 3]


def test_log_level_follows_verbosity() -> None:
    assert log_level_for(0) == "WARNING"
    assert log_level_for(1) == "INFO"
    assert log_level_for(2) == "DEBUG"
    assert log_level_for(5) == "DEBUG"
    assert log_level_for(0, "error") == "ERROR"
    assert log_level_for(2, "ERROR") == "DEBUG"


def test_telemetry_handler_is_absent_unless_enabled() -> None:
    assert telemetry_handler(SimSettings(telemetry=False)) is None
