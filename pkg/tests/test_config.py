from __future__ import annotations

from pathlib import Path

import pytest

from fsiheat.config import RunConfig, echo_config, load_config, parse_config
from fsiheat.errors import ConfigError


def _echo_values(config: RunConfig) -> dict[str, str]:
    lines = echo_config(config).splitlines()
    return dict(line.split(" = ", 1) for line in lines)


def test_empty_text_gives_all_defaults() -> None:
    config = parse_config("")

    assert config == RunConfig()
    assert config.approx.dt == 1.0 / 32.0
    assert config.fluid.nx == 64
    assert config.shell.modes == 32
    assert config.coupling.trace_sampling == "final"
    assert config.geometry.plateau == pytest.approx((-0.45, -0.35, 0.35, 0.45))


def test_comments_and_blank_lines_are_ignored() -> None:
    config = parse_config(
        """
        # a comment line

        fluid.nx = 32   # trailing comment
        approx.dt = 1/64
        """
    )

    assert config.fluid.nx == 32
    assert config.approx.dt == 1.0 / 64.0


def test_k_half_echoes_the_derived_floors() -> None:
    values = _echo_values(parse_config("approx.k = 0.5"))

    assert float(values["derived.eta"]) == 1.0 / 256.0
    assert float(values["derived.omega"]) == 0.25
    assert float(values["derived.nu"]) == 0.25
    assert float(values["derived.lambda"]) == 0.5


def test_echo_lists_every_key_and_the_horizon() -> None:
    config = parse_config("coupling.windows = 8\napprox.dt = 1/16\nshell.thermal_coupling = false")
    values = _echo_values(config)

    assert values["coupling.windows"] == "8"
    assert values["shell.thermal_coupling"] == "false"
    assert values["geometry.lower_outer"] == repr(-0.5 + 0.05)
    assert float(values["derived.horizon"]) == 0.5
    for section in RunConfig.model_fields:
        model = getattr(config, section)
        for name in type(model).model_fields:
            assert f"{section}.{name}" in values


def test_echo_parses_back_to_the_same_echo() -> None:
    config = parse_config("approx.k = 0.35\ngeometry.chart = ellipse\ninitial.swirl = 0.2\nfluid.kernel_radius = 2")
    echoed = "\n".join(line for line in echo_config(config).splitlines() if not line.startswith("derived."))

    assert echo_config(parse_config(echoed)) == echo_config(config)


def test_geometry_r_alias() -> None:
    assert parse_config("geometry.R = 1.5").geometry.radius == 1.5


@pytest.mark.parametrize(
    ("text", "line"),
    [
        ("fluid.nx = 32\nfluid.bogus = 1", 2),
        ("\n\nnosection = 3", 3),
        ("madeup.key = 1", 1),
        ("fluid.nx 32", 1),
        ("fluid.nx = ", 1),
        ("fluid.nx = 32\n# comment\nfluid.nx = 16", 3),
        ("approx.delta = 1.5", 1),
        ("fluid.nx = many", 1),
    ],
)
def test_parse_errors_carry_the_line_number(text: str, line: int) -> None:
    with pytest.raises(ConfigError) as excinfo:
        parse_config(text)

    assert excinfo.value.line == line
    assert f"line {line}" in str(excinfo.value)


def test_undamped_shell_rejected_for_prototype_gamma() -> None:
    with pytest.raises(ConfigError, match="α₁ \\+ α₂ > 0"):
        parse_config("shell.alpha1 = 0\nshell.alpha2 = 0")


def test_undamped_shell_admitted_above_twelve_sevenths() -> None:
    config = parse_config("shell.alpha1 = 0\nshell.alpha2 = 0\ngas.gamma = 2")

    assert config.boundary_damping


def test_plateau_ordering_is_checked() -> None:
    with pytest.raises(ConfigError, match="plateau"):
        parse_config("geometry.lower_inner = 0.1")


def test_modes_must_fit_the_gamma_nodes() -> None:
    with pytest.raises(ConfigError, match="n_gamma"):
        parse_config("geometry.n_gamma = 16\nshell.modes = 8")


def test_strip_width_lower_bound() -> None:
    with pytest.raises(ConfigError, match="strip_k"):
        parse_config("diagnostics.strip_k = 1.5")


def test_with_parameter_updates_one_sweepable_key() -> None:
    config = RunConfig()

    assert config.with_parameter("k", 0.25).approx.k == 0.25
    assert config.with_parameter("delta", 0.05).approx.delta == 0.05
    assert config.with_parameter("dt", 1.0 / 64.0).approx.dt == 1.0 / 64.0
    with pytest.raises(ConfigError, match="cannot sweep"):
        config.with_parameter("beta", 5.0)


def test_config_models_build_gas_and_transport() -> None:
    config = parse_config("gas.gamma = 1.4\ntransport.mu_lower = 0.5")

    assert config.gas_model().gamma == 1.4
    assert config.transport_model().mu_lower == 0.5


def test_load_config_reads_files_and_wraps_io_errors(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text("fluid.nx = 24\n", encoding="utf-8")

    assert load_config(path).fluid.nx == 24
    assert load_config(None) == RunConfig()
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")
