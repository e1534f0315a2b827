"""Run configuration: `section.key = value` text parsed into typed section models."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Any, Literal

import pydantic
from pydantic import BaseModel, ConfigDict, Field

from fsiheat.constitutive import GasModel, TransportModel
from fsiheat.errors import ConfigError
from fsiheat.extension import ApproxParams

PROTOTYPE_DAMPING_GAMMA = 12.0 / 7.0
SWEEPABLE = {"k": ("approx", "k"), "delta": ("approx", "delta"), "dt": ("approx", "dt")}
_ALIASES = {("geometry", "R"): ("geometry", "radius")}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometrySection(_Section):
    chart: Literal["circle", "ellipse"] = "circle"
    radius: float = Field(default=1.0, gt=0.0)
    aspect: float = Field(default=0.8, gt=0.0)
    a: float = Field(default=-0.5, lt=0.0)
    b: float = Field(default=0.5, gt=0.0)
    n_gamma: int = Field(default=128, ge=8)
    lower_outer: float | None = None
    lower_inner: float | None = None
    upper_inner: float | None = None
    upper_outer: float | None = None
    mollifier: float = Field(default=0.04, gt=0.0)

    @property
    def plateau(self) -> tuple[float, float, float, float]:
        return (
            self.a + 0.05 if self.lower_outer is None else self.lower_outer,
            self.a + 0.15 if self.lower_inner is None else self.lower_inner,
            self.b - 0.15 if self.upper_inner is None else self.upper_inner,
            self.b - 0.05 if self.upper_outer is None else self.upper_outer,
        )


class GasSection(_Section):
    c1: float = Field(default=1.0, ge=0.0)
    c2: float = Field(default=1.0, ge=0.0)
    cv: float = Field(default=1.0, gt=0.0)
    a: float = Field(default=1.0, gt=0.0)
    gamma: float = Field(default=5.0 / 3.0, gt=1.0)


class TransportSection(_Section):
    mu_lower: float = Field(default=1.0, gt=0.0)
    mu_upper: float = Field(default=1.0, gt=0.0)
    zeta_lower: float = Field(default=1.0, gt=0.0)
    zeta_upper: float = Field(default=1.0, gt=0.0)
    kappa_m_lower: float = Field(default=1.0, gt=0.0)
    kappa_m_upper: float = Field(default=1.0, gt=0.0)
    kappa_r_lower: float = Field(default=1.0, gt=0.0)
    kappa_r_upper: float = Field(default=1.0, gt=0.0)


class ApproxSection(_Section):
    dt: float = Field(default=1.0 / 32.0, gt=0.0)
    delta: float = Field(default=0.1, gt=0.0, lt=1.0)
    beta: float = Field(default=4.0, ge=4.0)
    k: float = Field(default=0.5, gt=0.0, le=1.0)


class ExtensionSection(_Section):
    band_cells: float = Field(default=2.0, gt=0.0)
    theta_exterior: float = Field(default=1e-3, gt=0.0)


class ShellSection(_Section):
    alpha1: float = Field(default=0.1, ge=0.0)
    alpha2: float = Field(default=0.01, ge=0.0)
    modes: int = Field(default=32, ge=1)
    substeps: int = Field(default=8, ge=1)
    stiffness: float = Field(default=1.0, gt=0.0)
    thermal_coupling: bool = True


class FluidSection(_Section):
    nx: int = Field(default=64, ge=8)
    cfl: float = Field(default=0.4, gt=0.0, le=0.5)
    kernel_radius: int = Field(default=1, ge=1, le=2)
    theta_floor: float = Field(default=1e-8, gt=0.0)
    max_substeps: int = Field(default=4096, ge=1)
    cg_tol: float = Field(default=1e-10, gt=0.0)
    picard: int = Field(default=2, ge=1)
    dilute: float = Field(default=1e-6, ge=0.0, lt=1.0)


class CouplingSection(_Section):
    windows: int = Field(default=16, ge=0)
    trace_sampling: Literal["final", "average"] = "final"
    penalty_measure: Literal["reference", "deformed"] = "reference"
    margin_cells: float = Field(default=1.0, ge=0.0)


class InitialSection(_Section):
    rho: float = Field(default=1.0, ge=0.0)
    theta: float = Field(default=1.0, gt=0.0)
    theta_shell: float = Field(default=1.0, gt=0.0)
    swirl: float = 0.0
    w_amplitude: float = 0.0
    w_mode: int = Field(default=2, ge=0)
    v_amplitude: float = 0.0
    noise: float = Field(default=0.0, ge=0.0)
    seed: int = 0


class DiagnosticsSection(_Section):
    korn_q: float = Field(default=1.5, ge=1.0, lt=2.0)
    mass_floor: float = Field(default=1e-3, ge=0.0)
    strip_k: float = Field(default=20.0, gt=0.0)


class OutputSection(_Section):
    snapshot_every: int = Field(default=4, ge=0)


class RunConfig(_Section):
    geometry: GeometrySection = Field(default_factory=GeometrySection)
    gas: GasSection = Field(default_factory=GasSection)
    transport: TransportSection = Field(default_factory=TransportSection)
    approx: ApproxSection = Field(default_factory=ApproxSection)
    extension: ExtensionSection = Field(default_factory=ExtensionSection)
    shell: ShellSection = Field(default_factory=ShellSection)
    fluid: FluidSection = Field(default_factory=FluidSection)
    coupling: CouplingSection = Field(default_factory=CouplingSection)
    initial: InitialSection = Field(default_factory=InitialSection)
    diagnostics: DiagnosticsSection = Field(default_factory=DiagnosticsSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @property
    def approx_params(self) -> ApproxParams:
        return ApproxParams(dt=self.approx.dt, delta=self.approx.delta, beta=self.approx.beta, k=self.approx.k)

    @property
    def horizon(self) -> float:
        return self.coupling.windows * self.approx.dt

    @property
    def boundary_damping(self) -> bool:
        """The α₁ = α₂ = 0 shell, admitted for γ > 12/7 with δ-damping."""
        return self.shell.alpha1 + self.shell.alpha2 <= 0.0

    def gas_model(self) -> GasModel:
        """The prototype law with the configured constants."""
        return GasModel(c1=self.gas.c1, c2=self.gas.c2, cv=self.gas.cv, a=self.gas.a, gamma=self.gas.gamma)

    def transport_model(self) -> TransportModel:
        return TransportModel(**self.transport.model_dump())

    def with_parameter(self, name: str, value: float) -> RunConfig:
        if name not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {name!r}; choose one of {sorted(SWEEPABLE)}")
        section, key = SWEEPABLE[name]
        updated = getattr(self, section).model_copy(update={key: value})
        return self.model_copy(update={section: updated})


def _section_fields(section: str) -> dict[str, Any]:
    annotation = RunConfig.model_fields[section].annotation
    assert isinstance(annotation, type)
    return annotation.model_fields


def _coerce(raw: str) -> str | float:
    """Accept p/q fractions on top of what pydantic parses."""
    if "/" in raw:
        try:
            return float(Fraction(raw.replace(" ", "")))
        except (ValueError, ZeroDivisionError):
            return raw
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse `section.key = value` lines; `#` starts a comment."""
    values: dict[str, dict[str, Any]] = {}
    lines: dict[tuple[str, str], int] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep or not raw.strip():
            raise ConfigError(f"expected `section.key = value`, got {raw_line.strip()!r}", line=number)
        section, dot, name = key.strip().partition(".")
        if not dot or not name:
            raise ConfigError(f"key {key.strip()!r} is not of the form section.key", line=number)
        section, name = _ALIASES.get((section, name), (section, name))
        if section not in RunConfig.model_fields:
            raise ConfigError(f"unknown section {section!r}", line=number)
        if name not in _section_fields(section):
            raise ConfigError(f"unknown key {section}.{name}", line=number)
        if (section, name) in lines:
            raise ConfigError(f"{section}.{name} is set twice (first on line {lines[section, name]})", line=number)
        values.setdefault(section, {})[name] = _coerce(raw.strip())
        lines[section, name] = number

    try:
        config = RunConfig.model_validate(values)
    except pydantic.ValidationError as exc:
        error = exc.errors()[0]
        location = tuple(str(part) for part in error["loc"])
        line = lines.get((location[0], location[1])) if len(location) >= 2 else None
        raise ConfigError(f"{'.'.join(location)}: {error['msg']}", line=line) from exc
    check_hypotheses(config, lines)
    return config


def check_hypotheses(config: RunConfig, lines: dict[tuple[str, str], int] | None = None) -> None:
    lines = lines or {}
    if config.boundary_damping and config.gas.gamma <= PROTOTYPE_DAMPING_GAMMA:
        raise ConfigError(
            "the shell needs α₁ + α₂ > 0; α₁ = α₂ = 0 is admitted only for γ > 12/7",
            line=lines.get(("shell", "alpha1"), lines.get(("shell", "alpha2"))),
        )
    geometry = config.geometry
    m2, m1, upper1, upper2 = geometry.plateau
    if not geometry.a < m2 < m1 < 0.0 < upper1 < upper2 < geometry.b:
        raise ConfigError(
            "plateau bounds must satisfy a < lower_outer < lower_inner < 0 < upper_inner < upper_outer < b"
        )
    if config.shell.modes > geometry.n_gamma // 2 - 1:
        raise ConfigError(
            f"shell.modes = {config.shell.modes} needs geometry.n_gamma >= {2 * config.shell.modes + 2}",
            line=lines.get(("shell", "modes")),
        )
    if config.diagnostics.strip_k < 2.0 / (geometry.b - geometry.a):
        raise ConfigError(
            "diagnostics.strip_k must be at least 2 / (b - a)", line=lines.get(("diagnostics", "strip_k"))
        )


def load_config(path: Path | None) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo_config(config: RunConfig) -> str:
    """Every effective key in section order, followed by the derived parameters."""
    lines: list[str] = []
    for section in RunConfig.model_fields:
        model = getattr(config, section)
        for name in type(model).model_fields:
            value = getattr(model, name)
            if section == "geometry" and value is None:
                bounds = ("lower_outer", "lower_inner", "upper_inner", "upper_outer")
                value = dict(zip(bounds, model.plateau, strict=True))[name]
            lines.append(f"{section}.{name} = {_format_value(value)}")
    params = config.approx_params
    lines.extend(
        [
            f"derived.eta = {_format_value(params.eta)}",
            f"derived.omega = {_format_value(params.omega)}",
            f"derived.nu = {_format_value(params.nu)}",
            f"derived.lambda = {_format_value(params.lam)}",
            f"derived.horizon = {_format_value(config.horizon)}",
        ]
    )
    return "\n".join(lines) + "\n"
