"""Thermodynamic state functions, transport coefficients and hypothesis checks."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from fsiheat.errors import DomainError, ValidationError
from fsiheat.types import FloatArray

THETA_FLOOR = 1e-8
MolecularLaw = Callable[[FloatArray], FloatArray]


def _as_array(value: FloatArray | float) -> FloatArray:
    return np.asarray(value, dtype=float)


def _require_nonnegative(name: str, value: FloatArray) -> None:
    if np.any(value < 0.0):
        raise DomainError(f"{name} must be non-negative, got min {float(np.min(value)):.6g}")


def _require_positive(name: str, value: FloatArray) -> None:
    if np.any(value <= 0.0):
        raise DomainError(f"{name} must be positive, got min {float(np.min(value)):.6g}")


@dataclass(frozen=True)
class GasModel:
    """Molecular pressure plus black-body radiation.

    The prototype law is ``p = c1 ρ^γ + c2 ρϑ + (a/3)ϑ⁴``.  A user-supplied
    molecular law ``P`` switches the molecular part to
    ``p_M = ϑ^{5/2} P(ρ / ϑ^{3/2})`` with ``ρ e_M = (3/2) p_M``.
    """

    c1: float = 1.0
    c2: float = 1.0
    cv: float = 1.0
    a: float = 1.0
    gamma: float = 5.0 / 3.0
    molecular_law: MolecularLaw | None = field(default=None, compare=False)
    z_lower: float = 0.0
    z_upper: float = 0.0

    def __post_init__(self) -> None:
        constants = {"c1": self.c1, "c2": self.c2, "cv": self.cv, "a": self.a}
        negative = [name for name, value in constants.items() if value < 0.0]
        if negative or self.cv <= 0.0 or self.a <= 0.0:
            raise ValidationError("gas constants must be non-negative with cv, a > 0", negative or [self.cv, self.a])
        if self.gamma <= 1.0:
            raise ValidationError("pressure exponent must exceed 1", [self.gamma])
        if self.molecular_law is not None and not 0.0 < self.z_lower < self.z_upper:
            raise ValidationError("molecular law requires 0 < Z_lower < Z_upper", [self.z_lower, self.z_upper])

    @classmethod
    def from_molecular_law(cls, law: MolecularLaw, z_lower: float, z_upper: float, a: float = 1.0) -> GasModel:
        return cls(c1=0.0, c2=0.0, a=a, molecular_law=law, z_lower=z_lower, z_upper=z_upper)

    @property
    def is_prototype(self) -> bool:
        return self.molecular_law is None

    # ------------------------------------------------------------------ molecular part

    def pressure_molecular(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        rho, theta = _as_array(rho), _as_array(theta)
        if self.molecular_law is None:
            return self.c1 * rho**self.gamma + self.c2 * rho * theta
        scale = theta**1.5
        z = np.divide(rho, scale, out=np.zeros(np.broadcast(rho, scale).shape), where=scale > 0.0)
        return theta**2.5 * self.molecular_law(z)

    def energy_density_molecular(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        """ρ e_M, continuous up to ρ = 0."""
        rho, theta = _as_array(rho), _as_array(theta)
        if self.molecular_law is None:
            return self.c1 * rho**self.gamma / (self.gamma - 1.0) + self.cv * rho * theta
        return 1.5 * self.pressure_molecular(rho, theta)

    def entropy_molecular(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        rho, theta = _as_array(rho), _as_array(theta)
        if self.molecular_law is None:
            return self.cv * np.log(theta) - self.c2 * np.log(rho)
        return self._molecular_entropy_profile(rho / theta**1.5)

    def _molecular_entropy_profile(self, z: FloatArray) -> FloatArray:
        law = self.molecular_law
        assert law is not None

        def slope(s: float) -> float:
            h = 1e-6 * max(s, 1e-3)
            dlaw = (law(np.array(s + h)) - law(np.array(s - h))) / (2.0 * h)
            return float(-1.5 * (5.0 / 3.0 * law(np.array(s)) - s * dlaw) / s**2)

        flat = np.ravel(z)
        values = np.array([integrate.quad(slope, 1.0, float(s), limit=200)[0] for s in flat])
        return values.reshape(np.shape(z))

    # ------------------------------------------------------------------ full law

    def pressure_radiation(self, theta: FloatArray) -> FloatArray:
        return self.a / 3.0 * _as_array(theta) ** 4

    def pressure(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        rho, theta = _as_array(rho), _as_array(theta)
        _require_nonnegative("density", rho)
        _require_nonnegative("temperature", theta)
        return self.pressure_molecular(rho, theta) + self.pressure_radiation(theta)

    def energy_density(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        rho, theta = _as_array(rho), _as_array(theta)
        _require_nonnegative("density", rho)
        _require_nonnegative("temperature", theta)
        return self.energy_density_molecular(rho, theta) + self.a * theta**4

    def internal_energy(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        rho, theta = _as_array(rho), _as_array(theta)
        _require_positive("density", rho)
        return self.energy_density(rho, theta) / rho

    def entropy(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        rho, theta = _as_array(rho), _as_array(theta)
        _require_positive("density", rho)
        _require_positive("temperature", theta)
        return self.entropy_molecular(rho, theta) + 4.0 * self.a * theta**3 / (3.0 * rho)

    def entropy_density(
        self, rho: FloatArray, theta: FloatArray, radiation_weight: FloatArray | float = 1.0
    ) -> FloatArray:
        """ρ s with the molecular part extended by 0 at ρ = 0."""
        rho, theta = _as_array(rho), _as_array(theta)
        _require_nonnegative("density", rho)
        _require_positive("temperature", theta)
        positive = rho > 0.0
        safe = np.where(positive, rho, 1.0)
        molecular = np.where(positive, safe * self.entropy_molecular(safe, theta), 0.0)
        return molecular + _as_array(radiation_weight) * 4.0 * self.a * theta**3 / 3.0

    def helmholtz(self, rho: FloatArray, theta: FloatArray, theta_bar: float = 1.0) -> FloatArray:
        """H_ϑ̄(ρ, ϑ) = ρ(e − ϑ̄ s)."""
        return self.energy_density(rho, theta) - theta_bar * self.entropy_density(rho, theta)

    # ------------------------------------------------------------------ derivatives used by the solver

    def dp_drho(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        rho, theta = _as_array(rho), _as_array(theta)
        return self.gamma * self.c1 * np.maximum(rho, 0.0) ** (self.gamma - 1.0) + self.c2 * theta

    def dp_dtheta_molecular(self, rho: FloatArray) -> FloatArray:
        return self.c2 * _as_array(rho)

    def heat_capacity_molecular(self, rho: FloatArray) -> FloatArray:
        """∂(ρe_M)/∂ϑ."""
        return self.cv * _as_array(rho)


@dataclass(frozen=True)
class TransportModel:
    """Bounds of the viscosities and conductivities; evaluation uses the midpoints."""

    mu_lower: float = 1.0
    mu_upper: float = 1.0
    zeta_lower: float = 1.0
    zeta_upper: float = 1.0
    kappa_m_lower: float = 1.0
    kappa_m_upper: float = 1.0
    kappa_r_lower: float = 1.0
    kappa_r_upper: float = 1.0

    def bound_violations(self) -> list[str]:
        pairs = {
            "mu": (self.mu_lower, self.mu_upper),
            "zeta": (self.zeta_lower, self.zeta_upper),
            "kappa_m": (self.kappa_m_lower, self.kappa_m_upper),
            "kappa_r": (self.kappa_r_lower, self.kappa_r_upper),
        }
        return [name for name, (lo, hi) in pairs.items() if not 0.0 < lo <= hi]

    def mu(self, theta: FloatArray) -> FloatArray:
        return 0.5 * (self.mu_lower + self.mu_upper) * (1.0 + _as_array(theta))

    def mu_derivative(self, theta: FloatArray) -> FloatArray:
        return np.full_like(_as_array(theta), 0.5 * (self.mu_lower + self.mu_upper))

    def zeta(self, theta: FloatArray) -> FloatArray:
        return 0.5 * (self.zeta_lower + self.zeta_upper) * (1.0 + _as_array(theta))

    def kappa_m(self, theta: FloatArray) -> FloatArray:
        return 0.5 * (self.kappa_m_lower + self.kappa_m_upper) * (1.0 + _as_array(theta))

    def kappa_r(self, theta: FloatArray) -> FloatArray:
        return 0.5 * (self.kappa_r_lower + self.kappa_r_upper) * (1.0 + _as_array(theta) ** 3)

    def kappa(self, theta: FloatArray) -> FloatArray:
        return self.kappa_m(theta) + self.kappa_r(theta)

    def kappa_derivative(self, theta: FloatArray) -> FloatArray:
        theta = _as_array(theta)
        kappa_m = 0.5 * (self.kappa_m_lower + self.kappa_m_upper)
        return kappa_m + 1.5 * (self.kappa_r_lower + self.kappa_r_upper) * theta**2


def stress_tensor(transport: TransportModel, theta: FloatArray, grad_u: FloatArray) -> FloatArray:
    """Newtonian stress; the deviator keeps the 2/3 coefficient in two dimensions."""
    grad_u = _as_array(grad_u)
    theta = _as_array(theta)
    div = np.trace(grad_u, axis1=-2, axis2=-1)
    eye = np.eye(2)
    mu = transport.mu(theta)[..., None, None]
    zeta = transport.zeta(theta)[..., None, None]
    sym = grad_u + np.swapaxes(grad_u, -1, -2)
    return mu * (sym - (2.0 / 3.0) * div[..., None, None] * eye) + zeta * div[..., None, None] * eye


def heat_flux(transport: TransportModel, theta: FloatArray, grad_theta: FloatArray) -> FloatArray:
    return -transport.kappa(theta)[..., None] * _as_array(grad_theta)


def entropy_production(
    transport: TransportModel, theta: FloatArray, grad_u: FloatArray, grad_theta: FloatArray
) -> FloatArray:
    theta = _as_array(theta)
    _require_positive("temperature", theta)
    stress = stress_tensor(transport, theta, grad_u)
    work = np.sum(stress * _as_array(grad_u), axis=(-2, -1))
    conduction = transport.kappa(theta) * np.sum(_as_array(grad_theta) ** 2, axis=-1) / theta
    return (work + conduction) / theta


def gibbs_residual(model: GasModel, rho: FloatArray, theta: FloatArray, h: float = 1e-5) -> FloatArray:
    """max over both partials of |ϑ Ds − De − p D(1/ρ)| by centred differences."""
    rho, theta = _as_array(rho), _as_array(theta)
    _require_positive("density", rho)
    _require_positive("temperature", theta)
    dr, dt = h * rho, h * theta

    def central(func: Callable[[FloatArray, FloatArray], FloatArray], wrt_rho: bool) -> FloatArray:
        if wrt_rho:
            return (func(rho + dr, theta) - func(rho - dr, theta)) / (2.0 * dr)
        return (func(rho, theta + dt) - func(rho, theta - dt)) / (2.0 * dt)

    p = model.pressure(rho, theta)
    by_rho = theta * central(model.entropy, True) - central(model.internal_energy, True) + p / rho**2
    by_theta = theta * central(model.entropy, False) - central(model.internal_energy, False)
    return np.maximum(np.abs(by_rho), np.abs(by_theta))


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[HypothesisCheck, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @cached_property
    def by_name(self) -> dict[str, HypothesisCheck]:
        return {check.name: check for check in self.checks}

    def failures(self) -> list[str]:
        return [check.name for check in self.checks if not check.passed]

    def render(self) -> str:
        lines = [
            f"{check.name:<16} {'PASS' if check.passed else 'FAIL'}  margin={check.margin:.6e}  {check.detail}".rstrip()
            for check in self.checks
        ]
        lines.append(f"overall          {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def default_state_grid(points: int = 20, lower: float = 1e-3, upper: float = 1e3) -> tuple[FloatArray, FloatArray]:
    axis = np.logspace(np.log10(lower), np.log10(upper), points)
    rho, theta = np.meshgrid(axis, axis, indexing="ij")
    return rho, theta


def _relative_gibbs(model: GasModel, rho: FloatArray, theta: FloatArray) -> float:
    scale = np.abs(model.internal_energy(rho, theta)) / np.minimum(rho, theta) + model.pressure(rho, theta) / rho**2
    return float(np.max(gibbs_residual(model, rho, theta) / scale))


def validate_hypotheses(
    model: GasModel,
    transport: TransportModel | None = None,
    grid: tuple[FloatArray, FloatArray] | None = None,
    gibbs_tolerance: float = 1e-7,
) -> HypothesisReport:
    """Check thermodynamic stability, growth and transport bounds on a state grid."""
    rho, theta = grid if grid is not None else default_state_grid()
    rho, theta = _as_array(rho), _as_array(theta)
    if np.any(rho <= 0.0) or np.any(theta <= 0.0):
        raise DomainError("validation grid must contain strictly positive states")
    h_rho, h_theta = 1e-6 * rho, 1e-6 * theta
    checks: list[HypothesisCheck] = []

    dp = (model.pressure_molecular(rho + h_rho, theta) - model.pressure_molecular(rho - h_rho, theta)) / (2 * h_rho)
    scale_p = np.maximum(np.abs(model.pressure_molecular(rho, theta)) / rho, 1e-300)
    checks.append(HypothesisCheck("pm1", bool(np.all(dp > 1e-9 * scale_p)), float(np.min(dp)), "min ∂p_M/∂ρ"))

    def e_molecular(r: FloatArray, t: FloatArray) -> FloatArray:
        return model.energy_density_molecular(r, t) / r

    de_dtheta = (e_molecular(rho, theta + h_theta) - e_molecular(rho, theta - h_theta)) / (2 * h_theta)
    checks.append(
        HypothesisCheck(
            "em1",
            bool(np.all(de_dtheta > 0.0)),
            float(np.min(de_dtheta)),
            f"sup ∂e_M/∂ϑ = {float(np.max(de_dtheta)):.6e}",
        )
    )

    cold = e_molecular(rho, np.full_like(rho, 1e-12))
    checks.append(HypothesisCheck("em2", bool(np.all(cold > 0.0)), float(np.min(cold)), "e_M at ϑ → 0"))

    energy = e_molecular(rho, theta)
    de_drho = (e_molecular(rho + h_rho, theta) - e_molecular(rho - h_rho, theta)) / (2 * h_rho)
    ratio = np.abs(rho * de_drho) / np.maximum(energy, 1e-300)
    checks.append(
        HypothesisCheck(
            "em3",
            bool(np.all(np.isfinite(ratio)) and np.all(energy > 0.0)),
            float(np.max(ratio)),
            "sup |ρ ∂e_M/∂ρ| / e_M",
        )
    )

    relative = _relative_gibbs(model, rho, theta)
    checks.append(HypothesisCheck("gibbs", relative <= gibbs_tolerance, relative, "max relative residual"))

    if model.molecular_law is not None:
        checks.extend(_molecular_law_checks(model))

    if transport is not None:
        violations = transport.bound_violations()
        checks.append(
            HypothesisCheck(
                "transport",
                not violations,
                0.0 if violations else 1.0,
                ("lower > upper for " + ", ".join(violations)) if violations else "bounds ordered",
            )
        )
    return HypothesisReport(tuple(checks))


def _molecular_law_checks(model: GasModel) -> list[HypothesisCheck]:
    law = model.molecular_law
    assert law is not None
    z = np.linspace(0.0, 4.0 * model.z_upper, 400)
    h = 1e-6 * max(model.z_upper, 1.0)
    slope = (law(z + h) - law(np.maximum(z - h, 0.0))) / np.where(z > h, 2.0 * h, h + z)
    growth = 5.0 / 3.0 * law(z[1:]) - z[1:] * slope[1:]
    origin = float(np.abs(law(np.array([0.0]))[0]))
    return [
        HypothesisCheck("plaw_origin", origin <= 1e-12 and slope[0] > 0.0, float(slope[0]), "P(0) = 0, P'(0) > 0"),
        HypothesisCheck("plaw_monotone", bool(np.all(slope > 0.0)), float(np.min(slope)), "min P'"),
        HypothesisCheck(
            "plaw_growth", bool(np.all(growth > 0.0)), float(np.min(growth / z[1:])), "min (5/3 P − Z P')/Z"
        ),
    ]


def clamp_temperature(theta: FloatArray, floor: float = THETA_FLOOR) -> tuple[FloatArray, int]:
    """Raise temperatures below the floor; returns the clamped field and the event count."""
    theta = _as_array(theta)
    low = theta < floor
    return np.where(low, floor, theta), int(np.count_nonzero(low))

