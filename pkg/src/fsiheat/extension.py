"""Extended-domain coefficients, the regularized constitutive law and initial data on the box."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from loguru import logger

from fsiheat.constitutive import GasModel
from fsiheat.errors import ValidationError
from fsiheat.geometry import CellGrid, DisplacementSample, ReferenceGeometry
from fsiheat.types import BoolArray, FloatArray, ScalarField

MomentumField = Callable[[FloatArray, FloatArray], tuple[FloatArray, FloatArray]]


@dataclass(frozen=True)
class ApproxParams:
    """Time window, penalty weight, artificial pressure and the extension scale k.

    The extension floors are derived from k on every access:
    η = k⁸, ω = ν = k², λ = k.
    """

    dt: float = 1.0 / 32.0
    delta: float = 0.1
    beta: float = 4.0
    k: float = 0.5

    def __post_init__(self) -> None:
        offending = []
        if self.dt <= 0.0:
            offending.append(f"dt={self.dt}")
        if not 0.0 < self.delta < 1.0:
            offending.append(f"delta={self.delta}")
        if self.beta < 4.0:
            offending.append(f"beta={self.beta}")
        if not 0.0 < self.k <= 1.0:
            offending.append(f"k={self.k}")
        if offending:
            raise ValidationError("approximation parameters out of range", offending)

    @property
    def eta(self) -> float:
        return self.k**8

    @property
    def omega(self) -> float:
        return self.k**2

    @property
    def nu(self) -> float:
        return self.k**2

    @property
    def lam(self) -> float:
        return self.k

    @property
    def penalty_rate(self) -> float:
        return self.delta / self.dt


@dataclass(frozen=True, eq=False)
class CoefficientFields:
    f_omega: FloatArray
    chi_nu: FloatArray
    chi_eta: FloatArray
    interior: BoolArray
    offset: FloatArray

    @property
    def exterior(self) -> BoolArray:
        return ~self.interior


def cosine_ramp(offset: FloatArray, width: float) -> FloatArray:
    """1 for s <= 0, a half cosine down to 0 across (0, width), 0 beyond."""
    s = np.clip(np.asarray(offset, dtype=float) / width, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * s))


def build_coefficient_fields(
    geometry: ReferenceGeometry,
    w: DisplacementSample,
    params: ApproxParams,
    grid: CellGrid,
    band_cells: float = 2.0,
) -> CoefficientFields:
    geometry.require_admissible(w)
    offset = geometry.interface_offset(w, grid.points).reshape(grid.n, grid.n)
    ramp = cosine_ramp(offset, band_cells * grid.h)

    def mask(floor: float) -> FloatArray:
        return floor + (1.0 - floor) * ramp

    return CoefficientFields(
        f_omega=mask(params.omega),
        chi_nu=mask(params.nu),
        chi_eta=mask(params.eta),
        interior=offset < 0.0,
        offset=offset,
    )


@dataclass(frozen=True)
class ExtendedGas:
    """p_{η,δ}, ρe_η and ρs_η with the radiation part weighted by χ_η."""

    gas: GasModel
    params: ApproxParams

    def pressure(self, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float) -> FloatArray:
        return (
            self.gas.pressure_molecular(rho, theta)
            + np.asarray(chi_eta) * self.gas.pressure_radiation(theta)
            + self.params.delta * np.asarray(rho) ** self.params.beta
        )

    def energy_density(self, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float) -> FloatArray:
        return self.gas.energy_density_molecular(rho, theta) + np.asarray(chi_eta) * self.gas.a * np.asarray(theta) ** 4

    def entropy_density(self, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float) -> FloatArray:
        return self.gas.entropy_density(rho, theta, radiation_weight=chi_eta)

    def artificial_energy(self, rho: FloatArray) -> FloatArray:
        """δ/(β−1) ρ^β, the potential of the artificial pressure."""
        return self.params.delta / (self.params.beta - 1.0) * np.asarray(rho) ** self.params.beta

    def heat_capacity(self, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float) -> FloatArray:
        return self.gas.heat_capacity_molecular(rho) + 4.0 * np.asarray(chi_eta) * self.gas.a * np.asarray(theta) ** 3

    def dp_drho(self, rho: FloatArray, theta: FloatArray) -> FloatArray:
        rho = np.maximum(np.asarray(rho, dtype=float), 0.0)
        return self.gas.dp_drho(rho, theta) + self.params.delta * self.params.beta * rho ** (self.params.beta - 1.0)

    def dp_dtheta(self, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float) -> FloatArray:
        return self.gas.dp_dtheta_molecular(rho) + 4.0 / 3.0 * np.asarray(chi_eta) * self.gas.a * np.asarray(theta) ** 3

    def helmholtz(
        self, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float, theta_bar: float = 1.0
    ) -> FloatArray:
        return self.energy_density(rho, theta, chi_eta) - theta_bar * self.entropy_density(rho, theta, chi_eta)


def extended_pressure(
    gas: GasModel, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float, params: ApproxParams
) -> FloatArray:
    gas.pressure(rho, theta)  # domain checks
    return ExtendedGas(gas, params).pressure(rho, theta, chi_eta)


def extended_energy(
    gas: GasModel, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float, params: ApproxParams
) -> FloatArray:
    """ρ e_η, finite at ρ = 0."""
    gas.energy_density(rho, theta)
    return ExtendedGas(gas, params).energy_density(rho, theta, chi_eta)


def extended_entropy(
    gas: GasModel, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray | float, params: ApproxParams
) -> FloatArray:
    """ρ s_η, extended by the radiation part alone at ρ = 0."""
    return ExtendedGas(gas, params).entropy_density(rho, theta, chi_eta)


@dataclass(frozen=True, eq=False)
class ExtendedInitialData:
    rho: FloatArray
    momentum: FloatArray
    theta: FloatArray
    artificial_pressure_integral: float


def extend_initial_data(
    geometry: ReferenceGeometry,
    w0: DisplacementSample,
    grid: CellGrid,
    rho0: ScalarField,
    momentum0: MomentumField,
    theta0: ScalarField,
    params: ApproxParams,
    theta_exterior: float = 1e-3,
) -> ExtendedInitialData:
    """Sample initial data on Ω^{w₀} and extend by vacuum at temperature ϑ̲ outside."""
    if theta_exterior <= 0.0:
        raise ValidationError("exterior temperature must be positive", [theta_exterior])
    geometry.require_admissible(w0)
    x, y = grid.mesh
    interior = geometry.contains(w0, grid.points).reshape(grid.n, grid.n)
    rho_in = np.broadcast_to(np.asarray(rho0(x, y), dtype=float), x.shape)
    theta_in = np.broadcast_to(np.asarray(theta0(x, y), dtype=float), x.shape)
    m1, m2 = momentum0(x, y)
    momentum_in = np.stack(np.broadcast_arrays(np.asarray(m1, dtype=float), np.asarray(m2, dtype=float)), axis=-1)

    offending: list[str] = []
    for name, bad in (
        ("rho<0", interior & (rho_in < 0.0)),
        ("theta<=0", interior & (theta_in <= 0.0)),
        ("momentum without mass", interior & (rho_in == 0.0) & np.any(momentum_in != 0.0, axis=-1)),
        ("non-finite", interior & ~(np.isfinite(rho_in) & np.isfinite(theta_in))),
    ):
        offending.extend(f"{name} at cell {tuple(int(i) for i in idx)}" for idx in np.argwhere(bad))
    if offending:
        raise ValidationError("initial data violate the compatibility conditions", offending)

    rho = np.where(interior, rho_in, 0.0)
    momentum = np.where((interior & (rho >= rho_in))[..., None], momentum_in, 0.0)
    theta = np.where(interior, theta_in, theta_exterior)
    artificial = params.delta * grid.integrate(rho**params.beta)
    logger.debug(
        "extension.initial_data interior_cells={} mass={:.6e} artificial={:.6e}",
        int(np.count_nonzero(interior)),
        grid.integrate(rho),
        artificial,
    )
    return ExtendedInitialData(rho=rho, momentum=momentum, theta=theta, artificial_pressure_integral=artificial)
