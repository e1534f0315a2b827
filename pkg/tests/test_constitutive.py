from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from fsiheat.constitutive import (
    GasModel,
    TransportModel,
    clamp_temperature,
    default_state_grid,
    entropy_production,
    gibbs_residual,
    heat_flux,
    stress_tensor,
    validate_hypotheses,
)
from fsiheat.errors import DomainError, ValidationError


@dataclass(frozen=True)
class _ShiftedHeatCapacity(GasModel):
    """c_v changed in the energy only, which breaks Gibbs' relation."""

    def energy_density_molecular(self, rho, theta):
        return super().energy_density_molecular(rho, theta) + 0.5 * np.asarray(rho) * np.asarray(theta)


def test_pressure_of_the_prototype_law() -> None:
    gas = GasModel()

    assert gas.pressure(1.0, 1.0) == pytest.approx(7.0 / 3.0, rel=1e-14)
    assert gas.pressure(2.0, 1.0) == pytest.approx(2.0 ** (5.0 / 3.0) + 2.0 + 1.0 / 3.0)
    assert gas.pressure(0.0, 2.0) == pytest.approx(16.0 / 3.0)


def test_pressure_rejects_negative_inputs() -> None:
    with pytest.raises(DomainError):
        GasModel().pressure(-1.0, 1.0)
    with pytest.raises(DomainError):
        GasModel().pressure(1.0, -0.1)


def test_pressure_is_increasing_in_density() -> None:
    rho, theta = default_state_grid(12)

    assert np.all(np.diff(GasModel().pressure(rho, theta), axis=0) > 0.0)


def test_internal_energy_and_entropy() -> None:
    gas = GasModel()

    assert gas.internal_energy(1.0, 1.0) == pytest.approx(3.5)
    assert gas.entropy(1.0, 1.0) == pytest.approx(4.0 / 3.0)
    assert gas.internal_energy(2.0, 0.5) == pytest.approx((1.5 * 2.0 ** (5.0 / 3.0) + 1.0 + 0.0625) / 2.0)
    assert GasModel(cv=3.0, c2=0.0, a=1e-300).entropy(5.0, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_specific_entropy_needs_positive_density() -> None:
    with pytest.raises(DomainError):
        GasModel().entropy(0.0, 1.0)


def test_entropy_density_extends_by_the_radiation_part() -> None:
    gas = GasModel()
    theta = np.array([0.5, 1.0, 2.0])

    np.testing.assert_allclose(gas.entropy_density(np.zeros(3), theta), 4.0 / 3.0 * theta**3)
    for rho in (1e-3, 1.0, 7.0):
        radiation = gas.entropy_density(np.full(3, rho), theta) - rho * gas.entropy_molecular(rho, theta)
        np.testing.assert_allclose(radiation, 4.0 / 3.0 * theta**3, rtol=1e-12)


def test_gibbs_residual_is_finite_difference_noise_for_the_prototype() -> None:
    gas = GasModel()

    assert gibbs_residual(gas, 1.0, 1.0) <= 1e-8
    scale = gas.internal_energy(2.0, 3.0) / 2.0 + gas.pressure(2.0, 3.0) / 4.0
    assert gibbs_residual(gas, 2.0, 3.0) / scale <= 1e-7


def test_gibbs_residual_detects_an_inconsistent_energy() -> None:
    assert gibbs_residual(_ShiftedHeatCapacity(), 1.0, 1.0) > 1e-2


def test_stress_tensor_known_values() -> None:
    transport = TransportModel()

    np.testing.assert_array_equal(stress_tensor(transport, np.array(1.0), np.zeros((2, 2))), np.zeros((2, 2)))
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(stress_tensor(transport, np.array(1.0), rotation), np.zeros((2, 2)), atol=1e-15)
    np.testing.assert_allclose(stress_tensor(transport, np.array(1.0), np.eye(2)), 16.0 / 3.0 * np.eye(2))


def test_heat_flux_is_fourier_law() -> None:
    flux = heat_flux(TransportModel(), np.array(1.0), np.array([1.0, -2.0]))

    np.testing.assert_allclose(flux, [-4.0, 8.0])


def test_entropy_production_known_values() -> None:
    transport = TransportModel()

    assert entropy_production(transport, np.array(1.0), np.zeros((2, 2)), np.zeros(2)) == 0.0
    assert entropy_production(transport, np.array(1.0), np.zeros((2, 2)), np.array([1.0, 0.0])) == pytest.approx(4.0)
    with pytest.raises(DomainError):
        entropy_production(transport, np.array(0.0), np.zeros((2, 2)), np.zeros(2))


def test_entropy_production_is_nonnegative_on_random_samples() -> None:
    rng = np.random.default_rng(7)
    theta = rng.uniform(1e-3, 10.0, 10_000)
    grad_u = rng.normal(size=(10_000, 2, 2))
    grad_theta = rng.normal(size=(10_000, 2))

    sigma = entropy_production(TransportModel(mu_lower=0.5, zeta_lower=0.2), theta, grad_u, grad_theta)

    assert np.all(sigma >= -1e-12)


def test_prototype_passes_every_hypothesis_on_the_log_grid() -> None:
    report = validate_hypotheses(GasModel(), TransportModel())

    assert report.passed, report.render()
    assert report.by_name["gibbs"].margin <= 1e-7
    assert "overall          PASS" in report.render()


def test_pressureless_molecular_part_fails_monotonicity() -> None:
    report = validate_hypotheses(GasModel(c1=0.0, c2=0.0))

    assert "pm1" in report.failures()


def test_misordered_transport_bounds_fail() -> None:
    report = validate_hypotheses(GasModel(), TransportModel(mu_lower=2.0, mu_upper=1.0))

    assert report.failures() == ["transport"]


def test_validation_grid_must_be_positive() -> None:
    with pytest.raises(DomainError):
        validate_hypotheses(GasModel(), grid=(np.zeros((2, 2)), np.ones((2, 2))))


def test_gas_model_rejects_bad_constants() -> None:
    with pytest.raises(ValidationError):
        GasModel(cv=0.0)
    with pytest.raises(ValidationError):
        GasModel(gamma=1.0)
    with pytest.raises(ValidationError):
        GasModel.from_molecular_law(lambda z: z, z_lower=2.0, z_upper=1.0)


def test_transport_coefficients_stay_in_their_bands() -> None:
    transport = TransportModel(mu_lower=0.5, mu_upper=2.0)
    theta = np.linspace(0.0, 5.0, 11)

    mu = transport.mu(theta)

    assert np.all(mu >= 0.5 * (1.0 + theta))
    assert np.all(mu <= 2.0 * (1.0 + theta))


def test_clamp_temperature_counts_events() -> None:
    clamped, events = clamp_temperature(np.array([1.0, 1e-12, -1.0]), floor=1e-8)

    np.testing.assert_array_equal(clamped, [1.0, 1e-8, 1e-8])
    assert events == 2
