from __future__ import annotations

import numpy as np
import pytest

from fsiheat.errors import ValidationError
from fsiheat.structure import (
    ShellParams,
    ShellState,
    advance_window,
    shell_energy,
    ssp_advance,
    to_modes,
    to_samples,
    verify_ssp_energy,
)

N_GAMMA = 32
NODES = np.arange(N_GAMMA) / N_GAMMA


def _excited(modes: int = 8) -> ShellState:
    w = 0.05 * np.cos(2.0 * np.pi * NODES) + 0.01 * np.sin(2.0 * np.pi * 3 * NODES)
    v = 0.2 * np.sin(2.0 * np.pi * 2 * NODES)
    theta = 1.0 + 0.1 * np.cos(2.0 * np.pi * NODES)
    return ShellState.from_samples(w, v, theta, modes)


def test_band_limited_samples_survive_the_modal_transform() -> None:
    samples = 0.3 + np.cos(2.0 * np.pi * 3 * NODES) - 0.5 * np.sin(2.0 * np.pi * 5 * NODES)

    np.testing.assert_allclose(to_samples(to_modes(samples, 8), N_GAMMA), samples, atol=1e-13)


def test_too_many_modes_for_the_nodes() -> None:
    with pytest.raises(ValidationError, match="Γ-nodes"):
        to_modes(np.zeros(16), 8)


def test_parameters_need_damping_unless_the_boundary_variant_is_on() -> None:
    with pytest.raises(ValidationError):
        ShellParams(alpha1=0.0, alpha2=0.0)

    params = ShellParams(alpha1=0.0, alpha2=0.0, boundary_damping=True)
    assert params.viscous_rate[1] == pytest.approx(params.delta * (2.0 * np.pi) ** 2)


def test_shell_energy_of_a_single_bending_mode() -> None:
    params = ShellParams(modes=8)
    state = ShellState.from_samples(0.1 * np.cos(2.0 * np.pi * NODES), np.zeros(N_GAMMA), np.zeros(N_GAMMA), 8)

    energy = shell_energy(state, params)

    # ∫ (w'')² = (2π)⁴ 0.01 / 2 for w = 0.1 cos(2πy)
    assert energy.bending == pytest.approx(0.5 * (2.0 * np.pi) ** 4 * 0.01 / 2.0)
    assert energy.kinetic == 0.0
    assert energy.thermal == 0.0
    assert energy.total == pytest.approx(energy.bending)


def test_rest_state_with_resting_traces_stays_at_rest() -> None:
    params = ShellParams(modes=8)

    step = advance_window(ShellState.zeros(8), np.zeros(N_GAMMA), np.zeros(N_GAMMA), params)

    assert np.all(step.state.as_vector() == 0.0)
    assert step.dissipation_visc == 0.0
    assert step.exchange_velocity == 0.0


@pytest.mark.parametrize("thermal_coupling", [True, False])
def test_window_energy_identity_closes_to_round_off(thermal_coupling: bool) -> None:
    params = ShellParams(modes=8, thermal_coupling=thermal_coupling)
    rng = np.random.default_rng(3)
    lagged_v = 0.1 * rng.normal(size=N_GAMMA)
    lagged_tau = 1.0 + 0.05 * rng.normal(size=N_GAMMA)

    step = advance_window(_excited(), lagged_v, lagged_tau, params)

    assert abs(step.slack) <= 1e-10 * step.energy_before.total
    assert step.dissipation_visc >= 0.0
    assert step.dissipation_heat >= 0.0
    assert step.defect_velocity >= 0.0
    assert step.defect_temperature >= 0.0


def test_energy_decays_against_resting_traces() -> None:
    params = ShellParams(modes=8)
    state = _excited()
    energies = [shell_energy(state, params).total]

    for _ in range(4):
        state = ssp_advance(state, np.zeros(N_GAMMA), np.zeros(N_GAMMA), params)
        energies.append(shell_energy(state, params).total)

    assert all(later < earlier for earlier, later in zip(energies, energies[1:], strict=False))


def test_thermal_coupling_switch() -> None:
    params_off = ShellParams(modes=8, thermal_coupling=False)
    params_on = ShellParams(modes=8, thermal_coupling=True)
    state = ShellState.from_samples(np.zeros(N_GAMMA), 0.2 * np.cos(2.0 * np.pi * NODES), np.zeros(N_GAMMA), 8)
    zeros = np.zeros(N_GAMMA)

    uncoupled = advance_window(state, zeros, zeros, params_off)
    coupled = advance_window(state, zeros, zeros, params_on)

    np.testing.assert_allclose(uncoupled.state.theta_hat, 0.0, atol=1e-14)
    assert np.max(np.abs(coupled.state.theta_hat)) > 1e-6


def test_midpoint_traces_are_sampled_per_substep() -> None:
    params = ShellParams(modes=8, substeps=4)

    step = advance_window(_excited(), np.zeros(N_GAMMA), np.ones(N_GAMMA), params)

    assert step.velocity_midpoints.shape == (4, N_GAMMA)
    assert step.theta_midpoints.shape == (4, N_GAMMA)


def test_mismatched_inputs_are_rejected() -> None:
    params = ShellParams(modes=8)

    with pytest.raises(ValidationError, match="mode count"):
        advance_window(ShellState.zeros(4), np.zeros(N_GAMMA), np.zeros(N_GAMMA), params)
    with pytest.raises(ValidationError, match="one Γ grid"):
        advance_window(ShellState.zeros(8), np.zeros(N_GAMMA), np.zeros(N_GAMMA - 1), params)


def test_verify_energy_sign_convention() -> None:
    assert verify_ssp_energy(2.0, 1.5, 0.25, 0.25) == 0.0
    assert verify_ssp_energy(1.0, 1.5, 0.0, 0.0) == pytest.approx(-0.5)
