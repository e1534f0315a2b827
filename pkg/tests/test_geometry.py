from __future__ import annotations

import numpy as np
import pytest

from fsiheat.errors import DomainError, GeometryDegeneracyError, ValidationError
from fsiheat.geometry import CellGrid, DisplacementSample, ProfileFGamma, build_geometry


def _wave(amplitude: float, mode: int = 2, n: int = 64) -> DisplacementSample:
    return DisplacementSample.from_function(lambda y: amplitude * np.cos(2.0 * np.pi * mode * y), n)


def _tube_samples(count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0.0, 2.0 * np.pi, count)
    radius = 1.0 + rng.uniform(-0.49, 0.49, count)
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)


def test_signed_distance_is_negative_inside_and_positive_outside() -> None:
    geometry = build_geometry()

    assert geometry.signed_distance(np.array([1.2, 0.0])) == pytest.approx(0.2)
    assert geometry.signed_distance(np.array([0.0, 0.7])) == pytest.approx(-0.3)
    assert geometry.signed_distance(np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)


def test_points_outside_the_tube_are_rejected() -> None:
    geometry = build_geometry()

    with pytest.raises(DomainError):
        geometry.signed_distance(np.array([0.1, 0.0]))
    with pytest.raises(DomainError):
        geometry.project_to_gamma(np.array([1.8, 0.0]))


def test_project_to_gamma_on_the_circle() -> None:
    geometry = build_geometry()

    assert geometry.project_to_gamma(np.array([0.0, 1.3])) == pytest.approx(0.25)
    assert geometry.project_to_gamma(np.array([-0.8, 0.0])) == pytest.approx(0.5)


def test_ellipse_projection_recovers_parameter_and_offset() -> None:
    geometry = build_geometry(chart="ellipse", aspect=0.8)
    y0 = np.array([0.05, 0.3, 0.61, 0.9])
    points = geometry.phi(y0) + 0.1 * geometry.normal(y0)

    y, d = geometry.tube_coordinates(points)

    np.testing.assert_allclose(y, y0, atol=1e-9)
    np.testing.assert_allclose(d, 0.1, atol=1e-9)


def test_flow_map_is_the_identity_for_zero_displacement() -> None:
    geometry = build_geometry()
    grid = CellGrid(16, geometry.half_width)

    mapped = geometry.flow_map(DisplacementSample.zeros(32), grid.points)

    assert np.array_equal(mapped, grid.points)


def test_flow_map_moves_the_reference_boundary_onto_the_deformed_one() -> None:
    geometry = build_geometry()
    w = _wave(0.1)

    mapped = geometry.flow_map(w, geometry.phi(w.nodes))

    np.testing.assert_allclose(mapped, geometry.deformed_boundary(w), atol=1e-12)


def test_flow_map_leaves_points_away_from_the_tube_fixed() -> None:
    geometry = build_geometry()
    points = np.array([[0.0, 0.0], [0.2, -0.1], [1.9, 1.9]])

    np.testing.assert_array_equal(geometry.flow_map(_wave(0.2), points), points)


def test_area_factor_for_constant_radial_displacement() -> None:
    geometry = build_geometry()
    w = DisplacementSample(np.full(64, 0.1))
    y = np.linspace(0.0, 1.0, 17, endpoint=False)

    normals, area = geometry.deformed_normal_and_area(w, y)

    np.testing.assert_allclose(area, 1.1, atol=1e-6)
    np.testing.assert_allclose(normals, geometry.normal(y), atol=1e-12)


def test_area_factor_is_one_without_displacement() -> None:
    geometry = build_geometry(chart="ellipse")
    y = np.linspace(0.0, 1.0, 9, endpoint=False)

    _, area = geometry.deformed_normal_and_area(DisplacementSample.zeros(32), y)

    np.testing.assert_allclose(area, 1.0, atol=1e-12)


def test_injectivity_margin() -> None:
    geometry = build_geometry()

    admissible = geometry.check_injectivity(DisplacementSample(np.full(16, 0.2)))
    assert admissible.admissible
    assert admissible.margin == pytest.approx(0.3)

    degenerate = geometry.check_injectivity(DisplacementSample(np.full(16, 0.6)))
    assert not degenerate.admissible
    assert degenerate.margin == pytest.approx(-0.1)


def test_inadmissible_displacement_raises_degeneracy() -> None:
    geometry = build_geometry()

    with pytest.raises(GeometryDegeneracyError):
        geometry.flow_map(DisplacementSample(np.full(16, -0.7)), np.array([[1.0, 0.0]]))


def test_jacobian_factor_respects_the_two_sided_bound() -> None:
    geometry = build_geometry()
    w = _wave(0.15, mode=3)
    points = _tube_samples(10_000)

    factor = geometry.normal_jacobian_factor(w, points)
    lower, upper = geometry.jacobian_bounds(w)

    assert lower > 0.0
    assert np.all(factor >= lower - 1e-12)
    assert np.all(factor <= upper + 1e-12)


def test_flow_map_gradient_is_identity_outside_the_tube() -> None:
    geometry = build_geometry()

    grad = geometry.flow_map_gradient(_wave(0.1), np.array([[0.0, 0.0], [1.8, 0.0]]))

    np.testing.assert_array_equal(grad, np.broadcast_to(np.eye(2), (2, 2, 2)))


def test_flow_map_gradient_matches_finite_differences() -> None:
    geometry = build_geometry()
    w = _wave(0.1, mode=2)
    # inside the plateau where f_Γ is exactly one
    point = 1.03 * np.array([np.cos(0.7), np.sin(0.7)])
    step = 1e-6

    grad = geometry.flow_map_gradient(w, point[None, :])[0]
    columns = [
        (geometry.flow_map(w, (point + step * e)[None, :]) - geometry.flow_map(w, (point - step * e)[None, :]))[0]
        / (2.0 * step)
        for e in np.eye(2)
    ]

    np.testing.assert_allclose(grad, np.stack(columns, axis=-1), atol=1e-6)


def test_contains_follows_the_displaced_interface() -> None:
    geometry = build_geometry()
    w = DisplacementSample(np.full(32, 0.2))
    points = np.array([[0.0, 0.0], [1.1, 0.0], [1.3, 0.0], [1.9, 0.0]])

    np.testing.assert_array_equal(geometry.contains(w, points), [True, True, False, False])


def test_profile_is_one_on_its_plateau_and_zero_outside_the_support() -> None:
    profile = ProfileFGamma()
    lo, hi = profile.exact_one

    np.testing.assert_allclose(profile(np.linspace(lo, hi, 11)), 1.0, atol=1e-12)
    np.testing.assert_array_equal(profile(np.array([profile.support[0] - 0.01, profile.support[1] + 0.01])), 0.0)
    slope = profile.derivative(np.linspace(-0.5, 0.5, 401))
    assert np.all(slope <= 1.0 / profile.lower_ramp + 1e-12)
    assert np.all(slope >= -1.0 / profile.upper_ramp - 1e-12)


def test_profile_rejects_misordered_bounds() -> None:
    with pytest.raises(ValidationError):
        ProfileFGamma(lower_outer=-0.3, lower_inner=-0.4)


def test_geometry_rejects_a_tube_deeper_than_the_radius() -> None:
    with pytest.raises(ValidationError):
        build_geometry(a=-1.2)


def test_cell_grid_midpoint_rule() -> None:
    grid = CellGrid(16, 2.0)

    assert grid.h == 0.25
    assert grid.integrate(np.ones((16, 16))) == pytest.approx(16.0)
    assert grid.centers[0] == pytest.approx(-1.875)
    with pytest.raises(ValidationError):
        CellGrid(2, 1.0)
