"""Reference geometry, tubular neighbourhood and displacement-driven deformation.

The reference boundary is a closed C^3 curve ``phi: [0, 1) -> R^2`` with outward
unit normal ``n``.  A normal displacement ``w`` moves it to ``phi + w n``; the
interior of the moved curve is the physical fluid domain.  Inside the tube
``{phi(y) + z n(y): a < z < b}`` points are addressed by the pair (y, z) of
projection and signed distance, which is all the flow map needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, NamedTuple

import numpy as np
from loguru import logger
from scipy import optimize

from fsiheat.errors import DomainError, GeometryDegeneracyError, ValidationError
from fsiheat.types import FloatArray

ChartName = Literal["circle", "ellipse"]
_DENSE_SAMPLES = 2048


@dataclass(frozen=True)
class ProfileFGamma:
    """Mollified trapezoid used to fade the displacement out across the tube.

    `lower_outer` and `upper_outer` are positions (m'' and M''); `lower_inner`
    and `upper_inner` are the signed ramp lengths (m' < 0 < M').  The raw
    trapezoid is 1 on [m'' - m', M'' - M'], ramps linearly to 0 at m'' and M''
    and is then convolved with a bump of half-width `alpha`.
    """

    lower_outer: float = -0.45
    lower_inner: float = -0.35
    upper_inner: float = 0.35
    upper_outer: float = 0.45
    alpha: float = 0.04
    table_size: int = 4096
    quadrature_points: int = 64

    def __post_init__(self) -> None:
        if not (self.lower_outer < self.lower_inner < 0.0 < self.upper_inner < self.upper_outer):
            raise ValidationError(
                "profile requires m'' < m' < 0 < M' < M''",
                [self.lower_outer, self.lower_inner, self.upper_inner, self.upper_outer],
            )
        limit = 0.5 * min(self.lower_inner - self.lower_outer, self.upper_outer - self.upper_inner)
        if not 0.0 < self.alpha < limit:
            raise ValidationError(f"mollifier half-width must lie in (0, {limit:g})", [self.alpha])
        if not self.plateau[0] + self.alpha < 0.0 < self.plateau[1] - self.alpha:
            raise ValidationError("mollified plateau must contain the reference boundary", list(self.plateau))

    @classmethod
    def for_bounds(cls, a: float, b: float, alpha: float = 0.04) -> ProfileFGamma:
        return cls(lower_outer=a + 0.05, lower_inner=a + 0.15, upper_inner=b - 0.15, upper_outer=b - 0.05, alpha=alpha)

    @property
    def plateau(self) -> tuple[float, float]:
        return self.lower_outer - self.lower_inner, self.upper_outer - self.upper_inner

    @property
    def lower_ramp(self) -> float:
        return -self.lower_inner

    @property
    def upper_ramp(self) -> float:
        return self.upper_inner

    @property
    def exact_one(self) -> tuple[float, float]:
        """Interval on which f_Γ equals 1 exactly."""
        lo, hi = self.plateau
        return lo + self.alpha, hi - self.alpha

    @property
    def support(self) -> tuple[float, float]:
        return self.lower_outer - self.alpha, self.upper_outer + self.alpha

    def trapezoid(self, x: FloatArray) -> FloatArray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.plateau
        rising = (x - self.lower_outer) / self.lower_ramp
        falling = (self.upper_outer - x) / self.upper_ramp
        return np.clip(np.minimum(rising, falling), 0.0, 1.0)

    def trapezoid_slope(self, x: FloatArray) -> FloatArray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.plateau
        slope = np.zeros_like(x)
        slope[(x > self.lower_outer) & (x < lo)] = 1.0 / self.lower_ramp
        slope[(x > hi) & (x < self.upper_outer)] = -1.0 / self.upper_ramp
        return slope

    @cached_property
    def _weights(self) -> tuple[FloatArray, FloatArray]:
        shifts = np.linspace(-self.alpha, self.alpha, self.quadrature_points)
        ratio = shifts / self.alpha
        bump = np.zeros_like(shifts)
        inside = np.abs(ratio) < 1.0
        bump[inside] = np.exp(-1.0 / (1.0 - ratio[inside] ** 2))
        return shifts, bump / bump.sum()

    @cached_property
    def _table(self) -> tuple[FloatArray, FloatArray, FloatArray]:
        lo, hi = self.support
        pad = 0.05 * (hi - lo)
        grid = np.linspace(lo - pad, hi + pad, self.table_size)
        shifts, weights = self._weights
        shifted = grid[:, None] - shifts[None, :]
        values = self.trapezoid(shifted) @ weights
        slopes = self.trapezoid_slope(shifted) @ weights
        return grid, values, slopes

    def __call__(self, x: FloatArray) -> FloatArray:
        grid, values, _ = self._table
        return np.interp(x, grid, values, left=0.0, right=0.0)

    def derivative(self, x: FloatArray) -> FloatArray:
        grid, _, slopes = self._table
        return np.interp(x, grid, slopes, left=0.0, right=0.0)


class InjectivityReport(NamedTuple):
    admissible: bool
    margin: float


@dataclass(frozen=True, eq=False)
class DisplacementSample:
    """Normal displacement sampled at N equispaced nodes y_j = j / N."""

    values: FloatArray
    rates: FloatArray | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 4:
            raise ValidationError("displacement needs at least 4 nodes", [values.shape])
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.rates is not None:
            rates = np.array(self.rates, dtype=float)
            if rates.shape != values.shape:
                raise ValidationError("displacement rates must share the node grid", [rates.shape])
            rates.flags.writeable = False
            object.__setattr__(self, "rates", rates)

    @classmethod
    def zeros(cls, n: int) -> DisplacementSample:
        return cls(np.zeros(n))

    @classmethod
    def from_function(cls, func, n: int) -> DisplacementSample:  # type: ignore[no-untyped-def]
        return cls(np.asarray(func(np.arange(n) / n), dtype=float))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def nodes(self) -> FloatArray:
        return np.arange(self.n) / self.n

    @cached_property
    def _coefficients(self) -> FloatArray:
        return np.fft.rfft(self.values) / self.n

    def _modal_basis(self, y: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        modes = np.arange(self._coefficients.size)
        weights = np.full(modes.size, 2.0)
        weights[0] = 1.0
        if self.n % 2 == 0:
            weights[-1] = 1.0
        phase = np.exp(2j * np.pi * np.outer(np.atleast_1d(y), modes))
        return modes, weights, phase

    def evaluate(self, y: FloatArray) -> FloatArray:
        """Trigonometric interpolant of the node values."""
        _, weights, phase = self._modal_basis(y)
        out = np.real(phase @ (weights * self._coefficients))
        return out.reshape(np.shape(y))

    def derivative(self, y: FloatArray) -> FloatArray:
        modes, weights, phase = self._modal_basis(y)
        out = np.real(phase @ (2j * np.pi * modes * weights * self._coefficients))
        return out.reshape(np.shape(y))

    def node_derivative(self) -> FloatArray:
        return self.derivative(self.nodes)


@dataclass(frozen=True)
class ReferenceGeometry:
    """Reference curve, tubular bounds (a, b) and the extended box of half-width 2R."""

    chart: ChartName = "circle"
    radius: float = 1.0
    aspect: float = 0.8
    a: float = -0.5
    b: float = 0.5
    n_gamma: int = 128
    profile: ProfileFGamma = field(default_factory=ProfileFGamma)

    def __post_init__(self) -> None:
        if not self.a < 0.0 < self.b:
            raise ValidationError("tubular bounds require a < 0 < b", [self.a, self.b])
        if self.radius <= 0.0 or self.n_gamma < 8:
            raise ValidationError("radius must be positive and n_gamma >= 8", [self.radius, self.n_gamma])
        if self.chart == "ellipse" and not 0.0 < self.aspect <= 1.0:
            raise ValidationError("ellipse aspect must lie in (0, 1]", [self.aspect])
        kappa_max = float(np.max(self.curvature(np.linspace(0.0, 1.0, 256, endpoint=False))))
        if 1.0 + kappa_max * self.a <= 0.0:
            raise ValidationError("inner tube bound exceeds the radius of curvature", [self.a, 1.0 / kappa_max])
        extent = float(np.max(np.abs(self.phi(self.nodes)))) + self.b
        if extent >= self.half_width:
            raise ValidationError("deformed configurations must stay strictly inside the box", [extent])
        if not (self.a < self.profile.support[0] and self.profile.support[1] < self.b):
            raise ValidationError("f_Γ support must lie inside the tube", list(self.profile.support))

    @property
    def half_width(self) -> float:
        return 2.0 * self.radius

    @property
    def nodes(self) -> FloatArray:
        return np.arange(self.n_gamma) / self.n_gamma

    def _semi_axes(self) -> tuple[float, float]:
        if self.chart == "circle":
            return self.radius, self.radius
        return self.radius, self.radius * self.aspect

    def phi(self, y: FloatArray) -> FloatArray:
        ax, ay = self._semi_axes()
        angle = 2.0 * np.pi * np.asarray(y, dtype=float)
        return np.stack([ax * np.cos(angle), ay * np.sin(angle)], axis=-1)

    def dphi(self, y: FloatArray) -> FloatArray:
        ax, ay = self._semi_axes()
        angle = 2.0 * np.pi * np.asarray(y, dtype=float)
        return 2.0 * np.pi * np.stack([-ax * np.sin(angle), ay * np.cos(angle)], axis=-1)

    def ddphi(self, y: FloatArray) -> FloatArray:
        return -((2.0 * np.pi) ** 2) * self.phi(y)

    def speed(self, y: FloatArray) -> FloatArray:
        return np.linalg.norm(self.dphi(y), axis=-1)

    def tangent(self, y: FloatArray) -> FloatArray:
        d = self.dphi(y)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def normal(self, y: FloatArray) -> FloatArray:
        t = self.tangent(y)
        return np.stack([t[..., 1], -t[..., 0]], axis=-1)

    def curvature(self, y: FloatArray) -> FloatArray:
        d1, d2 = self.dphi(y), self.ddphi(y)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    # ------------------------------------------------------------------ tube coordinates

    def tube_coordinates(self, points: FloatArray) -> tuple[FloatArray, FloatArray]:
        """Projection y and signed distance d for every point, without domain checks."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.chart == "circle":
            y = np.mod(np.arctan2(pts[:, 1], pts[:, 0]) / (2.0 * np.pi), 1.0)
            d = np.hypot(pts[:, 0], pts[:, 1]) - self.radius
            return y, d
        return self._newton_projection(pts)

    def _newton_projection(self, pts: FloatArray) -> tuple[FloatArray, FloatArray]:
        samples = np.arange(_DENSE_SAMPLES) / _DENSE_SAMPLES
        curve = self.phi(samples)
        gap = np.linalg.norm(pts[:, None, :] - curve[None, :, :], axis=-1)
        y0 = samples[np.argmin(gap, axis=1)]

        def gradient(y: FloatArray) -> FloatArray:
            return np.einsum("ij,ij->i", self.phi(y) - pts, self.dphi(y))

        def hessian(y: FloatArray) -> FloatArray:
            d1 = self.dphi(y)
            return np.einsum("ij,ij->i", d1, d1) + np.einsum("ij,ij->i", self.phi(y) - pts, self.ddphi(y))

        y = np.asarray(optimize.newton(gradient, y0, fprime=hessian, tol=1e-14, maxiter=50), dtype=float)
        y = np.mod(y, 1.0)
        d = np.einsum("ij,ij->i", pts - self.phi(y), self.normal(y))
        return y, d

    def in_tube(self, d: FloatArray) -> FloatArray:
        return (d > self.a) & (d < self.b)

    def _checked(self, point: FloatArray) -> tuple[float, float]:
        y, d = self.tube_coordinates(np.asarray(point, dtype=float).reshape(1, 2))
        if not self.in_tube(d)[0]:
            raise DomainError(
                f"point {tuple(np.ravel(point))} lies outside the tubular neighbourhood ({self.a}, {self.b})"
            )
        return float(y[0]), float(d[0])

    def signed_distance(self, point: FloatArray) -> float:
        """(X - π(X))·n(π(X)): negative inside Ω, zero on ∂Ω, positive outside."""
        return self._checked(point)[1]

    def project_to_gamma(self, point: FloatArray) -> float:
        return self._checked(point)[0]

    # ------------------------------------------------------------------ deformation

    def check_injectivity(self, w: DisplacementSample) -> InjectivityReport:
        lo, hi = float(np.min(w.values)), float(np.max(w.values))
        margin = min(lo - self.a, self.b - hi)
        return InjectivityReport(admissible=bool(self.a < lo and hi < self.b), margin=margin)

    def require_admissible(self, w: DisplacementSample) -> None:
        report = self.check_injectivity(w)
        if not report.admissible:
            raise GeometryDegeneracyError(
                f"displacement leaves the tube ({self.a}, {self.b}); margin {report.margin:.3e}", margin=report.margin
            )

    def deformed_boundary(self, w: DisplacementSample) -> FloatArray:
        y = w.nodes
        return self.phi(y) + w.values[:, None] * self.normal(y)

    def flow_map(self, w: DisplacementSample, points: FloatArray) -> FloatArray:
        """X + f_Γ(d) w(π) n(π) inside the tube, X elsewhere."""
        self.require_admissible(w)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(np.abs(pts) > self.half_width + 1e-12):
            raise DomainError(f"points outside the box of half-width {self.half_width}")
        y, d = self.tube_coordinates(pts)
        tube = self.in_tube(d)
        shift = np.where(tube, self.profile(d) * w.evaluate(y), 0.0)
        out = pts + shift[:, None] * self.normal(y)
        return out.reshape(np.shape(points))

    def _local_gradient(
        self, w: DisplacementSample, y: FloatArray, d: FloatArray
    ) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        f, fp = self.profile(d), self.profile.derivative(d)
        wy, dwy = w.evaluate(y), w.derivative(y)
        kappa, speed = self.curvature(y), self.speed(y)
        stretch = 1.0 + kappa * d
        return 1.0 + kappa * f * wy / stretch, f * dwy / (speed * stretch), 1.0 + fp * wy, np.zeros_like(d)

    def flow_map_gradient(self, w: DisplacementSample, points: FloatArray) -> FloatArray:
        """Cartesian gradient of the flow map, shape (P, 2, 2)."""
        self.require_admissible(w)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y, d = self.tube_coordinates(pts)
        tt, nt, nn, tn = self._local_gradient(w, y, d)
        local = np.stack([np.stack([tt, tn], axis=-1), np.stack([nt, nn], axis=-1)], axis=-2)
        frame = np.stack([self.tangent(y), self.normal(y)], axis=-1)
        grad = frame @ local @ np.swapaxes(frame, -1, -2)
        grad[~self.in_tube(d)] = np.eye(2)
        return grad

    def normal_jacobian_factor(self, w: DisplacementSample, points: FloatArray) -> FloatArray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y, d = self.tube_coordinates(pts)
        return np.where(self.in_tube(d), 1.0 + self.profile.derivative(d) * w.evaluate(y), 1.0)

    def jacobian_bounds(self, w: DisplacementSample) -> tuple[float, float]:
        """Two-sided bound (c, C) of 1 + f_Γ'(d) w(π) over the tube."""
        lo, hi = float(np.min(w.values)), float(np.max(w.values))
        down = max(max(0.0, hi) / self.profile.upper_ramp, max(0.0, -lo) / self.profile.lower_ramp)
        up = max(max(0.0, hi) / self.profile.lower_ramp, max(0.0, -lo) / self.profile.upper_ramp)
        return 1.0 - down, 1.0 + up

    def deformed_normal_and_area(self, w: DisplacementSample, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        """Unit normal n^w and area factor S^w = det∇Φ |∇Φ^{-T} n| at boundary parameters y."""
        self.require_admissible(w)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        tt, nt, nn, _ = self._local_gradient(w, y, np.zeros_like(y))
        det = tt * nn
        if np.any(det <= 0.0):
            bad = y[det <= 0.0]
            raise GeometryDegeneracyError(f"singular flow-map Jacobian at y={bad[:4].tolist()}")
        # inverse transpose of [[tt, 0], [nt, nn]] applied to the local normal (0, 1)
        tangential, normal = -nt / det, tt / det
        length = np.hypot(tangential, normal)
        direction = (tangential / length)[:, None] * self.tangent(y) + (normal / length)[:, None] * self.normal(y)
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        return direction, det * length

    def contains(self, w: DisplacementSample, points: FloatArray) -> FloatArray:
        """Membership of points in the deformed domain Ω^w."""
        return self.interface_offset(w, points) < 0.0

    def interface_offset(self, w: DisplacementSample, points: FloatArray) -> FloatArray:
        """Signed normal offset from Γ^w: d - w(π) inside the tube, d elsewhere."""
        y, d = self.tube_coordinates(points)
        return np.where(self.in_tube(d), d - w.evaluate(y), d)

    def curvature_factor_bound(self) -> float:
        """sup |κ / (1 + κ z)| over the tube, the divergence defect of the normal field."""
        y = np.linspace(0.0, 1.0, 512, endpoint=False)
        kappa = self.curvature(y)
        worst = np.maximum(np.abs(kappa / (1.0 + kappa * self.a)), np.abs(kappa / (1.0 + kappa * self.b)))
        return float(np.max(worst))


def build_geometry(
    chart: ChartName = "circle",
    radius: float = 1.0,
    aspect: float = 0.8,
    a: float = -0.5,
    b: float = 0.5,
    n_gamma: int = 128,
    profile: ProfileFGamma | None = None,
) -> ReferenceGeometry:
    profile = profile or ProfileFGamma.for_bounds(a, b)
    geometry = ReferenceGeometry(chart=chart, radius=radius, aspect=aspect, a=a, b=b, n_gamma=n_gamma, profile=profile)
    logger.debug("geometry.built chart={} radius={} tube=({}, {}) n_gamma={}", chart, radius, a, b, n_gamma)
    return geometry


@dataclass(frozen=True)
class CellGrid:
    """N×N cell-centred grid on the box [-L, L]², first array axis along x."""

    n: int
    half_width: float

    def __post_init__(self) -> None:
        if self.n < 4 or self.half_width <= 0.0:
            raise ValidationError("grid needs n >= 4 cells and a positive half-width", [self.n, self.half_width])

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def area(self) -> float:
        return (2.0 * self.half_width) ** 2

    @cached_property
    def centers(self) -> FloatArray:
        return -self.half_width + (np.arange(self.n) + 0.5) * self.h

    @cached_property
    def mesh(self) -> tuple[FloatArray, FloatArray]:
        x, y = np.meshgrid(self.centers, self.centers, indexing="ij")
        return x, y

    @cached_property
    def points(self) -> FloatArray:
        x, y = self.mesh
        return np.stack([x.ravel(), y.ravel()], axis=-1)

    def integrate(self, field: FloatArray) -> float:
        """Midpoint rule over the box."""
        return float(np.sum(field) * self.cell_area)
