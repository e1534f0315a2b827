"""Window-end snapshots of a coupled run, shared by the orchestrator, the diagnostics and the writers."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from fsiheat.errors import ValidationError
from fsiheat.extension import CoefficientFields
from fsiheat.fluid import FluidState
from fsiheat.geometry import CellGrid, DisplacementSample, ReferenceGeometry
from fsiheat.interface import InterfaceStencil
from fsiheat.structure import ShellState
from fsiheat.types import FloatArray


@dataclass(frozen=True, eq=False)
class Frame:
    """State at t = window·Δt together with the Γ data the next window exchanges.

    `velocity_trace` and `theta_trace` are the fluid traces u∘Φ_w, ϑ∘Φ_w at the
    Γ-nodes; `shell_velocity` and `shell_theta` the shell samples ∂t w, θ.
    """

    window: int
    time: float
    fluid: FluidState
    shell: ShellState
    displacement: DisplacementSample
    coefficients: CoefficientFields
    velocity_trace: FloatArray
    theta_trace: FloatArray
    shell_velocity: FloatArray
    shell_theta: FloatArray
    normals: FloatArray
    gamma_weights: FloatArray

    @property
    def normal_velocity_trace(self) -> FloatArray:
        return np.sum(self.velocity_trace * self.normals, axis=-1)


def capture_frame(
    window: int,
    time: float,
    fluid: FluidState,
    shell: ShellState,
    displacement: DisplacementSample,
    coefficients: CoefficientFields,
    stencil: InterfaceStencil,
    velocity_trace: FloatArray,
    theta_trace: FloatArray,
) -> Frame:
    _, v, theta = shell.samples(displacement.n)
    return Frame(
        window=window,
        time=time,
        fluid=fluid,
        shell=shell,
        displacement=displacement,
        coefficients=coefficients,
        velocity_trace=velocity_trace,
        theta_trace=theta_trace,
        shell_velocity=v,
        shell_theta=theta,
        normals=stencil.reference_normals,
        gamma_weights=stencil.weights,
    )


@dataclass
class Trajectory:
    geometry: ReferenceGeometry
    grid: CellGrid
    delta: float
    frames: list[Frame] = field(default_factory=list)
    stopped: str | None = None

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def append(self, frame: Frame) -> None:
        if self.frames and frame.time <= self.frames[-1].time:
            raise ValidationError("frames must advance in time", [frame.time])
        self.frames.append(frame)

    @property
    def times(self) -> FloatArray:
        return np.array([frame.time for frame in self.frames])

    @property
    def final(self) -> Frame:
        return self.frames[-1]
