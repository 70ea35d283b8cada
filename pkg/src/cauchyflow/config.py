"""Run configuration: a JSON document validated against a strict schema.

Unknown keys are rejected at every level and every tolerance must be
positive. ``RunConfig.model_dump(mode="json")`` re-parses to an equal config,
which is what the reports echo.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, field_validator, model_validator

FlowName = Literal["rest", "uniform", "solid_rotation", "taylor_green_2d", "abc", "divergent"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FlowSpec(_Strict):
    name: FlowName
    amplitude: float = 1.0
    A: float = 1.0
    B: float = 1.0
    C: float = 1.0
    U: Optional[list[float]] = None
    omega: float = 1.0

    def build(self, dim: int):
        from .oracle import AnalyticFlow

        if self.name == "uniform":
            if self.U is None:
                raise ValueError("uniform flow needs U")
            return AnalyticFlow.uniform(self.U)
        return AnalyticFlow.from_spec(self.name, dim, amplitude=self.amplitude, A=self.A, B=self.B,
                                      C=self.C, omega=self.omega)


class ContourSpec(_Strict):
    kind: Literal["circle"] = "circle"
    center: Optional[list[float]] = None
    radius: PositiveFloat = 1.0
    markers: int = Field(256, ge=16)
    normal: Optional[list[float]] = None
    marker_sweep: list[int] = Field(default_factory=lambda: [16, 32, 64, 128, 256])

    @field_validator("marker_sweep")
    @classmethod
    def _sweep(cls, v):
        if any(m < 16 for m in v):
            raise ValueError("marker counts must be >= 16")
        return v


class SurfaceSpec(_Strict):
    kind: Literal["disk", "cap"] = "disk"
    n_radial: int = Field(24, ge=2)
    n_angular: int = Field(128, ge=8)
    height: PositiveFloat = 0.5


class Tolerances(_Strict):
    oracle: PositiveFloat = 1e-12  # trajectory integration tolerance, not a pass threshold
    invariant: PositiveFloat = 1e-6
    determinant: PositiveFloat = 1e-7
    vorticity: PositiveFloat = 1e-6
    scalar_vorticity: PositiveFloat = 1e-8
    circulation: PositiveFloat = 1e-6
    stokes: PositiveFloat = 1e-6
    weber: PositiveFloat = 1e-6
    noether_order_low: PositiveFloat = 1.8
    noether_order_high: PositiveFloat = 2.2
    noether_floor: PositiveFloat = 1e-10
    taylor_positions: PositiveFloat = 1e-8
    taylor_invariant: PositiveFloat = 1e-7
    second_order: PositiveFloat = 1e-10
    marker_order: PositiveFloat = 4.0


class RunConfig(_Strict):
    flow: FlowSpec
    dimension: Literal[2, 3]
    resolution: int = Field(32, ge=4)
    order: int = Field(10, ge=2)
    safety: float = Field(0.5, gt=0, lt=1)
    dealias: bool = True
    times: list[float] = Field(default_factory=lambda: [0.5])
    noether_dt: list[PositiveFloat] = Field(default_factory=lambda: [0.02, 0.01, 0.005])
    weber_samples: int = Field(65, ge=3)
    contour: ContourSpec = Field(default_factory=ContourSpec)
    surface: SurfaceSpec = Field(default_factory=SurfaceSpec)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output: str = "cauchyflow-out"
    seed: int = 0

    @field_validator("resolution")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("resolution must be even")
        return v

    @field_validator("times")
    @classmethod
    def _times(cls, v):
        if not v or any((not math.isfinite(t)) or t < 0 for t in v) or sorted(v) != v:
            raise ValueError("times must be a non-empty, sorted list of non-negative numbers")
        return v

    @field_validator("weber_samples")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("weber_samples must be odd")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        need = {"taylor_green_2d": 2, "solid_rotation": 2, "abc": 3}.get(self.flow.name)
        if need and need != self.dimension:
            raise ValueError(f"flow {self.flow.name} is {need}-dimensional")
        if self.flow.name == "uniform" and (self.flow.U is None or len(self.flow.U) != self.dimension):
            raise ValueError("uniform flow needs one velocity component per dimension")
        if self.contour.center is not None and len(self.contour.center) != self.dimension:
            raise ValueError("contour center must match the dimension")
        if self.flow.name == "solid_rotation":
            raise ValueError("solid_rotation is not periodic; use it through the library, not a grid run")
        return self

    @property
    def t_final(self) -> float:
        return self.times[-1]

    def contour_center(self) -> list[float]:
        """Configured center, or a seeded random placement inside the box."""
        if self.contour.center is not None:
            return list(self.contour.center)
        rng = np.random.default_rng(self.seed)
        lo, hi = self.contour.radius, 2 * math.pi - self.contour.radius
        if hi <= lo:
            return [math.pi] * self.dimension
        return [float(x) for x in rng.uniform(lo, hi, self.dimension)]

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def load_config(path) -> RunConfig:
    return RunConfig.model_validate(json.loads(Path(path).read_text()))
