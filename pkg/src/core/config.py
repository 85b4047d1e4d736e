#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Validated run configuration."""

import logging
from typing import Literal, Optional

from pydantic import BaseModel, Extra, root_validator, validator

from core.grid import Grid
from core.material import MaterialModel
from literals import (
    CoefficientKind,
    InitialKind,
    Scheme,
    Splitting,
    StabilizationRange,
    VelocityKind,
)

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    class Config:
        extra = Extra.forbid
        allow_mutation = False


class GridConfig(_Section):
    """Grid resolution and domain size."""

    nx: int
    ny: int
    lx: float
    ly: float

    @validator("nx", "ny")
    def at_least_four_cells(cls, value: int) -> int:  # noqa: N805
        if value < 4:
            raise ValueError(f"needs at least 4 cells, got {value}")
        return value

    @validator("lx", "ly")
    def positive_length(cls, value: float) -> float:  # noqa: N805
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    def build(self) -> Grid:
        return Grid(self.nx, self.ny, self.lx, self.ly)


class MaterialConfig(_Section):
    """Constitutive parameters."""

    rho1: float
    rho2: float
    eta1: float
    eta2: float
    a_kind: CoefficientKind
    a0: float
    a1: float
    eps: float
    c0: Optional[float] = None
    k: Optional[float] = None

    @validator("rho1", "rho2", "eta1", "eta2", "a0")
    def positive(cls, value: float) -> float:  # noqa: N805
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @validator("a1")
    def non_negative(cls, value: float) -> float:  # noqa: N805
        if value < 0:
            raise ValueError(f"must be non-negative, got {value}")
        return value

    @validator("eps")
    def regularization_range(cls, value: float) -> float:  # noqa: N805
        if not 0.0 <= value < 1.0:
            raise ValueError(f"must lie in [0, 1), got {value}")
        return value

    def build(self, eps: float | None = None) -> MaterialModel:
        return MaterialModel(**{**self.dict(), "eps": self.eps if eps is None else eps})


class TimeConfig(_Section):
    dt: float
    t_end: float

    @validator("dt", "t_end")
    def positive(cls, value: float) -> float:  # noqa: N805
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @property
    def n_steps(self) -> int:
        """Number of full steps that fit into t_end."""
        return int(self.t_end / self.dt + 1e-9)


class PhaseFieldConfig(_Section):
    scheme: Scheme
    stabilization: Optional[float] = None
    stabilization_range: StabilizationRange = "clipped"
    c_stab: float

    @validator("stabilization")
    def non_negative(cls, value: Optional[float]) -> Optional[float]:  # noqa: N805
        if value is not None and value < 0:
            raise ValueError(f"must be non-negative, got {value}")
        return value

    @validator("c_stab")
    def positive(cls, value: float) -> float:  # noqa: N805
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value


class FlowConfig(_Section):
    enabled: bool
    splitting: Splitting
    force: Literal["korteweg", "potential"]
    mass_flux_correction: bool


class InitialConfig(_Section):
    """Initial order parameter and velocity."""

    kind: InitialKind
    mean: float
    amplitude: float
    width: float
    radius: float
    noise: float
    velocity: VelocityKind
    velocity_amplitude: float
    seed: int

    @validator("mean")
    def phase_range(cls, value: float) -> float:  # noqa: N805
        if not -1.0 <= value <= 1.0:
            raise ValueError(f"must lie in [-1, 1], got {value}")
        return value

    @validator("width", "radius")
    def positive(cls, value: float) -> float:  # noqa: N805
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @validator("amplitude", "noise", "velocity_amplitude", "seed")
    def non_negative(cls, value: float) -> float:  # noqa: N805
        if value < 0:
            raise ValueError(f"must be non-negative, got {value}")
        return value


class SolverConfig(_Section):
    tol: float
    max_iter_factor: int

    @validator("tol")
    def tolerance_range(cls, value: float) -> float:  # noqa: N805
        if not 0.0 < value < 1.0:
            raise ValueError(f"must lie in (0, 1), got {value}")
        return value

    @validator("max_iter_factor")
    def positive(cls, value: int) -> int:  # noqa: N805
        if value < 1:
            raise ValueError(f"must be at least 1, got {value}")
        return value


class OutputConfig(_Section):
    every: int

    @validator("every")
    def positive(cls, value: int) -> int:  # noqa: N805
        if value < 1:
            raise ValueError(f"must be at least 1, got {value}")
        return value


class SweepConfig(_Section):
    eps: list[float] = []

    @validator("eps")
    def strictly_decreasing(cls, values: list[float]) -> list[float]:  # noqa: N805
        if any(not 0.0 < value < 1.0 for value in values):
            raise ValueError(f"all values must lie in (0, 1), got {values}")
        if any(later >= earlier for earlier, later in zip(values, values[1:])):
            raise ValueError(f"values must be strictly decreasing, got {values}")
        return values


class SimConfig(_Section):
    """Complete configuration of one run or one ε-sweep."""

    grid: GridConfig
    material: MaterialConfig
    time: TimeConfig
    phasefield: PhaseFieldConfig
    flow: FlowConfig
    initial: InitialConfig
    solver: SolverConfig
    output: OutputConfig
    sweep: SweepConfig

    @root_validator(skip_on_failure=True)
    def scheme_supports_coefficient(cls, values: dict) -> dict:  # noqa: N805
        material, phasefield = values["material"], values["phasefield"]
        varying = material.a_kind != "constant" and material.a1 != 0.0
        if phasefield.scheme == "stabilized" and varying:
            raise ValueError("the stabilized scheme requires a constant gradient coefficient")
        return values

    def with_eps(self, eps: float) -> "SimConfig":
        """Copy with another regularization parameter and no sweep list."""
        return self.copy(
            update={
                "material": self.material.copy(update={"eps": eps}),
                "sweep": SweepConfig(eps=[]),
            }
        )

    def without_eps(self) -> dict:
        """Configuration echo with the regularization parameters removed, for sweep matching."""
        echo = self.dict()
        echo["material"].pop("eps")
        echo.pop("sweep")
        return echo
