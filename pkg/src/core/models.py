#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Collection of state objects for the phase field, the flow and the energy bookkeeping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from core.grid import FaceField, Grid, ScalarField

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhaseState:
    """Order parameter, chemical potential and the fluxes of the step that produced them."""

    phi: ScalarField
    mu: ScalarField
    J: FaceField  # noqa: N815
    Jhat: FaceField  # noqa: N815
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    @property
    def overshoot(self) -> float:
        """How far phi leaves [-1, 1]; zero when it stays inside."""
        return float(max(0.0, np.max(np.abs(self.phi.values)) - 1.0))


@dataclass(frozen=True)
class FlowState:
    """Volume-averaged velocity, rewritten pressure g and density."""

    v: FaceField
    g: ScalarField
    rho: ScalarField
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.v.grid


@dataclass(frozen=True)
class EnergyReport:
    """Energies, dissipation rates and the accumulated quantities of the a priori estimates.

    ``d_visc`` and ``d_flux`` are the rates of the step that produced the state;
    the ``*_cum`` fields integrate over all steps up to ``t``.
    """

    t: float
    e_kin: float
    e_free: float
    e_tot: float
    d_visc: float
    d_flux: float
    mass: float
    g_eps_int: float
    lapA_sq_cum: float  # noqa: N815
    psi_ln_prime_sq_cum: float
    phi_min: float
    phi_max: float
    lapA_sq: float = 0.0  # noqa: N815
    psi_ln_prime_sq: float = 0.0
    entropy_source: float = 0.0
    entropy_source_cum: float = 0.0
    visc_cum: float = 0.0
    flux_cum: float = 0.0

    @property
    def dissipation_cum(self) -> float:
        return self.visc_cum + self.flux_cum

    @property
    def overshoot(self) -> float:
        return max(0.0, -1.0 - self.phi_min, self.phi_max - 1.0)

    def series_row(self) -> list[float]:
        """Values in the column order of the time-series file."""
        return [
            self.t,
            self.e_kin,
            self.e_free,
            self.e_tot,
            self.d_visc,
            self.d_flux,
            self.mass,
            self.g_eps_int,
            self.lapA_sq_cum,
            self.psi_ln_prime_sq_cum,
            self.phi_min,
            self.phi_max,
        ]

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class TrajectoryEntry:
    """One stored output step."""

    step: int
    phase: PhaseState
    flow: FlowState
    report: EnergyReport

    @property
    def t(self) -> float:
        return self.report.t


@dataclass
class Trajectory:
    """Stored output steps of one run, in strictly increasing time."""

    grid: Grid
    dt: float
    entries: list[TrajectoryEntry] = field(default_factory=list)
    stabilization: float | None = None

    def append(self, entry: TrajectoryEntry) -> None:
        if self.entries and entry.t <= self.entries[-1].t:
            raise ValueError(
                f"trajectory times must increase, got {entry.t} after {self.entries[-1].t}"
            )
        self.entries.append(entry)

    @property
    def reports(self) -> list[EnergyReport]:
        return [entry.report for entry in self.entries]

    @property
    def last(self) -> TrajectoryEntry:
        return self.entries[-1]

    def __len__(self) -> int:
        return len(self.entries)
