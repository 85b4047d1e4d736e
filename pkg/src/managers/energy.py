#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Manager for energy reports, the energy inequality and the ε-uniform a priori bounds."""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.grid import ScalarField, face_average, grad_cc_to_face, laplace_neumann
from core.material import MaterialModel
from core.models import EnergyReport, FlowState, PhaseState, Trajectory
from literals import UNIFORMITY_FACTOR
from managers.flow import FlowManager

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InequalityResult:
    """Outcome of an energy inequality check between two stored times."""

    passed: bool
    slack: float
    s_idx: int
    t_idx: int


@dataclass(frozen=True)
class TrajectorySummary:
    """The four quantities bounded uniformly in ε, for one trajectory."""

    eps: float
    sup_e_tot: float
    lapA_sq_cum: float  # noqa: N815
    eps3_psi_ln_sq: float
    jhat_sq_cum: float

    def quantities(self) -> dict[str, float]:
        return {
            "sup_e_tot": self.sup_e_tot,
            "lapA_sq_cum": self.lapA_sq_cum,
            "eps3_psi_ln_sq": self.eps3_psi_ln_sq,
            "jhat_sq_cum": self.jhat_sq_cum,
        }


@dataclass(frozen=True)
class BoundsTable:
    """Per-ε summaries with the verdict of the uniformity heuristic."""

    rows: list[TrajectorySummary]
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass(frozen=True)
class EntropyCheck:
    passed: bool
    sup_g_eps: float
    bound: float


class EnergyManager:
    """Evaluate energies, dissipation rates and the quantities of the a priori estimates."""

    def __init__(self, material: MaterialModel, flow: FlowManager):
        self.material = material
        self.flow = flow

    def free_energy(self, phi: ScalarField) -> float:
        """Integral of psi_eps(phi) + |grad A(phi)|^2 / 2."""
        values = phi.values if self.material.eps == 0.0 else np.clip(phi.values, -1.0, 1.0)
        bulk = float(np.sum(self.material.psi_eps(values))) * phi.grid.cell_volume
        grad_a = grad_cc_to_face(ScalarField(phi.grid, self.material.antiderivative(phi.values)))
        return bulk + 0.5 * grad_a.inner(grad_a)

    def entropy_source(self, phi: ScalarField) -> float:
        """Integral of -psi''(phi) sqrt(a(phi)) |grad phi|^2 on faces, the non-convex entropy source."""
        average = face_average(phi)
        grad = grad_cc_to_face(phi)
        weight_x = -self.material.psi_second(average.x) * self.material.sqrt_a(average.x)
        weight_y = -self.material.psi_second(average.y) * self.material.sqrt_a(average.y)
        total = np.sum(weight_x * grad.x**2) + np.sum(weight_y * grad.y**2)
        return float(total * phi.grid.cell_volume)

    def report(
        self,
        flow: FlowState,
        phase: PhaseState,
        previous: EnergyReport | None = None,
        dt: float = 0.0,
    ) -> EnergyReport:
        """Evaluate all functionals on one state by midpoint quadrature.

        Cumulative space-time integrals of state functionals use the left endpoint rule
        (``previous`` rates times ``dt``); cumulative dissipation adds the rates of the step
        that produced ``phase`` and ``flow``.
        """
        grid = phase.grid
        material = self.material
        phi = phase.phi

        e_kin = self.flow.kinetic_energy(flow.v, flow.rho)
        e_free = self.free_energy(phi)
        d_visc = self.flow.dissipation(flow.v, phi)
        d_flux = phase.Jhat.inner(phase.Jhat)

        lap_a = laplace_neumann(ScalarField(grid, material.antiderivative(phi.values)))
        psi_ln_prime = material.psi_ln_prime(material.clip(phi.values))

        rates = {
            "lapA_sq": float(np.sum(lap_a.values**2)) * grid.cell_volume,
            "psi_ln_prime_sq": float(np.sum(psi_ln_prime**2)) * grid.cell_volume,
            "entropy_source": self.entropy_source(phi),
        }
        if previous is None:
            cumulative = dict.fromkeys(
                ["lapA_sq_cum", "psi_ln_prime_sq_cum", "entropy_source_cum"], 0.0
            )
            visc_cum = flux_cum = 0.0
        else:
            cumulative = {
                "lapA_sq_cum": previous.lapA_sq_cum + dt * previous.lapA_sq,
                "psi_ln_prime_sq_cum": (
                    previous.psi_ln_prime_sq_cum + dt * previous.psi_ln_prime_sq
                ),
                "entropy_source_cum": previous.entropy_source_cum + dt * previous.entropy_source,
            }
            visc_cum = previous.visc_cum + dt * d_visc
            flux_cum = previous.flux_cum + dt * d_flux

        return EnergyReport(
            t=phase.t,
            e_kin=e_kin,
            e_free=e_free,
            e_tot=e_kin + e_free,
            d_visc=d_visc,
            d_flux=d_flux,
            mass=phi.mean(),
            g_eps_int=float(np.sum(material.entropy_G_eps(phi.values))) * grid.cell_volume,
            phi_min=float(np.min(phi.values)),
            phi_max=float(np.max(phi.values)),
            visc_cum=visc_cum,
            flux_cum=flux_cum,
            **rates,
            **cumulative,
        )

    # --- checks ---

    @staticmethod
    def check_energy_inequality(
        history: Sequence[EnergyReport], s_idx: int, t_idx: int, tol: float
    ) -> InequalityResult:
        """E(t) + dissipation over (s, t] - E(s) <= tol, returned with its signed slack."""
        if s_idx > t_idx:
            raise ValueError(f"s_idx = {s_idx} must not exceed t_idx = {t_idx}")
        if s_idx == t_idx:
            return InequalityResult(True, 0.0, s_idx, t_idx)
        start, end = history[s_idx], history[t_idx]
        slack = end.e_tot + (end.dissipation_cum - start.dissipation_cum) - start.e_tot
        return InequalityResult(slack <= tol, slack, s_idx, t_idx)

    @staticmethod
    def check_all_pairs(history: Sequence[EnergyReport], tol: float) -> InequalityResult:
        """Worst slack over every pair s < t.

        The slack is a difference of E + D_cum at the two times, so the worst pair ends at t
        with the smallest prefix value before it.
        """
        values = np.array([r.e_tot + r.dissipation_cum for r in history])
        if len(values) < 2:
            return InequalityResult(True, 0.0, 0, 0)
        best_start, best_slack, worst = 0, -np.inf, (0, 0)
        for t_idx in range(1, len(values)):
            if values[t_idx - 1] < values[best_start]:
                best_start = t_idx - 1
            slack = values[t_idx] - values[best_start]
            if slack > best_slack:
                best_slack, worst = slack, (best_start, t_idx)
        return InequalityResult(bool(best_slack <= tol), float(best_slack), *worst)

    @staticmethod
    def step_slacks(history: Sequence[EnergyReport]) -> np.ndarray:
        """Slack of every pair of consecutive reports."""
        values = np.array([r.e_tot + r.dissipation_cum for r in history])
        return np.diff(values)

    @staticmethod
    def summarize(trajectory: Trajectory, eps: float) -> TrajectorySummary:
        reports = trajectory.reports
        last = reports[-1]
        return TrajectorySummary(
            eps=eps,
            sup_e_tot=max(r.e_tot for r in reports),
            lapA_sq_cum=last.lapA_sq_cum,
            eps3_psi_ln_sq=eps**3 * last.psi_ln_prime_sq_cum,
            jhat_sq_cum=last.flux_cum,
        )

    @staticmethod
    def check_uniform_bounds(
        sweep: dict[float, TrajectorySummary], factor: float = UNIFORMITY_FACTOR
    ) -> BoundsTable:
        """Each quantity must stay within ``factor`` times its value at the largest ε.

        A trend heuristic, not a proof of the bound.
        """
        if len(sweep) < 3:
            raise ValueError(f"uniformity check needs at least 3 values of eps, got {len(sweep)}")
        rows = [sweep[eps] for eps in sorted(sweep, reverse=True)]
        reference = rows[0].quantities()
        failures = []
        for row in rows[1:]:
            for name, value in row.quantities().items():
                if not value <= factor * reference[name]:
                    failures.append(
                        f"{name} at eps={row.eps:g}: "
                        f"{value:.6g} > {factor:g} x {reference[name]:.6g}"
                    )
        for failure in failures:
            logger.warning(f"uniform bound violated: {failure}")
        return BoundsTable(rows=rows, failures=failures)

    def check_entropy_estimate(
        self, trajectory: Trajectory, phi0: ScalarField, rtol: float = 1e-6
    ) -> EntropyCheck:
        """sup_t int G_eps(phi(t)) <= int G(phi0) + the accumulated non-convex source."""
        reports = trajectory.reports
        sup_g = max(r.g_eps_int for r in reports)
        initial = float(np.sum(self.material.entropy_G(phi0.values))) * phi0.grid.cell_volume
        source = max(max(r.entropy_source_cum for r in reports), 0.0)
        bound = initial + source
        passed = sup_g <= bound * (1.0 + rtol) + rtol
        return EntropyCheck(passed=passed, sup_g_eps=sup_g, bound=bound)
