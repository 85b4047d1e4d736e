#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Manager for the Cahn-Hilliard subsystem: chemical potential, degenerate flux and time step."""

import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from common.exceptions import NonConvergenceError, StabilityViolationError
from core.grid import (
    FaceField,
    Grid,
    ScalarField,
    advect_upwind,
    div_face_to_cc,
    face_average,
    grad_cc_to_face,
    laplace_neumann,
)
from core.material import MaterialModel
from core.models import PhaseState
from literals import (
    EXPLICIT_C_STAB,
    OVERSHOOT_LIMIT,
    SOLVER_TOL,
    STABILITY_SLACK,
    Scheme,
    StabilizationRange,
)

logger = logging.getLogger(__name__)


class PhaseFieldManager:
    """Assemble the chemical potential and fluxes and advance the order parameter."""

    def __init__(
        self,
        grid: Grid,
        material: MaterialModel,
        scheme: Scheme = "stabilized",
        stabilization: float | None = None,
        stabilization_range: StabilizationRange = "clipped",
        c_stab: float = EXPLICIT_C_STAB,
        tol: float = SOLVER_TOL,
    ):
        self.grid = grid
        self.material = material
        self.scheme: Scheme = scheme
        self.stabilization = stabilization
        self.stabilization_range: StabilizationRange = stabilization_range
        self.c_stab = c_stab
        self.tol = tol

    @property
    def constant_coefficient(self) -> bool:
        return self.material.a_kind == "constant" or self.material.a1 == 0.0

    def prepare(self, phi0: ScalarField) -> float:
        """Fix the stabilization constant for a run starting from ``phi0``.

        Unless configured, S bounds |psi_eps''| on the whole clipped range. With the ``data``
        range it only covers the band where the regularized mobility differs from the
        degenerate one and the range of the initial data.
        """
        if self.stabilization is None:
            radius = 1.0 - self.material.clip_margin
            if self.stabilization_range == "data":
                radius = max(1.0 - self.material.eps, float(np.max(np.abs(phi0.values))))
            self.stabilization = self.material.stabilization(radius)
            logger.info(f"stabilization constant S = {self.stabilization:.6g}")
        return self.stabilization

    def explicit_dt_bound(self) -> float:
        """Fourth-order explicit limit c_stab h^4 / max a, using max m_eps <= 1."""
        _, a_max = self.material.a_bounds()
        return self.c_stab * self.grid.h**4 / a_max

    def laplace_a(self, phi: ScalarField) -> ScalarField:
        """Discrete Laplacian of A(phi)."""
        return laplace_neumann(ScalarField(self.grid, self.material.antiderivative(phi.values)))

    def chemical_potential(self, phi: ScalarField) -> ScalarField:
        """mu = psi_eps'(phi) - sqrt(a(phi)) lap A(phi), the singular part evaluated on clamped phi."""
        potential = self.material.psi_eps_prime(self.material.clip(phi.values))
        lap_a = self.laplace_a(phi).require_finite("lap A(phi)")
        mu = potential - self.material.sqrt_a(phi.values) * lap_a.values
        return ScalarField(self.grid, mu).require_finite("mu")

    def face_mobility(self, phi: ScalarField) -> FaceField:
        """m_eps of the face-averaged order parameter, zero on boundary faces."""
        average = face_average(phi)
        mobility = FaceField(
            self.grid,
            np.clip(self.material.mobility_eps(average.x), 0.0, 1.0),
            np.clip(self.material.mobility_eps(average.y), 0.0, 1.0),
        )
        return mobility.with_boundary_zeroed()

    def flux(self, phi: ScalarField, mu: ScalarField) -> tuple[FaceField, FaceField]:
        """J = -m grad mu and Jhat = -sqrt(m) grad mu, so that J = sqrt(m) Jhat per face."""
        mobility = self.face_mobility(phi)
        grad_mu = grad_cc_to_face(mu)
        root = FaceField(self.grid, np.sqrt(mobility.x), np.sqrt(mobility.y))
        jhat = -1.0 * grad_mu.scaled_by(root)
        return jhat.scaled_by(root), jhat

    def initial_state(self, phi0: ScalarField, t: float = 0.0) -> PhaseState:
        mu = self.chemical_potential(phi0)
        J, jhat = self.flux(phi0, mu)
        return PhaseState(phi=phi0, mu=mu, J=J, Jhat=jhat, t=t)

    def frozen_state(self, state: PhaseState, dt: float) -> PhaseState:
        """Advance a saturated state whose order parameter cannot change."""
        zero = FaceField.zeros(self.grid)
        return PhaseState(phi=state.phi, mu=state.mu, J=zero, Jhat=zero, t=state.t + dt)

    def step_ch(
        self,
        state: PhaseState,
        v: FaceField,
        dt: float,
        scheme: Scheme | None = None,
    ) -> PhaseState:
        """Advance phi_t + v . grad phi = div(m_eps grad mu) by one step.

        Raises:
            NonConvergenceError: if the inner solve of the stabilized scheme fails.
            StabilityViolationError: if dt breaks the explicit bound by more than 10%.
        """
        if dt <= 0:
            raise ValueError(f"time step must be positive, got {dt}")
        scheme = scheme or self.scheme
        advection = advect_upwind(state.phi, v)

        if scheme == "explicit":
            bound = self.explicit_dt_bound()
            if dt > STABILITY_SLACK * bound:
                raise StabilityViolationError(
                    f"explicit Cahn-Hilliard step dt = {dt:.3e} exceeds bound {bound:.3e}"
                )
            mu = self.chemical_potential(state.phi)
            J, jhat = self.flux(state.phi, mu)
            phi = state.phi.values + dt * (-advection.values - div_face_to_cc(J).values)
        else:
            mu, phi = self._solve_stabilized(state, advection, dt)
            J, jhat = self.flux(state.phi, mu)

        new_state = PhaseState(
            phi=ScalarField(self.grid, phi).require_finite("phi"),
            mu=mu,
            J=J,
            Jhat=jhat,
            t=state.t + dt,
        )
        if self.material.eps > 0 and new_state.overshoot > OVERSHOOT_LIMIT:
            logger.warning(
                f"order parameter overshoot {new_state.overshoot:.3e} at t = {new_state.t:.6g}"
            )
        return new_state

    def _solve_stabilized(
        self, state: PhaseState, advection: ScalarField, dt: float
    ) -> tuple[ScalarField, np.ndarray]:
        """Solve for the new chemical potential, then update phi conservatively.

        With P = S - a0 lap, the scheme reads
        mu = P (phi_n - dt adv + dt L_m mu) - S phi_n + psi_eps'(phi_n), L_m = div(m grad .),
        and phi_{n+1} = phi_n - dt adv + dt L_m mu telescopes to exact mass conservation.
        """
        if not self.constant_coefficient:
            raise ValueError("the stabilized scheme requires a constant gradient coefficient")
        if self.stabilization is None:
            self.prepare(state.phi)

        grid = self.grid
        stabilization = self.stabilization
        phi_n = state.phi.as_vector()
        mobility_operator = grid.varcoef_matrix(self.face_mobility(state.phi))
        identity = sp.identity(grid.n_cells, format="csr")
        shifted = stabilization * identity - self.material.a0 * grid.laplace_matrix
        system = (identity - dt * (shifted @ mobility_operator)).tocsc()

        explicit = phi_n - dt * advection.as_vector()
        potential = self.material.psi_eps_prime(self.material.clip(phi_n))
        rhs = (
            stabilization * (explicit - phi_n)
            - self.material.a0 * (grid.laplace_matrix @ explicit)
            + potential
        )

        mu = spsolve(system, rhs)
        # normwise backward error
        matrix_norm = float(abs(system).sum(axis=1).max())
        scale = matrix_norm * float(np.max(np.abs(mu))) + float(np.max(np.abs(rhs)))
        residual = float(np.max(np.abs(rhs - system @ mu))) / max(scale, 1e-300)
        if not np.all(np.isfinite(mu)) or not residual <= self.tol:
            raise NonConvergenceError(1, residual, solver="Cahn-Hilliard solver")

        phi = explicit + dt * (mobility_operator @ mu)
        return ScalarField.from_vector(grid, mu), phi.reshape(grid.nx, grid.ny)

    def plateau_faces(self, phi: ScalarField) -> FaceField:
        """Indicator of interior faces between two cells of the saturated set |phi| >= 1 - eps."""
        saturated = (np.abs(phi.values) >= 1.0 - self.material.eps).astype(float)
        x = np.zeros(self.grid.x_shape)
        y = np.zeros(self.grid.y_shape)
        x[1:-1] = saturated[:-1] * saturated[1:]
        y[:, 1:-1] = saturated[:, :-1] * saturated[:, 1:]
        return FaceField(self.grid, x, y)

    def weak_flux_residual(self, state: PhaseState, eta: FaceField) -> float:
        """|sum J . eta - sum mu div(m eta)| for a test field with zero normal boundary values."""
        if eta.boundary_normal_max() != 0.0:
            raise ValueError("test field must vanish on boundary-normal faces")
        mu = self.chemical_potential(state.phi)
        J, _ = self.flux(state.phi, mu)
        mobility = self.face_mobility(state.phi)
        lhs = J.inner(eta)
        rhs = mu.inner(div_face_to_cc(eta.scaled_by(mobility)))
        return abs(lhs - rhs)
