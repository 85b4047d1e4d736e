#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Manager for the variable-density Navier-Stokes step: predictor, capillary force and projection."""

import logging
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from common.exceptions import IncompatibleRHSError, NonConvergenceError, StabilityViolationError
from core.grid import (
    FaceField,
    Grid,
    ScalarField,
    cell_gradient,
    cells_to_faces,
    discrete_divergence_free,
    div_face_to_cc,
    face_average,
    grad_cc_to_face,
    laplace_neumann,
    solve_poisson_varcoef,
)
from core.material import MaterialModel
from core.models import FlowState, PhaseState
from literals import (
    CFL_SAFETY,
    DIVERGENCE_TOL,
    MAX_ITER_FACTOR,
    RHS_COMPATIBILITY_TOL,
    SOLVER_TOL,
    STABILITY_SLACK,
)

logger = logging.getLogger(__name__)

ForceForm = Literal["korteweg", "potential"]


def _ghost_difference(n: int, h: float) -> sp.csr_matrix:
    """Node derivative (n+1 x n) of a tangential component with no-slip ghost values -v."""
    matrix = sp.diags([-1.0, 1.0], [-1, 0], shape=(n + 1, n), format="lil")
    matrix[0, 0] = 2.0
    matrix[n, n - 1] = -2.0
    return matrix.tocsr() / h


class FlowManager:
    """Advance the volume-averaged velocity and the rewritten pressure g."""

    def __init__(
        self,
        grid: Grid,
        material: MaterialModel,
        tol: float = SOLVER_TOL,
        include_mass_flux_correction: bool = True,
        force_form: ForceForm = "korteweg",
        max_iter_factor: int = MAX_ITER_FACTOR,
    ):
        self.grid = grid
        self.material = material
        self.tol = tol
        self.include_mass_flux_correction = include_mass_flux_correction
        self.force_form: ForceForm = force_form
        self.max_iter = max_iter_factor * grid.n_faces

    # --- strain operators on the full face vector ---

    @cached_property
    def _strain_normal(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """du/dx and dw/dy at cell centres."""
        grid = self.grid
        n_x = (grid.nx + 1) * grid.ny
        n_y = grid.nx * (grid.ny + 1)
        div = grid.div_matrix
        dudx = sp.hstack([div[:, :n_x], sp.csr_matrix((grid.n_cells, n_y))], format="csr")
        dwdy = sp.hstack([sp.csr_matrix((grid.n_cells, n_x)), div[:, n_x:]], format="csr")
        return dudx, dwdy

    @cached_property
    def _strain_shear(self) -> sp.csr_matrix:
        """du/dy + dw/dx at the (nx+1) x (ny+1) grid nodes."""
        grid = self.grid
        dudy = sp.kron(sp.identity(grid.nx + 1), _ghost_difference(grid.ny, grid.hy))
        dwdx = sp.kron(_ghost_difference(grid.nx, grid.hx), sp.identity(grid.ny + 1))
        return sp.hstack([dudy, dwdx], format="csr")

    @cached_property
    def _node_weights(self) -> np.ndarray:
        wx = np.ones(self.grid.nx + 1)
        wy = np.ones(self.grid.ny + 1)
        wx[[0, -1]] = 0.5
        wy[[0, -1]] = 0.5
        return np.outer(wx, wy).ravel() * self.grid.cell_volume

    @cached_property
    def interior_faces(self) -> np.ndarray:
        """Indices of the faces that are not boundary-normal."""
        mask = FaceField(self.grid, np.ones(self.grid.x_shape), np.ones(self.grid.y_shape))
        return np.flatnonzero(mask.with_boundary_zeroed().as_vector())

    def _node_viscosity(self, eta: np.ndarray) -> np.ndarray:
        padded = np.pad(eta, 1, mode="edge")
        return 0.25 * (padded[:-1, :-1] + padded[1:, :-1] + padded[:-1, 1:] + padded[1:, 1:])

    def viscous_matrix(self, phi: ScalarField) -> sp.csr_matrix:
        """Symmetric form v -> sum 2 eta |Dv|^2 weights on the full face vector."""
        eta = self.material.viscosity(phi.values)
        dudx, dwdy = self._strain_normal
        shear = self._strain_shear
        cell = sp.diags(2.0 * eta.ravel() * self.grid.cell_volume)
        node = sp.diags(self._node_viscosity(eta).ravel() * self._node_weights)
        return (dudx.T @ cell @ dudx + dwdy.T @ cell @ dwdy + shear.T @ node @ shear).tocsr()

    def dissipation(self, v: FaceField, phi: ScalarField) -> float:
        """Viscous dissipation rate: integral of 2 eta(phi) |Dv|^2."""
        eta = self.material.viscosity(phi.values)
        vector = v.as_vector()
        dudx, dwdy = self._strain_normal
        normal = (dudx @ vector) ** 2 + (dwdy @ vector) ** 2
        shear = (self._strain_shear @ vector) ** 2
        total = np.sum(2.0 * eta.ravel() * normal) * self.grid.cell_volume
        total += np.sum(self._node_viscosity(eta).ravel() * self._node_weights * shear)
        return float(total)

    def kinetic_energy(self, v: FaceField, rho: ScalarField) -> float:
        """Integral of rho |v|^2 / 2 with face densities."""
        rho_face = face_average(rho)
        return 0.5 * v.inner(v.scaled_by(rho_face))

    # --- explicit terms ---

    def momentum_flux(self, v: FaceField, rho: ScalarField, J: FaceField) -> FaceField:
        """Face mass flux rho_face v + beta J advecting the momentum."""
        flux = v.scaled_by(face_average(rho))
        beta = self.material.beta
        if self.include_mass_flux_correction and beta != 0.0:
            flux = flux + beta * J
        return flux

    def momentum_advection(self, flux: FaceField, v: FaceField) -> FaceField:
        """Conservative upwind div(F v) on the momentum control volumes."""
        grid = self.grid
        fx, fy = flux.x, flux.y
        u, w = v.x, v.y

        # u momentum: east/west faces at cell centres, north/south at nodes
        east = 0.5 * (fx[:-1] + fx[1:])
        east_flux = east * np.where(east > 0, u[:-1], u[1:])
        north = np.zeros((grid.nx + 1, grid.ny + 1))
        north[1:-1, :] = 0.5 * (fy[:-1] + fy[1:])
        north_flux = np.zeros_like(north)
        north_flux[:, 1:-1] = north[:, 1:-1] * np.where(north[:, 1:-1] > 0, u[:, :-1], u[:, 1:])
        cu = np.zeros(grid.x_shape)
        cu[1:-1] = (
            np.diff(east_flux, axis=0) / grid.hx
            + np.diff(north_flux[1:-1], axis=1) / grid.hy
        )

        # w momentum: north/south faces at cell centres, east/west at nodes
        top = 0.5 * (fy[:, :-1] + fy[:, 1:])
        top_flux = top * np.where(top > 0, w[:, :-1], w[:, 1:])
        side = np.zeros((grid.nx + 1, grid.ny + 1))
        side[:, 1:-1] = 0.5 * (fx[:, :-1] + fx[:, 1:])
        side_flux = np.zeros_like(side)
        side_flux[1:-1, :] = side[1:-1, :] * np.where(side[1:-1, :] > 0, w[:-1, :], w[1:, :])
        cw = np.zeros(grid.y_shape)
        cw[:, 1:-1] = (
            np.diff(top_flux, axis=1) / grid.hy
            + np.diff(side_flux[:, 1:-1], axis=0) / grid.hx
        )
        return FaceField(grid, cu, cw)

    def capillary_force(self, phi: ScalarField, mu: ScalarField | None = None) -> FaceField:
        """Korteweg force -sqrt(a) lap A(phi) grad phi (or mu grad phi), interpolated to faces."""
        gx, gy = cell_gradient(phi)
        if self.force_form == "potential" and mu is not None:
            weight = mu.values
        else:
            antiderivative = ScalarField(self.grid, self.material.antiderivative(phi.values))
            lap_a = laplace_neumann(antiderivative)
            weight = -self.material.sqrt_a(phi.values) * lap_a.values
        return cells_to_faces(weight * gx, weight * gy, self.grid)

    def physical_pressure(self, flow: FlowState, phi: ScalarField) -> ScalarField:
        """p = g - a(phi) |grad phi|^2 / 2."""
        gx, gy = cell_gradient(phi)
        return ScalarField(
            self.grid, flow.g.values - 0.5 * self.material.coef_a(phi.values) * (gx**2 + gy**2)
        )

    def cfl_bound(self, v: FaceField) -> float:
        speed = v.max_abs()
        return float("inf") if speed == 0.0 else CFL_SAFETY * self.grid.h / speed

    # --- predictor and projection ---

    def momentum_predictor(
        self,
        flow: FlowState,
        phase: PhaseState,
        dt: float,
        rho_new: ScalarField | None = None,
    ) -> FaceField:
        """Semi-implicit viscous predictor for the momentum balance.

        (rho_new v* - rho v) / dt + div(F v) - div(2 eta D v*) + grad g = capillary force,
        with F = rho_face v + beta J.

        Raises:
            StabilityViolationError: on an advective CFL breach.
            NonConvergenceError: if the viscous solve fails.
        """
        bound = self.cfl_bound(flow.v)
        if dt > STABILITY_SLACK * bound:
            raise StabilityViolationError(f"advective CFL breached: dt = {dt:.3e} > {bound:.3e}")

        grid = self.grid
        if rho_new is None:
            rho_new = ScalarField(grid, self.material.density(phase.phi.values))
        rho_face_old = face_average(flow.rho)
        rho_face_new = face_average(rho_new)

        flux = self.momentum_flux(flow.v, flow.rho, phase.J)
        explicit = (
            (1.0 / dt) * flow.v.scaled_by(rho_face_old)
            - self.momentum_advection(flux, flow.v)
            + self.capillary_force(phase.phi, phase.mu)
            - grad_cc_to_face(flow.g)
        )

        idx = self.interior_faces
        rhs = explicit.as_vector()[idx] * grid.cell_volume
        if not np.any(rhs):
            return FaceField.zeros(grid)

        mass = sp.diags(rho_face_new.as_vector()[idx] * grid.cell_volume / dt)
        system = (mass + self.viscous_matrix(phase.phi)[idx][:, idx]).tocsr()
        preconditioner = sp.diags(1.0 / system.diagonal())

        iterations = 0

        def _count(_):
            nonlocal iterations
            iterations += 1

        guess = flow.v.as_vector()[idx]
        solution, _ = cg(
            system,
            rhs,
            x0=guess,
            rtol=0.1 * self.tol,
            atol=0.0,
            maxiter=self.max_iter,
            M=preconditioner,
            callback=_count,
        )
        residual = float(np.linalg.norm(rhs - system @ solution) / np.linalg.norm(rhs))
        if residual > self.tol:
            raise NonConvergenceError(iterations, residual, solver="viscous solver")

        vector = np.zeros(grid.n_faces)
        vector[idx] = solution
        return FaceField.from_vector(grid, vector)

    def project(
        self, vstar: FaceField, rho: ScalarField, dt: float, tol: float | None = None
    ) -> tuple[FaceField, ScalarField]:
        """Weighted projection v = v* - (dt / rho_face) grad g with div((1/rho_face) grad g) = div v* / dt.

        Raises:
            NonConvergenceError: if the pressure solve fails.
            IncompatibleRHSError: if v* carries boundary-normal flux.
        """
        tol = self.tol if tol is None else tol
        grid = self.grid
        if vstar.boundary_normal_max() != 0.0:
            raise IncompatibleRHSError(
                "predicted velocity has non-zero boundary-normal components"
            )

        divergence = div_face_to_cc(vstar).values / dt
        scale = max(vstar.max_abs() / grid.h / dt, 1e-300)
        if abs(divergence.mean()) > RHS_COMPATIBILITY_TOL * scale:
            raise IncompatibleRHSError(f"divergence of v* has mean {divergence.mean():.3e}")
        # already solenoidal up to round-off
        if np.max(np.abs(divergence)) <= 1e-14 * scale:
            return vstar, ScalarField.zeros(grid)

        rho_face = face_average(rho)
        inverse = FaceField(grid, 1.0 / rho_face.x, 1.0 / rho_face.y)
        g = solve_poisson_varcoef(
            inverse,
            ScalarField(grid, divergence - divergence.mean()),
            tol=tol,
            max_iter=self.max_iter,
        )
        v = (vstar - dt * grad_cc_to_face(g).scaled_by(inverse)).with_boundary_zeroed()
        if not discrete_divergence_free(v, DIVERGENCE_TOL):
            residual = np.max(np.abs(div_face_to_cc(v).values))
            logger.warning(f"projected velocity keeps divergence {residual:.3e}")
        return v, g

    def step_ns(self, flow: FlowState, phase: PhaseState, dt: float) -> FlowState:
        """Predictor plus projection with the density of the current order parameter."""
        rho_new = ScalarField(self.grid, self.material.density(phase.phi.values))
        vstar = self.momentum_predictor(flow, phase, dt, rho_new=rho_new)
        v, increment = self.project(vstar, rho_new, dt)
        g = flow.g.values + increment.values
        return FlowState(
            v=v.require_finite("v"),
            g=ScalarField(self.grid, g - g.mean()),
            rho=rho_new,
            t=flow.t + dt,
        )

    def initial_state(
        self, phi: ScalarField, v: FaceField | None = None, t: float = 0.0
    ) -> FlowState:
        rho = ScalarField(self.grid, self.material.density(phi.values))
        if v is None:
            v = FaceField.zeros(self.grid)
        if v.max_abs() > 0.0:
            v, _ = self.project(v.with_boundary_zeroed(), rho, 1.0)
        return FlowState(v=v, g=ScalarField.zeros(self.grid), rho=rho, t=t)

    def solenoidal_perturbation(
        self, rng: np.random.Generator, amplitude: float, modes: int = 3
    ) -> FaceField:
        """Discrete curl of a random low-mode stream function vanishing on the boundary."""
        grid = self.grid
        x = np.arange(grid.nx + 1) * grid.hx
        y = np.arange(grid.ny + 1) * grid.hy
        X, Y = np.meshgrid(x, y, indexing="ij")
        stream = np.zeros_like(X)
        coefficients = rng.standard_normal((modes, modes))
        for k in range(modes):
            for m in range(modes):
                stream += (
                    coefficients[k, m]
                    * np.sin((k + 1) * np.pi * X / grid.lx)
                    * np.sin((m + 1) * np.pi * Y / grid.ly)
                )
        u = np.diff(stream, axis=1) / grid.hy
        w = -np.diff(stream, axis=0) / grid.hx
        v = FaceField(grid, u, w)
        peak = v.max_abs()
        return v if peak == 0.0 else (amplitude / peak) * v
