#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Staggered (MAC) rectangular grid, discrete fields and the stencil operators built on them.

Cell-centred arrays have shape ``(nx, ny)`` and are indexed ``[i, j]`` with ``i`` along x.
x-face arrays have shape ``(nx + 1, ny)``, y-face arrays ``(nx, ny + 1)``. Every face carries
the measure ``hx * hy`` (the dual cell volume), which makes ``div`` and ``-grad`` exact
adjoints for face fields with zero boundary-normal values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from common.exceptions import IncompatibleRHSError, NonConvergenceError, NonFiniteError
from literals import MAX_ITER_FACTOR, RHS_COMPATIBILITY_TOL, SOLVER_TOL

logger = logging.getLogger(__name__)


def _cell_difference(n: int, h: float) -> sp.csr_matrix:
    """Face-to-cell difference (n x n+1): (F[i+1] - F[i]) / h."""
    return sp.diags([-1.0, 1.0], [0, 1], shape=(n, n + 1), format="csr") / h


def _face_difference(n: int, h: float) -> sp.csr_matrix:
    """Cell-to-face difference (n+1 x n) with zero rows on both boundary faces."""
    interior = np.ones(n + 1)
    interior[[0, -1]] = 0.0
    return (sp.diags(interior) @ (-_cell_difference(n, h).T)).tocsr()


@dataclass(frozen=True)
class Grid:
    """Uniform staggered grid on the rectangle (0, lx) x (0, ly)."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs at least 4 cells per direction, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError(f"domain side lengths must be positive, got {self.lx}x{self.ly}")

    @property
    def hx(self) -> float:
        """Cell width."""
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        """Cell height."""
        return self.ly / self.ny

    @property
    def h(self) -> float:
        """Smallest cell size."""
        return min(self.hx, self.hy)

    @property
    def cell_volume(self) -> float:
        """Measure of a cell, also used for every face."""
        return self.hx * self.hy

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def x_shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny)

    @property
    def y_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny + 1)

    @property
    def n_faces(self) -> int:
        return (self.nx + 1) * self.ny + self.nx * (self.ny + 1)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of the cell centres as two ``(nx, ny)`` arrays."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def x_face_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of the x-face midpoints."""
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def y_face_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of the y-face midpoints."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    @cached_property
    def grad_matrix(self) -> sp.csr_matrix:
        """Sparse cell-to-face gradient, x-faces stacked before y-faces."""
        gx = sp.kron(_face_difference(self.nx, self.hx), sp.identity(self.ny))
        gy = sp.kron(sp.identity(self.nx), _face_difference(self.ny, self.hy))
        return sp.vstack([gx, gy], format="csr")

    @cached_property
    def div_matrix(self) -> sp.csr_matrix:
        """Sparse face-to-cell divergence matching ``grad_matrix``'s face ordering."""
        dx = sp.kron(_cell_difference(self.nx, self.hx), sp.identity(self.ny))
        dy = sp.kron(sp.identity(self.nx), _cell_difference(self.ny, self.hy))
        return sp.hstack([dx, dy], format="csr")

    @cached_property
    def laplace_matrix(self) -> sp.csr_matrix:
        """Neumann Laplacian, exactly ``div_matrix @ grad_matrix``."""
        return (self.div_matrix @ self.grad_matrix).tocsr()

    def varcoef_matrix(self, beta: FaceField) -> sp.csr_matrix:
        """Sparse matrix of f -> div(beta grad f)."""
        return (self.div_matrix @ sp.diags(beta.as_vector()) @ self.grad_matrix).tocsr()


@dataclass(frozen=True)
class ScalarField:
    """Cell-centred scalar field (phi, mu, g, rho(phi), A(phi), ...)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.nx, self.grid.ny):
            expected = (self.grid.nx, self.grid.ny)
            raise ValueError(f"cell field has shape {self.values.shape}, expected {expected}")

    @classmethod
    def zeros(cls, grid: Grid) -> ScalarField:
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> ScalarField:
        return cls(grid, np.full((grid.nx, grid.ny), float(value)))

    @classmethod
    def from_vector(cls, grid: Grid, vector: np.ndarray) -> ScalarField:
        return cls(grid, np.asarray(vector, dtype=float).reshape(grid.nx, grid.ny))

    def as_vector(self) -> np.ndarray:
        return self.values.ravel()

    def mean(self) -> float:
        return float(self.values.mean())

    def integral(self) -> float:
        """Midpoint-rule integral over the domain."""
        return float(self.values.sum() * self.grid.cell_volume)

    def inner(self, other: ScalarField) -> float:
        """Discrete L2 inner product."""
        return float(np.sum(self.values * other.values) * self.grid.cell_volume)

    def require_finite(self, name: str) -> ScalarField:
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError(f"field '{name}' contains non-finite values")
        return self

    def __add__(self, other: ScalarField) -> ScalarField:
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: ScalarField) -> ScalarField:
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, alpha: float) -> ScalarField:
        return ScalarField(self.grid, alpha * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True)
class FaceField:
    """Face-normal field on the staggered grid (velocity v, fluxes J and Jhat)."""

    grid: Grid
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.grid.x_shape or self.y.shape != self.grid.y_shape:
            raise ValueError(
                f"face field has shapes {self.x.shape}/{self.y.shape}, "
                f"expected {self.grid.x_shape}/{self.grid.y_shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> FaceField:
        return cls(grid, np.zeros(grid.x_shape), np.zeros(grid.y_shape))

    @classmethod
    def from_vector(cls, grid: Grid, vector: np.ndarray) -> FaceField:
        vector = np.asarray(vector, dtype=float)
        n_x = (grid.nx + 1) * grid.ny
        return cls(grid, vector[:n_x].reshape(grid.x_shape), vector[n_x:].reshape(grid.y_shape))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.y.ravel()])

    def inner(self, other: FaceField) -> float:
        """Discrete L2 inner product with face measure hx*hy."""
        total = np.sum(self.x * other.x) + np.sum(self.y * other.y)
        return float(total * self.grid.cell_volume)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.x)), np.max(np.abs(self.y))))

    def boundary_normal_max(self) -> float:
        """Largest magnitude among the boundary-normal entries."""
        return float(
            max(
                np.max(np.abs(self.x[[0, -1], :])),
                np.max(np.abs(self.y[:, [0, -1]])),
            )
        )

    def with_boundary_zeroed(self) -> FaceField:
        x, y = self.x.copy(), self.y.copy()
        x[[0, -1], :] = 0.0
        y[:, [0, -1]] = 0.0
        return FaceField(self.grid, x, y)

    def require_finite(self, name: str) -> FaceField:
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise NonFiniteError(f"face field '{name}' contains non-finite values")
        return self

    def __add__(self, other: FaceField) -> FaceField:
        return FaceField(self.grid, self.x + other.x, self.y + other.y)

    def __sub__(self, other: FaceField) -> FaceField:
        return FaceField(self.grid, self.x - other.x, self.y - other.y)

    def __mul__(self, alpha: float) -> FaceField:
        return FaceField(self.grid, alpha * self.x, alpha * self.y)

    __rmul__ = __mul__

    def scaled_by(self, weights: FaceField) -> FaceField:
        """Pointwise product with another face field."""
        return FaceField(self.grid, self.x * weights.x, self.y * weights.y)


def grad_cc_to_face(f: ScalarField) -> FaceField:
    """Two-point face gradient; boundary-normal faces are zero (homogeneous Neumann)."""
    grid = f.grid
    gx = np.zeros(grid.x_shape)
    gy = np.zeros(grid.y_shape)
    gx[1:-1, :] = np.diff(f.values, axis=0) / grid.hx
    gy[:, 1:-1] = np.diff(f.values, axis=1) / grid.hy
    return FaceField(grid, gx, gy)


def div_face_to_cc(flux: FaceField) -> ScalarField:
    """Per-cell flux balance (F_E - F_W)/hx + (F_N - F_S)/hy."""
    grid = flux.grid
    return ScalarField(
        grid, np.diff(flux.x, axis=0) / grid.hx + np.diff(flux.y, axis=1) / grid.hy
    )


def laplace_neumann(f: ScalarField) -> ScalarField:
    """Five-point Laplacian with mirrored ghost cells."""
    return div_face_to_cc(grad_cc_to_face(f))


def face_average(f: ScalarField) -> FaceField:
    """Arithmetic mean of the two adjacent cells; boundary faces copy their single neighbour."""
    grid = f.grid
    padded_x = np.concatenate([f.values[:1], f.values, f.values[-1:]], axis=0)
    padded_y = np.concatenate([f.values[:, :1], f.values, f.values[:, -1:]], axis=1)
    return FaceField(
        grid,
        0.5 * (padded_x[:-1] + padded_x[1:]),
        0.5 * (padded_y[:, :-1] + padded_y[:, 1:]),
    )


def cell_gradient(f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred gradient as the average of the two adjacent face gradients."""
    g = grad_cc_to_face(f)
    return 0.5 * (g.x[:-1] + g.x[1:]), 0.5 * (g.y[:, :-1] + g.y[:, 1:])


def cells_to_faces(cx: np.ndarray, cy: np.ndarray, grid: Grid) -> FaceField:
    """Interpolate a cell-centred vector to interior faces; boundary-normal faces are zero."""
    fx = np.zeros(grid.x_shape)
    fy = np.zeros(grid.y_shape)
    fx[1:-1, :] = 0.5 * (cx[:-1, :] + cx[1:, :])
    fy[:, 1:-1] = 0.5 * (cy[:, :-1] + cy[:, 1:])
    return FaceField(grid, fx, fy)


def advect_upwind(phi: ScalarField, flux: FaceField) -> ScalarField:
    """Conservative first-order upwind divergence div(F phi_upwind)."""
    values = phi.values
    fx = np.empty_like(flux.x)
    fy = np.empty_like(flux.y)
    fx[1:-1] = flux.x[1:-1] * np.where(flux.x[1:-1] > 0, values[:-1], values[1:])
    fy[:, 1:-1] = flux.y[:, 1:-1] * np.where(flux.y[:, 1:-1] > 0, values[:, :-1], values[:, 1:])
    fx[0], fx[-1] = flux.x[0] * values[0], flux.x[-1] * values[-1]
    fy[:, 0], fy[:, -1] = flux.y[:, 0] * values[:, 0], flux.y[:, -1] * values[:, -1]
    return div_face_to_cc(FaceField(phi.grid, fx, fy))


def discrete_divergence_free(flux: FaceField, tol: float) -> bool:
    """Check max |div F| against ``tol`` scaled by the face magnitude over h."""
    div = div_face_to_cc(flux).values
    scale = max(1.0, flux.max_abs() / flux.grid.h)
    return bool(np.max(np.abs(div)) <= tol * scale)


def solve_poisson_varcoef(
    beta: FaceField,
    rhs: ScalarField,
    tol: float = SOLVER_TOL,
    max_iter: int | None = None,
) -> ScalarField:
    """Solve div(beta grad f) = rhs with homogeneous Neumann conditions and mean(f) = 0.

    The operator is negated into a symmetric positive semi-definite system and solved
    by Jacobi-preconditioned conjugate gradients; the returned residual is verified by an
    explicit operator application.

    Raises:
        IncompatibleRHSError: if the mean of ``rhs`` violates Neumann compatibility.
        NonConvergenceError: if the relative residual exceeds ``tol`` after the cap.
    """
    grid = rhs.grid
    b = -rhs.as_vector()
    scale = float(np.max(np.abs(b)))
    if scale == 0.0:
        return ScalarField.zeros(grid)
    if abs(b.mean()) > RHS_COMPATIBILITY_TOL * scale:
        raise IncompatibleRHSError(
            f"right-hand side mean {-b.mean():.3e} violates Neumann compatibility"
        )
    b = b - b.mean()

    matrix = -grid.varcoef_matrix(beta)
    diagonal = matrix.diagonal()
    diagonal = np.where(diagonal > 0.0, diagonal, 1.0)
    preconditioner = sp.diags(1.0 / diagonal)
    cap = max_iter or MAX_ITER_FACTOR * grid.n_cells

    iterations = 0

    def _count(_):
        nonlocal iterations
        iterations += 1

    # the recursive CG residual drifts from the true one, so iterate a decade deeper
    solution, _ = cg(
        matrix, b, rtol=0.1 * tol, atol=0.0, maxiter=cap, M=preconditioner, callback=_count
    )
    solution = solution - solution.mean()
    residual = float(np.linalg.norm(b - matrix @ solution) / np.linalg.norm(b))
    if residual > tol:
        raise NonConvergenceError(iterations, residual, solver="poisson solver")

    logger.debug(f"poisson solve converged in {iterations} iterations, residual {residual:.2e}")
    return ScalarField.from_vector(grid, solution)
