#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import numpy as np
import pytest

from common.exceptions import StabilityViolationError
from core.grid import (
    FaceField,
    Grid,
    ScalarField,
    cell_gradient,
    div_face_to_cc,
    face_average,
    grad_cc_to_face,
    laplace_neumann,
)
from core.material import MaterialModel
from managers.energy import EnergyManager
from managers.flow import FlowManager
from managers.phasefield import PhaseFieldManager

GRID = Grid(16, 16)


def _random_phase(seed: int = 0, amplitude: float = 0.2, mean: float = 0.1) -> ScalarField:
    rng = np.random.default_rng(seed)
    return ScalarField(GRID, mean + amplitude * rng.uniform(-1, 1, (GRID.nx, GRID.ny)))


def _manager(eps: float = 0.05, **kwargs) -> PhaseFieldManager:
    material = MaterialModel(eps=eps, a0=1e-3)
    return PhaseFieldManager(GRID, material, **kwargs)


def test_stabilized_step_conserves_mass():
    manager = _manager()
    phi0 = _random_phase()
    manager.prepare(phi0)
    state = manager.initial_state(phi0)
    zero = FaceField.zeros(GRID)

    for _ in range(20):
        state = manager.step_ch(state, zero, 1e-3)
        assert abs(state.phi.mean() - phi0.mean()) <= 1e-12


def test_stabilized_step_with_advection_conserves_mass():
    manager = _manager()
    phi0 = _random_phase(seed=4)
    manager.prepare(phi0)
    state = manager.initial_state(phi0)
    rng = np.random.default_rng(9)
    flow = FlowManager(GRID, manager.material)
    v = flow.solenoidal_perturbation(rng, 0.5).with_boundary_zeroed()

    for _ in range(10):
        state = manager.step_ch(state, v, 1e-3)
    assert abs(state.phi.mean() - phi0.mean()) <= 1e-12


def test_constant_state_is_stationary():
    manager = _manager()
    phi0 = ScalarField.constant(GRID, 0.3)
    manager.prepare(phi0)
    state = manager.step_ch(manager.initial_state(phi0), FaceField.zeros(GRID), 1e-2)
    np.testing.assert_allclose(state.phi.values, 0.3, atol=1e-14)
    assert state.J.max_abs() <= 1e-12


def test_free_energy_decreases_without_flow():
    manager = _manager()
    energy = EnergyManager(manager.material, FlowManager(GRID, manager.material))
    phi0 = _random_phase(seed=1)
    manager.prepare(phi0)
    state = manager.initial_state(phi0)
    previous = energy.free_energy(state.phi)

    for _ in range(15):
        state = manager.step_ch(state, FaceField.zeros(GRID), 1e-3)
        current = energy.free_energy(state.phi)
        assert current <= previous + 1e-12
        previous = current


def test_explicit_step_beyond_bound_fails():
    manager = _manager(scheme="explicit")
    phi0 = _random_phase()
    state = manager.initial_state(phi0)
    bound = manager.explicit_dt_bound()

    manager.step_ch(state, FaceField.zeros(GRID), bound)
    with pytest.raises(StabilityViolationError):
        manager.step_ch(state, FaceField.zeros(GRID), 2.0 * bound)


def test_explicit_step_conserves_mass():
    manager = _manager(scheme="explicit")
    phi0 = _random_phase(seed=2)
    state = manager.initial_state(phi0)
    for _ in range(5):
        state = manager.step_ch(state, FaceField.zeros(GRID), 0.5 * manager.explicit_dt_bound())
    assert abs(state.phi.mean() - phi0.mean()) <= 1e-13


def test_stabilized_scheme_needs_constant_coefficient():
    material = MaterialModel(eps=0.05, a_kind="quadratic", a0=1e-3, a1=1e-3)
    manager = PhaseFieldManager(GRID, material)
    state = manager.initial_state(_random_phase())
    with pytest.raises(ValueError):
        manager.step_ch(state, FaceField.zeros(GRID), 1e-3)


def test_flux_factorization():
    manager = _manager()
    phi = _random_phase(seed=3, amplitude=0.9, mean=0.0)
    mu = manager.chemical_potential(phi)
    J, jhat = manager.flux(phi, mu)
    mobility = manager.face_mobility(phi)
    grad_mu = grad_cc_to_face(mu)

    weighted = grad_mu.inner(grad_mu.scaled_by(mobility))
    assert jhat.inner(jhat) == pytest.approx(weighted, rel=1e-12)
    root = FaceField(GRID, np.sqrt(mobility.x), np.sqrt(mobility.y))
    np.testing.assert_allclose(J.as_vector(), jhat.scaled_by(root).as_vector(), atol=1e-14)


def test_weak_flux_identity():
    manager = _manager()
    phi = _random_phase(seed=5, amplitude=0.8, mean=0.0)
    state = manager.initial_state(phi)
    rng = np.random.default_rng(6)
    eta = FaceField(GRID, rng.standard_normal(GRID.x_shape), rng.standard_normal(GRID.y_shape))
    eta = eta.with_boundary_zeroed()

    scale = abs(state.J.inner(eta)) + 1.0
    assert manager.weak_flux_residual(state, eta) <= 1e-10 * scale
    ones = FaceField(GRID, np.ones(GRID.x_shape), np.ones(GRID.y_shape))
    with pytest.raises(ValueError):
        manager.weak_flux_residual(state, ones)


def test_flux_on_plateau_is_bounded_by_regularized_mobility():
    eps = 0.05
    manager = _manager(eps=eps)
    x, _ = GRID.cell_centers()
    phi = ScalarField(GRID, np.where(x < 0.5, 1.0, np.tanh((0.75 - x) / 0.05)))
    mu = manager.chemical_potential(phi)
    J, _ = manager.flux(phi, mu)
    plateau = manager.plateau_faces(phi)
    grad_mu = grad_cc_to_face(mu)

    assert plateau.as_vector().sum() > 0
    bound = eps * (2 - eps) * grad_mu.max_abs()
    inside = plateau.as_vector() > 0
    assert np.all(np.abs(J.as_vector()[inside]) <= bound * (1 + 1e-12))


def test_stabilization_defaults_to_clipped_range():
    manager = _manager(eps=0.1)
    phi0 = _random_phase(amplitude=0.3, mean=0.0)
    value = manager.prepare(phi0)
    margin = manager.material.clip_margin
    s = np.linspace(-1.0 + margin, 1.0 - margin, 10_001)
    assert value == pytest.approx(manager.material.stabilization(1.0))
    assert value >= np.max(np.abs(manager.material.psi_eps_second(s))) * (1 - 1e-12)


def test_stabilization_from_data_range_is_opt_in():
    phi0 = _random_phase(amplitude=0.3, mean=0.0)
    manager = _manager(eps=0.1, stabilization_range="data")
    assert manager.prepare(phi0) == pytest.approx(manager.material.stabilization(0.9))
    assert manager.stabilization < _manager(eps=0.1).prepare(phi0)
    configured = _manager(eps=0.1, stabilization=4.0)
    assert configured.prepare(phi0) == 4.0


def test_stabilized_step_on_fine_disk_converges():
    grid = Grid(64, 64)
    material = MaterialModel(eps=1e-2, a0=1e-3)
    manager = PhaseFieldManager(grid, material)
    x, y = grid.cell_centers()
    radius = np.hypot(x - 0.5, y - 0.5)
    phi0 = ScalarField(grid, np.tanh((0.25 - radius) / 0.03))
    manager.prepare(phi0)
    state = manager.initial_state(phi0)
    zero = FaceField.zeros(grid)

    for _ in range(3):
        state = manager.step_ch(state, zero, 1e-4)
        assert np.all(np.isfinite(state.mu.values))
        assert abs(state.phi.mean() - phi0.mean()) <= 1e-12


def _cosine_phase(grid: Grid, amplitude: float = 0.5) -> ScalarField:
    x, y = grid.cell_centers()
    return ScalarField(grid, amplitude * np.cos(np.pi * x) * np.cos(np.pi * y))


def test_sqrt_a_laplacian_identity():
    material = MaterialModel(eps=0.05, a_kind="quadratic", a0=1.0, a1=0.5)
    errors = []
    for n in (32, 64):
        grid = Grid(n, n)
        manager = PhaseFieldManager(grid, material)
        phi = _cosine_phase(grid)
        lhs = material.sqrt_a(phi.values) * manager.laplace_a(phi).values

        average = face_average(phi)
        a_face = FaceField(grid, material.coef_a(average.x), material.coef_a(average.y))
        cx, cy = cell_gradient(phi)
        rhs = div_face_to_cc(grad_cc_to_face(phi).scaled_by(a_face)).values
        rhs = rhs - 0.5 * material.coef_a_prime(phi.values) * (cx**2 + cy**2)
        errors.append(np.max(np.abs(lhs - rhs)))

    assert errors[1] <= errors[0] / 3.0
    assert errors[1] <= 5e-2


def test_chemical_potential_scales_with_constant_coefficient():
    grid = Grid(24, 24)
    phi = _cosine_phase(grid, amplitude=0.7)
    mu = {}
    for a0 in (1.0, 4.0):
        material = MaterialModel(eps=0.05, a0=a0)
        mu[a0] = PhaseFieldManager(grid, material).chemical_potential(phi).values
        direct = material.psi_eps_prime(material.clip(phi.values))
        direct = direct - a0 * laplace_neumann(phi).values
        np.testing.assert_allclose(mu[a0], direct, rtol=1e-12, atol=1e-10)

    potential = MaterialModel(eps=0.05).psi_eps_prime(phi.values)
    np.testing.assert_allclose(
        mu[4.0] - potential, 4.0 * (mu[1.0] - potential), rtol=1e-12, atol=1e-10
    )


def _flux_pairing(n: int) -> tuple[float, float]:
    grid = Grid(n, n)
    manager = PhaseFieldManager(grid, MaterialModel(eps=0.05, a0=1e-2))
    state = manager.initial_state(_cosine_phase(grid))
    x, y = grid.cell_centers()
    eta = grad_cc_to_face(ScalarField(grid, np.cos(np.pi * x) * np.cos(2 * np.pi * y)))
    return state.J.inner(eta), manager.weak_flux_residual(state, eta)


def test_flux_pairing_converges_under_refinement():
    reference, _ = _flux_pairing(256)
    errors = []
    for n in (16, 32, 64):
        pairing, residual = _flux_pairing(n)
        assert residual <= 1e-10 * (abs(pairing) + 1.0)
        errors.append(abs(pairing - reference))

    assert errors[2] < errors[1] < errors[0]
    assert errors[0] / errors[2] >= 3.0
