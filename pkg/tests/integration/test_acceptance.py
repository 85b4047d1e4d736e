#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
from pathlib import Path

import numpy as np
import pytest

from common.series import parse_table, read_text
from core.grid import Grid, ScalarField, grad_cc_to_face
from core.material import MaterialModel
from literals import SERIES_FILE
from managers.energy import EnergyManager
from managers.phasefield import PhaseFieldManager
from simulator import Simulator, sweep_eps

from .helpers import build_config, run_cli, write_config

logger = logging.getLogger(__name__)

DATA_PATH = Path(__file__).parent / "data"


def test_mass_conservation_for_disk():
    config = build_config(
        grid__nx=64,
        grid__ny=64,
        initial__kind="disk",
        initial__radius=0.25,
        initial__width=0.03,
        time__t_end=0.1,
    )
    simulator = Simulator(config)
    entry = simulator.initial_entry()
    phase, flow = entry.phase, entry.flow
    mass0 = phase.phi.mean()

    drift = 0.0
    for _ in range(config.time.n_steps):
        phase, flow = simulator.step(phase, flow, config.time.dt)
        drift = max(drift, abs(phase.phi.mean() - mass0))
    logger.info(f"largest mass drift over {config.time.n_steps} steps: {drift:.3e}")
    assert config.time.n_steps == 1000
    assert drift <= 1e-11


def test_energy_inequality_without_flow():
    config = build_config(flow__enabled=False, initial__amplitude=0.3)
    reports = Simulator(config).run().reports
    result = EnergyManager.check_all_pairs(reports, tol=1e-8 * reports[0].e_tot)
    logger.info(
        f"worst slack {result.slack:.3e} between entries {result.s_idx} and {result.t_idx}"
    )
    assert result.passed


def test_energy_trend_with_flow():
    config = build_config(
        initial__amplitude=0.3, initial__velocity="random", initial__velocity_amplitude=0.05
    )
    reports = Simulator(config).run().reports
    e0 = reports[0].e_tot
    assert np.max(EnergyManager.step_slacks(reports)) <= 1e-3 * e0
    assert EnergyManager.check_all_pairs(reports, tol=1e-3 * e0).passed
    assert reports[-1].e_tot < e0


def test_phase_stays_in_physical_range():
    config = build_config(initial__kind="disk", initial__noise=0.05, material__rho2=3.0)
    reports = Simulator(config).run().reports
    assert max(r.overshoot for r in reports) <= 1e-6


def _plateau_ratio(eps: float) -> float:
    grid = Grid(64, 4, lx=1.0, ly=1.0 / 16)
    manager = PhaseFieldManager(grid, MaterialModel(eps=eps, a0=1e-3))
    x, _ = grid.cell_centers()
    phi = ScalarField(grid, np.where(x < 0.6, 1.0, np.tanh((0.8 - x) / 0.05)))
    mu = manager.chemical_potential(phi)
    J, _ = manager.flux(phi, mu)
    plateau = manager.plateau_faces(phi).as_vector() > 0
    grad_mu = np.abs(grad_cc_to_face(mu).as_vector())

    saturated = np.mean(np.abs(phi.values) >= 1.0 - eps)
    assert saturated >= 0.2
    flux = np.abs(J.as_vector())
    assert np.all(flux[plateau] <= eps * (2 - eps) * grad_mu.max() * (1 + 1e-12))
    inside = plateau & (grad_mu > 0)
    return float(np.max(flux[inside] / grad_mu[inside]))


def test_plateau_flux_scales_with_eps():
    ratio = _plateau_ratio(0.1) / _plateau_ratio(0.05)
    assert 2.0 / 1.25 <= ratio <= 2.0 * 1.25


def test_uniform_bounds_over_eps_sweep():
    config = build_config(
        grid__nx=16,
        grid__ny=16,
        time__t_end=5e-3,
        output__every=5,
        initial__amplitude=0.4,
        phasefield__stabilization_range="data",
        sweep__eps=[1e-1, 3e-2, 1e-2, 3e-3],
    )
    result = sweep_eps(config, threads=2)
    for row in result.rows():
        logger.info(f"sweep row {row}")
    assert result.bounds.passed, result.bounds.failures
    distances = result.dist_phi[1:]
    assert all(later <= earlier for earlier, later in zip(distances, distances[1:]))


def test_equilibrium_profile_is_second_order():
    material = MaterialModel(eps=0.0, a0=1.0)
    sizes = [64, 128, 256]
    errors = []
    for nx in sizes:
        grid = Grid(nx, 4, lx=24.0, ly=24.0 * 4 / nx)
        x, _ = grid.cell_centers()
        phi = ScalarField(grid, np.tanh((x - 12.0) / np.sqrt(2.0)))
        mu = PhaseFieldManager(grid, material).chemical_potential(phi)
        errors.append(float(np.max(np.abs(mu.values))))
    slope = -np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    logger.info(f"equilibrium errors {errors}, fitted order {slope:.2f}")
    assert slope >= 1.8


def test_saturated_run_ignores_other_phase():
    common = {
        "initial__kind": "constant",
        "initial__mean": 1.0,
        "initial__velocity": "random",
        "initial__velocity_amplitude": 0.2,
        "time__t_end": 1e-2,
        "material__rho2": 2.0,
        "material__eta2": 0.5,
    }
    two_phase = Simulator(build_config(material__rho1=5.0, material__eta1=3.0, **common)).run()
    single = Simulator(build_config(material__rho1=2.0, material__eta1=0.5, **common)).run()

    assert len(two_phase) == len(single) == 101
    for first, second in zip(two_phase.entries, single.entries):
        assert np.all(first.phase.phi.values == 1.0)
        assert first.phase.J.max_abs() == 0.0
        difference = np.max(np.abs(first.flow.v.as_vector() - second.flow.v.as_vector()))
        assert difference <= 1e-10


def test_matched_densities_ignore_mass_flux_correction():
    common = {
        "material__rho1": 1.5,
        "material__rho2": 1.5,
        "initial__amplitude": 0.4,
        "initial__velocity": "random",
        "initial__velocity_amplitude": 0.1,
        "time__t_end": 5e-3,
    }
    with_term = Simulator(build_config(flow__mass_flux_correction=True, **common)).run()
    without_term = Simulator(build_config(flow__mass_flux_correction=False, **common)).run()
    expected = [r.series_row() for r in without_term.reports]
    assert [r.series_row() for r in with_term.reports] == expected


@pytest.mark.parametrize("threads", [1, 2])
def test_command_line_is_reproducible(tmp_path, threads):
    config = write_config(
        tmp_path / "run.cfg", initial__velocity="random", initial__velocity_amplitude=0.1
    )
    first, second = tmp_path / "first", tmp_path / "second"

    for out in (first, second):
        process = run_cli("run", "--config", str(config), "--out", str(out), threads=threads)
        assert process.returncode == 0, process.stderr

    assert (first / SERIES_FILE).read_bytes() == (second / SERIES_FILE).read_bytes()
    diag = run_cli("diag", "--in", str(first))
    assert diag.returncode == 0, diag.stderr
    assert "max discrepancy" in diag.stdout


def test_command_line_sweep(tmp_path):
    config = write_config(
        tmp_path / "sweep.cfg",
        grid__nx=12,
        grid__ny=12,
        time__t_end=2e-3,
        output__every=5,
        sweep__eps=[1e-1, 3e-2, 1e-2],
    )
    process = run_cli("sweep", "--config", str(config), "--out", str(tmp_path / "out"), threads=3)
    assert process.returncode == 0, process.stderr
    assert "uniform bounds:" in process.stdout

    malformed = write_config(tmp_path / "bad.cfg", sweep__eps=[1e-2, 1e-1, 3e-2])
    result = run_cli("sweep", "--config", str(malformed), "--out", str(tmp_path / "bad"))
    assert result.returncode == 3


def test_constant_state_matches_golden_series(tmp_path):
    config = write_config(
        tmp_path / "golden.cfg",
        grid__nx=8,
        grid__ny=8,
        time__t_end=1e-3,
        output__every=5,
        initial__kind="constant",
        initial__mean=0.2,
        flow__enabled=False,
    )
    out = tmp_path / "out"
    process = run_cli("run", "--config", str(config), "--out", str(out))
    assert process.returncode == 0, process.stderr

    header, rows = parse_table(read_text(out / SERIES_FILE))
    golden_header, golden_rows = parse_table(read_text(DATA_PATH / "constant_series.csv"))
    assert header == golden_header
    np.testing.assert_allclose(
        np.array(rows, dtype=float), np.array(golden_rows, dtype=float), rtol=1e-12, atol=1e-15
    )
