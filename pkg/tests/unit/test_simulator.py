#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import math
import os
from unittest.mock import patch

import numpy as np
import pytest

from common.exceptions import MismatchedGridsError, NonConvergenceError, StepFailedError
from common.series import read_columns
from literals import CHECKPOINT_FILE, SERIES_FILE, SERIES_HEADER
from managers.config import ConfigManager
from managers.phasefield import PhaseFieldManager
from simulator import Simulator, checkpoint, restore, sweep_eps, thread_count
from workload import RunDirectory

SMALL = {
    "grid.nx": 8,
    "grid.ny": 8,
    "time.dt": 1e-4,
    "time.t_end": 1e-3,
    "output.every": 5,
    "material.a0": 1e-3,
}


def _config(**overrides):
    manager = ConfigManager()
    entries = {**SMALL, **{key.replace("__", "."): value for key, value in overrides.items()}}
    return manager.validate(manager.merge(entries))


def _phi_bytes(trajectory) -> bytes:
    return trajectory.last.phase.phi.values.tobytes()


def test_zero_steps(tmp_path):
    output = RunDirectory(tmp_path)
    trajectory = Simulator(_config(time__t_end=5e-5)).run(output=output)

    assert len(trajectory) == 1
    columns = read_columns(tmp_path / SERIES_FILE)
    assert list(columns) == SERIES_HEADER
    assert columns["t"] == [0.0]
    assert output.list_files("fields_*.snap") == ["fields_000000.snap"]


def test_stored_steps():
    trajectory = Simulator(_config(time__t_end=1.2e-3)).run()
    assert [entry.step for entry in trajectory.entries] == [0, 5, 10, 12]
    assert trajectory.last.t == pytest.approx(1.2e-3)


def test_runs_are_reproducible():
    config = _config(initial__velocity="random", initial__velocity_amplitude=0.1)
    first = Simulator(config).run()
    second = Simulator(config).run()
    assert [r.series_row() for r in first.reports] == [r.series_row() for r in second.reports]
    assert _phi_bytes(first) == _phi_bytes(second)


def test_mass_is_conserved_with_flow():
    config = _config(
        material__rho2=3.0,
        initial__amplitude=0.5,
        initial__velocity="random",
        initial__velocity_amplitude=0.2,
    )
    trajectory = Simulator(config).run()
    masses = [r.mass for r in trajectory.reports]
    assert max(abs(m - masses[0]) for m in masses) <= 1e-12


def test_reverse_splitting_conserves_mass():
    config = _config(
        flow__splitting="ns-ch", initial__velocity="random", initial__velocity_amplitude=0.1
    )
    trajectory = Simulator(config).run()
    assert abs(trajectory.last.report.mass - trajectory.reports[0].mass) <= 1e-12


def test_flow_disabled_keeps_fluid_at_rest():
    trajectory = Simulator(_config(flow__enabled=False)).run()
    assert all(entry.flow.v.max_abs() == 0.0 for entry in trajectory.entries)
    assert all(r.e_kin == 0.0 for r in trajectory.reports)


def test_saturated_phase_is_frozen():
    config = _config(
        initial__kind="constant",
        initial__mean=1.0,
        initial__velocity="random",
        initial__velocity_amplitude=0.1,
    )
    simulator = Simulator(config)
    trajectory = simulator.run()

    assert simulator.frozen
    assert all(np.all(entry.phase.phi.values == 1.0) for entry in trajectory.entries)
    assert trajectory.last.report.e_kin < trajectory.reports[0].e_kin


@pytest.mark.parametrize("kind", ["stripe", "disk", "random"])
def test_initial_phase_lies_in_physical_range(kind):
    simulator = Simulator(_config(initial__kind=kind, initial__noise=0.1, initial__width=0.05))
    phi = simulator.initial_phase(np.random.default_rng(0))
    assert np.all(np.abs(phi.values) <= 1.0)


def test_stripe_matches_mean():
    config = _config(grid__nx=32, initial__kind="stripe", initial__mean=0.0, initial__width=0.05)
    simulator = Simulator(config)
    phi = simulator.initial_phase(np.random.default_rng(0))
    assert abs(phi.mean()) <= 1e-12


def test_checkpoint_round_trip(tmp_path):
    config = _config()
    trajectory = Simulator(config).run()
    output = RunDirectory(tmp_path)
    checkpoint(trajectory, output, config)

    restored = restore(output)

    assert restored.grid == trajectory.grid
    assert restored.stabilization == trajectory.stabilization
    assert [e.step for e in restored.entries] == [e.step for e in trajectory.entries]
    for original, copy in zip(trajectory.entries, restored.entries):
        assert copy.report == original.report
        assert copy.phase.mu.values.tobytes() == original.phase.mu.values.tobytes()
        assert copy.flow.v.as_vector().tobytes() == original.flow.v.as_vector().tobytes()


def test_resume_continues_bit_for_bit(tmp_path):
    full = _config(initial__velocity="random", initial__velocity_amplitude=0.1)
    uninterrupted = Simulator(full).run()

    output = RunDirectory(tmp_path)
    partial = Simulator(
        _config(time__t_end=5e-4, initial__velocity="random", initial__velocity_amplitude=0.1)
    )
    checkpoint(partial.run(), output, full)
    resumed = Simulator(full).run(start=restore(output))

    assert [e.step for e in resumed.entries] == [e.step for e in uninterrupted.entries]
    assert _phi_bytes(resumed) == _phi_bytes(uninterrupted)
    assert resumed.last.report == uninterrupted.last.report


def test_restore_needs_checkpoint_file(tmp_path):
    config = _config()
    output = RunDirectory(tmp_path)
    checkpoint(Simulator(config).run(), output, config)
    assert output.exists(CHECKPOINT_FILE)

    (tmp_path / CHECKPOINT_FILE).unlink()

    assert not output.exists(CHECKPOINT_FILE)
    with pytest.raises(FileNotFoundError):
        restore(output)


def test_failed_step_keeps_partial_series(tmp_path):
    output = RunDirectory(tmp_path)
    with patch.object(PhaseFieldManager, "step_ch", side_effect=NonConvergenceError(7, 1.0)):
        with pytest.raises(StepFailedError) as e:
            Simulator(_config()).run(output=output)

    assert e.value.step == 1
    assert isinstance(e.value.cause, NonConvergenceError)
    assert read_columns(tmp_path / SERIES_FILE)["t"] == [0.0]


def test_sweep_of_constant_state(tmp_path):
    config = _config(initial__kind="constant", initial__mean=0.2, sweep__eps=[0.1, 0.05, 0.02])
    result = sweep_eps(config, output=RunDirectory(tmp_path), threads=2)

    assert result.eps == [0.1, 0.05, 0.02]
    assert math.isnan(result.dist_phi[0])
    assert result.dist_phi[1:] == [0.0, 0.0]
    assert result.dist_grad_a[1:] == [0.0, 0.0]
    assert result.bounds.passed
    assert len(result.rows()) == 3
    assert (tmp_path / "eps_0.05" / SERIES_FILE).is_file()


def test_sweep_detects_mismatched_runs():
    base = _config()
    other = _config(grid__nx=12)
    with pytest.raises(MismatchedGridsError):
        sweep_eps([base.with_eps(0.1), other.with_eps(0.05), base.with_eps(0.02)], threads=1)
    with pytest.raises(ValueError):
        sweep_eps([base.with_eps(0.1), base.with_eps(0.05)], threads=1)


def test_thread_count_from_environment():
    with patch.dict(os.environ, {"NSCH_THREADS": "3"}):
        assert thread_count() == 3
    with patch.dict(os.environ, {"NSCH_THREADS": "zero"}):
        with pytest.raises(ValueError):
            thread_count()
    with patch.dict(os.environ, {}, clear=True):
        assert thread_count() == 1
