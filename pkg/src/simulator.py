#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Coupled Navier-Stokes/Cahn-Hilliard time loop, ε-sweep driver and checkpoints."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import yaml

from common import snapshot
from common.exceptions import (
    FormatVersionMismatchError,
    MismatchedGridsError,
    SimulationError,
    StepFailedError,
)
from common.series import parse_table, render_table
from core.config import SimConfig
from core.grid import FaceField, Grid, ScalarField, grad_cc_to_face
from core.models import EnergyReport, FlowState, PhaseState, Trajectory, TrajectoryEntry
from core.workload import OutputBase
from literals import (
    CHECKPOINT_FILE,
    CHECKPOINT_FORMAT_VERSION,
    REPORTS_FILE,
    SERIES_FILE,
    SERIES_HEADER,
    SNAPSHOT_PATTERN,
    THREADS_ENV,
)
from managers.energy import BoundsTable, EnergyManager, TrajectorySummary
from managers.flow import FlowManager
from managers.phasefield import PhaseFieldManager

logger = logging.getLogger(__name__)


# --- snapshots of trajectory entries ---


def entry_fields(entry: TrajectoryEntry) -> dict[str, np.ndarray]:
    """Named arrays of one stored state, in snapshot order."""
    phase, flow = entry.phase, entry.flow
    return {
        "phi": phase.phi.values,
        "mu": phase.mu.values,
        "u": flow.v.x,
        "w": flow.v.y,
        "g": flow.g.values,
        "rho": flow.rho.values,
        "J_x": phase.J.x,
        "J_y": phase.J.y,
        "Jhat_x": phase.Jhat.x,
        "Jhat_y": phase.Jhat.y,
    }


def states_from_fields(
    grid: Grid, fields: dict[str, np.ndarray], t: float
) -> tuple[PhaseState, FlowState]:
    phase = PhaseState(
        phi=ScalarField(grid, fields["phi"]),
        mu=ScalarField(grid, fields["mu"]),
        J=FaceField(grid, fields["J_x"], fields["J_y"]),
        Jhat=FaceField(grid, fields["Jhat_x"], fields["Jhat_y"]),
        t=t,
    )
    flow = FlowState(
        v=FaceField(grid, fields["u"], fields["w"]),
        g=ScalarField(grid, fields["g"]),
        rho=ScalarField(grid, fields["rho"]),
        t=t,
    )
    return phase, flow


def write_entry(output: OutputBase, entry: TrajectoryEntry) -> None:
    grid = entry.phase.grid
    output.write_bytes(
        snapshot.encode(grid.nx, grid.ny, entry_fields(entry)),
        SNAPSHOT_PATTERN.format(step=entry.step),
    )


def write_series(output: OutputBase, reports: Sequence[EnergyReport]) -> None:
    output.write_file(render_table(SERIES_HEADER, [r.series_row() for r in reports]), SERIES_FILE)


# --- checkpoints ---


def checkpoint(
    trajectory: Trajectory, output: OutputBase, config: SimConfig | None = None
) -> None:
    """Store every entry of a trajectory so that ``restore`` rebuilds it bit for bit."""
    header = ["step", *EnergyReport.field_names()]
    rows = []
    for entry in trajectory.entries:
        write_entry(output, entry)
        rows.append([entry.step, *entry.report.as_dict().values()])
    output.write_file(render_table(header, rows), REPORTS_FILE)

    grid = trajectory.grid
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "grid": {"nx": grid.nx, "ny": grid.ny, "lx": grid.lx, "ly": grid.ly},
        "dt": trajectory.dt,
        "stabilization": trajectory.stabilization,
        "config": config.dict() if config else None,
    }
    # written last, a checkpoint without it is incomplete
    output.write_file(yaml.safe_dump(meta, sort_keys=False), CHECKPOINT_FILE)
    logger.info(f"checkpoint with {len(trajectory)} entries written")


def restore(output: OutputBase) -> Trajectory:
    """Rebuild a trajectory from a checkpoint.

    Raises:
        FormatVersionMismatchError: if the checkpoint or a snapshot uses an unknown format.
        CorruptSnapshotError: if a snapshot fails its checks.
        FileNotFoundError: if the checkpoint metadata was never written.
    """
    if not output.exists(CHECKPOINT_FILE):
        raise FileNotFoundError(f"{CHECKPOINT_FILE} missing, the checkpoint is incomplete")
    meta = yaml.safe_load(output.read_file(CHECKPOINT_FILE))
    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise FormatVersionMismatchError(
            f"checkpoint format {meta.get('format_version')} is not supported"
        )

    grid = Grid(**meta["grid"])
    trajectory = Trajectory(grid=grid, dt=float(meta["dt"]), stabilization=meta["stabilization"])
    header, rows = parse_table(output.read_file(REPORTS_FILE))
    for row in rows:
        values = dict(zip(header, row))
        step = int(values.pop("step"))
        report = EnergyReport(**{name: float(value) for name, value in values.items()})
        nx, ny, fields = snapshot.decode(output.read_bytes(SNAPSHOT_PATTERN.format(step=step)))
        if (nx, ny) != (grid.nx, grid.ny):
            raise MismatchedGridsError(
                f"snapshot of step {step} is {nx}x{ny}, "
                f"checkpoint grid is {grid.nx}x{grid.ny}"
            )
        phase, flow = states_from_fields(grid, fields, report.t)
        trajectory.append(TrajectoryEntry(step=step, phase=phase, flow=flow, report=report))
    return trajectory


# --- time loop ---


class Simulator:
    """Composition root for one run: managers, initial data and the split time loop."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.grid = config.grid.build()
        self.material = config.material.build()
        self.phasefield = PhaseFieldManager(
            self.grid,
            self.material,
            scheme=config.phasefield.scheme,
            stabilization=config.phasefield.stabilization,
            stabilization_range=config.phasefield.stabilization_range,
            c_stab=config.phasefield.c_stab,
            tol=config.solver.tol,
        )
        self.flow = FlowManager(
            self.grid,
            self.material,
            tol=config.solver.tol,
            include_mass_flux_correction=config.flow.mass_flux_correction,
            force_form=config.flow.force,
            max_iter_factor=config.solver.max_iter_factor,
        )
        self.energy = EnergyManager(self.material, self.flow)
        self.frozen = False

    def initial_phase(self, rng: np.random.Generator) -> ScalarField:
        """Order parameter prescribed by the ``initial`` section."""
        initial = self.config.initial
        grid = self.grid
        x, y = grid.cell_centers()
        width = np.sqrt(2.0) * initial.width

        if initial.kind == "random":
            phi = initial.mean + initial.amplitude * (2.0 * rng.random((grid.nx, grid.ny)) - 1.0)
        elif initial.kind == "stripe":
            # interface placed so that the mean matches ``mean``
            x0 = 0.5 * grid.lx * (1.0 - initial.mean)
            phi = np.tanh((x - x0) / width)
        elif initial.kind == "disk":
            distance = np.hypot(x - 0.5 * grid.lx, y - 0.5 * grid.ly)
            phi = np.tanh((initial.radius - distance) / width)
        else:
            phi = np.full((grid.nx, grid.ny), initial.mean)

        if initial.noise > 0.0:
            phi = phi + initial.noise * (2.0 * rng.random((grid.nx, grid.ny)) - 1.0)
        return ScalarField(grid, np.clip(phi, -1.0, 1.0))

    def initial_entry(self) -> TrajectoryEntry:
        rng = np.random.default_rng(self.config.initial.seed)
        phi0 = self.initial_phase(rng)
        self.frozen = bool(np.all(np.abs(phi0.values) == 1.0) and np.ptp(phi0.values) == 0.0)

        if self.frozen:
            logger.info("saturated initial phase, running single-phase flow")
            zero = FaceField.zeros(self.grid)
            phase = PhaseState(phi=phi0, mu=ScalarField.zeros(self.grid), J=zero, Jhat=zero)
        else:
            self.phasefield.prepare(phi0)
            phase = self.phasefield.initial_state(phi0)

        velocity = None
        if self.config.flow.enabled and self.config.initial.velocity == "random":
            amplitude = self.config.initial.velocity_amplitude
            velocity = self.flow.solenoidal_perturbation(rng, amplitude)
        flow = self.flow.initial_state(phi0, velocity)
        report = self.energy.report(flow, phase)
        return TrajectoryEntry(step=0, phase=phase, flow=flow, report=report)

    def step(self, phase: PhaseState, flow: FlowState, dt: float) -> tuple[PhaseState, FlowState]:
        """One Lie-split step in the configured order."""

        def _ch(state: PhaseState, v: FaceField) -> PhaseState:
            if self.frozen:
                return self.phasefield.frozen_state(state, dt)
            return self.phasefield.step_ch(state, v, dt)

        def _ns(state: FlowState, current: PhaseState) -> FlowState:
            if not self.config.flow.enabled:
                rho = ScalarField(self.grid, self.material.density(current.phi.values))
                return FlowState(v=state.v, g=state.g, rho=rho, t=state.t + dt)
            return self.flow.step_ns(state, current, dt)

        if self.config.flow.splitting == "ns-ch":
            flow = _ns(flow, phase)
            return _ch(phase, flow.v), flow
        phase = _ch(phase, flow.v)
        return phase, _ns(flow, phase)

    def run(self, output: OutputBase | None = None, start: Trajectory | None = None) -> Trajectory:
        """Integrate up to t_end, storing every ``output.every``-th step and the final one.

        ``start`` resumes from its last entry. Stored steps are written to ``output`` as they
        are produced, and the time series is written even if the loop aborts.

        Raises:
            StepFailedError: wrapping any solver error, with the failing step index.
        """
        dt = self.config.time.dt
        n_steps = self.config.time.n_steps
        every = self.config.output.every

        if start is None:
            entry = self.initial_entry()
            trajectory = Trajectory(
                grid=self.grid, dt=dt, stabilization=self.phasefield.stabilization
            )
            trajectory.append(entry)
            if output is not None:
                write_entry(output, entry)
        else:
            trajectory = Trajectory(
                grid=start.grid,
                dt=start.dt,
                entries=list(start.entries),
                stabilization=start.stabilization,
            )
            entry = trajectory.last
            self.phasefield.stabilization = start.stabilization
            phi = entry.phase.phi.values
            self.frozen = bool(np.all(np.abs(phi) == 1.0) and np.ptp(phi) == 0.0)
            logger.info(f"resuming at step {entry.step}, t = {entry.t:.6g}")

        phase, flow, report = entry.phase, entry.flow, entry.report
        try:
            for step in range(entry.step + 1, n_steps + 1):
                try:
                    phase, flow = self.step(phase, flow, dt)
                    report = self.energy.report(flow, phase, previous=report, dt=dt)
                except SimulationError as e:
                    logger.error(e)
                    raise StepFailedError(step, e) from e
                logger.debug(f"step {step}: t = {report.t:.6g}, e_tot = {report.e_tot:.10g}")

                if step % every == 0 or step == n_steps:
                    stored = TrajectoryEntry(step=step, phase=phase, flow=flow, report=report)
                    trajectory.append(stored)
                    if output is not None:
                        write_entry(output, stored)
                    logger.info(
                        f"t = {report.t:.6g}: e_tot = {report.e_tot:.10g}, "
                        f"mass = {report.mass:.15g}, overshoot = {report.overshoot:.3e}"
                    )
        finally:
            if output is not None:
                write_series(output, trajectory.reports)
        return trajectory


def run(
    config: SimConfig, output: OutputBase | None = None, start: Trajectory | None = None
) -> Trajectory:
    return Simulator(config).run(output=output, start=start)


# --- ε-sweep ---


@dataclass
class SweepResult:
    """Trajectories, uniform-bounds table and consecutive distances of an ε-sweep."""

    eps: list[float]
    trajectories: dict[float, Trajectory] = field(default_factory=dict)
    summaries: dict[float, TrajectorySummary] = field(default_factory=dict)
    bounds: BoundsTable | None = None
    dist_phi: list[float] = field(default_factory=list)
    dist_grad_a: list[float] = field(default_factory=list)

    def rows(self) -> list[list[float]]:
        """Rows of the sweep table in decreasing ε."""
        return [
            [
                eps,
                self.summaries[eps].sup_e_tot,
                self.summaries[eps].lapA_sq_cum,
                self.summaries[eps].eps3_psi_ln_sq,
                self.summaries[eps].jhat_sq_cum,
                self.dist_phi[k],
                self.dist_grad_a[k],
            ]
            for k, eps in enumerate(self.eps)
        ]


def thread_count() -> int:
    """Worker count from the environment, 1 when unset."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        count = int(raw)
    except ValueError:
        count = 0
    if count < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got '{raw}'")
    return count


def space_time_distance(first: Trajectory, second: Trajectory, material) -> tuple[float, float]:
    """L2(Q_T) distances of phi and grad A(phi) over the common output steps.

    Values are held constant on the interval ending at each stored time.
    """

    def _grad_a(phi: ScalarField):
        return grad_cc_to_face(ScalarField(phi.grid, material.antiderivative(phi.values)))

    by_step = {entry.step: entry for entry in second.entries}
    common = [entry for entry in first.entries if entry.step in by_step]
    dist_phi = dist_grad = 0.0
    for previous, entry in zip(common, common[1:]):
        other = by_step[entry.step]
        interval = entry.t - previous.t
        delta = entry.phase.phi - other.phase.phi
        grad = _grad_a(entry.phase.phi) - _grad_a(other.phase.phi)
        dist_phi += interval * delta.inner(delta)
        dist_grad += interval * grad.inner(grad)
    return float(np.sqrt(dist_phi)), float(np.sqrt(dist_grad))


def sweep_eps(
    configs: Sequence[SimConfig] | SimConfig,
    output: OutputBase | None = None,
    threads: int | None = None,
) -> SweepResult:
    """Run one trajectory per ε and evaluate uniformity and convergence trends.

    Accepts a configuration carrying ``sweep.eps`` or explicit per-ε configurations.

    Raises:
        MismatchedGridsError: if the configurations differ in anything but ε.
        StepFailedError: from any of the runs.
    """
    if isinstance(configs, SimConfig):
        configs = [configs.with_eps(eps) for eps in configs.sweep.eps]
    configs = sorted(configs, key=lambda c: c.material.eps, reverse=True)
    if len(configs) < 3:
        raise ValueError(f"a sweep needs at least 3 values of eps, got {len(configs)}")
    reference = configs[0].without_eps()
    for config in configs[1:]:
        if config.without_eps() != reference:
            raise MismatchedGridsError(
                f"sweep configuration for eps={config.material.eps} differs beyond eps"
            )

    eps_values = [config.material.eps for config in configs]
    if len(set(eps_values)) != len(eps_values):
        raise MismatchedGridsError(f"sweep repeats an eps value: {eps_values}")

    def _run(config: SimConfig) -> Trajectory:
        child = output.child(f"eps_{config.material.eps:g}") if output is not None else None
        return Simulator(config).run(output=child)

    workers = threads or thread_count()
    logger.info(f"sweeping eps = {eps_values} on {workers} thread(s)")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        trajectories = list(executor.map(_run, configs))

    result = SweepResult(eps=eps_values)
    material = configs[0].material.build()
    for k, (eps, trajectory) in enumerate(zip(eps_values, trajectories)):
        result.trajectories[eps] = trajectory
        result.summaries[eps] = EnergyManager.summarize(trajectory, eps)
        if k == 0:
            result.dist_phi.append(float("nan"))
            result.dist_grad_a.append(float("nan"))
        else:
            dist_phi, dist_grad = space_time_distance(trajectories[k - 1], trajectory, material)
            result.dist_phi.append(dist_phi)
            result.dist_grad_a.append(dist_grad)
    result.bounds = EnergyManager.check_uniform_bounds(result.summaries)
    return result
