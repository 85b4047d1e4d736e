#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Handlers of the run, sweep and diag commands."""

import argparse
import logging
import platform
import time
from datetime import datetime, timezone
from typing import TYPE_CHECKING

import numpy as np
import scipy
import yaml

from common import snapshot
from common.exceptions import (
    CoefficientBelowBoundError,
    ConfigError,
    CorruptSnapshotError,
    FormatVersionMismatchError,
    SimulationError,
)
from common.series import parse_table, render_table
from core.config import SimConfig
from core.models import Trajectory
from core.workload import OutputBase
from literals import (
    DIAG_TOL,
    MANIFEST_FILE,
    SERIES_FILE,
    SERIES_HEADER,
    SWEEP_FILE,
    SWEEP_HEADER,
    VERSION,
    Status,
)
from managers.config import ConfigManager
from managers.energy import EnergyManager
from simulator import Simulator, states_from_fields, sweep_eps, thread_count
from workload import RunDirectory

if TYPE_CHECKING:
    from cli import SimulatorCli

logger = logging.getLogger(__name__)

# columns of the time series that depend on one stored state only
STATE_COLUMNS = [
    "e_kin",
    "e_free",
    "e_tot",
    "d_visc",
    "d_flux",
    "mass",
    "g_eps_int",
    "phi_min",
    "phi_max",
]


def platform_fingerprint() -> dict:
    return {
        "system": platform.system(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def trajectory_checks(simulator: Simulator, trajectory: Trajectory) -> dict:
    """Property checks recorded in the run manifest."""
    reports = trajectory.reports
    first = reports[0]
    inequality = EnergyManager.check_all_pairs(reports, tol=1e-8 * abs(first.e_tot))
    try:
        phi0 = trajectory.entries[0].phase.phi
        entropy = simulator.energy.check_entropy_estimate(trajectory, phi0)
        entropy_check = {
            "passed": entropy.passed,
            "sup_g_eps": entropy.sup_g_eps,
            "bound": entropy.bound,
        }
    except SimulationError as e:
        logger.warning(f"entropy estimate not evaluated: {e}")
        entropy_check = {"passed": None, "error": str(e)}
    return {
        "mass_drift": {"value": max(abs(r.mass - first.mass) for r in reports)},
        "energy_inequality": {
            "passed": inequality.passed,
            "worst_slack": inequality.slack,
            "pair": [inequality.s_idx, inequality.t_idx],
        },
        "entropy_estimate": entropy_check,
        "max_overshoot": {"value": max(r.overshoot for r in reports)},
    }


def rectangle_slack(columns: dict[str, list[float]]) -> float:
    """Worst energy inequality slack over stored rows, dissipation by the right-endpoint rectangle rule."""
    t = np.asarray(columns["t"])
    rates = np.asarray(columns["d_visc"]) + np.asarray(columns["d_flux"])
    dissipation = np.concatenate([[0.0], np.cumsum(np.diff(t) * rates[1:])])
    values = np.asarray(columns["e_tot"]) + dissipation
    prefix_min = np.minimum.accumulate(values)
    return float(np.max(values[1:] - prefix_min[:-1])) if len(values) > 1 else 0.0


class SimulationCommands:
    """Handle the simulator's commands."""

    def __init__(self, cli: "SimulatorCli"):
        self.cli = cli

        run = cli.subparsers.add_parser("run", help="integrate one trajectory")
        run.add_argument("--config", help="flat key = value configuration file")
        run.add_argument("--out", required=True, help="output directory")
        run.set_defaults(handler=self._on_run)

        sweep = cli.subparsers.add_parser("sweep", help="run the regularization sweep")
        sweep.add_argument("--config", help="configuration file listing sweep.eps")
        sweep.add_argument("--out", required=True, help="output directory")
        sweep.set_defaults(handler=self._on_sweep)

        diag = cli.subparsers.add_parser(
            "diag", help="recompute diagnostics from stored snapshots"
        )
        diag.add_argument("--in", dest="input", required=True, help="run output directory")
        diag.set_defaults(handler=self._on_diag)

    def _load_config(self, path: str | None) -> SimConfig:
        return ConfigManager(path).load()

    def _write_manifest(self, output: OutputBase, manifest: dict) -> None:
        output.write_file(yaml.safe_dump(manifest, sort_keys=False), MANIFEST_FILE)

    def _manifest(
        self, config: SimConfig | None, status: Status, started: float, checks: dict
    ) -> dict:
        return {
            "version": VERSION,
            "status": status.name,
            "exit_code": status.value.exit_code,
            "finished": datetime.now(timezone.utc).isoformat(),
            "wall_clock_s": time.perf_counter() - started,
            "platform": platform_fingerprint(),
            "tolerance_note": (
                "bitwise reproducible on one platform; "
                "expect agreement to about 1e-10 across platforms"
            ),
            "checks": checks,
            "config": config.dict() if config else None,
        }

    def _check_material(self, config: SimConfig) -> None:
        """Build grid and material; coefficient errors become configuration errors."""
        try:
            config.grid.build()
            config.material.build()
        except (CoefficientBelowBoundError, ValueError) as e:
            raise ConfigError(f"invalid material: {e}", keys=["material"]) from e

    def _reject(self, output: OutputBase, config: SimConfig | None, started: float) -> int:
        self._write_manifest(output, self._manifest(config, Status.CONFIG_INVALID, started, {}))
        return self.cli.set_status(Status.CONFIG_INVALID)

    def _on_run(self, args: argparse.Namespace) -> int:
        """Handle the run command."""
        output = RunDirectory(args.out)
        started = time.perf_counter()
        config = None
        try:
            config = self._load_config(args.config)
            self._check_material(config)
        except ConfigError as e:
            logger.error(e)
            return self._reject(output, config, started)

        status, checks = Status.SOLVER_FAILED, {}
        try:
            simulator = Simulator(config)
            trajectory = simulator.run(output=output)
            checks = trajectory_checks(simulator, trajectory)
            status = Status.SUCCESS
        except SimulationError as e:
            logger.error(e)
        finally:
            self._write_manifest(output, self._manifest(config, status, started, checks))

        return self.cli.set_status(status)

    def _on_sweep(self, args: argparse.Namespace) -> int:
        """Handle the sweep command."""
        output = RunDirectory(args.out)
        started = time.perf_counter()
        config = None
        try:
            config = self._load_config(args.config)
            if len(config.sweep.eps) < 3:
                raise ConfigError(
                    f"sweep.eps needs at least 3 values, got {config.sweep.eps}",
                    keys=["sweep.eps"],
                )
            for eps in config.sweep.eps:
                self._check_material(config.with_eps(eps))
            threads = thread_count()
        except (ConfigError, ValueError) as e:
            logger.error(e)
            return self._reject(output, config, started)

        status, checks = Status.SOLVER_FAILED, {}
        try:
            result = sweep_eps(config, output=output, threads=threads)
            output.write_file(render_table(SWEEP_HEADER, result.rows()), SWEEP_FILE)
            verdict = "PASS" if result.bounds.passed else "FAIL"
            print(f"uniform bounds: {verdict}")
            bounds = result.bounds
            checks = {"uniform_bounds": {"passed": bounds.passed, "failures": bounds.failures}}
            status = Status.SUCCESS
        except SimulationError as e:
            logger.error(e)
        finally:
            self._write_manifest(output, self._manifest(config, status, started, checks))

        return self.cli.set_status(status)

    def _on_diag(self, args: argparse.Namespace) -> int:
        """Handle the diag command."""
        output = RunDirectory(args.input)
        if not output.exists(MANIFEST_FILE):
            logger.error(f"no {MANIFEST_FILE} in {args.input}")
            return self.cli.set_status(Status.CONFIG_INVALID)
        try:
            manifest = yaml.safe_load(output.read_file(MANIFEST_FILE))
            config = ConfigManager.from_echo(manifest["config"])
            self._check_material(config)
            simulator = Simulator(config)
            header, rows = parse_table(output.read_file(SERIES_FILE))
        except (OSError, KeyError, TypeError, ValueError, ConfigError) as e:
            logger.error(f"cannot read run output in {args.input}: {e}")
            return self.cli.set_status(Status.CONFIG_INVALID)
        if header != SERIES_HEADER:
            logger.error(f"unexpected series header {header}")
            return self.cli.set_status(Status.DIAG_MISMATCH)

        snapshots = output.list_files("fields_*.snap")
        if len(snapshots) != len(rows):
            logger.error(f"{len(snapshots)} snapshots for {len(rows)} series rows")
            return self.cli.set_status(Status.DIAG_MISMATCH)

        columns: dict[str, list[float]] = {name: [] for name in header}
        discrepancy = 0.0
        try:
            for name, row in zip(snapshots, rows):
                stored = {key: float(value) for key, value in zip(header, row)}
                for key, value in stored.items():
                    columns[key].append(value)
                _, _, fields = snapshot.decode(output.read_bytes(name))
                phase, flow = states_from_fields(simulator.grid, fields, stored["t"])
                report = simulator.energy.report(flow, phase).as_dict()
                for key in STATE_COLUMNS:
                    error = abs(report[key] - stored[key]) / max(1.0, abs(stored[key]))
                    discrepancy = max(discrepancy, error)
        except (CorruptSnapshotError, FormatVersionMismatchError, KeyError, ValueError) as e:
            logger.error(f"snapshot does not match the series: {e!r}")
            return self.cli.set_status(Status.DIAG_MISMATCH)

        print(f"max discrepancy: {discrepancy:.3e}")
        slack = rectangle_slack(columns)
        logger.info(f"energy inequality worst slack over stored rows: {slack:.3e}")
        if discrepancy > DIAG_TOL:
            return self.cli.set_status(Status.DIAG_MISMATCH)
        return self.cli.set_status(Status.SUCCESS)
