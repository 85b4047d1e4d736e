#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Command-line front end of the two-phase flow simulator."""

import argparse
import logging
import sys
from typing import Sequence

from commands.simulation import SimulationCommands
from literals import VERSION, DebugLevel, Status

logger = logging.getLogger(__name__)


class SimulatorCli:
    """Parse arguments and dispatch to the command handlers."""

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog="nsch",
            description=(
                "Regularized Navier-Stokes/Cahn-Hilliard simulator with degenerate mobility."
            ),
        )
        self.parser.add_argument("--version", action="version", version=VERSION)
        self.parser.add_argument(
            "--log-level",
            default="INFO",
            choices=["DEBUG", "INFO", "WARNING", "ERROR"],
            help="root logger level",
        )
        self.subparsers = self.parser.add_subparsers(dest="command", required=True)

        # --- COMMAND HANDLERS ---
        self.simulation_commands = SimulationCommands(self)

    def set_status(self, key: Status) -> int:
        """Log the outcome and return its exit code."""
        log_level: DebugLevel = key.value.log_level

        getattr(logger, log_level.lower())(key.value.message)
        return key.value.exit_code

    def main(self, argv: Sequence[str] | None = None) -> int:
        args = self.parser.parse_args(argv)
        logging.basicConfig(
            level=args.log_level,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            force=True,
        )
        return args.handler(args)


def main(argv: Sequence[str] | None = None) -> int:
    return SimulatorCli().main(argv)


if __name__ == "__main__":  # pragma: nocover
    sys.exit(main())
