#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
import os
import subprocess
import sys
from pathlib import Path

from core.config import SimConfig
from managers.config import ConfigManager

logger = logging.getLogger(__name__)

SRC_PATH = Path(__file__).absolute().parents[2] / "src"

BASE = {
    "grid.nx": 32,
    "grid.ny": 32,
    "time.dt": 1e-4,
    "time.t_end": 2e-2,
    "output.every": 1,
    "material.a0": 1e-3,
    "material.eps": 1e-2,
}


def build_config(**overrides) -> SimConfig:
    """Validated configuration from ``BASE`` with ``section__key`` overrides."""
    manager = ConfigManager()
    entries = {**BASE, **{key.replace("__", "."): value for key, value in overrides.items()}}
    return manager.validate(manager.merge(entries))


def write_config(path: Path, **overrides) -> Path:
    """Flat ``key = value`` file for the command line."""
    entries = {**BASE, **{key.replace("__", "."): value for key, value in overrides.items()}}
    lines = []
    for key, value in entries.items():
        if isinstance(value, list):
            value = ", ".join(str(item) for item in value)
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def run_cli(*args: str, threads: int = 1) -> subprocess.CompletedProcess:
    """Run the simulator command line in a fresh interpreter."""
    env = {**os.environ, "PYTHONPATH": str(SRC_PATH), "NSCH_THREADS": str(threads)}
    command = [sys.executable, str(SRC_PATH / "cli.py"), *args]
    logger.info(f"running {' '.join(command)}")
    return subprocess.run(command, env=env, capture_output=True, text=True, check=False)
