#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Collection of global literals for the two-phase flow simulator."""

from dataclasses import dataclass
from enum import Enum
from typing import Literal

VERSION = "0.1.0"

# regularization and clamping
CLIP_MARGIN_MAX = 1e-9
QUADRATURE_TOL = 1e-12
ENTROPY_QUADRATURE_TOL = 1e-10
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100

# linear solvers
SOLVER_TOL = 1e-10
MAX_ITER_FACTOR = 10
RHS_COMPATIBILITY_TOL = 1e-10
DIVERGENCE_TOL = 1e-6

# stability bounds are allowed to be exceeded by this fraction before failing
STABILITY_SLACK = 1.1
CFL_SAFETY = 0.5
EXPLICIT_C_STAB = 0.05

# uniformity heuristic for the ε-sweep bounds table
UNIFORMITY_FACTOR = 10.0
OVERSHOOT_LIMIT = 1e-6

# I/O
SNAPSHOT_MAGIC = b"NSCHF1\x00"
SNAPSHOT_NAME_LENGTH = 16
CHECKPOINT_FORMAT_VERSION = 1
SERIES_FILE = "series.csv"
SWEEP_FILE = "sweep.csv"
MANIFEST_FILE = "manifest.txt"
REPORTS_FILE = "reports.csv"
CHECKPOINT_FILE = "checkpoint.yaml"
SNAPSHOT_PATTERN = "fields_{step:06d}.snap"
SERIES_HEADER = [
    "t",
    "e_kin",
    "e_free",
    "e_tot",
    "d_visc",
    "d_flux",
    "mass",
    "g_eps_int",
    "lapA_sq_cum",
    "psi_ln_sq_cum",
    "phi_min",
    "phi_max",
]
SWEEP_HEADER = [
    "eps",
    "sup_e_tot",
    "lapA_sq_cum",
    "eps3_psiln_sq",
    "jhat_sq_cum",
    "dist_phi_prev",
    "dist_gradA_prev",
]
DIAG_TOL = 1e-10
THREADS_ENV = "NSCH_THREADS"

DebugLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR"]
Scheme = Literal["stabilized", "explicit"]
StabilizationRange = Literal["clipped", "data"]
Splitting = Literal["ch-ns", "ns-ch"]
CoefficientKind = Literal["constant", "quadratic"]
InitialKind = Literal["random", "stripe", "disk", "constant"]
VelocityKind = Literal["zero", "random"]


class FieldKind(int, Enum):
    """Storage location of a field on the staggered grid."""

    CELL = 0
    X_FACE = 1
    Y_FACE = 2


@dataclass
class StatusLevel:
    """Status object helper."""

    exit_code: int
    message: str
    log_level: DebugLevel


class Status(Enum):
    """Collection of possible outcomes of a command."""

    SUCCESS = StatusLevel(0, "completed", "INFO")
    SOLVER_FAILED = StatusLevel(2, "solver failure", "ERROR")
    DIAG_MISMATCH = StatusLevel(2, "recomputed diagnostics differ from stored series", "ERROR")
    CONFIG_INVALID = StatusLevel(3, "invalid configuration", "ERROR")
