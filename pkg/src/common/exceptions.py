#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Simulator-specific exceptions."""


class SimulationError(Exception):
    """Base class for all errors raised by the simulator."""


class NonConvergenceError(SimulationError):
    """Custom Exception if an iterative solver misses its tolerance within the iteration cap."""

    def __init__(self, iterations: int, residual: float, solver: str = "linear solver"):
        super().__init__(
            f"{solver} did not converge after {iterations} iterations (residual {residual:.3e})."
        )
        self.iterations = iterations
        self.residual = residual


class IncompatibleRHSError(SimulationError):
    """Custom Exception if a Neumann problem is given a right-hand side with non-zero mean."""


class SingularArgumentError(SimulationError):
    """Custom Exception if the logarithmic potential derivative is evaluated at |s| >= 1."""


class CoefficientBelowBoundError(SimulationError):
    """Custom Exception if a constitutive coefficient leaves the interval [c0, K]."""


class StabilityViolationError(SimulationError):
    """Custom Exception if the time step exceeds the advertised stability bound."""


class NonFiniteError(SimulationError):
    """Custom Exception if a discrete field contains NaN or infinite values."""


class MismatchedGridsError(SimulationError):
    """Custom Exception if sweep configurations differ in anything but the regularization."""


class FormatVersionMismatchError(SimulationError):
    """Custom Exception if a snapshot or checkpoint was written in an unknown format."""


class CorruptSnapshotError(SimulationError):
    """Custom Exception if a snapshot is truncated or fails its checksum."""


class StepFailedError(SimulationError):
    """Custom Exception attaching the time step index to a failure inside the time loop."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause


class ConfigError(Exception):
    """Custom Exception if the configuration file is malformed or violates an invariant."""

    def __init__(self, message: str, keys: list[str] | None = None):
        super().__init__(message)
        self.keys = keys or []
