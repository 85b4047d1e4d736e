#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Constitutive functions of the two-phase model and their parameter bundle.

All functions accept scalars or numpy arrays and are evaluated elementwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import xlogy

from common.exceptions import CoefficientBelowBoundError, SingularArgumentError
from literals import (
    CLIP_MARGIN_MAX,
    ENTROPY_QUADRATURE_TOL,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    QUADRATURE_TOL,
    CoefficientKind,
)

logger = logging.getLogger(__name__)

ArrayLike = float | np.ndarray

ENTROPY_TABLE_NODES = 2001


class QuarticPotential:
    """Smooth double well (1 - s^2)^2 / 4 with minima at s = +-1."""

    def value(self, s: ArrayLike) -> ArrayLike:
        return 0.25 * (1.0 - s * s) ** 2

    def derivative(self, s: ArrayLike) -> ArrayLike:
        return s * s * s - s

    def second_derivative(self, s: ArrayLike) -> ArrayLike:
        return 3.0 * s * s - 1.0


@dataclass(frozen=True)
class MaterialModel:
    """Densities, viscosities, gradient coefficient, potentials and mobilities.

    The gradient coefficient is a(s) = a0 + a1 s^2 (``a_kind="quadratic"``) or the constant a0.
    ``c0`` and ``k`` default to the extreme values of a and the viscosity on [-1, 1]; when given
    they are checked against those values.
    """

    rho1: float = 1.0
    rho2: float = 1.0
    eta1: float = 1.0
    eta2: float = 1.0
    eps: float = 1e-2
    a_kind: CoefficientKind = "constant"
    a0: float = 1.0
    a1: float = 0.0
    c0: float | None = None
    k: float | None = None
    potential: QuarticPotential = field(default_factory=QuarticPotential, compare=False)

    def __post_init__(self):
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ValueError(f"densities must be positive, got {self.rho1}, {self.rho2}")
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ValueError(f"viscosities must be positive, got {self.eta1}, {self.eta2}")
        if not 0.0 <= self.eps < 1.0:
            raise ValueError(f"regularization parameter must lie in [0, 1), got {self.eps}")
        if self.a0 <= 0 or self.a1 < 0:
            raise ValueError(
                f"gradient coefficient needs a0 > 0 and a1 >= 0, got {self.a0}, {self.a1}"
            )

        a_min, a_max = self.a_bounds()
        lower = min(a_min, self.eta1, self.eta2)
        upper = max(a_max, self.eta1, self.eta2)
        if self.c0 is None:
            object.__setattr__(self, "c0", lower)
        if self.k is None:
            object.__setattr__(self, "k", upper)
        if lower < self.c0:
            raise CoefficientBelowBoundError(
                f"min of a and eta on [-1, 1] is {lower} < c0 = {self.c0}"
            )
        if upper > self.k:
            raise CoefficientBelowBoundError(
                f"max of a and eta on [-1, 1] is {upper} > K = {self.k}"
            )

    # --- densities and viscosity ---

    @property
    def beta(self) -> float:
        """Half density difference; exactly 0.0 for matched densities."""
        return 0.0 if self.rho1 == self.rho2 else 0.5 * (self.rho2 - self.rho1)

    def density(self, s: ArrayLike) -> ArrayLike:
        """Affine density, evaluated at s clamped to [-1, 1] so that it stays positive."""
        s = np.clip(s, -1.0, 1.0)
        return 0.5 * (self.rho1 + self.rho2) + 0.5 * (self.rho2 - self.rho1) * s

    def viscosity(self, s: ArrayLike) -> ArrayLike:
        s = np.clip(s, -1.0, 1.0)
        return 0.5 * self.eta1 * (1.0 - s) + 0.5 * self.eta2 * (1.0 + s)

    # --- mobilities ---

    def mobility(self, s: ArrayLike) -> ArrayLike:
        """Degenerate mobility 1 - s^2 on [-1, 1], zero outside."""
        return np.where(np.abs(s) <= 1.0, 1.0 - np.square(s), 0.0)

    def mobility_eps(self, s: ArrayLike) -> ArrayLike:
        """Mobility frozen at its value m(1 - eps) = eps (2 - eps) outside (-1 + eps, 1 - eps)."""
        if self.eps == 0.0:
            return self.mobility(s)
        return self.mobility(np.clip(s, -1.0 + self.eps, 1.0 - self.eps))

    @property
    def mobility_floor(self) -> float:
        return self.eps * (2.0 - self.eps)

    # --- potentials ---

    @property
    def clip_margin(self) -> float:
        """Distance from +-1 kept before any evaluation of the singular derivative."""
        return CLIP_MARGIN_MAX if self.eps == 0.0 else min(0.5 * self.eps, CLIP_MARGIN_MAX)

    def clip(self, s: ArrayLike) -> ArrayLike:
        margin = self.clip_margin
        return np.clip(s, -1.0 + margin, 1.0 - margin)

    def psi(self, s: ArrayLike) -> ArrayLike:
        return self.potential.value(s)

    def psi_prime(self, s: ArrayLike) -> ArrayLike:
        return self.potential.derivative(s)

    def psi_second(self, s: ArrayLike) -> ArrayLike:
        return self.potential.second_derivative(s)

    def psi_ln(self, s: ArrayLike) -> ArrayLike:
        """(1 + s) ln(1 + s) + (1 - s) ln(1 - s), continuously extended to |s| = 1."""
        if np.any(np.abs(s) > 1.0):
            raise SingularArgumentError("logarithmic potential is undefined for |s| > 1")
        return xlogy(1.0 + s, 1.0 + s) + xlogy(1.0 - s, 1.0 - s)

    def psi_ln_prime(self, s: ArrayLike) -> ArrayLike:
        """ln(1 + s) - ln(1 - s)."""
        if np.any(np.abs(s) >= 1.0):
            raise SingularArgumentError("logarithmic potential derivative needs |s| < 1")
        return np.log1p(s) - np.log1p(-s)

    def psi_ln_second(self, s: ArrayLike) -> ArrayLike:
        if np.any(np.abs(s) >= 1.0):
            raise SingularArgumentError("logarithmic potential derivative needs |s| < 1")
        return 2.0 / (1.0 - np.square(s))

    def psi_eps(self, s: ArrayLike) -> ArrayLike:
        if self.eps == 0.0:
            return self.psi(s)
        return self.psi(s) + self.eps * self.psi_ln(s)

    def psi_eps_prime(self, s: ArrayLike) -> ArrayLike:
        if self.eps == 0.0:
            return self.psi_prime(s)
        return self.psi_prime(s) + self.eps * self.psi_ln_prime(s)

    def psi_eps_second(self, s: ArrayLike) -> ArrayLike:
        if self.eps == 0.0:
            return self.psi_second(s)
        return self.psi_second(s) + self.eps * self.psi_ln_second(s)

    @cached_property
    def kappa(self) -> float:
        """Sampled lower bound of the second derivative of the regularized potential."""
        s = np.linspace(-1.0 + self.clip_margin, 1.0 - self.clip_margin, 4001)
        return float(np.min(self.psi_eps_second(s)))

    def stabilization(self, radius: float) -> float:
        """Largest |psi_eps''| over [-radius, radius], radius capped at 1 - clip_margin."""
        radius = min(radius, 1.0 - self.clip_margin)
        s = np.linspace(-radius, radius, 4001)
        return float(np.max(np.abs(self.psi_eps_second(s))))

    def log_coercivity(
        self, mean: float, alpha: float, samples: int = 4001
    ) -> tuple[float, float]:
        """Constants (C, c) with psi_ln'(s) (s - mean) >= C |psi_ln'(s)| - c on sampled s.

        ``mean`` must lie in (-1 + alpha, 1 - alpha); C = alpha / 2 works on the two outer
        intervals of width alpha / 2 and c absorbs the middle one.
        """
        if not -1.0 + alpha < mean < 1.0 - alpha:
            raise ValueError(f"mean {mean} outside (-1 + {alpha}, 1 - {alpha})")
        s = self.clip(np.linspace(-1.0, 1.0, samples))
        d = self.psi_ln_prime(s)
        c_alpha = 0.5 * alpha
        deficit = c_alpha * np.abs(d) - d * (s - mean)
        return c_alpha, float(max(0.0, np.max(deficit)))

    # --- gradient coefficient and its reparametrization ---

    def a_bounds(self) -> tuple[float, float]:
        """Min and max of a on [-1, 1]."""
        if self.a_kind == "constant":
            return self.a0, self.a0
        return self.a0, self.a0 + self.a1

    def coef_a(self, s: ArrayLike) -> ArrayLike:
        if self.a_kind == "constant":
            values = np.full_like(np.asarray(s, dtype=float), self.a0)
        else:
            values = self.a0 + self.a1 * np.square(s)
        if self.c0 is not None and np.any(values < self.c0):
            raise CoefficientBelowBoundError(f"a(s) dropped below c0 = {self.c0}")
        return values

    def coef_a_prime(self, s: ArrayLike) -> ArrayLike:
        if self.a_kind == "constant":
            return np.zeros_like(np.asarray(s, dtype=float))
        return 2.0 * self.a1 * np.asarray(s, dtype=float)

    def sqrt_a(self, s: ArrayLike) -> ArrayLike:
        return np.sqrt(self.coef_a(s))

    def antiderivative(self, s: ArrayLike, method: str = "closed") -> ArrayLike:
        """A(s) = integral of sqrt(a) from 0 to s.

        ``method="closed"`` uses the closed form of the coefficient family, ``"quadrature"``
        adaptive Gauss-Kronrod quadrature at tolerance 1e-12.
        """
        if method == "quadrature":
            return self._antiderivative_quad(s)
        s = np.asarray(s, dtype=float)
        if self.a_kind == "constant" or self.a1 == 0.0:
            return np.sqrt(self.a0) * s
        root = np.sqrt(self.a1 / self.a0)
        radical = s * np.sqrt(self.a0 + self.a1 * s * s)
        return 0.5 * (radical + self.a0 / np.sqrt(self.a1) * np.arcsinh(root * s))

    def _antiderivative_quad(self, s: ArrayLike) -> ArrayLike:
        def _single(x: float) -> float:
            tol = QUADRATURE_TOL
            value, _ = quad(lambda t: float(self.sqrt_a(t)), 0.0, x, epsabs=tol, epsrel=tol)
            return value

        return np.vectorize(_single, otypes=[float])(s)

    def antiderivative_inverse(self, r: ArrayLike) -> ArrayLike:
        """Invert A by Newton's method safeguarded with bisection."""
        r = np.asarray(r, dtype=float)
        if self.a_kind == "constant" or self.a1 == 0.0:
            return r / np.sqrt(self.a0)

        # |A(s)| >= sqrt(a0) |s| brackets the root
        bound = np.abs(r) / np.sqrt(self.a0)
        low, high = -bound, bound.copy()
        s = r / np.sqrt(self.a0 + self.a1)
        for _ in range(NEWTON_MAX_ITER):
            residual = self.antiderivative(s) - r
            if np.all(np.abs(residual) <= NEWTON_TOL * np.maximum(1.0, np.abs(r))):
                break
            high = np.where(residual > 0, s, high)
            low = np.where(residual < 0, s, low)
            step = s - residual / self.sqrt_a(s)
            outside = (step <= low) | (step >= high)
            s = np.where(outside, 0.5 * (low + high), step)
        return s

    # --- entropy functionals ---

    def _entropy_quad(self, s: float, mobility) -> float:
        # G(s) = int_0^s int_0^r g(t) dt dr = int_0^s (s - t) g(t) dt
        if s == 0.0:
            return 0.0
        if abs(s) > 1.0:
            raise SingularArgumentError(f"entropy functional is defined on [-1, 1], got {s}")

        def _kernel(t: float) -> float:
            return (s - t) * float(self.sqrt_a(t)) / float(mobility(t))

        tol = ENTROPY_QUADRATURE_TOL
        value, error = quad(_kernel, 0.0, s, epsabs=tol, epsrel=tol, limit=200)
        if not np.isfinite(value) or error > 1e3 * tol * max(1.0, abs(value)):
            raise SingularArgumentError(
                f"entropy quadrature failed at s = {s} (error {error:.2e})"
            )
        return value

    def _entropy_pointwise(self, s: ArrayLike, mobility) -> ArrayLike:
        return np.vectorize(lambda x: self._entropy_quad(float(x), mobility), otypes=[float])(s)

    @cached_property
    def _entropy_table(self) -> CubicSpline:
        nodes = np.linspace(-1.0, 1.0, ENTROPY_TABLE_NODES)
        values = [self._entropy_quad(float(x), self.mobility_eps) for x in nodes]
        return CubicSpline(nodes, values)

    def entropy_G_eps(self, s: ArrayLike, method: str = "auto") -> ArrayLike:  # noqa: N802
        """Convex entropy with G(0) = G'(0) = 0 and G'' = sqrt(a) / m_eps, on [-1, 1].

        ``method="auto"`` uses the closed form for constant a and a spline through quadrature
        nodes otherwise; ``"quadrature"`` integrates at every point.
        """
        s = np.clip(s, -1.0, 1.0)
        if method == "quadrature":
            return self._entropy_pointwise(s, self.mobility_eps)
        if self.a_kind != "constant" and self.a1 != 0.0:
            return self._entropy_table(s)

        root = np.sqrt(self.a0)
        if self.eps == 0.0:
            return 0.5 * root * self.psi_ln(s)
        edge = 1.0 - self.eps
        inner = np.clip(s, -edge, edge)
        beyond = np.abs(s) - edge
        quadratic = root * (np.arctanh(edge) * beyond + 0.5 * beyond**2 / self.mobility_floor)
        return 0.5 * root * self.psi_ln(inner) + np.where(beyond > 0, quadratic, 0.0)

    def entropy_G(self, s: ArrayLike, method: str = "auto") -> ArrayLike:  # noqa: N802
        """Entropy built on the degenerate mobility, continuous up to |s| = 1."""
        s = np.clip(s, -1.0, 1.0)
        if method != "quadrature" and (self.a_kind == "constant" or self.a1 == 0.0):
            return 0.5 * np.sqrt(self.a0) * self.psi_ln(s)
        return self._entropy_pointwise(s, self.mobility)
