"""Subsolutions of the homogenized HJB equation and a grid-based verifier.

The homogenized Hamiltonian in one dimension is ``H(x, p) = r(x) p - q p^2 / 2``.
A subsolution ``U`` satisfies ``U_t + H(x, U_x) >= 0`` with ``U(T, .) <= h``; its
gradient drives the importance-sampling control.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Hamiltonian1D:
    r: Callable
    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError(f"effective diffusivity must be positive, got {self.q}")


def hamiltonian(H: Hamiltonian1D, x, p):
    return H.r(x) * p - 0.5 * H.q * p * p


def sign(x):
    """Sign with the convention ``sign(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def unit_distance_cost(x):
    """``h(x) = (|x| - 1)^2``."""
    return (np.abs(x) - 1.0) ** 2


class ZeroSubsolution:
    """``U = 0``: the control vanishes and importance sampling is plain Monte Carlo."""

    kernel_kind = 0

    def value(self, t, x):
        return np.zeros(np.broadcast(t, x).shape) if np.ndim(x) or np.ndim(t) else 0.0

    def gradient(self, t, x):
        return self.value(t, x)

    def kernel_params(self):
        return np.zeros(3)

    def __eq__(self, other):
        return isinstance(other, ZeroSubsolution)

    def __repr__(self):
        return "ZeroSubsolution()"


@dataclass(frozen=True)
class TerminalQuadraticSubsolution:
    """Value of the homogenized variational problem with ``h(x) = (|x|-1)^2`` and ``r = -kappa x``.

        G(t, x) = (e^{kT} - |x| e^{kt})^2 / ((1 + 2D) e^{2kT} - 2D e^{2kt})
    """

    kappa: float
    D: float
    T: float

    kernel_kind = 1

    def _denominator(self, t):
        k = self.kappa
        return (1 + 2 * self.D) * np.exp(2 * k * self.T) - 2 * self.D * np.exp(2 * k * np.asarray(t, dtype=float))

    def value(self, t, x):
        k = self.kappa
        num = (math.exp(k * self.T) - np.abs(x) * np.exp(k * np.asarray(t, dtype=float))) ** 2
        out = num / self._denominator(t)
        return float(out) if np.ndim(out) == 0 else out

    def gradient(self, t, x):
        k = self.kappa
        et = np.exp(k * np.asarray(t, dtype=float))
        out = -2 * et * (math.exp(k * self.T) - np.abs(x) * et) * sign(x) / self._denominator(t)
        return float(out) if np.ndim(out) == 0 else out

    def terminal_cost(self, x):
        return unit_distance_cost(x)

    def kernel_params(self):
        return np.array([self.kappa, self.D, self.T])


class ExitShape(enum.Enum):
    LINEAR_DRIFT = "linear_drift"
    REST_POINT = "rest_point"


@dataclass(frozen=True)
class ExitSubsolution:
    """Time-independent subsolutions for exit through ``x_plus``.

    ``LINEAR_DRIFT``: ``U(x) = (x_plus - x) / D`` (homogenized drift ``-kappa``).
    ``REST_POINT``: ``U(x) = (x_plus^2 - x^2) / (2D)`` (homogenized drift ``-kappa x``).
    """

    D: float
    x_plus: float
    x_minus: float
    shape: ExitShape = ExitShape.LINEAR_DRIFT

    @property
    def kernel_kind(self):
        return 2 if self.shape is ExitShape.LINEAR_DRIFT else 3

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.shape is ExitShape.LINEAR_DRIFT:
            out = (self.x_plus - x) / self.D
        else:
            out = (self.x_plus**2 - x * x) / (2 * self.D)
        out = out + 0.0 * np.asarray(t, dtype=float)
        return float(out) if np.ndim(out) == 0 else out

    def gradient(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.shape is ExitShape.LINEAR_DRIFT:
            out = np.full(np.broadcast(t, x).shape, -1.0 / self.D)
        else:
            out = -x / self.D + 0.0 * np.asarray(t, dtype=float)
        return float(out) if np.ndim(out) == 0 else out

    def boundary_value(self):
        return float(self.value(0.0, self.x_plus))

    def kernel_params(self):
        return np.array([self.D, self.x_plus, 0.0])


def value_and_gradient(sub, t, x):
    return sub.value(t, x), sub.gradient(t, x)


@dataclass(frozen=True)
class SubsolutionReport:
    max_violation: float
    location: tuple
    terminal_violation: float
    tol: float

    @property
    def passed(self):
        return self.max_violation <= self.tol and self.terminal_violation <= self.tol


def hjb_residual(sub, H: Hamiltonian1D, t, x, fd_step=1e-4, t_bounds=None):
    """``U_t + H(x, U_x)`` with a finite-difference time derivative.

    Central differences in the interior and second-order three-point one-sided
    differences where ``t +- fd_step`` leaves ``t_bounds``.
    """
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    lo, hi = t_bounds if t_bounds is not None else (-np.inf, np.inf)
    h = fd_step
    u = lambda s: np.asarray(sub.value(s, x), dtype=float)  # noqa: E731
    u0 = u(t)
    central = (u(np.minimum(t + h, hi)) - u(np.maximum(t - h, lo))) / (2 * h)
    backward = (3 * u0 - 4 * u(t - h) + u(t - 2 * h)) / (2 * h)
    forward = (-3 * u0 + 4 * u(t + h) - u(t + 2 * h)) / (2 * h)
    u_t = np.where(t + h > hi, backward, np.where(t - h < lo, forward, central))
    return u_t + hamiltonian(H, x, sub.gradient(t, x))


def verify_subsolution(sub, H: Hamiltonian1D, t_grid, x_grid, tol, fd_step=1e-4, terminal_cost=None):
    """Check the subsolution inequalities on the tensor grid ``t_grid x x_grid``.

    Returns a :class:`SubsolutionReport` with the worst HJB violation
    ``max(0, -(U_t + H))`` and where it occurs, plus the worst excess of the
    terminal (or exit-boundary) value over its data.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if isinstance(sub, TerminalQuadraticSubsolution) and np.any(x_grid == 0.0):
        raise ValueError("grid touches the non-smooth interface x = 0")
    if isinstance(sub, TerminalQuadraticSubsolution):
        t_bounds = (min(float(t_grid.min()), 0.0), sub.T)
    else:
        t_bounds = (float(t_grid.min()), float(t_grid.max()))
    tt, xx = np.meshgrid(t_grid, x_grid, indexing="ij")
    residual = hjb_residual(sub, H, tt, xx, fd_step, t_bounds)
    violation = np.maximum(0.0, -residual)
    k = np.unravel_index(int(np.argmax(violation)), violation.shape)
    worst = float(violation[k])

    if terminal_cost is None and hasattr(sub, "terminal_cost"):
        terminal_cost = sub.terminal_cost
    if isinstance(sub, ExitSubsolution):
        terminal_violation = max(0.0, sub.boundary_value())
    elif terminal_cost is not None:
        T = sub.T if hasattr(sub, "T") else float(t_grid.max())
        excess = np.asarray(sub.value(T, x_grid)) - np.asarray(terminal_cost(x_grid))
        terminal_violation = max(0.0, float(np.max(excess)))
    else:
        terminal_violation = 0.0
    return SubsolutionReport(worst, (float(tt[k]), float(xx[k])), terminal_violation, tol)
