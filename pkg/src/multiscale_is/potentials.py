"""Closed-form scalar potentials used by the environments and the integrator.

Both classes are plain callables (scalar or array input) with an analytic
``derivative``.  The simulator only knows how to compile these two shapes into
its inner loop; arbitrary callables are fine for the analysis routines.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrigSeries:
    r"""Finite trigonometric sum

    .. math:: f(y) = c + s \sum_j \left[a_j \cos(\omega_j y) + b_j \sin(\omega_j y)\right]

    An empty series is the constant ``offset``.
    """

    frequencies: np.ndarray
    cos_amps: np.ndarray
    sin_amps: np.ndarray
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float).ravel()
        a = np.asarray(self.cos_amps, dtype=float).ravel()
        b = np.asarray(self.sin_amps, dtype=float).ravel()
        if not (w.size == a.size == b.size):
            raise ValueError("frequencies, cos_amps and sin_amps must have equal length")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "cos_amps", a)
        object.__setattr__(self, "sin_amps", b)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def constant(cls, value=0.0):
        empty = np.zeros(0)
        return cls(empty, empty, empty, 1.0, value)

    @property
    def n_modes(self):
        return self.frequencies.size

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        phase = np.multiply.outer(y, self.frequencies)
        total = np.cos(phase) @ self.cos_amps + np.sin(phase) @ self.sin_amps
        out = self.offset + self.scale * total
        return float(out) if out.ndim == 0 else out

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        phase = np.multiply.outer(y, self.frequencies)
        total = np.cos(phase) @ (self.sin_amps * self.frequencies) - np.sin(phase) @ (
            self.cos_amps * self.frequencies
        )
        out = self.scale * total
        return float(out) if out.ndim == 0 else out

    def __eq__(self, other):
        if not isinstance(other, TrigSeries):
            return NotImplemented
        return (
            type(self) is type(other)
            and np.array_equal(self.frequencies, other.frequencies)
            and np.array_equal(self.cos_amps, other.cos_amps)
            and np.array_equal(self.sin_amps, other.sin_amps)
            and self.scale == other.scale
            and self.offset == other.offset
        )

    __hash__ = None


@dataclass(frozen=True)
class Polynomial:
    """Polynomial with coefficients in ascending order, ``c[0] + c[1] x + ...``."""

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.size == 0:
            c = np.zeros(1)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        out = np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x):
        d = np.polynomial.polynomial.polyder(self.coeffs) if self.coeffs.size > 1 else np.zeros(1)
        out = np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), d)
        return float(out) if np.ndim(out) == 0 else out

    def derivative_coeffs(self):
        if self.coeffs.size == 1:
            return np.zeros(1)
        return np.polynomial.polynomial.polyder(self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None


def cos_plus_sin():
    """``Q(y) = cos y + sin y``, period ``2*pi``."""
    return TrigSeries([1.0], [1.0], [1.0])


def quadratic_well():
    """``V(x) = x**2 / 2``."""
    return Polynomial([0.0, 0.0, 0.5])


def linear_slope():
    """``V(x) = x``."""
    return Polynomial([0.0, 1.0])


def trig_second_derivative(series: TrigSeries, y):
    y = np.asarray(y, dtype=float)
    phase = np.multiply.outer(y, series.frequencies)
    w2 = series.frequencies**2
    out = -series.scale * (np.cos(phase) @ (series.cos_amps * w2) + np.sin(phase) @ (series.sin_amps * w2))
    return float(out) if out.ndim == 0 else out
