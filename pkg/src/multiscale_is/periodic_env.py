"""Homogenized constants for 1D Langevin dynamics in a periodic fast potential.

The model is

    dX = [-(eps/delta) Q'(X/delta) - V'(X)] dt + sqrt(eps) sqrt(2D) dW

with ``Q`` periodic of period ``lam``.  In one dimension the cell problem has a
closed-form solution, so everything reduces to the two period integrals

    L = int_0^lam exp(-Q/D) dy,    Lhat = int_0^lam exp(Q/D) dy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .potentials import Polynomial, TrigSeries, cos_plus_sin, quadratic_well


class DomainError(ValueError):
    """Raised when a quadrature integrand is not finite."""


@dataclass(frozen=True)
class PeriodicModel:
    """Fast periodic potential ``Q``, slow potential ``V`` and diffusion constant ``D``.

    ``Q`` and ``V`` may be any vectorized callables; ``Qprime`` and ``Vprime``
    default to ``Q.derivative`` / ``V.derivative`` when those exist.
    """

    Q: Callable
    V: Callable
    lam: float
    D: float = 1.0
    Qprime: Callable | None = None
    Vprime: Callable | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"period must be positive, got {self.lam}")
        if not self.D > 0:
            raise ValueError(f"diffusion constant must be positive, got {self.D}")
        for name, fn in (("Qprime", self.Q), ("Vprime", self.V)):
            if getattr(self, name) is None:
                if not hasattr(fn, "derivative"):
                    raise ValueError(f"{name} must be supplied for a potential without .derivative")
                object.__setattr__(self, name, fn.derivative)

    def check_invariants(self, n_grid=64, rtol=1e-6, fd_step=1e-5):
        """Spot-check periodicity of ``Q`` and consistency of ``Qprime``.

        Returns the pair (max periodicity defect, max derivative defect).
        """
        y = np.linspace(0.0, self.lam, n_grid, endpoint=False)
        q = np.asarray(self.Q(y), dtype=float)
        period_defect = float(np.max(np.abs(np.asarray(self.Q(y + self.lam)) - q)))
        fd = (np.asarray(self.Q(y + fd_step)) - np.asarray(self.Q(y - fd_step))) / (2 * fd_step)
        deriv_defect = float(np.max(np.abs(fd - np.asarray(self.Qprime(y)))))
        scale = max(1.0, float(np.max(np.abs(q))))
        if period_defect > rtol * scale:
            raise ValueError(f"Q is not {self.lam}-periodic (defect {period_defect:.3g})")
        if deriv_defect > 1e-4 * scale:
            raise ValueError(f"Qprime disagrees with finite differences of Q (defect {deriv_defect:.3g})")
        return period_defect, deriv_defect


@dataclass(frozen=True)
class EffectiveCoefficients:
    L: float
    Lhat: float
    kappa: float
    q: float


def benchmark_periodic_model(D=1.0):
    """``Q = cos y + sin y`` (period 2 pi) on top of ``V = x^2/2``."""
    return PeriodicModel(Q=cos_plus_sin(), V=quadratic_well(), lam=2 * math.pi, D=D)


def flat_periodic_model(V=None, D=1.0, lam=1.0):
    """Model with ``Q = 0``; handy for sanity checks against plain diffusions."""
    return PeriodicModel(Q=TrigSeries.constant(0.0), V=V if V is not None else Polynomial([0.0]), lam=lam, D=D)


def quadrature_nodes(lam, n_quad):
    return lam * np.arange(n_quad) / n_quad


def compute_constants(model: PeriodicModel, n_quad: int = 1024) -> EffectiveCoefficients:
    """Period integrals ``L``, ``Lhat`` and the derived ``kappa = lam^2/(L Lhat)``, ``q = 2 D kappa``.

    Uses the composite trapezoid rule over one period, which for a periodic
    integrand is the equal-weight rectangle sum and converges spectrally.
    """
    if n_quad < 16:
        raise ValueError(f"n_quad must be at least 16, got {n_quad}")
    y = quadrature_nodes(model.lam, n_quad)
    with np.errstate(over="ignore", invalid="ignore"):
        scaled = np.asarray(model.Q(y), dtype=float) / model.D
        minus = np.exp(-scaled)
        plus = np.exp(scaled)
    for values in (minus, plus):
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            k = int(bad[0])
            raise DomainError(f"non-finite integrand exp(+-Q/D) at quadrature node {k} (y={y[k]!r})")
    h = model.lam / n_quad
    L = float(h * minus.sum())
    Lhat = float(h * plus.sum())
    kappa = model.lam**2 / (L * Lhat)
    return EffectiveCoefficients(L=L, Lhat=Lhat, kappa=kappa, q=2 * model.D * kappa)


def corrector_factor(model: PeriodicModel, coeffs: EffectiveCoefficients, y):
    """``1 + chi'(y) = (lam / Lhat) exp(Q(y)/D)``."""
    out = (model.lam / coeffs.Lhat) * np.exp(np.asarray(model.Q(y), dtype=float) / model.D)
    return float(out) if np.ndim(out) == 0 else out


def effective_drift(model: PeriodicModel, coeffs: EffectiveCoefficients, x):
    """Homogenized drift ``r(x) = -kappa V'(x)``."""
    out = -coeffs.kappa * np.asarray(model.Vprime(x), dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def gibbs_density(model: PeriodicModel, coeffs: EffectiveCoefficients, y):
    """Invariant density ``exp(-Q(y)/D) / L`` of the fast motion on one period."""
    out = np.exp(-np.asarray(model.Q(y), dtype=float) / model.D) / coeffs.L
    return float(out) if np.ndim(out) == 0 else out
