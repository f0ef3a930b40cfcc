"""Stationary Gaussian random potentials and their homogenized constants.

Fields are generated by the randomization (spectral) method: for the
squared-exponential covariance ``v exp(-r^2 / l2)`` the spectral measure is a
centred Gaussian with variance ``2 / l2``, so

    Q(y) = sqrt(v/M) sum_j [xi_j cos(w_j y) + eta_j sin(w_j y)]

with ``w_j ~ N(0, 2/l2)`` and ``xi_j, eta_j ~ N(0, 1)`` has exactly the target
covariance for every ``M``; ``M`` only controls how Gaussian the marginals are.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .potentials import Polynomial, TrigSeries


@dataclass(frozen=True)
class GaussianFieldSpec:
    variance: float = 1.0
    corr_length_sq: float = 1.0
    n_modes: int = 128
    seed: int = 0

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"variance must be non-negative, got {self.variance}")
        if not self.corr_length_sq > 0:
            raise ValueError(f"corr_length_sq must be positive, got {self.corr_length_sq}")
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")

    def covariance(self, r):
        return self.variance * np.exp(-np.square(r) / self.corr_length_sq)


class FieldRealization(TrigSeries):
    """One frozen draw of the random potential (a zero-offset trig series)."""

    def to_text(self):
        lines = [f"# scale {self.scale!r}", str(self.n_modes)]
        lines += [
            f"{w!r} {a!r} {b!r}"
            for w, a, b in zip(self.frequencies.tolist(), self.cos_amps.tolist(), self.sin_amps.tolist())
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        scale = None
        rows = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "scale":
                    scale = float(parts[1])
                continue
            rows.append(line)
        if not rows:
            raise ValueError("empty field record")
        m = int(rows[0])
        triples = np.array([[float(v) for v in r.split()] for r in rows[1:]], dtype=float).reshape(-1, 3)
        if triples.shape[0] != m:
            raise ValueError(f"field record announces {m} modes but holds {triples.shape[0]}")
        if scale is None:
            scale = 1.0 / math.sqrt(m)
        return cls(triples[:, 0], triples[:, 1], triples[:, 2], scale, 0.0)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True)
class RandomHomogenized:
    K: float
    Khat: float
    kappa: float
    q: float


@dataclass(frozen=True)
class RandomFieldModel:
    """Langevin model whose fast potential is a frozen Gaussian field realization."""

    field: FieldRealization
    V: Callable
    D: float = 1.0
    variance: float = 1.0
    Vprime: Callable | None = None

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError(f"diffusion constant must be positive, got {self.D}")
        if self.Vprime is None:
            object.__setattr__(self, "Vprime", self.V.derivative)

    @property
    def Q(self):
        return self.field

    @property
    def Qprime(self):
        return self.field.derivative


def make_rng(seed):
    return np.random.Generator(np.random.PCG64DXSM(seed))


def sample_field(spec: GaussianFieldSpec, rng=None) -> FieldRealization:
    """Draw one realization; ``rng`` defaults to a generator seeded from ``spec.seed``."""
    if rng is None:
        rng = make_rng(spec.seed)
    m = spec.n_modes
    freqs = rng.normal(0.0, math.sqrt(2.0 / spec.corr_length_sq), size=m)
    xi = rng.standard_normal(m)
    eta = rng.standard_normal(m)
    return FieldRealization(freqs, xi, eta, math.sqrt(spec.variance / m), 0.0)


def homogenized_constants(spec: GaussianFieldSpec, D: float) -> RandomHomogenized:
    """``K = E exp(-Q/D)``, ``Khat = E exp(Q/D)`` from the lognormal moment ``exp(v / 2D^2)``."""
    if not D > 0:
        raise ValueError(f"D must be positive, got {D}")
    v = spec.variance
    K = math.exp(v / (2 * D * D))
    kappa = math.exp(-v / (D * D))
    return RandomHomogenized(K=K, Khat=K, kappa=kappa, q=2 * D * kappa)


def empirical_constants(field: FieldRealization, D: float, y_min: float, y_max: float, n: int = 200_001):
    """Per-realization spatial averages of ``exp(-+Q/D)`` over ``[y_min, y_max]``.

    Diagnostic only; the simulator uses the ensemble constants.
    """
    y = np.linspace(y_min, y_max, n)
    q = field(y) / D
    K = float(np.mean(np.exp(-q)))
    Khat = float(np.mean(np.exp(q)))
    kappa = 1.0 / (K * Khat)
    return RandomHomogenized(K=K, Khat=Khat, kappa=kappa, q=2 * D * kappa)


def random_corrector_factor(field: FieldRealization, consts: RandomHomogenized, D: float, y):
    """``1 + chi'(y) = exp(Q(y)/D) / Khat``."""
    out = np.exp(np.asarray(field(y), dtype=float) / D) / consts.Khat
    return float(out) if np.ndim(out) == 0 else out


def random_model(spec: GaussianFieldSpec, V=None, D=1.0, rng=None):
    """Sample a field and wrap it with the slow potential (default ``V(x) = x``)."""
    field = sample_field(spec, rng)
    return RandomFieldModel(field=field, V=V if V is not None else Polynomial([0.0, 1.0]), D=D, variance=spec.variance)
