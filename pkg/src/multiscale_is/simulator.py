"""Time-discretized simulation of the original and controlled Langevin dynamics.

Each trajectory owns its random stream, derived from ``(master_seed, stream,
path_index)`` through :class:`numpy.random.SeedSequence`, so any partition of
path indices over workers reproduces the same outcomes bit for bit.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernel
from .periodic_env import PeriodicModel, compute_constants
from .potentials import Polynomial, TrigSeries, trig_second_derivative
from .random_env import RandomFieldModel, RandomHomogenized
from .subsolution import ZeroSubsolution, unit_distance_cost

DEFAULT_MAX_STEPS = 10**8
FIELD_TABLE_STEP = 0.005
_TABLE_MIN_MODES = 8


@dataclass(frozen=True)
class PaperRule:
    """``dt = tol * delta^2 / eps``."""

    tol: float = 0.001


@dataclass(frozen=True)
class FixedStep:
    dt: float


@dataclass(frozen=True)
class FiniteHorizon:
    terminal_cost: Callable = unit_distance_cost

    def payoff(self, terminal_x, exited_plus, epsilon):
        return np.exp(-np.asarray(self.terminal_cost(terminal_x), dtype=float) / epsilon)


@dataclass(frozen=True)
class ExitFromInterval:
    x_minus: float
    x_plus: float

    def __post_init__(self):
        if not self.x_minus < self.x_plus:
            raise ValueError(f"empty exit interval ({self.x_minus}, {self.x_plus})")

    def payoff(self, terminal_x, exited_plus, epsilon):
        return np.asarray(exited_plus, dtype=float)


@dataclass(frozen=True)
class SimParams:
    epsilon: float
    delta: float
    x0: float
    t0: float = 0.0
    T: float = 1.0
    dt_rule: PaperRule | FixedStep = field(default_factory=PaperRule)
    mode: FiniteHorizon | ExitFromInterval = field(default_factory=FiniteHorizon)
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if not (self.epsilon > 0 and self.delta > 0):
            raise ValueError("epsilon and delta must be positive")
        if isinstance(self.mode, FiniteHorizon) and not self.T > self.t0:
            raise ValueError(f"horizon T={self.T} must exceed t0={self.t0}")
        if isinstance(self.mode, ExitFromInterval) and not self.mode.x_minus < self.x0 < self.mode.x_plus:
            raise ValueError(f"x0={self.x0} is not inside the exit interval")
        if self.epsilon <= self.delta:
            warnings.warn(
                f"eps/delta = {self.epsilon / self.delta:.3g} <= 1; homogenization regime assumes eps/delta >> 1",
                stacklevel=2,
            )


def step_size(epsilon, delta, tol):
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    return tol * delta * delta / epsilon


def resolve_step(params: SimParams):
    """Return ``(dt, n_steps)``.

    Finite horizon: ``n_steps = ceil((T - t0) / dt)`` and ``dt`` is shrunk so the
    last step lands on ``T``.  Exit mode: ``n_steps`` is the step budget.
    """
    rule = params.dt_rule
    dt = step_size(params.epsilon, params.delta, rule.tol) if isinstance(rule, PaperRule) else float(rule.dt)
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if isinstance(params.mode, ExitFromInterval):
        return dt, int(params.max_steps)
    span = params.T - params.t0
    if dt > span:
        warnings.warn(f"time step {dt:.3g} exceeds the horizon {span:.3g}; clamped", stacklevel=2)
        dt = span
    n = max(1, math.ceil(span / dt - 1e-9))
    return span / n, n


class ControlVariant(enum.Enum):
    NO_CONTROL = _kernel.NO_CONTROL
    FULL_MULTISCALE = _kernel.FULL_MULTISCALE
    HOMOGENIZED_ONLY = _kernel.HOMOGENIZED_ONLY


@dataclass(frozen=True)
class ControlScheme:
    """Change of measure used to drive the simulation.

    ``corrector_scale`` is ``lam / Lhat`` (periodic) or ``1 / Khat`` (random),
    so the full control is ``-sqrt(2D) corrector_scale exp(Q(y)/D) U_x``; the
    homogenized-only control is ``-sqrt(q) U_x``.
    """

    variant: ControlVariant
    subsolution: object
    Q: Callable
    D: float
    corrector_scale: float
    q: float

    @classmethod
    def none(cls, model):
        return cls(ControlVariant.NO_CONTROL, ZeroSubsolution(), model.Q, model.D, 1.0, 2 * model.D)

    @classmethod
    def periodic(cls, variant, subsolution, model: PeriodicModel, coeffs=None):
        coeffs = coeffs if coeffs is not None else compute_constants(model)
        return cls(ControlVariant(variant), subsolution, model.Q, model.D, model.lam / coeffs.Lhat, coeffs.q)

    @classmethod
    def random(cls, variant, subsolution, model: RandomFieldModel, consts: RandomHomogenized):
        return cls(ControlVariant(variant), subsolution, model.Q, model.D, 1.0 / consts.Khat, consts.q)


def control_value(control: ControlScheme, t, x, y):
    if control.variant is ControlVariant.NO_CONTROL:
        return 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else 0.0
    ux = control.subsolution.gradient(t, x)
    if control.variant is ControlVariant.FULL_MULTISCALE:
        factor = control.corrector_scale * np.exp(np.asarray(control.Q(y), dtype=float) / control.D)
        out = -math.sqrt(2 * control.D) * factor * ux
    else:
        out = -math.sqrt(control.q) * ux
    return float(out) if np.ndim(out) == 0 else out


class PathStatus(enum.IntEnum):
    OK = _kernel.OK
    INVALID = _kernel.INVALID
    CENSORED = _kernel.CENSORED


@dataclass(frozen=True)
class TrajectoryOutcome:
    terminal_x: float
    exited_at_plus: bool
    log_weight: float
    n_steps: int
    payoff: float
    status: PathStatus = PathStatus.OK


@dataclass(frozen=True)
class OutcomeBatch:
    """Column-oriented outcomes of a contiguous range of trajectories."""

    terminal_x: np.ndarray
    exited_at_plus: np.ndarray
    log_weight: np.ndarray
    n_steps: np.ndarray
    payoff: np.ndarray
    status: np.ndarray

    def __len__(self):
        return self.terminal_x.size

    def outcome(self, i):
        return TrajectoryOutcome(
            float(self.terminal_x[i]), bool(self.exited_at_plus[i]), float(self.log_weight[i]),
            int(self.n_steps[i]), float(self.payoff[i]), PathStatus(int(self.status[i])),
        )


def path_rng(master_seed, stream, index):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.PCG64DXSM(ss))


def _field_table(series: TrigSeries, y_lo, y_hi, step, period=0.0):
    n = int(math.ceil((y_hi - y_lo) / step)) + 1
    if period > 0:
        step = (y_hi - y_lo) / (n - 1)
    y = y_lo + step * np.arange(n)
    return (
        y_lo, step, period,
        np.asarray(series(y)), np.asarray(series.derivative(y)), np.asarray(trig_second_derivative(series, y)),
    )


class _KernelConfig:
    """Flattened model/params/control, ready for :func:`_kernel.integrate_path`."""

    def __init__(self, model, params: SimParams, control: ControlScheme):
        Q, V = model.Q, model.V
        if not isinstance(Q, TrigSeries) or not isinstance(V, Polynomial):
            raise TypeError("simulation needs a TrigSeries fast potential and a Polynomial slow potential")
        if control.D != model.D:
            raise ValueError("control and model disagree on D")
        self.dt, self.n_steps = resolve_step(params)
        mode = params.mode
        exit_mode = isinstance(mode, ExitFromInterval)
        x_minus, x_plus = (mode.x_minus, mode.x_plus) if exit_mode else (-np.inf, np.inf)
        table = (0.0, 1.0, 0.0, np.zeros(0), np.zeros(0), np.zeros(0))
        if isinstance(model, PeriodicModel) and Q.n_modes > 0:
            table = _field_table(Q, 0.0, model.lam, FIELD_TABLE_STEP, period=model.lam)
        elif exit_mode and Q.n_modes >= _TABLE_MIN_MODES:
            pad = 4 * FIELD_TABLE_STEP + 1.0
            table = _field_table(Q, x_minus / params.delta - pad, x_plus / params.delta + pad, FIELD_TABLE_STEP)
        variant = control.variant
        if variant is ControlVariant.FULL_MULTISCALE:
            coef = control.corrector_scale
        elif variant is ControlVariant.HOMOGENIZED_ONLY:
            coef = math.sqrt(control.q)
        else:
            coef = 0.0
        sub = control.subsolution
        self.mode = mode
        self.epsilon = params.epsilon
        self.args = (
            float(params.x0), float(params.t0), float(self.dt), int(self.n_steps), float(params.epsilon),
            float(params.delta), float(model.D), exit_mode, float(x_minus), float(x_plus), int(params.max_steps),
            Q.frequencies, Q.cos_amps, Q.sin_amps, Q.scale, Q.offset,
            float(table[0]), float(table[1]), float(table[2]), table[3], table[4], table[5],
            V.derivative_coeffs(), int(variant.value), float(coef), int(sub.kernel_kind),
            np.asarray(sub.kernel_params(), dtype=float),
        )

    def run(self, rng):
        return _kernel.integrate_path(rng, *self.args)


def simulate_path(model, params: SimParams, control: ControlScheme, rng) -> TrajectoryOutcome:
    cfg = _KernelConfig(model, params, control)
    x, plus, logw, n, status = cfg.run(rng)
    return _outcome(cfg, x, plus, logw, n, status)


def _outcome(cfg, x, plus, logw, n, status):
    if status == _kernel.INVALID:
        pay = math.nan
    elif status == _kernel.CENSORED:
        pay = 0.0
    else:
        pay = float(cfg.mode.payoff(x, plus, cfg.epsilon))
    return TrajectoryOutcome(float(x), bool(plus), float(logw), int(n), pay, PathStatus(int(status)))


def simulate_batch(model, params: SimParams, control: ControlScheme, master_seed, stream, start, stop) -> OutcomeBatch:
    """Simulate trajectories ``start .. stop-1`` of ``stream``."""
    cfg = _KernelConfig(model, params, control)
    m = stop - start
    xs = np.empty(m)
    plus = np.zeros(m, dtype=bool)
    logw = np.empty(m)
    steps = np.empty(m, dtype=np.int64)
    status = np.empty(m, dtype=np.int8)
    for i in range(m):
        xs[i], plus[i], logw[i], steps[i], status[i] = cfg.run(path_rng(master_seed, stream, start + i))
    pay = np.asarray(cfg.mode.payoff(xs, plus, cfg.epsilon), dtype=float)
    pay = np.where(status == _kernel.CENSORED, 0.0, pay)
    pay = np.where(status == _kernel.INVALID, np.nan, pay)
    return OutcomeBatch(xs, plus, logw, steps, pay, status)


def exit_probability(model, epsilon, delta, x0, x_minus, x_plus, n=None):
    """Exact ``P(exit through x_plus)`` of the continuous-time dynamics in a frozen environment.

    In one dimension the full potential ``eps Q(x/delta) + V(x)`` gives the
    scale density ``exp(Q(x/delta)/D + V(x)/(eps D))``; the probability is the
    ratio of its integrals over ``[x_minus, x0]`` and ``[x_minus, x_plus]``.
    Evaluated by the trapezoid rule on a grid resolving ``delta``.
    """
    if not x_minus < x0 < x_plus:
        raise ValueError("x0 must lie inside the interval")
    if n is None:
        n = max(20_001, int(400 * (x_plus - x_minus) / delta) + 1)
    x = np.linspace(x_minus, x_plus, n)
    expo = np.asarray(model.Q(x / delta), dtype=float) / model.D + np.asarray(model.V(x), dtype=float) / (epsilon * model.D)
    dens = np.exp(expo - expo.max())
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
    return float(np.interp(x0, x, cum) / cum[-1])
