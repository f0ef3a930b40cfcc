"""Estimator statistics: streaming moments, relative errors and cross-checks.

A sample is ``Gamma = payoff * exp(log_weight)``.  Moments accumulate with
Welford/Chan updates so that partial results from disjoint batches merge
associatively and tiny probabilities do not suffer cancellation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .simulator import OutcomeBatch, PathStatus, TrajectoryOutcome

ESTIMATORS = ("theta0", "theta1", "theta2")

CSV_FIELDS = (
    "experiment_id", "epsilon", "delta", "eps_over_delta", "estimator", "n", "mean", "second_moment",
    "re_sample", "re_mean", "neg_eps_log_mean", "neg_eps_log_m2", "censored", "wall_seconds", "seed",
)

CENSORING_LIMIT = 1e-3


def payoff(mode, outcome: TrajectoryOutcome, epsilon):
    """``exp(-h(x_T)/eps)`` in finite-horizon mode, ``1{exit through x_plus}`` in exit mode."""
    if outcome.status is PathStatus.CENSORED:
        return 0.0
    return float(mode.payoff(outcome.terminal_x, outcome.exited_at_plus, epsilon))


def weighted_samples(payoffs, log_weights):
    """``payoff * exp(log_weight)``, with zero payoffs staying exactly zero."""
    payoffs = np.asarray(payoffs, dtype=float)
    log_weights = np.asarray(log_weights, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(payoffs > 0, np.exp(np.log(np.where(payoffs > 0, payoffs, 1.0)) + log_weights), 0.0)


@dataclass
class MomentAccumulator:
    """Mergeable running count, mean and sum of squared deviations."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    censored: int = 0
    invalid: int = 0

    def push(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def add_batch(self, values):
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return self
        mean = float(values.mean())
        other = MomentAccumulator(values.size, mean, float(np.sum((values - mean) ** 2)))
        return self.merge(other)

    def merge(self, other: MomentAccumulator):
        n = self.n + other.n
        if n == 0:
            self.censored += other.censored
            self.invalid += other.invalid
            return self
        d = other.mean - self.mean
        self.mean += d * other.n / n
        self.m2 += other.m2 + d * d * self.n * other.n / n
        self.n = n
        self.censored += other.censored
        self.invalid += other.invalid
        return self

    @property
    def variance(self):
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def second_moment(self):
        return self.m2 / self.n + self.mean**2 if self.n else 0.0


def accumulate_batch(batch: OutcomeBatch) -> MomentAccumulator:
    """Moments of the valid samples in a batch; censored paths count as zeros."""
    valid = batch.status != PathStatus.INVALID
    acc = MomentAccumulator().add_batch(weighted_samples(batch.payoff[valid], batch.log_weight[valid]))
    acc.censored = int(np.sum(batch.status == PathStatus.CENSORED))
    acc.invalid = int(np.sum(~valid))
    return acc


@dataclass(frozen=True)
class EstimatorSummary:
    """Aggregate of one estimator.  Relative errors are ``None`` when the mean is not positive."""

    n: int
    mean: float
    variance: float
    second_moment: float
    re_per_sample: float | None
    re_of_mean: float | None
    neg_eps_log_mean: float | None
    neg_eps_log_m2: float | None
    censored: int = 0
    invalid: int = 0

    @property
    def std(self):
        return math.sqrt(self.variance)

    @property
    def stderr(self):
        return math.sqrt(self.variance / self.n)

    @property
    def reliable(self):
        return self.censored <= CENSORING_LIMIT * max(self.n, 1) and self.invalid == 0


def summarize(acc: MomentAccumulator, epsilon) -> EstimatorSummary:
    if acc.n < 2:
        raise ValueError(f"need at least two samples, got {acc.n}")
    var = acc.variance
    m2 = acc.second_moment
    if acc.mean > 0:
        re = math.sqrt(var) / acc.mean
        re_mean = re / math.sqrt(acc.n)
        nlm = -epsilon * math.log(acc.mean)
    else:
        re = re_mean = nlm = None
    nlm2 = -epsilon * math.log(m2) if m2 > 0 else None
    return EstimatorSummary(acc.n, acc.mean, var, m2, re, re_mean, nlm, nlm2, acc.censored, acc.invalid)


def aggregate(outcomes, epsilon) -> EstimatorSummary:
    """Summarize a sequence of :class:`TrajectoryOutcome` (or an :class:`OutcomeBatch`)."""
    if isinstance(outcomes, OutcomeBatch):
        return summarize(accumulate_batch(outcomes), epsilon)
    acc = MomentAccumulator()
    for o in outcomes:
        if o.status is PathStatus.INVALID:
            acc.invalid += 1
            continue
        if o.status is PathStatus.CENSORED:
            acc.censored += 1
            acc.push(0.0)
            continue
        acc.push(float(weighted_samples(o.payoff, o.log_weight)))
    return summarize(acc, epsilon)


@dataclass(frozen=True)
class CrossCheck:
    reference: str
    means: dict
    stderrs: dict
    rho: dict
    z_scores: dict
    variance_reduction: dict
    warnings: list = field(default_factory=list)

    def format(self):
        lines = [f"reference estimator: {self.reference}"]
        lines.append(f"{'estimator':<10} {'mean':>12} {'stderr':>11} {'rho':>11} {'Var0/Var':>10}")
        for name in self.means:
            rho = self.rho[name]
            vr = self.variance_reduction.get(name)
            lines.append(
                f"{name:<10} {self.means[name]:>12.4e} {self.stderrs[name]:>11.3e} "
                f"{'n/a' if rho is None else format(rho, '.3e'):>11} {'' if vr is None else format(vr, '.3g'):>10}"
            )
        for (a, b), z in self.z_scores.items():
            lines.append(f"z({a}, {b}) = {z:.2f}")
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def cross_check(summaries: dict, reference="theta1") -> CrossCheck:
    """Relative errors renormalized by the reference mean, pairwise z-scores and variance ratios."""
    notes = []
    if reference not in summaries:
        reference = next(iter(summaries))
    ref_mean = summaries[reference].mean
    rho = {}
    for name, s in summaries.items():
        denom = ref_mean
        if not ref_mean > 0:
            denom = s.mean
        rho[name] = s.std / (denom * math.sqrt(s.n)) if denom > 0 else None
    if not ref_mean > 0:
        msg = f"reference mean {ref_mean} is not positive; relative errors use each estimator's own mean"
        notes.append(msg)
        warnings.warn(msg, stacklevel=2)
    names = list(summaries)
    z = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            sa, sb = summaries[a], summaries[b]
            joint = math.sqrt(sa.stderr**2 + sb.stderr**2)
            z[(a, b)] = abs(sa.mean - sb.mean) / joint if joint > 0 else (0.0 if sa.mean == sb.mean else math.inf)
    vr = {}
    if "theta0" in summaries:
        v0 = summaries["theta0"].variance
        for name, s in summaries.items():
            vr[name] = v0 / s.variance if s.variance > 0 else math.inf
    for name, s in summaries.items():
        if not s.reliable:
            notes.append(f"{name}: {s.censored} censored / {s.invalid} invalid paths out of {s.n}; unreliable")
    return CrossCheck(
        reference, {k: s.mean for k, s in summaries.items()}, {k: s.stderr for k, s in summaries.items()},
        rho, z, vr, notes,
    )


def csv_row(summary: EstimatorSummary, *, experiment_id, estimator, epsilon, delta, wall_seconds, seed):
    def fmt(v):
        return "NA" if v is None else repr(float(v))

    return {
        "experiment_id": experiment_id,
        "epsilon": repr(float(epsilon)),
        "delta": repr(float(delta)),
        "eps_over_delta": repr(float(epsilon / delta)),
        "estimator": estimator,
        "n": str(summary.n),
        "mean": fmt(summary.mean),
        "second_moment": fmt(summary.second_moment),
        "re_sample": fmt(summary.re_per_sample),
        "re_mean": fmt(summary.re_of_mean),
        "neg_eps_log_mean": fmt(summary.neg_eps_log_mean),
        "neg_eps_log_m2": fmt(summary.neg_eps_log_m2),
        "censored": str(summary.censored),
        "wall_seconds": f"{wall_seconds:.3f}",
        "seed": str(seed),
    }
