"""Experiment definitions, presets for the three benchmark tables, and the runner.

Configs are flat ``key = value`` text with ``#`` comments.  All randomness is
derived from ``master_seed``: the field realization uses its own stream, and
each estimator uses an independent stream indexed by trajectory number.  Work
is cut into fixed-size blocks of trajectories regardless of the worker count
and merged in block order, so results do not depend on ``workers``.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import estimators as est
from .periodic_env import PeriodicModel, compute_constants
from .potentials import Polynomial, TrigSeries, cos_plus_sin, linear_slope, quadratic_well
from .random_env import FieldRealization, GaussianFieldSpec, RandomFieldModel, homogenized_constants, sample_field
from .simulator import (
    ControlScheme,
    ControlVariant,
    ExitFromInterval,
    FiniteHorizon,
    FixedStep,
    PaperRule,
    SimParams,
    exit_probability,
    resolve_step,
    simulate_batch,
)
from .subsolution import ExitShape, ExitSubsolution, TerminalQuadraticSubsolution, ZeroSubsolution

BLOCK_SIZE = 512
FIELD_STREAM = 1000
DEFAULT_SEED = 12345
DEFAULT_STEP_CEILING = 2e11
SEED_ENV_VAR = "MULTISCALE_IS_SEED"

ESTIMATOR_VARIANT = {
    "theta0": ControlVariant.NO_CONTROL,
    "theta1": ControlVariant.FULL_MULTISCALE,
    "theta2": ControlVariant.HOMOGENIZED_ONLY,
}
ESTIMATOR_STREAM = {"theta0": 0, "theta1": 1, "theta2": 2}


class ConfigError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    def __init__(self, steps, ceiling):
        super().__init__(f"estimated {steps:.3e} integrator steps exceeds the ceiling {ceiling:.3e}")
        self.steps = steps
        self.ceiling = ceiling


class Family(enum.Enum):
    PERIODIC_TERMINAL = "periodic_terminal"
    RANDOM_EXIT_NEG_DRIFT = "random_exit_neg_drift"
    RANDOM_EXIT_REST_POINT = "random_exit_rest_point"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ExperimentSpec:
    epsilon: float
    delta: float
    n_paths: int
    experiment_id: str = "custom"
    family: Family = Family.CUSTOM
    estimators: tuple = est.ESTIMATORS
    dt_rule: PaperRule | FixedStep = field(default_factory=PaperRule)
    master_seed: int = DEFAULT_SEED
    workers: int | str = 1
    output: str = ""
    fast_potential: str = "cos_plus_sin"
    slow_potential: str = "quadratic"
    D: float = 1.0
    x0: float = 0.05
    t0: float = 0.0
    T: float = 1.0
    mode: str = "finite_horizon"
    x_minus: float = -0.5
    x_plus: float = 0.5
    subsolution: str = "terminal_quadratic"
    field_variance: float = 1.0
    field_corr_length_sq: float = 1.0
    field_modes: int = 128
    field_file: str = ""
    n_quad: int = 1024
    max_steps: int = 10**8
    step_ceiling: float = DEFAULT_STEP_CEILING

    def __post_init__(self):
        for name in ("epsilon", "delta", "D", "field_corr_length_sq", "step_ceiling"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_paths < 2:
            raise ConfigError(f"n_paths must be at least 2, got {self.n_paths}")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        unknown = set(self.estimators) - set(est.ESTIMATORS)
        if unknown:
            raise ConfigError(f"unknown estimators {sorted(unknown)}")
        if self.fast_potential not in FAST_POTENTIALS:
            raise ConfigError(f"fast_potential must be one of {sorted(FAST_POTENTIALS)}")
        if self.slow_potential not in SLOW_POTENTIALS:
            raise ConfigError(f"slow_potential must be one of {sorted(SLOW_POTENTIALS)}")
        if self.mode not in ("finite_horizon", "exit"):
            raise ConfigError("mode must be finite_horizon or exit")
        if self.subsolution not in SUBSOLUTIONS:
            raise ConfigError(f"subsolution must be one of {sorted(SUBSOLUTIONS)}")
        if self.workers != "auto" and int(self.workers) < 1:
            raise ConfigError("workers must be a positive integer or 'auto'")

    @property
    def n_workers(self):
        if self.workers == "auto":
            return os.cpu_count() or 1
        return int(self.workers)


FAST_POTENTIALS = {"cos_plus_sin", "zero", "gaussian_field"}
SLOW_POTENTIALS = {"quadratic": quadratic_well, "linear": linear_slope, "zero": lambda: Polynomial([0.0])}
SUBSOLUTIONS = {"terminal_quadratic", "exit_linear", "exit_rest_point", "zero"}


# --- config text ---------------------------------------------------------

def _format_value(name, value):
    if name == "family":
        return value.value
    if name == "estimators":
        return ",".join(value)
    if name == "dt_rule":
        return f"paper {value.tol!r}" if isinstance(value, PaperRule) else f"fixed {value.dt!r}"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(name, raw, template):
    try:
        if name == "family":
            return Family(raw)
        if name == "estimators":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if name == "dt_rule":
            kind, _, num = raw.partition(" ")
            if kind == "paper":
                return PaperRule(float(num) if num.strip() else 0.001)
            if kind == "fixed":
                return FixedStep(float(num))
            raise ConfigError(f"dt_rule must be 'paper <tol>' or 'fixed <dt>', got {raw!r}")
        if name == "workers":
            return raw if raw == "auto" else int(raw)
        if name in ("n_paths", "master_seed", "max_steps"):
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if isinstance(template, float) or name in ("epsilon", "delta"):
            return float(raw)
        if isinstance(template, int):
            return int(raw)
        return raw
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def serialize_config(spec: ExperimentSpec) -> str:
    lines = ["# multiscale importance-sampling experiment"]
    lines += [f"{f.name} = {_format_value(f.name, getattr(spec, f.name))}" for f in fields(spec)]
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentSpec:
    known = {f.name: f for f in fields(ExperimentSpec)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        default = known[key].default
        values[key] = _parse_value(key, value, default)
    missing = [k for k in ("epsilon", "delta", "n_paths") if k not in values]
    if missing:
        raise ConfigError(f"missing required keys {missing}")
    return ExperimentSpec(**values)


def load_config(path) -> ExperimentSpec:
    with open(path) as fh:
        return parse_config(fh.read())


# --- presets -------------------------------------------------------------

BENCHMARK_TABLES = {
    1: [
        (0.25, 0.1, 2.26e-1, 2.25e-1, 2.26e-1),
        (0.125, 0.04, 3.66e-2, 3.65e-2, 3.66e-2),
        (0.063, 0.016, 9.34e-4, 9.33e-4, 9.36e-4),
        (0.03125, 0.007, 6.93e-7, 6.87e-7, 6.99e-7),
        (0.025, 0.004, 1.48e-8, 1.61e-8, 1.51e-8),
        (0.02, 0.002, 3.08e-10, 1.99e-10, 1.51e-10),
        (0.015, 0.0013, 7.60e-14, 1.37e-13, 1.07e-13),
    ],
    2: [
        (0.25, 0.1, 1.38e-1, 1.38e-1, 1.38e-1),
        (0.125, 0.04, 1.28e-2, 1.31e-2, 1.28e-2),
        (0.0625, 0.018, 6.02e-4, 6.13e-4, 5.89e-4),
        (0.05, 0.01, 2.38e-5, 2.30e-5, 2.22e-5),
        (0.04, 0.007, 5.5e-6, 5.93e-6, 4.86e-6),
        (0.025, 0.004, None, 7.82e-10, 1.26e-09),
    ],
    3: [
        (0.25, 0.1, 1.56e-1, 1.56e-1, 1.56e-1),
        (0.125, 0.04, 2.35e-2, 2.39e-2, 2.35e-2),
        (0.0625, 0.018, 2.25e-3, 2.32e-3, 2.25e-3),
        (0.03125, 0.008, 5.03e-5, 2.78e-5, 4.36e-5),
        (0.025, 0.006, 1.38e-5, 5.23e-6, 8.91e-6),
        (0.02, 0.0045, 2.0e-7, 3.07e-7, 3.11e-7),
    ],
}


def benchmark_reference(table, row):
    """Reference ``(theta0, theta1, theta2)`` for a table row (``None`` where not reported)."""
    eps, delta, *thetas = BENCHMARK_TABLES[table][row - 1]
    return dict(zip(est.ESTIMATORS, thetas))


def preset(table: int, row: int, scale_n: float = 1.0) -> ExperimentSpec:
    """Experiment spec for a row of one of the three benchmark tables, with ``1e7 * scale_n`` paths."""
    if table not in BENCHMARK_TABLES:
        raise ConfigError(f"unknown table {table}")
    rows = BENCHMARK_TABLES[table]
    if not 1 <= row <= len(rows):
        raise ConfigError(f"table {table} has rows 1..{len(rows)}, got {row}")
    eps, delta = rows[row - 1][:2]
    n_paths = int(round(1e7 * scale_n))
    common = dict(epsilon=eps, delta=delta, n_paths=n_paths, experiment_id=f"table{table}-row{row}", D=1.0)
    if table == 1:
        return ExperimentSpec(
            **common, family=Family.PERIODIC_TERMINAL, dt_rule=PaperRule(0.01),
            fast_potential="cos_plus_sin", slow_potential="quadratic", x0=0.05, t0=0.0, T=1.0,
            mode="finite_horizon", subsolution="terminal_quadratic",
        )
    if table == 2:
        return ExperimentSpec(
            **common, family=Family.RANDOM_EXIT_NEG_DRIFT, dt_rule=PaperRule(0.001),
            fast_potential="gaussian_field", slow_potential="linear", x0=0.0, T=2.0,
            mode="exit", x_minus=-0.5, x_plus=0.5, subsolution="exit_linear",
        )
    return ExperimentSpec(
        **common, family=Family.RANDOM_EXIT_REST_POINT, dt_rule=PaperRule(0.001),
        fast_potential="gaussian_field", slow_potential="quadratic", x0=0.1, T=2.0,
        mode="exit", x_minus=0.0, x_plus=0.8, subsolution="exit_rest_point",
    )


# --- building and running ------------------------------------------------

@dataclass
class Setup:
    model: object
    params: SimParams
    controls: dict
    kappa: float
    q: float
    exact: float | None = None


def field_rng(master_seed):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(FIELD_STREAM,))
    return np.random.Generator(np.random.PCG64DXSM(ss))


def build(spec: ExperimentSpec) -> Setup:
    V = SLOW_POTENTIALS[spec.slow_potential]()
    if spec.fast_potential == "gaussian_field":
        gspec = GaussianFieldSpec(spec.field_variance, spec.field_corr_length_sq, spec.field_modes, spec.master_seed)
        realization = FieldRealization.load(spec.field_file) if spec.field_file else sample_field(gspec, field_rng(spec.master_seed))
        model = RandomFieldModel(realization, V, spec.D, spec.field_variance)
        consts = homogenized_constants(gspec, spec.D)
        kappa, q = consts.kappa, consts.q
        make = lambda variant, sub: ControlScheme.random(variant, sub, model, consts)  # noqa: E731
    else:
        if spec.fast_potential == "cos_plus_sin":
            model = PeriodicModel(cos_plus_sin(), V, 2 * math.pi, spec.D)
        else:
            model = PeriodicModel(TrigSeries.constant(0.0), V, 1.0, spec.D)
        coeffs = compute_constants(model, spec.n_quad)
        kappa, q = coeffs.kappa, coeffs.q
        make = lambda variant, sub: ControlScheme.periodic(variant, sub, model, coeffs)  # noqa: E731

    if spec.subsolution == "terminal_quadratic":
        sub = TerminalQuadraticSubsolution(kappa, spec.D, spec.T)
    elif spec.subsolution == "exit_linear":
        sub = ExitSubsolution(spec.D, spec.x_plus, spec.x_minus, ExitShape.LINEAR_DRIFT)
    elif spec.subsolution == "exit_rest_point":
        sub = ExitSubsolution(spec.D, spec.x_plus, spec.x_minus, ExitShape.REST_POINT)
    else:
        sub = ZeroSubsolution()

    if spec.mode == "exit":
        mode = ExitFromInterval(spec.x_minus, spec.x_plus)
    else:
        mode = FiniteHorizon()
    params = SimParams(spec.epsilon, spec.delta, spec.x0, spec.t0, spec.T, spec.dt_rule, mode, spec.max_steps)
    controls = {}
    for name in spec.estimators:
        variant = ESTIMATOR_VARIANT[name]
        controls[name] = ControlScheme.none(model) if variant is ControlVariant.NO_CONTROL else make(variant, sub)
    exact = None
    if spec.mode == "exit":
        exact = exit_probability(model, spec.epsilon, spec.delta, spec.x0, spec.x_minus, spec.x_plus)
    return Setup(model, params, controls, kappa, q, exact)


def estimated_steps(spec: ExperimentSpec):
    """``n_paths * (T - t0) / dt`` per estimator, summed; ``T`` is a nominal horizon in exit mode."""
    rule = spec.dt_rule
    if isinstance(rule, PaperRule):
        dt = rule.tol * spec.delta**2 / spec.epsilon
    else:
        dt = rule.dt
    span = spec.T - spec.t0
    return spec.n_paths * math.ceil(span / dt - 1e-9) * len(spec.estimators)


def _blocks(n_paths):
    return [(s, min(s + BLOCK_SIZE, n_paths)) for s in range(0, n_paths, BLOCK_SIZE)]


def _run_block(task):
    model, params, control, seed, stream, start, stop = task
    t = time.perf_counter()
    batch = simulate_batch(model, params, control, seed, stream, start, stop)
    return est.accumulate_batch(batch), time.perf_counter() - t


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    summaries: dict
    rows: list
    report: est.CrossCheck
    kappa: float
    q: float
    dt: float
    exact: float | None
    wall_seconds: float
    blocks: dict = field(default_factory=dict)

    def format(self):
        s = self.spec
        out = [
            f"experiment {s.experiment_id}: eps={s.epsilon} delta={s.delta} eps/delta={s.epsilon / s.delta:.4g} "
            f"N={s.n_paths} dt={self.dt:.4g} seed={s.master_seed}",
            f"kappa={self.kappa:.6g} q={self.q:.6g}",
        ]
        if self.exact is not None:
            out.append(f"exact exit probability in this environment: {self.exact:.6g}")
        ref = None
        if s.experiment_id.startswith("table") and "-row" in s.experiment_id:
            table, row = s.experiment_id[5:].split("-row")
            ref = benchmark_reference(int(table), int(row))
        out.append(self.report.format())
        if ref:
            out.append("reference: " + ", ".join(f"{k}={v}" for k, v in ref.items()))
        out.append(f"wall time {self.wall_seconds:.1f}s")
        return "\n".join(out)


def run_experiment(spec: ExperimentSpec, progress=None) -> ExperimentResult:
    """Run every requested estimator; raise :class:`BudgetExceeded` rather than shrinking the run."""
    steps = estimated_steps(spec)
    if steps > spec.step_ceiling:
        raise BudgetExceeded(steps, spec.step_ceiling)
    setup = build(spec)
    dt, _ = resolve_step(setup.params)
    blocks = _blocks(spec.n_paths)
    tasks = [
        (setup.model, setup.params, setup.controls[name], spec.master_seed, ESTIMATOR_STREAM[name], a, b)
        for name in spec.estimators
        for a, b in blocks
    ]
    t0 = time.perf_counter()
    workers = spec.n_workers
    if workers == 1:
        results = []
        for i, task in enumerate(tasks):
            results.append(_run_block(task))
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, tasks, chunksize=1))
    wall = time.perf_counter() - t0

    summaries, rows, partials = {}, [], {}
    per_est = len(blocks)
    for k, name in enumerate(spec.estimators):
        acc = est.MomentAccumulator()
        seconds = 0.0
        mine = results[k * per_est:(k + 1) * per_est]
        partials[name] = [replace(part) for part, _ in mine]
        for part, secs in mine:
            acc.merge(part)
            seconds += secs
        summary = est.summarize(acc, spec.epsilon)
        summaries[name] = summary
        rows.append(
            est.csv_row(
                summary, experiment_id=spec.experiment_id, estimator=name, epsilon=spec.epsilon,
                delta=spec.delta, wall_seconds=seconds, seed=spec.master_seed,
            )
        )
    report = est.cross_check(summaries, "theta1" if "theta1" in summaries else spec.estimators[0])
    return ExperimentResult(spec, summaries, rows, report, setup.kappa, setup.q, dt, setup.exact, wall, partials)


# --- output --------------------------------------------------------------

def write_csv(rows, path=None):
    """Write rows with the estimator CSV schema; returns the text when ``path`` is None."""
    buf = io.StringIO() if path is None else open(path, "w", newline="")
    try:
        writer = csv.DictWriter(buf, fieldnames=est.CSV_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
        if path is None:
            return buf.getvalue()
    finally:
        if path is not None:
            buf.close()
    return None


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


PLOT_FIELDS = ("group", "experiment_id", "epsilon", "estimator", "re_mean", "mean")


def emit_plot_data(rows, path=None):
    """Long-format records for plotting, grouped by experiment family then estimator, epsilon descending.

    ``group`` is the experiment id without its ``-row<k>`` suffix, so a table
    ladder forms one series per estimator.
    """
    if not rows:
        raise ValueError("no experiment rows to emit")
    records = []
    for r in rows:
        exp_id = r["experiment_id"]
        records.append(
            {
                "group": exp_id.split("-row")[0],
                "experiment_id": exp_id,
                "epsilon": float(r["epsilon"]),
                "estimator": r["estimator"],
                "re_mean": None if r["re_mean"] in ("NA", None) else float(r["re_mean"]),
                "mean": None if r["mean"] in ("NA", None) else float(r["mean"]),
            }
        )
    records.sort(key=lambda d: (d["group"], d["estimator"], -d["epsilon"]))
    if path is not None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=PLOT_FIELDS)
            writer.writeheader()
            for rec in records:
                writer.writerow({k: ("NA" if v is None else v) for k, v in rec.items()})
    return records


def with_overrides(spec: ExperimentSpec, **overrides) -> ExperimentSpec:
    return replace(spec, **{k: v for k, v in overrides.items() if v is not None})
