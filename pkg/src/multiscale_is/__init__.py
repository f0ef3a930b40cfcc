"""Importance sampling for small-noise multiscale Langevin diffusions."""

from .estimators import EstimatorSummary, aggregate, cross_check, payoff
from .experiment import ExperimentSpec, parse_config, preset, run_experiment, serialize_config
from .periodic_env import (
    EffectiveCoefficients,
    PeriodicModel,
    compute_constants,
    corrector_factor,
    effective_drift,
    benchmark_periodic_model,
)
from .potentials import Polynomial, TrigSeries
from .random_env import (
    FieldRealization,
    GaussianFieldSpec,
    RandomFieldModel,
    RandomHomogenized,
    homogenized_constants,
    random_corrector_factor,
    sample_field,
)
from .simulator import (
    ControlScheme,
    ControlVariant,
    ExitFromInterval,
    FiniteHorizon,
    FixedStep,
    PaperRule,
    SimParams,
    TrajectoryOutcome,
    control_value,
    simulate_batch,
    simulate_path,
    step_size,
)
from .subsolution import (
    ExitShape,
    ExitSubsolution,
    Hamiltonian1D,
    TerminalQuadraticSubsolution,
    ZeroSubsolution,
    hamiltonian,
    value_and_gradient,
    verify_subsolution,
)

__version__ = "0.1.0"
