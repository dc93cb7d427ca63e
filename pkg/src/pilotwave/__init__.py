"""Quantum relaxation of coupled harmonic oscillators under pilot-wave dynamics.

Configuration-space trajectories follow the guidance equation for a
superposition of normal-mode eigenstates; ensembles of trajectories carry an
initial nonequilibrium density toward (or away from) |Psi|^2, tracked by a
coarse-grained H-function and summarized by exponential-decay fits.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, apply_overrides, config_to_text, load_config
from .diagnostics import SpreadTest, TraceSet, spread_test, trace_trajectories
from .dynamics import IntegratorConfig, Trajectory, integrate_verified, integrate_verified_batch, velocity
from .eigenbasis import Eigenmode, eigenstate, eigenstate_dx, hermite
from .ensemble import (
    EnsembleSpec,
    SnapshotSet,
    evolve,
    evolve_points,
    sample_equilibrium,
    sample_initial,
    support_box,
)
from .errors import (
    ConfigError,
    DomainError,
    EnsembleError,
    MetricError,
    NumericRangeError,
    StageError,
)
from .fitting import FitAggregate, RelaxationFit, aggregate, fit_arrays, fit_decay
from .metrics import (
    CoarseGrid,
    HSeries,
    coarse_psi2,
    coarse_rho,
    h_function,
    h_series_backtracking,
    h_series_ftm,
)
from .presets import default_record_times, preset_config, preset_names
from .runner import RunResult, parse_manifest, replay, run_experiment
from .wavefunction import (
    ModeSet,
    OscillatorModel,
    WaveFunction,
    build_frequencies,
    density_original,
    from_normal,
    mode_set_from_text,
    mode_set_to_text,
    sample_mode_set,
    to_normal,
)

__all__ = [
    "__version__",
    "ExperimentConfig", "apply_overrides", "config_to_text", "load_config",
    "SpreadTest", "TraceSet", "spread_test", "trace_trajectories",
    "IntegratorConfig", "Trajectory", "integrate_verified", "integrate_verified_batch", "velocity",
    "Eigenmode", "eigenstate", "eigenstate_dx", "hermite",
    "EnsembleSpec", "SnapshotSet", "evolve", "evolve_points", "sample_equilibrium", "sample_initial",
    "support_box",
    "ConfigError", "DomainError", "EnsembleError", "MetricError", "NumericRangeError", "StageError",
    "FitAggregate", "RelaxationFit", "aggregate", "fit_arrays", "fit_decay",
    "CoarseGrid", "HSeries", "coarse_psi2", "coarse_rho", "h_function",
    "h_series_backtracking", "h_series_ftm",
    "default_record_times", "preset_config", "preset_names",
    "RunResult", "parse_manifest", "replay", "run_experiment",
    "ModeSet", "OscillatorModel", "WaveFunction", "build_frequencies", "density_original",
    "from_normal", "mode_set_from_text", "mode_set_to_text", "sample_mode_set", "to_normal",
]
