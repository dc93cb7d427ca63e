"""Named experiment presets at desk and paper scale.

Desk scale keeps runs tractable on a laptop (fewer trajectories, fewer
phase sets, trimmed sweeps); paper scale restores the full study sizes.
Presets cover: the FTM/backtracking cross-check (fig1), density-snapshot
pairs at weak and strong coupling (fig2, fig3), trajectory spread and trace
panels (fig4), long-horizon H decay over mode counts (fig5), and the
coupling sweeps below and above the strong-coupling threshold (fig6, fig7).
The equilibrium preset starts the ensemble from |Psi|^2 itself and exists to
demonstrate that H stays at zero.
"""
from __future__ import annotations

import math

from .config import ExperimentConfig, apply_overrides
from .errors import ConfigError, DomainError

_PI = math.pi


def default_record_times(t_end: float, dt: float) -> tuple[float, ...]:
    """Uniform record grid {0, dt, 2dt, ...} ending exactly at t_end."""
    if not (0.0 < dt <= t_end):
        raise DomainError(f"need 0 < dt <= t_end, got dt={dt}, t_end={t_end}")
    n = int(math.floor(t_end / dt + 1e-9))
    times = [i * dt for i in range(n + 1)]
    if times[-1] < t_end - 1e-9 * max(1.0, t_end):
        times.append(float(t_end))
    else:
        times[-1] = float(t_end)
    return tuple(times)


def _fig1(scale: str) -> dict:
    return {
        "mode_counts": (9,),
        "couplings": (0.5,),
        "record_times": default_record_times(2 * _PI, _PI / 4),
        "snapshot_times": (0.0, 2 * _PI),
        "methods": ("ftm", "backtracking"),
        # 7x7 per cell: the lattice estimator divides by |Psi(.,0)|^2 at
        # backtracked origins, and at 3x3 a single near-node origin can
        # swing a cell mean by more than the whole H value.
        "points_per_cell": 49,
        "n_traj": 20000 if scale == "desk" else 230400,
        "n_phase_sets": 3 if scale == "desk" else 10,
    }


def _fig2(scale: str) -> dict:
    return {
        "mode_counts": (24,),
        "couplings": (0.1,),
        "record_times": (0.0, 5 * _PI, 10 * _PI),
        "snapshot_times": (0.0, 5 * _PI, 10 * _PI),
        "methods": ("ftm",),
        # Many-mode ensembles over 10pi lose a few percent of rows to the
        # verification ladder (measured ~5% at M=24); the default 1% ceiling
        # is calibrated to short runs and would abort a healthy run here.
        "rejection_ceiling": 0.15,
        "n_traj": 20000 if scale == "desk" else 230400,
        "n_phase_sets": 1,
    }


def _fig3(scale: str) -> dict:
    cfg = _fig2(scale)
    cfg["couplings"] = (1.8,)
    return cfg


def _fig4(scale: str) -> dict:
    return {
        "mode_counts": (24,),
        "couplings": (0.1, 0.9, 1.1, 1.8),
        "record_times": (0.0, 10 * _PI),
        "snapshot_times": (),
        "methods": (),
        "run_spread": True,
        "run_traces": True,
        "diag_t_final": 10 * _PI,
        "n_traj": 125,
        "n_phase_sets": 1,
    }


def _fig5(scale: str) -> dict:
    return {
        "mode_counts": (4, 12, 20),
        "couplings": (0.5, 1.8),
        "record_times": default_record_times(100 * _PI, 2 * _PI),
        "snapshot_times": (0.0, 100 * _PI),
        "methods": ("ftm",),
        # Endpoint verification is meaningless over 50 periods of a mixing
        # flow (the dual-tolerance gap saturates for every relaxing
        # trajectory), so the long preset verifies per recording interval.
        # Budgets are per leg in that mode; 20000 steps covers one period
        # at M=20 with several-fold slack.
        "verify_piecewise": True,
        "steps_per_period": 20000,
        "max_steps": 200_000,
        "rejection_ceiling": 0.10,
        "n_traj": 20000 if scale == "desk" else 230400,
        "n_phase_sets": 3,
    }


def _fig6(scale: str) -> dict:
    if scale == "desk":
        modes, ks, sets = (12,), (0.05, 0.5, 1.0), 3
    else:
        modes, ks, sets = (12, 15, 18), tuple(i / 20 for i in range(21)), 10
    return {
        "mode_counts": modes,
        "couplings": ks,
        "record_times": default_record_times(12 * _PI, _PI / 4),
        "snapshot_times": (0.0, 12 * _PI),
        "methods": ("ftm",),
        # Mid-sweep couplings are the most chaotic stretch of the sweep;
        # measured ladder losses reach ~13% at M=12, k=0.5 over 12pi.
        "rejection_ceiling": 0.25,
        "n_traj": 20000 if scale == "desk" else 230400,
        "n_phase_sets": sets,
    }


def _fig7(scale: str) -> dict:
    cfg = _fig6(scale)
    if scale == "desk":
        cfg["couplings"] = (1.05, 1.4, 1.8)
    else:
        cfg["couplings"] = tuple((21 + i) / 20 for i in range(16))
    return cfg


def _equilibrium(scale: str) -> dict:
    return {
        "mode_counts": (9,),
        "couplings": (0.5,),
        "record_times": default_record_times(4 * _PI, _PI / 4),
        "snapshot_times": (0.0, 4 * _PI),
        "methods": ("ftm",),
        "equilibrium_start": True,
        "n_traj": 20000 if scale == "desk" else 230400,
        "n_phase_sets": 3,
    }


_BUILDERS = {
    "fig1": _fig1,
    "fig2": _fig2,
    "fig3": _fig3,
    "fig4": _fig4,
    "fig5": _fig5,
    "fig6": _fig6,
    "fig7": _fig7,
    "equilibrium": _equilibrium,
}

PRESET_SUMMARIES = {
    "fig1": "FTM vs backtracking cross-check, M=9, t in [0, 2pi]",
    "fig2": "density snapshots at weak coupling k=0.1, M=24, t in {0, 5pi, 10pi}",
    "fig3": "density snapshots at strong coupling k=1.8, M=24, t in {0, 5pi, 10pi}",
    "fig4": "trajectory spread and trace panels, M=24, four couplings, t to 10pi",
    "fig5": "long-horizon H decay, M in {4,12,20}, k in {0.5,1.8}, t to 100pi",
    "fig6": "coupling sweep below threshold (k <= 1.0), t in [0, 12pi]",
    "fig7": "coupling sweep above threshold (k >= 1.05), t in [0, 12pi]",
    "equilibrium": "equilibrium start from |Psi|^2: H stays at zero, M=9, t to 4pi",
}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILDERS))


def preset_config(name: str, scale: str = "desk") -> ExperimentConfig:
    """Build the named preset's configuration at the given scale.

    The name "custom" yields library defaults and exists so config files can
    stand entirely on their own.
    """
    if scale not in ("desk", "paper"):
        raise ConfigError(f"scale must be desk or paper, got {scale!r}")
    if name == "custom":
        return ExperimentConfig(scale=scale, out_dir="runs/custom")
    builder = _BUILDERS.get(name)
    if builder is None:
        raise ConfigError(f"unknown preset {name!r}; choices: {', '.join(preset_names())}")
    overrides = builder(scale)
    overrides["preset"] = name
    overrides["scale"] = scale
    overrides["out_dir"] = f"runs/{name}"
    return apply_overrides(ExperimentConfig(), overrides)
