"""Experiment configuration: one flat dataclass, one flat text format.

Config files hold `key = value` lines (# comments and blank lines allowed);
every key names an ExperimentConfig field, unknown or duplicate keys are
errors.  List values are space-separated.  Serialization uses repr for
floats, so a config survives a text round trip bit-exactly; run manifests
embed the same format.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError, DomainError

_PI = math.pi


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; field names double as config-file keys."""

    preset: str = "custom"
    scale: str = "desk"                      # desk | paper, informational
    mode_counts: tuple[int, ...] = (9,)      # superposed-mode counts to sweep
    n_max: int = 6
    omega: float = 1.0
    mass: float = 1.0
    couplings: tuple[float, ...] = (0.5,)    # coupling values to sweep
    n_traj: int = 20000
    n_phase_sets: int = 3                    # random-phase repetitions
    seed: int = 1
    workers: int = 1
    out_dir: str = "runs/custom"
    box: tuple[float, ...] = (-5.0, 5.0, -5.0, 5.0)
    grid_rows: int = 16
    grid_cols: int = 16
    subsamples: int = 8
    record_times: tuple[float, ...] = tuple((_PI / 4) * i for i in range(9))
    snapshot_times: tuple[float, ...] = (0.0,)
    methods: tuple[str, ...] = ("ftm",)
    points_per_cell: int = 9
    n_boot: int = 100                        # bootstrap replicates per H value; 0 disables
    mean_a: float = 0.0
    mean_b: float = 0.0
    sigma_a: float = 1.0
    sigma_b: float = 1.0
    correlation: float = 0.0
    equilibrium_start: bool = False
    tol_start: float = 1e-9
    tol_floor: float = 1e-16
    delta: float = 5e-3
    h_init: float = 1e-3
    h_min: float = 1e-12
    max_steps: int = 100_000
    steps_per_period: int = 6000
    verify_piecewise: bool = False
    chunk_size: int = 4096
    rejection_ceiling: float = 0.01
    run_spread: bool = False
    run_traces: bool = False
    spread_half_width: float = 0.05
    trace_intervals: int = 400
    diag_t_final: float = 10.0 * _PI

    def __post_init__(self) -> None:
        if self.scale not in ("desk", "paper"):
            raise ConfigError(f"scale must be desk or paper, got {self.scale!r}")
        if not self.mode_counts or any(m < 1 for m in self.mode_counts):
            raise ConfigError("mode_counts needs at least one positive entry")
        if self.n_max < 0:
            raise ConfigError("n_max must be non-negative")
        side = self.n_max + 1
        if max(self.mode_counts) > side * side:
            raise ConfigError(
                f"largest mode count {max(self.mode_counts)} exceeds the "
                f"{side * side} distinct pairs available at n_max={self.n_max}"
            )
        if self.omega <= 0.0 or self.mass <= 0.0:
            raise ConfigError("omega and mass must be positive")
        if not self.couplings:
            raise ConfigError("couplings must not be empty")
        k_hi = 2.0 * self.omega * self.omega
        for k in self.couplings:
            if not (0.0 <= k < k_hi):
                raise ConfigError(f"coupling {k} outside [0, {k_hi})")
        if self.n_traj < 1 or self.n_phase_sets < 1 or self.workers < 1:
            raise ConfigError("n_traj, n_phase_sets, workers must be positive")
        if len(self.box) != 4:
            raise ConfigError("box needs exactly 4 numbers: a_lo a_hi b_lo b_hi")
        if not (self.box[0] < self.box[1] and self.box[2] < self.box[3]):
            raise ConfigError(f"degenerate box {self.box}")
        if self.grid_rows < 2 or self.grid_cols < 2 or self.subsamples < 1:
            raise ConfigError("grid_rows, grid_cols must be >= 2 and subsamples >= 1")
        rt = self.record_times
        if not rt or rt[0] != 0.0:
            raise ConfigError("record_times must start at 0")
        if any(b <= a for a, b in zip(rt, rt[1:])):
            raise ConfigError("record_times must be strictly increasing")
        for t in self.snapshot_times:
            if not any(abs(t - r) <= 1e-12 * max(1.0, abs(r)) for r in rt):
                raise ConfigError(f"snapshot time {t} is not a record time")
        for m in self.methods:
            if m not in ("ftm", "backtracking"):
                raise ConfigError(f"unknown method {m!r} (expected ftm or backtracking)")
        if not self.methods and not (self.run_spread or self.run_traces):
            raise ConfigError("experiment does nothing: no methods and no diagnostics")
        if self.points_per_cell < 1:
            raise ConfigError("points_per_cell must be positive")
        if self.n_boot < 0:
            raise ConfigError("n_boot must be non-negative")
        if self.sigma_a <= 0.0 or self.sigma_b <= 0.0:
            raise ConfigError("sigma_a and sigma_b must be positive")
        if not (-1.0 < self.correlation < 1.0):
            raise ConfigError("correlation must lie in (-1, 1)")
        if not (0.0 < self.tol_floor <= self.tol_start):
            raise ConfigError("need 0 < tol_floor <= tol_start")
        if self.delta <= 0.0 or self.h_init <= 0.0 or self.h_min <= 0.0:
            raise ConfigError("delta, h_init, h_min must be positive")
        if self.max_steps < 1 or self.steps_per_period < 1:
            raise ConfigError("max_steps and steps_per_period must be positive")
        if self.chunk_size < 1 or self.trace_intervals < 1:
            raise ConfigError("chunk_size and trace_intervals must be positive")
        if not (0.0 <= self.rejection_ceiling <= 1.0):
            raise ConfigError("rejection_ceiling must lie in [0, 1]")
        if self.spread_half_width <= 0.0 or self.diag_t_final <= 0.0:
            raise ConfigError("spread_half_width and diag_t_final must be positive")


_INT_FIELDS = {
    "n_max", "n_traj", "n_phase_sets", "seed", "workers", "grid_rows", "grid_cols",
    "subsamples", "points_per_cell", "n_boot", "max_steps", "steps_per_period",
    "chunk_size", "trace_intervals",
}
_FLOAT_FIELDS = {
    "omega", "mass", "mean_a", "mean_b", "sigma_a", "sigma_b", "correlation",
    "tol_start", "tol_floor", "delta", "h_init", "h_min", "rejection_ceiling",
    "spread_half_width", "diag_t_final",
}
_BOOL_FIELDS = {"equilibrium_start", "run_spread", "run_traces", "verify_piecewise"}
_STR_FIELDS = {"preset", "scale", "out_dir"}
_FLOAT_LIST_FIELDS = {"couplings", "record_times", "snapshot_times", "box"}
_INT_LIST_FIELDS = {"mode_counts"}
_STR_LIST_FIELDS = {"methods"}

_ALL_KEYS = (
    _INT_FIELDS | _FLOAT_FIELDS | _BOOL_FIELDS | _STR_FIELDS
    | _FLOAT_LIST_FIELDS | _INT_LIST_FIELDS | _STR_LIST_FIELDS
)
assert _ALL_KEYS == {f.name for f in fields(ExperimentConfig)}


def _parse_int(key: str, s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {s!r}") from None


def _parse_float(key: str, s: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {s!r}") from None


def _parse_bool(key: str, s: str) -> bool:
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    raise ConfigError(f"{key}: expected true or false, got {s!r}")


def _parse_value(key: str, s: str):
    if key in _INT_FIELDS:
        return _parse_int(key, s)
    if key in _FLOAT_FIELDS:
        return _parse_float(key, s)
    if key in _BOOL_FIELDS:
        return _parse_bool(key, s)
    if key in _STR_FIELDS:
        return s
    if key in _FLOAT_LIST_FIELDS:
        return tuple(_parse_float(key, tok) for tok in s.split())
    if key in _INT_LIST_FIELDS:
        return tuple(_parse_int(key, tok) for tok in s.split())
    if key in _STR_LIST_FIELDS:
        return tuple(s.split())
    raise ConfigError(f"unknown key {key!r}")


def parse_config_text(text: str) -> dict:
    """Raw key -> parsed value mapping from flat config text."""
    out: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        out[key] = _parse_value(key, value)
    return out


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """New config with the given fields replaced; validation reruns."""
    unknown = set(overrides) - _ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    try:
        return replace(cfg, **overrides)
    except DomainError as exc:  # sub-config validation surfaces as ConfigError
        raise ConfigError(str(exc)) from exc


def _format_value(key: str, value) -> str:
    if key in _BOOL_FIELDS:
        return "true" if value else "false"
    if key in _FLOAT_FIELDS:
        return repr(float(value))
    if key in _INT_FIELDS:
        return str(int(value))
    if key in _FLOAT_LIST_FIELDS:
        return " ".join(repr(float(v)) for v in value)
    if key in _INT_LIST_FIELDS:
        return " ".join(str(int(v)) for v in value)
    if key in _STR_LIST_FIELDS:
        return " ".join(value)
    return str(value)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Round-trippable flat rendering, one line per field in declared order."""
    lines = [f"{f.name} = {_format_value(f.name, getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"
