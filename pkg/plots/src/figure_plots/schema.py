"""Typed readers for the run-directory layout.

Every loader either returns clean numpy data or raises SchemaError naming
the offending file and column; nothing here silently coerces or fills in
missing values (blank bootstrap columns become NaN, which is what "no band
recorded" means downstream).
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SchemaError(Exception):
    """A run-directory input is missing, malformed, or mislabeled."""


# Shown when a directory holds nothing renderable.
EXPECTED_FILES = (
    "manifest.txt",
    "M<modes>_k<coupling>_rep<n>/h_series.csv",
    "M<modes>_k<coupling>_rep<n>/rho_grid_t<i>.csv and psi2_grid_t<i>.csv",
    "M<modes>_k<coupling>_rep<n>/spread.csv and traces.csv",
    "fits.csv and sweep.csv",
)

_COMBO_RE = re.compile(r"^M(\d+)_k([0-9.eE+-]+)_rep(\d+)$")


@dataclass(frozen=True)
class ComboDir:
    """One (mode count, coupling, phase preset) leg of a run."""

    path: Path
    m_modes: int
    coupling: float
    rep: int


def find_combos(run_dir: Path) -> list[ComboDir]:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise SchemaError(f"{run_dir} is not a directory")
    combos = []
    for child in run_dir.iterdir():
        m = _COMBO_RE.match(child.name)
        if m and child.is_dir():
            combos.append(ComboDir(path=child, m_modes=int(m.group(1)),
                                   coupling=float(m.group(2)), rep=int(m.group(3))))
    if not combos:
        listing = ", ".join(EXPECTED_FILES)
        raise SchemaError(f"{run_dir} contains no combo directories; expected {listing}")
    return sorted(combos, key=lambda c: (c.m_modes, c.coupling, c.rep))


def pick_combo(run_dir: Path, name: str | None) -> ComboDir:
    combos = find_combos(run_dir)
    if name is None:
        return combos[0]
    for c in combos:
        if c.path.name == name:
            return c
    raise SchemaError(f"{run_dir} has no combo '{name}'; "
                      f"available: {', '.join(c.path.name for c in combos)}")


def _float_or_nan(raw: str) -> float:
    return float(raw) if raw else math.nan


def read_table(path: Path, required: dict, optional: dict | None = None) -> dict:
    """Columns as numpy arrays, cast per the {name: caster} maps.

    A required column that is absent, or any cell a caster rejects, is a
    SchemaError naming file, column, and data line.  Optional columns fall
    back to an all-NaN float array when the header lacks them.
    """
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"missing file {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{path.name}: missing column '{col}'")
        rows = list(reader)

    out: dict = {}
    casters = dict(required)
    for col, caster in (optional or {}).items():
        if col in header:
            casters[col] = caster
        else:
            out[col] = np.full(len(rows), np.nan)
    for col, caster in casters.items():
        vals = []
        for i, row in enumerate(rows):
            raw = row.get(col)
            if raw is None:
                raise SchemaError(f"{path.name} line {i + 2}: row too short for column '{col}'")
            try:
                vals.append(caster(raw))
            except (TypeError, ValueError):
                raise SchemaError(
                    f"{path.name} line {i + 2}: column '{col}' value {raw!r} is invalid") from None
        out[col] = np.asarray(vals)
    return out


def load_h_series(combo: ComboDir) -> dict:
    """Per-method {time, H, boot_std} arrays from h_series.csv, file order."""
    table = read_table(
        combo.path / "h_series.csv",
        required={"time": float, "H": float, "method": str},
        optional={"boot_std": _float_or_nan},
    )
    methods = {}
    for name in dict.fromkeys(table["method"]):
        sel = table["method"] == name
        methods[str(name)] = {
            "time": table["time"][sel],
            "H": table["H"][sel],
            "boot_std": table["boot_std"][sel],
        }
    return methods


def load_grid(path: Path) -> np.ndarray:
    """A headerless rectangular float matrix."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"missing file {path}")
    rows = []
    with open(path, newline="") as fh:
        for i, line in enumerate(csv.reader(fh)):
            try:
                rows.append([float(v) for v in line])
            except ValueError:
                raise SchemaError(f"{path.name} line {i + 1}: non-numeric cell") from None
            if len(rows[-1]) != len(rows[0]):
                raise SchemaError(f"{path.name} line {i + 1}: ragged row")
    if not rows:
        raise SchemaError(f"{path.name} is empty")
    return np.asarray(rows)


def grid_indices(combo: ComboDir) -> list[int]:
    idx = sorted(int(p.stem.split("_t")[-1])
                 for p in combo.path.glob("rho_grid_t*.csv"))
    if not idx:
        raise SchemaError(f"{combo.path} holds no rho_grid_t<i>.csv files")
    return idx


def load_grid_pair(combo: ComboDir, index: int) -> tuple[np.ndarray, np.ndarray]:
    rho = load_grid(combo.path / f"rho_grid_t{index}.csv")
    psi2 = load_grid(combo.path / f"psi2_grid_t{index}.csv")
    if rho.shape != psi2.shape:
        raise SchemaError(
            f"grid shapes differ at index {index}: rho {rho.shape} vs psi2 {psi2.shape}")
    return rho, psi2


def load_fits(run_dir: Path) -> dict | None:
    """fits.csv columns, or None when the run produced no fits."""
    path = Path(run_dir) / "fits.csv"
    if not path.is_file():
        return None
    return read_table(path, required={
        "M": int, "k": float, "preset_seed": int, "H0": float,
        "tau": float, "R": float, "rms": float, "converged": str,
    })


def fit_for_combo(run_dir: Path, combo: ComboDir) -> dict | None:
    """The fit row belonging to one combo, or None with no matching row.

    fits.csv rows repeat (M, k) once per phase preset in preset order, so
    the combo's rep index selects within its (M, k) group.
    """
    fits = load_fits(run_dir)
    if fits is None:
        return None
    sel = np.flatnonzero((fits["M"] == combo.m_modes) & (fits["k"] == combo.coupling))
    if combo.rep >= sel.size:
        return None
    at = sel[combo.rep]
    return {col: fits[col][at] for col in ("H0", "tau", "R", "rms", "converged")}


def load_sweep(run_dir: Path) -> dict:
    return read_table(Path(run_dir) / "sweep.csv", required={
        "M": int, "k": float, "mean_tau": float, "std_tau": float,
        "mean_R": float, "std_R": float, "residue_fraction": float, "n_sets": int,
    })


def load_spread(combo: ComboDir) -> dict:
    return read_table(combo.path / "spread.csv", required={
        "set": int, "stage": str, "x_a": float, "x_b": float, "score": float,
    })


def load_traces(combo: ComboDir) -> dict:
    return read_table(combo.path / "traces.csv", required={
        "trace": int, "t": float, "x_a": float, "x_b": float,
    })


def manifest_config(run_dir: Path) -> dict:
    """Flat key/value strings from the manifest's [config] section.

    Axis extents and snapshot times come from here.  Absence of the file
    or the section degrades to {}; callers fall back to generic axes.
    """
    path = Path(run_dir) / "manifest.txt"
    if not path.is_file():
        return {}
    cfg = {}
    in_section = False
    for line in path.read_text().splitlines():
        line = line.strip()
        if line.startswith("["):
            in_section = line == "[config]"
            continue
        if in_section and "=" in line:
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


def manifest_box(run_dir: Path) -> tuple[float, float, float, float] | None:
    raw = manifest_config(run_dir).get("box")
    if raw is None:
        return None
    try:
        parts = tuple(float(v) for v in raw.split())
    except ValueError:
        return None
    return parts if len(parts) == 4 else None


def manifest_snapshot_times(run_dir: Path) -> list[float]:
    raw = manifest_config(run_dir).get("snapshot_times", "")
    try:
        return [float(v) for v in raw.split()]
    except ValueError:
        return []
