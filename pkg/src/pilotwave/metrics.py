"""Coarse-grained H-function estimation.

Both density estimates live on the same rectangular grid over the analysis
box and are renormalized over the box before comparison, so

    Hbar = sum_cells rho_bar ln(rho_bar / psi2_bar) * cell_area

is a discrete relative entropy, non-negative with the 0 ln 0 = 0 convention.

Two independent routes produce rho_bar:

* forward histogramming (FTM): bin the evolved ensemble positions;
* backtracking: integrate a per-cell lattice of points backward to t = 0 and
  transport the initial density along each trajectory using the constancy of
  f = rho / |Psi|^2 along the flow.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import IntegratorConfig, integrate_verified_batch
from .ensemble import SnapshotSet
from .errors import DomainError, MetricError
from .wavefunction import NODE_FLOOR, WaveFunction, density_original, from_normal, to_normal

_DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class CoarseGrid:
    """rows x cols coarse-graining cells over the box (x_a, x_b ranges).

    subsamples is the per-axis midpoint sub-grid used when cell-averaging
    smooth densities; histogram estimates ignore it.
    """

    rows: int = 16
    cols: int = 16
    box: tuple[float, float, float, float] = (-5.0, 5.0, -5.0, 5.0)
    subsamples: int = 8

    def __post_init__(self) -> None:
        if self.rows < 2 or self.cols < 2:
            raise DomainError("grid needs at least two cells per axis")
        if self.subsamples < 1:
            raise DomainError("subsamples must be positive")
        xa0, xa1, xb0, xb1 = self.box
        if not (xa0 < xa1 and xb0 < xb1):
            raise DomainError(f"degenerate box {self.box}")

    @property
    def cell_area(self) -> float:
        xa0, xa1, xb0, xb1 = self.box
        return (xa1 - xa0) / self.rows * ((xb1 - xb0) / self.cols)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        xa0, xa1, xb0, xb1 = self.box
        return np.linspace(xa0, xa1, self.rows + 1), np.linspace(xb0, xb1, self.cols + 1)

    def midpoints(self, per_axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Midpoint sub-lattice coordinates, per_axis points per cell per axis."""
        xa0, xa1, xb0, xb1 = self.box
        na, nb = self.rows * per_axis, self.cols * per_axis
        xa = xa0 + (np.arange(na) + 0.5) * (xa1 - xa0) / na
        xb = xb0 + (np.arange(nb) + 0.5) * (xb1 - xb0) / nb
        return xa, xb


@dataclass
class HSeries:
    """Coarse-grained H values over time with per-time diagnostics.

    boot_mean/boot_std summarize bootstrap replicates of each value and stay
    None when the series was built without them.
    """

    times: np.ndarray
    values: np.ndarray
    method: str                  # "ftm" or "backtracking"
    empty_cells: np.ndarray      # cells with zero rho_bar
    oob_frac: np.ndarray         # method-specific out-of-box fraction
    boot_mean: np.ndarray | None = None
    boot_std: np.ndarray | None = None


def coarse_rho(grid: CoarseGrid, points: np.ndarray) -> np.ndarray:
    """Histogram density of points over the grid, normalized over the box.

    Out-of-box points are excluded (they are tracked separately upstream).
    Sum over cells times cell_area is one by construction.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise DomainError("points must have shape (N, 2)")
    ea, eb = grid.edges()
    counts, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=(ea, eb))
    n_in = counts.sum()
    if n_in == 0:
        raise MetricError("no points fall inside the box")
    return counts / (n_in * grid.cell_area)


def coarse_psi2(
    grid: CoarseGrid,
    wf: WaveFunction,
    t: float,
    subsamples: int | None = None,
    mass_floor: float = 0.95,
    mass_warn: float = 0.99,
) -> np.ndarray:
    """Cell averages of |Psi|^2 (original coordinates), renormalized over the box.

    Cell means come from a subsamples x subsamples midpoint rule (default
    grid.subsamples).  The raw box mass is checked first: below mass_floor
    the box is considered too small for the state and the estimate fails;
    below mass_warn it warns.
    """
    if subsamples is None:
        subsamples = grid.subsamples
    if subsamples < 1:
        raise DomainError("subsamples must be positive")
    xa, xb = grid.midpoints(subsamples)
    dens = density_original(wf, xa[:, None], xb[None, :], t)
    cells = dens.reshape(grid.rows, subsamples, grid.cols, subsamples).mean(axis=(1, 3))
    raw_mass = float(cells.sum() * grid.cell_area)
    if raw_mass < mass_floor:
        raise MetricError(
            f"box holds only {raw_mass:.4f} of the state's probability (floor {mass_floor})"
        )
    if raw_mass < mass_warn:
        warnings.warn(
            f"box holds {raw_mass:.4f} of the state's probability; coarse psi^2 renormalized",
            stacklevel=2,
        )
    return cells / raw_mass


def h_function(grid: CoarseGrid, rho_bar: np.ndarray, psi2_bar: np.ndarray) -> float:
    """Discrete relative entropy between box-normalized cell densities.

    Empty rho_bar cells contribute zero (0 ln 0 = 0); psi2_bar is floored at
    1e-300 before the division.  Tiny negatives from roundoff clamp to zero.
    """
    rho_bar = np.asarray(rho_bar, dtype=float)
    psi2_bar = np.asarray(psi2_bar, dtype=float)
    if rho_bar.shape != (grid.rows, grid.cols) or psi2_bar.shape != (grid.rows, grid.cols):
        raise DomainError("cell arrays must match the grid shape")
    if not (np.all(np.isfinite(rho_bar)) and np.all(np.isfinite(psi2_bar))):
        raise DomainError("cell densities must be finite")
    mask = rho_bar > 0.0
    ratio = rho_bar[mask] / np.maximum(psi2_bar[mask], _DENSITY_FLOOR)
    h = float(np.sum(rho_bar[mask] * np.log(ratio)) * grid.cell_area)
    if -1e-9 < h < 0.0:
        h = 0.0
    return h


def h_series_ftm(
    snapshots: SnapshotSet,
    wf: WaveFunction,
    grid: CoarseGrid,
    subsamples: int | None = None,
    mass_floor: float = 0.95,
    mass_warn: float = 0.99,
    n_boot: int = 0,
    boot_seed: int = 0,
) -> HSeries:
    """H(t) by forward histogramming of the evolved ensemble.

    n_boot > 0 adds per-time bootstrap summaries; replicate b at time index i
    uses seed boot_seed + i, so the bands do not depend on which record
    times are requested together.
    """
    times = np.asarray(snapshots.times, dtype=float)
    values = np.empty(times.size)
    empty = np.empty(times.size, dtype=np.int64)
    oob = np.empty(times.size)
    bmean = np.empty(times.size) if n_boot > 0 else None
    bstd = np.empty(times.size) if n_boot > 0 else None
    for i, t in enumerate(times):
        rho = coarse_rho(grid, snapshots.positions[i])
        p2 = coarse_psi2(grid, wf, float(t), subsamples, mass_floor, mass_warn)
        values[i] = max(h_function(grid, rho, p2), 0.0)
        empty[i] = int((rho == 0.0).sum())
        n = snapshots.positions[i].shape[0]
        oob[i] = snapshots.out_of_box[i] / n if n else 0.0
        if n_boot > 0:
            reps = bootstrap_h_ftm(snapshots.positions[i], p2, grid,
                                   n_boot=n_boot, seed=boot_seed + i)
            bmean[i] = float(reps.mean())
            bstd[i] = float(reps.std())
    return HSeries(times=times, values=values, method="ftm", empty_cells=empty,
                   oob_frac=oob, boot_mean=bmean, boot_std=bstd)


@dataclass
class BacktrackSample:
    """Per-cell lattice densities transported from t=0 for one record time."""

    t: float
    values: np.ndarray        # (rows, cols, points_per_cell); NaN = rejected point
    rejected: int             # backward-rejected lattice points
    oob_origin: int           # lattice points whose t=0 preimage left the box


def backtrack_time(
    wf: WaveFunction,
    rho0,
    t: float,
    grid: CoarseGrid,
    cfg: IntegratorConfig,
    points_per_cell: int = 9,
) -> BacktrackSample:
    """Transport rho0 to time t along backward trajectories on a cell lattice.

    rho0 maps original-coordinate arrays (x_a, x_b) to initial densities.
    Each cell holds a sqrt(p) x sqrt(p) midpoint lattice; every lattice point
    is integrated from t back to 0 with the same verified ladder used
    forward, and carries rho(q, t) = f0(q0) |Psi(q, t)|^2 with
    f0 = rho0(q0) / |Psi(q0, 0)|^2.
    """
    side = math.isqrt(points_per_cell)
    if side * side != points_per_cell:
        raise DomainError(f"points_per_cell must be a perfect square, got {points_per_cell}")
    xa, xb = grid.midpoints(side)
    qa, qb = np.meshgrid(xa, xb, indexing="ij")
    qa = qa.ravel()
    qb = qb.ravel()
    dens_t = density_original(wf, qa, qb, t)

    if t == 0.0:
        rho = np.asarray(rho0(qa, qb), dtype=float)
        rejected = 0
        oob0 = 0
    else:
        x1, x2 = to_normal(qa, qb, wf.model.mass)
        back_cfg = IntegratorConfig(
            record_times=(float(t), 0.0),
            tol_start=cfg.tol_start, tol_floor=cfg.tol_floor, delta=cfg.delta,
            h_init=cfg.h_init, h_min=cfg.h_min, max_steps=cfg.max_steps,
            steps_per_period=cfg.steps_per_period,
        )
        rec, accepted, _ = integrate_verified_batch(wf, np.column_stack([x1, x2]), back_cfg)
        q0a, q0b = from_normal(rec[:, -1, 0], rec[:, -1, 1], wf.model.mass)
        # Rejected rows carry NaN endpoints; evaluate densities at the origin
        # there and mask afterwards so no NaN reaches rho0 or the state.
        q0a_s = np.where(accepted, q0a, 0.0)
        q0b_s = np.where(accepted, q0b, 0.0)
        dens_0 = density_original(wf, q0a_s, q0b_s, 0.0)
        usable = accepted & (dens_0 >= NODE_FLOOR)
        rejected = int((~usable).sum())
        f0 = np.where(
            usable,
            np.asarray(rho0(q0a_s, q0b_s), dtype=float) / np.where(usable, dens_0, 1.0),
            np.nan,
        )
        rho = f0 * dens_t
        xa0, xa1, xb0, xb1 = grid.box
        oob0 = int((usable & ((q0a < xa0) | (q0a > xa1) | (q0b < xb0) | (q0b > xb1))).sum())

    # Regroup the global midpoint mesh into (row, col, point) order.
    vals = rho.reshape(grid.rows, side, grid.cols, side).transpose(0, 2, 1, 3)
    vals = vals.reshape(grid.rows, grid.cols, points_per_cell)
    return BacktrackSample(t=float(t), values=vals, rejected=rejected, oob_origin=oob0)


def cells_from_backtrack(sample: BacktrackSample, grid: CoarseGrid) -> np.ndarray:
    """Cell means of surviving lattice densities, renormalized over the box."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        means = np.nanmean(sample.values, axis=2)
    if np.any(~np.isfinite(means)):
        raise MetricError(f"a cell lost all its lattice points at t={sample.t}")
    total = float(means.sum() * grid.cell_area)
    if total <= 0.0:
        raise MetricError(f"transported density vanished everywhere at t={sample.t}")
    return means / total


def h_series_backtracking(
    wf: WaveFunction,
    rho0,
    times,
    grid: CoarseGrid,
    cfg: IntegratorConfig,
    points_per_cell: int = 9,
    subsamples: int | None = None,
    mass_floor: float = 0.95,
    mass_warn: float = 0.99,
    n_boot: int = 0,
    boot_seed: int = 0,
) -> HSeries:
    """H(t) by backward transport of the initial density (lattice estimator).

    Bootstrap summaries (n_boot > 0) resample lattice points within cells;
    degenerate replicates (all mass lost) are NaN and excluded from the
    summary, matching their exclusion from the estimate itself.
    """
    times = np.asarray(times, dtype=float)
    values = np.empty(times.size)
    empty = np.empty(times.size, dtype=np.int64)
    oob = np.empty(times.size)
    bmean = np.empty(times.size) if n_boot > 0 else None
    bstd = np.empty(times.size) if n_boot > 0 else None
    n_lattice = grid.rows * grid.cols * points_per_cell
    for i, t in enumerate(times):
        sample = backtrack_time(wf, rho0, float(t), grid, cfg, points_per_cell)
        rho = cells_from_backtrack(sample, grid)
        p2 = coarse_psi2(grid, wf, float(t), subsamples, mass_floor, mass_warn)
        values[i] = max(h_function(grid, rho, p2), 0.0)
        empty[i] = int((rho == 0.0).sum())
        oob[i] = sample.oob_origin / n_lattice
        if n_boot > 0:
            reps = bootstrap_h_backtracking(sample, p2, grid,
                                            n_boot=n_boot, seed=boot_seed + i)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", category=RuntimeWarning)
                bmean[i] = float(np.nanmean(reps))
                bstd[i] = float(np.nanstd(reps))
    return HSeries(times=times, values=values, method="backtracking", empty_cells=empty,
                   oob_frac=oob, boot_mean=bmean, boot_std=bstd)


def bootstrap_h_ftm(
    points: np.ndarray,
    psi2_bar: np.ndarray,
    grid: CoarseGrid,
    n_boot: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """Bootstrap replicates of the FTM H value at one time (resampled ensemble)."""
    points = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    out = np.empty(n_boot)
    for b in range(n_boot):
        pick = rng.integers(0, n, size=n)
        rho = coarse_rho(grid, points[pick])
        out[b] = max(h_function(grid, rho, psi2_bar), 0.0)
    return out


def bootstrap_h_backtracking(
    sample: BacktrackSample,
    psi2_bar: np.ndarray,
    grid: CoarseGrid,
    n_boot: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """Bootstrap replicates of the backtracking H value (cells resampled within)."""
    rng = np.random.default_rng(seed)
    vals = sample.values
    rows, cols, p = vals.shape
    out = np.empty(n_boot)
    for b in range(n_boot):
        pick = rng.integers(0, p, size=(rows, cols, p))
        resampled = np.take_along_axis(vals, pick, axis=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            means = np.nanmean(resampled, axis=2)
        means = np.where(np.isfinite(means), means, 0.0)
        total = float(means.sum() * grid.cell_area)
        if total <= 0.0:
            out[b] = np.nan
            continue
        out[b] = max(h_function(grid, means / total, psi2_bar), 0.0)
    return out
