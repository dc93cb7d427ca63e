"""Trajectory-level views of relaxation: neighbor spread and full traces.

The spread test surrounds each probe center with a 5x5 lattice of close
starts and integrates the lot to a final time; how far each cluster's
bounding box has grown relative to the analysis box is a cheap, monotone
proxy for confinement.  Full traces record densely sampled paths with their
length and the number of coarse-grid cells they visit.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import IntegratorConfig, Trajectory, integrate_verified_batch
from .errors import DomainError
from .metrics import CoarseGrid
from .wavefunction import WaveFunction, from_normal, to_normal

# Probe positions for spread/trace studies, in original coordinates.
DEFAULT_CENTERS = (
    (2.39, -1.94),
    (1.27, 3.76),
    (2.21, -0.01),
    (-0.89, 2.04),
    (-2.30, -0.76),
)
_LATTICE_SIDE = 5  # 5x5 = 25 starts per center


@dataclass
class SpreadTest:
    """Initial/final positions and a confinement score per neighbor set.

    score = 1 - area(final bounding box within the box) / area(box):
    1 means the set stayed put, 0 means it spread across the whole region.
    Scores use accepted members only; a set with none scores NaN.
    """

    centers: tuple[tuple[float, float], ...]
    half_width: float
    t_final: float
    box: tuple[float, float, float, float]
    initial: list[np.ndarray]    # per set, (25, 2) original coordinates
    final: list[np.ndarray]      # per set, (n_accepted, 2)
    rejected: np.ndarray         # per set
    scores: np.ndarray           # per set


def _bbox_score(points: np.ndarray, box: tuple[float, float, float, float]) -> float:
    if points.shape[0] == 0:
        return float("nan")
    xa0, xa1, xb0, xb1 = box
    lo_a, hi_a = float(points[:, 0].min()), float(points[:, 0].max())
    lo_b, hi_b = float(points[:, 1].min()), float(points[:, 1].max())
    inter_a = max(0.0, min(hi_a, xa1) - max(lo_a, xa0))
    inter_b = max(0.0, min(hi_b, xb1) - max(lo_b, xb0))
    return 1.0 - (inter_a * inter_b) / ((xa1 - xa0) * (xb1 - xb0))


def spread_test(
    wf: WaveFunction,
    cfg: IntegratorConfig,
    centers=DEFAULT_CENTERS,
    half_width: float = 0.05,
    t_final: float | None = None,
    box: tuple[float, float, float, float] = (-5.0, 5.0, -5.0, 5.0),
) -> SpreadTest:
    """Evolve 25-point lattices around each center and score their spread.

    t_final defaults to the last record time of cfg; tolerance settings are
    taken from cfg with the record grid replaced by (0, t_final).
    """
    if half_width <= 0.0:
        raise DomainError("half_width must be positive")
    centers = tuple((float(a), float(b)) for a, b in centers)
    if not centers:
        raise DomainError("need at least one center")
    if t_final is None:
        t_final = float(cfg.record_times[-1])
    if t_final <= 0.0:
        raise DomainError("t_final must be positive")
    run_cfg = replace(cfg, record_times=(0.0, float(t_final)))

    off = np.linspace(-half_width, half_width, _LATTICE_SIDE)
    oa, ob = np.meshgrid(off, off, indexing="ij")
    sets = []
    for ca, cb in centers:
        sets.append(np.column_stack([(ca + oa).ravel(), (cb + ob).ravel()]))
    starts = np.vstack(sets)

    x1, x2 = to_normal(starts[:, 0], starts[:, 1], wf.model.mass)
    rec, accepted, _ = integrate_verified_batch(wf, np.column_stack([x1, x2]), run_cfg)
    fa, fb = from_normal(rec[:, -1, 0], rec[:, -1, 1], wf.model.mass)

    n_per = _LATTICE_SIDE * _LATTICE_SIDE
    final = []
    rejected = np.empty(len(centers), dtype=np.int64)
    scores = np.empty(len(centers))
    for i in range(len(centers)):
        sl = slice(i * n_per, (i + 1) * n_per)
        acc = accepted[sl]
        pts = np.column_stack([fa[sl][acc], fb[sl][acc]])
        final.append(pts)
        rejected[i] = int((~acc).sum())
        scores[i] = _bbox_score(pts, box)
    return SpreadTest(centers=centers, half_width=float(half_width), t_final=float(t_final),
                      box=box, initial=sets, final=final, rejected=rejected, scores=scores)


@dataclass
class TraceSet:
    """Densely sampled trajectories with exploration metrics.

    paths hold (n, 3) rows (t, x_a, x_b) in original coordinates; rejected
    trajectories keep only their start row, zero length, one visited cell.
    Iterating yields the underlying Trajectory objects.
    """

    trajectories: list[Trajectory]
    paths: list[np.ndarray]
    path_lengths: np.ndarray
    visited_cells: np.ndarray
    grid: CoarseGrid

    def __len__(self) -> int:
        return len(self.trajectories)

    def __getitem__(self, i: int) -> Trajectory:
        return self.trajectories[i]

    def __iter__(self):
        return iter(self.trajectories)


def _cells_visited(path_ab: np.ndarray, grid: CoarseGrid) -> int:
    xa0, xa1, xb0, xb1 = grid.box
    ia = np.floor((path_ab[:, 0] - xa0) / (xa1 - xa0) * grid.rows).astype(np.int64)
    ib = np.floor((path_ab[:, 1] - xb0) / (xb1 - xb0) * grid.cols).astype(np.int64)
    inb = (ia >= 0) & (ia < grid.rows) & (ib >= 0) & (ib < grid.cols)
    if not np.any(inb):
        return 0
    return int(np.unique(ia[inb] * grid.cols + ib[inb]).size)


def trace_trajectories(
    wf: WaveFunction,
    cfg: IntegratorConfig,
    starts=DEFAULT_CENTERS,
    t_final: float | None = None,
    n_intervals: int = 400,
    grid: CoarseGrid | None = None,
) -> TraceSet:
    """Verified paths from each start, sampled on a uniform grid of n_intervals."""
    starts = tuple((float(a), float(b)) for a, b in starts)
    if not starts:
        raise DomainError("need at least one start")
    if n_intervals < 1:
        raise DomainError("n_intervals must be positive")
    if t_final is None:
        t_final = float(cfg.record_times[-1])
    if t_final <= 0.0:
        raise DomainError("t_final must be positive")
    if grid is None:
        grid = CoarseGrid()
    t_grid = tuple(np.linspace(0.0, float(t_final), n_intervals + 1).tolist())
    run_cfg = replace(cfg, record_times=t_grid)

    arr = np.asarray(starts, dtype=float)
    x1, x2 = to_normal(arr[:, 0], arr[:, 1], wf.model.mass)
    rec, accepted, tol = integrate_verified_batch(wf, np.column_stack([x1, x2]), run_cfg)

    tg = np.asarray(t_grid)
    trajectories = []
    paths = []
    lengths = np.empty(len(starts))
    visited = np.empty(len(starts), dtype=np.int64)
    for i, (sa, sb) in enumerate(starts):
        if accepted[i]:
            samples = np.column_stack([tg, rec[i, :, 0], rec[i, :, 1]])
            traj = Trajectory(initial=(sa, sb), samples=samples, accepted=True,
                              tol_used=float(tol[i]))
        else:
            samples = rec[i, :1]
            samples = np.column_stack([tg[:1], samples[:, 0], samples[:, 1]])
            traj = Trajectory(initial=(sa, sb), samples=samples, accepted=False, tol_used=None)
        pa, pb = from_normal(traj.samples[:, 1], traj.samples[:, 2], wf.model.mass)
        path = np.column_stack([traj.samples[:, 0], pa, pb])
        steps = np.diff(path[:, 1:], axis=0)
        trajectories.append(traj)
        paths.append(path)
        lengths[i] = float(np.sqrt((steps * steps).sum(axis=1)).sum())
        visited[i] = _cells_visited(path[:, 1:], grid)
    return TraceSet(trajectories=trajectories, paths=paths, path_lengths=lengths,
                    visited_cells=visited, grid=grid)
