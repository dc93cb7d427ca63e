"""Trajectory ensembles: initial sampling and verified evolution.

Initial nonequilibrium ensembles are truncated bivariate Gaussians over the
analysis box, truncated by redrawing out-of-box points so the distribution is
the conditioned Gaussian.  Equilibrium ensembles are drawn from |Psi(.,0)|^2
by rejection sampling.  Evolution runs every trajectory through the verified
dual-tolerance integrator; rejected trajectories are excluded from all
snapshots and counted.

Determinism: sampling uses one PCG64 stream per call, and integration needs
no randomness at all, so results depend only on (spec, wf, cfg) and never on
worker count or execution order.  Work is split into fixed-size index chunks;
chunk composition is independent of the worker count, which keeps outputs
byte-identical when parallelism changes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import IntegratorConfig, integrate_verified_batch
from .errors import DomainError, EnsembleError, NumericRangeError
from .wavefunction import WaveFunction, density_original, from_normal, to_normal

DEFAULT_BOX = (-5.0, 5.0, -5.0, 5.0)


@dataclass(frozen=True)
class EnsembleSpec:
    """Truncated-Gaussian initial ensemble over the box (x_a, x_b ranges)."""

    n_traj: int
    mean_a: float = 0.0
    mean_b: float = 0.0
    sigma_a: float = 1.0
    sigma_b: float = 1.0
    correlation: float = 0.0
    box: tuple[float, float, float, float] = DEFAULT_BOX
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_traj < 1:
            raise DomainError(f"ensemble needs at least one trajectory, got {self.n_traj}")
        if self.sigma_a <= 0.0 or self.sigma_b <= 0.0:
            raise DomainError("Gaussian widths must be positive")
        if not (-1.0 < self.correlation < 1.0):
            raise DomainError(f"correlation must lie in (-1, 1), got {self.correlation}")
        xa0, xa1, xb0, xb1 = self.box
        if not (xa0 < xa1 and xb0 < xb1):
            raise DomainError(f"degenerate box {self.box}")

    def density(self, x_a, x_b) -> np.ndarray:
        """Truncated-Gaussian density, normalized to one over the box."""
        x_a = np.asarray(x_a, dtype=float)
        x_b = np.asarray(x_b, dtype=float)
        da = (x_a - self.mean_a) / self.sigma_a
        db = (x_b - self.mean_b) / self.sigma_b
        rho = self.correlation
        quad = (da * da - 2.0 * rho * da * db + db * db) / (1.0 - rho * rho)
        norm = 2.0 * math.pi * self.sigma_a * self.sigma_b * math.sqrt(1.0 - rho * rho)
        dens = np.exp(-0.5 * quad) / norm / self._box_mass()
        xa0, xa1, xb0, xb1 = self.box
        inside = (x_a >= xa0) & (x_a <= xa1) & (x_b >= xb0) & (x_b <= xb1)
        return np.where(inside, dens, 0.0)

    def _box_mass(self) -> float:
        # Gauss-Legendre product quadrature of the untruncated Gaussian over
        # the box; cached on first use.  Exact enough (~1e-13) at 160 nodes.
        cached = getattr(self, "_box_mass_value", None)
        if cached is not None:
            return cached
        nodes, weights = np.polynomial.legendre.leggauss(160)
        xa0, xa1, xb0, xb1 = self.box
        xa = 0.5 * (xa1 - xa0) * nodes + 0.5 * (xa1 + xa0)
        xb = 0.5 * (xb1 - xb0) * nodes + 0.5 * (xb1 + xb0)
        da = (xa - self.mean_a) / self.sigma_a
        db = (xb - self.mean_b) / self.sigma_b
        rho = self.correlation
        quad = (
            da[:, None] * da[:, None]
            - 2.0 * rho * da[:, None] * db[None, :]
            + db[None, :] * db[None, :]
        ) / (1.0 - rho * rho)
        dens = np.exp(-0.5 * quad) / (2.0 * math.pi * self.sigma_a * self.sigma_b * math.sqrt(1.0 - rho * rho))
        mass = float(weights @ dens @ weights) * 0.25 * (xa1 - xa0) * (xb1 - xb0)
        object.__setattr__(self, "_box_mass_value", mass)
        return mass


def sample_initial(spec: EnsembleSpec) -> np.ndarray:
    """Draw the truncated-Gaussian ensemble; (N, 2) original coordinates.

    Truncation redraws out-of-box points until all land inside, which is the
    conditioned distribution exactly.  Fails when the first pass accepts less
    than 10% (the box is then the wrong tool for that Gaussian).
    """
    rng = np.random.default_rng(spec.seed)
    xa0, xa1, xb0, xb1 = spec.box
    cross = spec.correlation
    tail = math.sqrt(1.0 - cross * cross)

    def draw(n: int) -> np.ndarray:
        z = rng.standard_normal((n, 2))
        out = np.empty((n, 2))
        out[:, 0] = spec.mean_a + spec.sigma_a * z[:, 0]
        out[:, 1] = spec.mean_b + spec.sigma_b * (cross * z[:, 0] + tail * z[:, 1])
        return out

    pts = draw(spec.n_traj)
    outside = (pts[:, 0] < xa0) | (pts[:, 0] > xa1) | (pts[:, 1] < xb0) | (pts[:, 1] > xb1)
    rate = 1.0 - outside.sum() / spec.n_traj
    if rate < 0.10:
        raise EnsembleError(
            f"truncation acceptance rate {rate:.3f} below 10%; Gaussian barely overlaps the box"
        )
    while outside.any():
        idx = np.nonzero(outside)[0]
        pts[idx] = draw(idx.size)
        outside[idx] = (
            (pts[idx, 0] < xa0) | (pts[idx, 0] > xa1) | (pts[idx, 1] < xb0) | (pts[idx, 1] > xb1)
        )
    return pts


def support_box(wf: WaveFunction, tail_width: float = 4.0) -> tuple[float, float, float, float]:
    """Square box in (x_a, x_b) holding essentially all of the state's mass.

    Each normal coordinate is bounded by its classical turning point plus
    tail_width Gaussian widths; the rotation back to original coordinates
    takes the worst-case corner.  Sampling an equilibrium ensemble inside the
    analysis box instead would clip the state's tails, and the clipped mass
    shows up later as a spurious H offset once it would have flowed back in.
    """
    m = wf.model.mass
    u1 = math.sqrt(2.0 * wf.max_n1 + 1.0) + tail_width
    u2 = math.sqrt(2.0 * wf.max_n2 + 1.0) + tail_width
    x1 = u1 / math.sqrt(m * wf.model.omega1)
    x2 = u2 / math.sqrt(m * wf.model.omega2)
    half = math.sqrt(0.5 / m) * (x1 + x2)
    return (-half, half, -half, half)


def sample_equilibrium(wf: WaveFunction, n: int, box=DEFAULT_BOX, seed: int = 0, t: float = 0.0) -> np.ndarray:
    """Rejection-sample n points from |Psi(., t)|^2 restricted to the box.

    The envelope bound comes from a midpoint scan of the density; if sampling
    ever sees a density above the bound the whole draw restarts with the
    bound doubled, deterministically.
    """
    if n < 1:
        raise DomainError("need at least one sample")
    xa0, xa1, xb0, xb1 = box
    scan = 256
    xa = xa0 + (np.arange(scan) + 0.5) * (xa1 - xa0) / scan
    xb = xb0 + (np.arange(scan) + 0.5) * (xb1 - xb0) / scan
    dens_grid = density_original(wf, xa[:, None], xb[None, :], t)
    bound = 1.5 * float(dens_grid.max())
    if bound <= 0.0:
        raise EnsembleError("state density vanishes on the box")

    for _ in range(6):
        rng = np.random.default_rng(seed)
        out = np.empty((n, 2))
        got = 0
        overshoot = False
        while got < n:
            m = max(4 * (n - got), 4096)
            cand = np.empty((m, 2))
            cand[:, 0] = xa0 + (xa1 - xa0) * rng.random(m)
            cand[:, 1] = xb0 + (xb1 - xb0) * rng.random(m)
            dens = density_original(wf, cand[:, 0], cand[:, 1], t)
            if float(dens.max()) > bound:
                overshoot = True
                break
            keep = rng.random(m) * bound < dens
            take = min(int(keep.sum()), n - got)
            out[got:got + take] = cand[keep][:take]
            got += take
        if not overshoot:
            return out
        bound *= 2.0
    raise EnsembleError("rejection envelope kept overshooting; density bound unreliable")


@dataclass
class SnapshotSet:
    """Accepted-trajectory positions at each record time, original coordinates."""

    times: np.ndarray
    positions: list[np.ndarray]          # one (N_acc, 2) array per time
    ids: np.ndarray                      # original trajectory indices, accepted rows
    rejected_count: int
    out_of_box: np.ndarray               # per-time counts outside the box
    box: tuple[float, float, float, float]
    n_total: int
    tol_counts: dict = field(default_factory=dict)  # accepting level -> count


def _run_chunk(args):
    wf, y0, cfg = args
    return integrate_verified_batch(wf, y0, cfg)


def evolve_points(
    wf: WaveFunction,
    starts: np.ndarray,
    cfg: IntegratorConfig,
    box=DEFAULT_BOX,
    workers: int = 1,
    chunk_size: int = 4096,
    rejection_ceiling: float = 0.01,
) -> SnapshotSet:
    """Evolve explicit start points (original coordinates) to a SnapshotSet.

    chunk_size is the parallel dispatch unit only.  Per-lane arithmetic in
    the stepper never depends on batch composition, so results are identical
    for any worker count and chunk size; a single worker runs the whole
    batch through one call, paying the slow-row tail once.  Raises
    EnsembleError when the rejected fraction exceeds rejection_ceiling.
    """
    starts = np.asarray(starts, dtype=float)
    if starts.ndim != 2 or starts.shape[1] != 2:
        raise DomainError("starts must have shape (N, 2)")
    n = starts.shape[0]
    x1, x2 = to_normal(starts[:, 0], starts[:, 1], wf.model.mass)
    y0 = np.column_stack([x1, x2])
    t_grid = np.asarray(cfg.record_times, dtype=float)

    if workers > 1 and n > chunk_size:
        chunks = [(wf, y0[i:i + chunk_size], cfg) for i in range(0, n, chunk_size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, chunks))
        rec = np.concatenate([r[0] for r in results], axis=0)
        accepted = np.concatenate([r[1] for r in results], axis=0)
        tol = np.concatenate([r[2] for r in results], axis=0)
    else:
        rec, accepted, tol = _run_chunk((wf, y0, cfg))

    rejected = int(n - accepted.sum())
    if rejected > rejection_ceiling * n:
        raise EnsembleError(
            f"{rejected} of {n} trajectories rejected "
            f"({rejected / n:.2%} > ceiling {rejection_ceiling:.2%})"
        )
    if not np.all(np.isfinite(rec[accepted])):
        raise NumericRangeError("accepted trajectory produced non-finite samples")

    ids = np.nonzero(accepted)[0]
    xa0, xa1, xb0, xb1 = box
    positions = []
    out_counts = np.zeros(t_grid.size, dtype=np.int64)
    for ti in range(t_grid.size):
        pa, pb = from_normal(rec[ids, ti, 0], rec[ids, ti, 1], wf.model.mass)
        pos = np.column_stack([pa, pb])
        positions.append(pos)
        out_counts[ti] = int(
            ((pos[:, 0] < xa0) | (pos[:, 0] > xa1) | (pos[:, 1] < xb0) | (pos[:, 1] > xb1)).sum()
        )

    levels, counts = np.unique(tol[accepted], return_counts=True)
    tol_counts = {float(l): int(c) for l, c in zip(levels, counts)}
    return SnapshotSet(
        times=t_grid,
        positions=positions,
        ids=ids,
        rejected_count=rejected,
        out_of_box=out_counts,
        box=tuple(box),
        n_total=n,
        tol_counts=tol_counts,
    )


def evolve(
    spec: EnsembleSpec,
    wf: WaveFunction,
    cfg: IntegratorConfig,
    workers: int = 1,
    chunk_size: int = 4096,
    rejection_ceiling: float = 0.01,
) -> SnapshotSet:
    """Sample the spec's initial ensemble and evolve it through record_times."""
    starts = sample_initial(spec)
    return evolve_points(
        wf, starts, cfg,
        box=spec.box, workers=workers, chunk_size=chunk_size,
        rejection_ceiling=rejection_ceiling,
    )
