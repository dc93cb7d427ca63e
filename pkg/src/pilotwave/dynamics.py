"""Guidance trajectories: velocity field, verified adaptive integration.

The configuration velocity in normal coordinates is

    dx_r/dt = Im( (dPsi/dx_r) / Psi ),   r = 1, 2

computed as Im(dPsi conj(Psi)) / |Psi|^2 to avoid complex division.  Both
numerator and denominator share the Gaussian envelope squared, so the field
is evaluated from the envelope-free remainder (wavefunction.WaveFunction.reduced);
only genuine interference nodes can underflow the denominator.

Integration uses a 13-stage embedded Runge-Kutta pair of orders 8 and 7
(Fehlberg's coefficients), propagating the 8th-order solution with absolute
error control only (no relative term).  Every trajectory is integrated twice,
at tolerance tol and tol/10; if the endpoints differ by more than delta in
either coordinate the pair is rerun one order of magnitude tighter, down to
tol_floor, after which the trajectory is rejected and excluded.  Samples come
from the tighter run of the accepting pair.

Endpoint comparison has a horizon: on a chaotic field the gap between the
two tolerance runs grows like exp(lambda t), so beyond a few tens of periods
it saturates at the attractor size for every mixing trajectory no matter how
tight the ladder gets, and the protocol would discard exactly the
trajectories that carry the relaxation.  verify_piecewise restricts the
comparison to one recording interval at a time: both runs of a pair restart
each leg from the previous accepted sample, a leg that exhausts the ladder
rejects the whole trajectory, and the per-leg check bounds local integration
error while leaving shadowing over the full span unclaimed (no numerical
method can claim it there).  With a single recording interval the two modes
coincide exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericRangeError
from .wavefunction import NODE_FLOOR, WaveFunction, to_normal

# Fehlberg 7(8) tableau.  Row sums of _A equal _C; weights sum to one.  The
# embedded difference reduces to the four-stage combination in _ERR_STAGES.
_C = (
    0.0, 2 / 27, 1 / 9, 1 / 6, 5 / 12, 1 / 2, 5 / 6, 1 / 6, 2 / 3, 1 / 3, 1.0, 0.0, 1.0,
)
_A = (
    (),
    (2 / 27,),
    (1 / 36, 1 / 12),
    (1 / 24, 0.0, 1 / 8),
    (5 / 12, 0.0, -25 / 16, 25 / 16),
    (1 / 20, 0.0, 0.0, 1 / 4, 1 / 5),
    (-25 / 108, 0.0, 0.0, 125 / 108, -65 / 27, 125 / 54),
    (31 / 300, 0.0, 0.0, 0.0, 61 / 225, -2 / 9, 13 / 900),
    (2.0, 0.0, 0.0, -53 / 6, 704 / 45, -107 / 9, 67 / 90, 3.0),
    (-91 / 108, 0.0, 0.0, 23 / 108, -976 / 135, 311 / 54, -19 / 60, 17 / 6, -1 / 12),
    (2383 / 4100, 0.0, 0.0, -341 / 164, 4496 / 1025, -301 / 82, 2133 / 4100, 45 / 82, 45 / 164, 18 / 41),
    (3 / 205, 0.0, 0.0, 0.0, 0.0, -6 / 41, -3 / 205, -3 / 41, 3 / 41, 6 / 41, 0.0),
    (-1777 / 4100, 0.0, 0.0, -341 / 164, 4496 / 1025, -289 / 82, 2193 / 4100, 51 / 82, 33 / 164, 12 / 41, 0.0, 1.0),
)
_B8 = (
    0.0, 0.0, 0.0, 0.0, 0.0, 34 / 105, 9 / 35, 9 / 35, 9 / 280, 9 / 280, 0.0, 41 / 840, 41 / 840,
)
_ERR_COEF = 41 / 840
_ERR_STAGES = (11, 12, 0, 10)  # err = h * 41/840 * (k11 + k12 - k0 - k10), 0-based

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 5.0
_ORDER_EXP = 0.125  # 1/(order_low + 1)

# Array forms for the batch stepper's einsum contractions.  einsum sums
# sequentially in stage order, matching term-by-term accumulation, and the
# structural zeros contribute exact zeros, so the contraction is
# bit-identical to the sparse loop in _rk78_step.
_A_ARR = tuple(np.asarray(row, dtype=float) for row in _A)
_B8_ARR = np.asarray(_B8, dtype=float)


@dataclass(frozen=True)
class IntegratorConfig:
    """Verified-integration settings.

    record_times must be strictly monotone and start at the initial time; a
    decreasing grid integrates backward.  Tolerances are absolute only.
    h_init / h_min / max_steps / steps_per_period guard termination.  A run
    whose working step collapses below h_min, or which exhausts its step
    budget, fails outright: tightening the tolerance can only shrink steps
    further, so such rows are rejected rather than escalated.  The budget is
    steps_per_period scaled by the time span (plus one period of slack) and
    by the tolerance depth (tol_start/tol)^(1/8), matching how step counts
    actually grow as the ladder tightens; max_steps is the absolute ceiling.

    verify_piecewise applies the dual-tolerance comparison per recording
    interval instead of at the final time; see the module docstring for when
    the endpoint form stops being meaningful.  Budgets then apply per leg.
    """

    record_times: tuple[float, ...]
    tol_start: float = 1e-9
    tol_floor: float = 1e-16
    delta: float = 5e-3
    h_init: float = 1e-3
    h_min: float = 1e-12
    max_steps: int = 100_000
    steps_per_period: int = 6000
    verify_piecewise: bool = False

    def __post_init__(self) -> None:
        rt = np.asarray(self.record_times, dtype=float)
        if rt.ndim != 1 or rt.size < 1 or not np.all(np.isfinite(rt)):
            raise DomainError("record_times must be a non-empty finite sequence")
        if rt.size > 1:
            d = np.diff(rt)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise DomainError("record_times must be strictly monotone")
        if not (0.0 < self.tol_floor <= self.tol_start):
            raise DomainError("need 0 < tol_floor <= tol_start")
        if self.delta <= 0.0:
            raise DomainError("delta must be positive")
        if self.h_init <= 0.0 or self.h_min <= 0.0 or self.max_steps < 1:
            raise DomainError("h_init, h_min, max_steps must be positive")
        if self.steps_per_period < 1:
            raise DomainError("steps_per_period must be positive")


@dataclass(frozen=True)
class Trajectory:
    """One verified trajectory in normal coordinates.

    samples rows are (t, x1, x2); a rejected trajectory keeps only the t0 row.
    tol_used is the accepting ladder level (None when rejected).
    """

    initial: tuple[float, float]
    samples: np.ndarray
    accepted: bool
    tol_used: float | None


def velocity(wf: WaveFunction, x1, x2, t):
    """Guidance velocity (v1, v2) at normal-coordinate points.

    Raises NumericRangeError when |Psi|^2 underflows the node floor at any
    requested point; trajectory integration handles that case by step
    rejection instead.
    """
    scalar = np.ndim(x1) == 0 and np.ndim(x2) == 0
    v, bad = _velocity_batch(wf, np.asarray(x1, float), np.asarray(x2, float), t)
    if np.any(bad):
        raise NumericRangeError("velocity requested at a wave-function node")
    v1, v2 = v[..., 0], v[..., 1]
    return (float(v1), float(v2)) if scalar else (v1, v2)


def _velocity_batch(wf: WaveFunction, x1, x2, t):
    """Velocities plus a node mask; flagged rows carry exactly zero velocity.

    The finite sweep at the end flags overflow from evaluations far outside
    the physical region (wild trial steps), so callers can rely on v being
    finite everywhere, flagged or not.
    """
    s, d1, d2, _ = wf.reduced(x1, x2, t, want_grad=True)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        s2 = s.real * s.real + s.imag * s.imag
        bad = ~(s2 >= NODE_FLOOR)  # catches NaN as well
        denom = np.where(bad, 1.0, s2)
        v = np.empty(s2.shape + (2,), dtype=float)
        v[..., 0] = np.where(bad, 0.0, (d1.imag * s.real - d1.real * s.imag) / denom)
        v[..., 1] = np.where(bad, 0.0, (d2.imag * s.real - d2.real * s.imag) / denom)
    nf = ~(np.isfinite(v[..., 0]) & np.isfinite(v[..., 1]))
    if np.any(nf):
        v[nf] = 0.0
        bad = bad | nf
    return v, bad


def _field(wf: WaveFunction, t, y):
    v, bad = _velocity_batch(wf, y[:, 0], y[:, 1], t)
    return v, bad


def _rk78_step(f, t: float, y: np.ndarray, h: float):
    """One embedded step on a plain callable f(t, y); returns (y8, err_estimate).

    Reference-path form of the tableau used by the batch integrator; exercised
    directly by the order-convergence tests.
    """
    k = []
    for s in range(13):
        ys = y
        row = _A[s]
        for j, a in enumerate(row):
            if a != 0.0:
                ys = ys + (h * a) * k[j]
        k.append(np.asarray(f(t + _C[s] * h, ys), dtype=float))
    y8 = y
    for j, b in enumerate(_B8):
        if b != 0.0:
            y8 = y8 + (h * b) * k[j]
    errv = k[11] + k[12] - k[0] - k[10]
    return y8, abs(h) * _ERR_COEF * errv


# Working-set width for the batch stepper.  Step counts vary a lot from row
# to row, so running a whole batch in lockstep leaves most lanes finished
# while a few grind on; a bounded pool refilled from the queue keeps
# occupancy high.  Width trades per-iteration call overhead against cache
# residency of the evaluation arrays; 4096 measured best on one core.
# Per-row results are unaffected by pooling because every array operation
# is lane-stable.
_POOL_WIDTH = 4096


def _integrate_batch(wf: WaveFunction, y0: np.ndarray, t_grid: np.ndarray, atol, cfg: IntegratorConfig):
    """Advance each row of y0 along the guidance field, sampling at t_grid.

    Rows run independent adaptive step control at absolute tolerance atol
    (scalar or per-row).  Record times are hit exactly by clamping the step.
    Returns (rec, ok): rec has shape (B, len(t_grid), 2) with NaN beyond a
    failed row's progress; ok flags rows that reached the final record time.
    """
    B = y0.shape[0]
    t_grid = np.asarray(t_grid, dtype=float)
    T = t_grid.size
    rec = np.full((B, T, 2), np.nan)
    rec[:, 0] = y0
    ok = np.ones(B, dtype=bool)
    if T == 1 or B == 0:
        return rec, ok
    direction = 1.0 if t_grid[-1] > t_grid[0] else -1.0
    atol_all = np.broadcast_to(np.asarray(atol, dtype=float), (B,))

    # Per-row step budget: rows grinding through a near-node region would
    # otherwise dominate wall time while the rest of the batch sits finished.
    span = abs(float(t_grid[-1]) - float(t_grid[0]))
    periods = 1.0 + span / (2.0 * math.pi)
    depth = np.maximum(1.0, (cfg.tol_start / atol_all) ** _ORDER_EXP)
    budget_all = np.minimum(float(cfg.max_steps), np.ceil(cfg.steps_per_period * periods * depth))

    # Slot state for the working set; slot_row maps slots to batch rows,
    # -1 marking a free slot.
    W = min(B, _POOL_WIDTH)
    slot_row = np.full(W, -1, dtype=np.int64)
    t_w = np.empty(W)
    y_w = np.empty((W, 2))
    h_w = np.empty(W)
    nxt_w = np.empty(W, dtype=np.int64)
    steps_w = np.empty(W, dtype=np.int64)
    atol_w = np.empty(W)
    budget_w = np.empty(W)
    qp = 0

    while True:
        free = np.nonzero(slot_row < 0)[0]
        if free.size and qp < B:
            take = min(free.size, B - qp)
            slots = free[:take]
            rows = np.arange(qp, qp + take)
            slot_row[slots] = rows
            t_w[slots] = t_grid[0]
            y_w[slots] = y0[rows]
            h_w[slots] = direction * cfg.h_init
            nxt_w[slots] = 1
            steps_w[slots] = 0
            atol_w[slots] = atol_all[rows]
            budget_w[slots] = budget_all[rows]
            qp += take
        active = np.nonzero(slot_row >= 0)[0]
        if active.size == 0:
            break

        ti = t_w[active]
        yi = y_w[active]
        hi = h_w[active]
        target = t_grid[nxt_w[active]]
        rem = target - ti
        clamp = np.abs(hi) >= np.abs(rem)
        h_eff = np.where(clamp, rem, hi)

        k = np.empty((13, active.size, 2))
        bad = np.zeros(active.size, dtype=bool)
        for s in range(13):
            if s == 0:
                ys, ts = yi, ti
            else:
                ys = yi + h_eff[:, None] * np.einsum("s,sbc->bc", _A_ARR[s], k[:s])
                ts = ti + _C[s] * h_eff
            v, b = _field(wf, ts, ys)
            bad |= b
            k[s] = v

        y_new = yi + h_eff[:, None] * np.einsum("s,sbc->bc", _B8_ARR, k)
        errv = k[11] + k[12] - k[0] - k[10]
        err = np.abs(h_eff) * _ERR_COEF * np.maximum(np.abs(errv[:, 0]), np.abs(errv[:, 1]))

        tol = atol_w[active]
        finite_new = np.isfinite(y_new).all(axis=1) & np.isfinite(err)
        accept = ~bad & finite_new & (err <= tol)

        # Step-size proposal from the error estimate (absolute control only).
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            fac = _SAFETY * (tol / np.maximum(err, 1e-320)) ** _ORDER_EXP
        fac = np.clip(np.where(np.isfinite(fac), fac, _FAC_MAX), _FAC_MIN, _FAC_MAX)
        h_mag = np.abs(h_eff)
        h_next = np.where(
            accept,
            np.where(clamp, np.maximum(np.abs(hi), h_mag * fac), h_mag * fac),
            np.where(bad | ~finite_new, 0.5 * h_mag, h_mag * np.minimum(fac, 1.0)),
        )

        t_new = np.where(clamp, target, ti + h_eff)

        # Scatter accepted state.
        g_acc = active[accept]
        t_w[g_acc] = t_new[accept]
        y_w[g_acc] = y_new[accept]
        hit = accept & clamp
        g_hit = active[hit]
        rec[slot_row[g_hit], nxt_w[g_hit]] = y_new[hit]
        nxt_w[g_hit] += 1
        slot_row[g_hit[nxt_w[g_hit] >= T]] = -1

        h_w[active] = direction * h_next
        steps_w[active] += 1

        stalled = ~accept & (h_next < cfg.h_min)
        exhausted = steps_w[active] >= budget_w[active]
        failed = (stalled | exhausted) & (slot_row[active] >= 0)
        g_fail = active[failed]
        ok[slot_row[g_fail]] = False
        slot_row[g_fail] = -1
    return rec, ok


def integrate_verified_batch(wf: WaveFunction, y0: np.ndarray, cfg: IntegratorConfig):
    """Run the dual-tolerance verification ladder on a batch of starts.

    y0 is (B, 2) in normal coordinates.  Returns (rec, accepted, tol_used):
    rec (B, T, 2) holds samples from the tighter run of the accepting pair,
    NaN beyond t0 for rejected rows; tol_used is NaN where rejected.

    Each ladder level compares the endpoint of the run at tol with the run
    at tol/10 coordinate-wise against delta; disagreement escalates one
    level, down to the pair whose tighter member is tol_floor.  The tighter
    run is reused as the coarser run of the next level, which is
    bit-identical to recomputing it.  A row whose integration fails (step
    collapse or budget) is rejected at once: tighter tolerances only make
    integration harder, so escalation cannot recover such a row.

    With cfg.verify_piecewise the same ladder runs per recording interval
    (see _verified_piecewise); tol_used is then the tightest level any leg
    needed.
    """
    y0 = np.asarray(y0, dtype=float)
    if y0.ndim != 2 or y0.shape[1] != 2:
        raise DomainError("y0 must have shape (B, 2)")
    if not np.all(np.isfinite(y0)):
        raise DomainError("initial points must be finite")
    t_grid = np.asarray(cfg.record_times, dtype=float)
    B, T = y0.shape[0], t_grid.size
    rec_out = np.full((B, T, 2), np.nan)
    rec_out[:, 0] = y0
    accepted = np.zeros(B, dtype=bool)
    tol_used = np.full(B, np.nan)
    if B == 0:
        return rec_out, accepted, tol_used
    if cfg.verify_piecewise:
        return _verified_piecewise(wf, y0, t_grid, cfg, rec_out, accepted, tol_used)

    level = cfg.tol_start
    rec_a, ok_a = _integrate_batch(wf, y0, t_grid, level, cfg)
    active = np.nonzero(ok_a)[0]
    rec_a = rec_a[ok_a]
    while active.size and level / 10.0 >= cfg.tol_floor * (1.0 - 1e-12):
        rec_b, ok_b = _integrate_batch(wf, y0[active], t_grid, level / 10.0, cfg)
        diff = np.abs(rec_a[:, -1, :] - rec_b[:, -1, :]).max(axis=1)
        agree = ok_b & (diff <= cfg.delta)

        g_ok = active[agree]
        rec_out[g_ok] = rec_b[agree]
        accepted[g_ok] = True
        tol_used[g_ok] = level

        keep = ok_b & ~agree
        active = active[keep]
        rec_a = rec_b[keep]
        level /= 10.0
    return rec_out, accepted, tol_used


def _verified_piecewise(wf, y0, t_grid, cfg, rec_out, accepted, tol_used):
    """Leg-wise form of the verification ladder.

    Every recording interval gets its own escalation starting back at
    tol_start, with both runs of a pair anchored on the sample the previous
    leg accepted, so the comparison measures one leg's integration error
    rather than accumulated divergence.  A row dies on the first leg whose
    ladder exhausts; its partial samples are scrubbed to keep the rejected
    contract (nothing beyond t0).
    """
    T = t_grid.size
    active = np.arange(y0.shape[0])
    anchors = y0.copy()
    accepted[:] = True
    tol_row = np.full(y0.shape[0], cfg.tol_start)
    for j in range(T - 1):
        leg = t_grid[j:j + 2]
        level = cfg.tol_start
        rec_a, ok_a = _integrate_batch(wf, anchors, leg, level, cfg)
        sub = np.nonzero(ok_a)[0]           # indices into the active set
        end_a = rec_a[sub, -1, :]
        done = np.zeros(active.size, dtype=bool)
        leg_end = np.empty((active.size, 2))
        leg_tol = np.empty(active.size)
        while sub.size and level / 10.0 >= cfg.tol_floor * (1.0 - 1e-12):
            rec_b, ok_b = _integrate_batch(wf, anchors[sub], leg, level / 10.0, cfg)
            end_b = rec_b[:, -1, :]
            diff = np.abs(end_a - end_b).max(axis=1)
            agree = ok_b & (diff <= cfg.delta)

            done[sub[agree]] = True
            leg_end[sub[agree]] = end_b[agree]
            leg_tol[sub[agree]] = level

            keep = ok_b & ~agree
            sub = sub[keep]
            end_a = end_b[keep]
            level /= 10.0

        g_dead = active[~done]
        accepted[g_dead] = False
        rec_out[g_dead, 1:] = np.nan
        active = active[done]
        anchors = leg_end[done]
        rec_out[active, j + 1] = anchors
        tol_row[active] = np.minimum(tol_row[active], leg_tol[done])
        if active.size == 0:
            break
    tol_used[accepted] = tol_row[accepted]
    return rec_out, accepted, tol_used


def integrate_verified(wf: WaveFunction, start: tuple[float, float], cfg: IntegratorConfig) -> Trajectory:
    """Verified trajectory from a start given in original coordinates."""
    x1, x2 = to_normal(start[0], start[1], wf.model.mass)
    y0 = np.array([[float(x1), float(x2)]])
    rec, acc, tol = integrate_verified_batch(wf, y0, cfg)
    t_grid = np.asarray(cfg.record_times, dtype=float)
    if acc[0]:
        samples = np.column_stack([t_grid, rec[0, :, 0], rec[0, :, 1]])
        return Trajectory(initial=(float(start[0]), float(start[1])), samples=samples,
                          accepted=True, tol_used=float(tol[0]))
    samples = np.array([[t_grid[0], y0[0, 0], y0[0, 1]]])
    return Trajectory(initial=(float(start[0]), float(start[1])), samples=samples,
                      accepted=False, tol_used=None)
