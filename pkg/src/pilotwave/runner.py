"""Experiment orchestration: pipeline, persistence, manifests, replay.

A run writes one directory:

    out_dir/
      manifest.txt                      settings + stage log, replayable
      fits.csv                          decay fits of the FTM series
      backtracking_fits.csv             same for backtracking (when run)
      h_series_summary.csv              per-(M, k, method, time) mean/std over phase sets
      sweep.csv                         per-(M, k) aggregate of FTM fits
      M{M}_k{k}_rep{r}/                 one directory per combination
        modes.txt                       the sampled mode set, re-loadable
        h_series.csv                    time,H,method,empty_cells,oob_frac
        snapshots_t{i}.csv              id,x_a,x_b at snapshot time index i
        rho_grid_t{i}.csv               coarse density matrix (rows x cols)
        psi2_grid_t{i}.csv              coarse |Psi|^2 matrix
        spread.csv / traces.csv / trace_metrics.csv   when diagnostics run

All numbers are written with repr, so replaying a manifest reproduces every
CSV byte for byte.  Floats in file names use repr too (k values).

Seed derivation: phase set r uses mode seed  seed*100003 + r  and ensemble
seed  seed*100003 + 50021 + r, so mode sets match across couplings within a
run (couplings are compared on identical superpositions) while sampling
stays decoupled from the sweep structure.
"""
from __future__ import annotations

import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, apply_overrides, parse_config_text
from .diagnostics import spread_test, trace_trajectories
from .dynamics import IntegratorConfig
from .ensemble import EnsembleSpec, evolve_points, sample_equilibrium, sample_initial, support_box
from .errors import ConfigError, StageError
from .fitting import RelaxationFit, aggregate, fit_decay
from .metrics import CoarseGrid, HSeries, coarse_psi2, coarse_rho, h_series_backtracking, h_series_ftm
from .wavefunction import (
    OscillatorModel,
    WaveFunction,
    density_original,
    mode_set_to_text,
    sample_mode_set,
)

MANIFEST_NAME = "manifest.txt"
_MANIFEST_HEADER = "pilotwave manifest v1"


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_matrix(path: Path, matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _combo_dir_name(m_modes: int, k: float, rep: int) -> str:
    return f"M{m_modes}_k{repr(float(k))}_rep{rep}"


def mode_seed_for(seed: int, rep: int) -> int:
    return seed * 100003 + rep


def ensemble_seed_for(seed: int, rep: int) -> int:
    return seed * 100003 + 50021 + rep


class _StageLog:
    """Collects manifest stage lines; failures re-raise as StageError."""

    def __init__(self) -> None:
        self.lines: list[str] = []

    @contextmanager
    def stage(self, name: str, context: str = ""):
        tag = f"{name} {context}".rstrip()
        t0 = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            self.lines.append(f"stage {tag} failed {type(exc).__name__}: {exc}")
            raise StageError(name, str(exc)) from exc
        self.lines.append(f"stage {tag} ok {time.perf_counter() - t0:.2f}s")


@dataclass
class RunResult:
    out_dir: Path
    manifest_path: Path
    elapsed_s: float


def _snapshot_indices(cfg: ExperimentConfig) -> list[int]:
    rt = np.asarray(cfg.record_times)
    idx = []
    for t in cfg.snapshot_times:
        j = int(np.argmin(np.abs(rt - t)))
        idx.append(j)
    return idx


def _series_rows(series: HSeries):
    for i in range(series.times.size):
        if series.boot_mean is None:
            bm, bs = "", ""
        else:
            bm, bs = series.boot_mean[i], series.boot_std[i]
        yield (series.times[i], series.values[i], series.method,
               int(series.empty_cells[i]), series.oob_frac[i], bm, bs)


def _fit_row(m_modes: int, k: float, preset_seed: int, fit: RelaxationFit):
    return (m_modes, k, preset_seed, fit.h0, fit.tau, fit.r, fit.rms_residual, fit.converged)


def _write_manifest(path: Path, cfg: ExperimentConfig, stage_lines, status: str, elapsed: float) -> None:
    from .config import config_to_text

    parts = [
        _MANIFEST_HEADER,
        f"package = {__version__}",
        f"python = {sys.version.split()[0]}",
        f"numpy = {np.__version__}",
        f"status = {status}",
        f"elapsed_s = {elapsed:.3f}",
        "",
        "[config]",
        config_to_text(cfg).rstrip("\n"),
        "",
        "[stages]",
    ]
    parts.extend(stage_lines)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Execute the full pipeline described by cfg.

    Raises StageError on the first failing stage; the manifest is written
    either way, recording partial progress.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = _StageLog()
    t_start = time.perf_counter()

    icfg = IntegratorConfig(
        record_times=cfg.record_times,
        tol_start=cfg.tol_start, tol_floor=cfg.tol_floor, delta=cfg.delta,
        h_init=cfg.h_init, h_min=cfg.h_min, max_steps=cfg.max_steps,
        steps_per_period=cfg.steps_per_period,
        verify_piecewise=cfg.verify_piecewise,
    )
    grid = CoarseGrid(rows=cfg.grid_rows, cols=cfg.grid_cols,
                      box=tuple(cfg.box), subsamples=cfg.subsamples)
    snap_idx = _snapshot_indices(cfg)

    ftm_fit_rows: list[tuple] = []
    bt_fit_rows: list[tuple] = []
    # (M, k, method) -> list of per-rep HSeries, in rep order
    series_store: dict[tuple, list[HSeries]] = {}
    # (M, k) -> (fits, h0s) feeding sweep.csv
    combo_fits: dict[tuple, tuple[list, list]] = {}

    try:
        for m_modes in cfg.mode_counts:
            for k in cfg.couplings:
                model = OscillatorModel(mass=cfg.mass, omega=cfg.omega, coupling=float(k))
                for rep in range(cfg.n_phase_sets):
                    ctx = f"M{m_modes} k{repr(float(k))} rep{rep}"
                    combo = out / _combo_dir_name(m_modes, k, rep)
                    combo.mkdir(parents=True, exist_ok=True)

                    with log.stage("modes", ctx):
                        modes = sample_mode_set(m_modes, cfg.n_max, seed=mode_seed_for(cfg.seed, rep))
                        wf = WaveFunction(model, modes)
                        with open(combo / "modes.txt", "w", encoding="utf-8", newline="\n") as fh:
                            fh.write(mode_set_to_text(modes))

                    if cfg.methods:
                        _run_ensemble_pipeline(
                            cfg, icfg, grid, wf, combo, ctx, rep, snap_idx, log,
                            m_modes, float(k), ftm_fit_rows, bt_fit_rows,
                            series_store, combo_fits,
                        )

                    if cfg.run_spread:
                        with log.stage("spread", ctx):
                            sp = spread_test(wf, icfg, half_width=cfg.spread_half_width,
                                             t_final=cfg.diag_t_final, box=tuple(cfg.box))
                            rows = []
                            for si in range(len(sp.centers)):
                                for pa, pb in sp.initial[si]:
                                    rows.append((si, "initial", pa, pb, sp.scores[si]))
                                for pa, pb in sp.final[si]:
                                    rows.append((si, "final", pa, pb, sp.scores[si]))
                            _write_csv(combo / "spread.csv",
                                       ["set", "stage", "x_a", "x_b", "score"], rows)

                    if cfg.run_traces:
                        with log.stage("traces", ctx):
                            tr = trace_trajectories(wf, icfg, t_final=cfg.diag_t_final,
                                                    n_intervals=cfg.trace_intervals, grid=grid)
                            rows = []
                            for ti, path in enumerate(tr.paths):
                                for t, pa, pb in path:
                                    rows.append((ti, t, pa, pb))
                            _write_csv(combo / "traces.csv", ["trace", "t", "x_a", "x_b"], rows)
                            mrows = [
                                (ti, tr.trajectories[ti].initial[0], tr.trajectories[ti].initial[1],
                                 tr.path_lengths[ti], int(tr.visited_cells[ti]),
                                 tr.trajectories[ti].accepted)
                                for ti in range(len(tr))
                            ]
                            _write_csv(combo / "trace_metrics.csv",
                                       ["trace", "start_a", "start_b", "path_length",
                                        "visited_cells", "accepted"], mrows)

        with log.stage("aggregate"):
            if ftm_fit_rows:
                _write_csv(out / "fits.csv",
                           ["M", "k", "preset_seed", "H0", "tau", "R", "rms", "converged"],
                           ftm_fit_rows)
            if bt_fit_rows:
                _write_csv(out / "backtracking_fits.csv",
                           ["M", "k", "preset_seed", "H0", "tau", "R", "rms", "converged"],
                           bt_fit_rows)
            if series_store:
                rows = []
                for (m_modes, k, method), series_list in series_store.items():
                    values = np.stack([s.values for s in series_list])
                    times = series_list[0].times
                    for j in range(times.size):
                        rows.append((m_modes, k, method, times[j],
                                     float(values[:, j].mean()), float(values[:, j].std()),
                                     len(series_list)))
                _write_csv(out / "h_series_summary.csv",
                           ["M", "k", "method", "time", "mean_H", "std_H", "n_sets"], rows)
            sweep_rows = []
            for (m_modes, k), (fits, h0s) in combo_fits.items():
                if len(fits) < 2:
                    continue
                agg = aggregate(fits, h0s)
                sweep_rows.append((m_modes, k, agg.mean_tau, agg.std_tau,
                                   agg.mean_r, agg.std_r, agg.residue_fraction, len(fits)))
            if sweep_rows:
                _write_csv(out / "sweep.csv",
                           ["M", "k", "mean_tau", "std_tau", "mean_R", "std_R",
                            "residue_fraction", "n_sets"], sweep_rows)
    except StageError:
        elapsed = time.perf_counter() - t_start
        _write_manifest(out / MANIFEST_NAME, cfg, log.lines, "failed", elapsed)
        raise

    elapsed = time.perf_counter() - t_start
    _write_manifest(out / MANIFEST_NAME, cfg, log.lines, "complete", elapsed)
    return RunResult(out_dir=out, manifest_path=out / MANIFEST_NAME, elapsed_s=elapsed)


def _run_ensemble_pipeline(
    cfg: ExperimentConfig, icfg: IntegratorConfig, grid: CoarseGrid,
    wf: WaveFunction, combo: Path, ctx: str, rep: int, snap_idx,
    log: _StageLog, m_modes: int, k: float,
    ftm_fit_rows: list, bt_fit_rows: list,
    series_store: dict, combo_fits: dict,
) -> None:
    ens_seed = ensemble_seed_for(cfg.seed, rep)
    box = tuple(cfg.box)

    with log.stage("sample", ctx):
        if cfg.equilibrium_start:
            # Sample over the state's own support, not the analysis box: the
            # tail mass beyond the box re-enters later and must be in the
            # ensemble for rho_bar to track the conditioned state density.
            starts = sample_equilibrium(wf, cfg.n_traj, box=support_box(wf), seed=ens_seed)
            rho0 = None
        else:
            spec = EnsembleSpec(
                n_traj=cfg.n_traj, mean_a=cfg.mean_a, mean_b=cfg.mean_b,
                sigma_a=cfg.sigma_a, sigma_b=cfg.sigma_b,
                correlation=cfg.correlation, box=box, seed=ens_seed,
            )
            starts = sample_initial(spec)
            rho0 = spec.density

    with log.stage("evolve", ctx):
        snaps = evolve_points(wf, starts, icfg, box=box, workers=cfg.workers,
                              chunk_size=cfg.chunk_size,
                              rejection_ceiling=cfg.rejection_ceiling)

    with log.stage("snapshots", ctx):
        for j in snap_idx:
            t = float(snaps.times[j])
            pos = snaps.positions[j]
            _write_csv(combo / f"snapshots_t{j}.csv", ["id", "x_a", "x_b"],
                       ((int(snaps.ids[i]), pos[i, 0], pos[i, 1]) for i in range(pos.shape[0])))
            _write_matrix(combo / f"rho_grid_t{j}.csv", coarse_rho(grid, pos))
            _write_matrix(combo / f"psi2_grid_t{j}.csv", coarse_psi2(grid, wf, t))

    series_here: dict[str, HSeries] = {}
    with log.stage("metrics", ctx):
        # Distinct bootstrap streams per method, both derived from the
        # ensemble seed so replay reproduces the bands bit for bit.
        if "ftm" in cfg.methods:
            series_here["ftm"] = h_series_ftm(
                snaps, wf, grid, n_boot=cfg.n_boot, boot_seed=ens_seed + 59999)
        if "backtracking" in cfg.methods:
            dens0 = rho0 if rho0 is not None else (
                lambda xa, xb: density_original(wf, xa, xb, 0.0))
            series_here["backtracking"] = h_series_backtracking(
                wf, dens0, cfg.record_times, grid, icfg,
                points_per_cell=cfg.points_per_cell,
                n_boot=cfg.n_boot, boot_seed=ens_seed + 69991)
        rows = []
        for method in cfg.methods:
            rows.extend(_series_rows(series_here[method]))
        _write_csv(combo / "h_series.csv",
                   ["time", "H", "method", "empty_cells", "oob_frac",
                    "boot_mean", "boot_std"], rows)
        for method, series in series_here.items():
            series_store.setdefault((m_modes, k, method), []).append(series)

    if len(cfg.record_times) >= 6:
        with log.stage("fit", ctx):
            preset_seed = mode_seed_for(cfg.seed, rep)
            if "ftm" in series_here:
                fit = fit_decay(series_here["ftm"])
                ftm_fit_rows.append(_fit_row(m_modes, k, preset_seed, fit))
                fits, h0s = combo_fits.setdefault((m_modes, k), ([], []))
                fits.append(fit)
                h0s.append(float(series_here["ftm"].values[0]))
            if "backtracking" in series_here:
                fit = fit_decay(series_here["backtracking"])
                bt_fit_rows.append(_fit_row(m_modes, k, preset_seed, fit))


def parse_manifest(path) -> tuple[ExperimentConfig, str]:
    """Rebuild the configuration recorded in a manifest; returns (cfg, status)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != _MANIFEST_HEADER:
        raise ConfigError(f"{path}: not a pilotwave manifest")
    status = "unknown"
    for line in lines:
        if line.startswith("status = "):
            status = line[len("status = "):]
            break
    try:
        start = lines.index("[config]") + 1
    except ValueError:
        raise ConfigError(f"{path}: manifest has no [config] section") from None
    end = len(lines)
    for i in range(start, len(lines)):
        if lines[i].startswith("["):
            end = i
            break
    overrides = parse_config_text("\n".join(lines[start:end]))
    return apply_overrides(ExperimentConfig(), overrides), status


def replay(manifest_path, out_dir=None) -> RunResult:
    """Re-run the experiment recorded in a manifest.

    Writes into out_dir when given, else alongside the original with a
    _replay suffix; CSV outputs are byte-identical to the original run.
    """
    cfg, _ = parse_manifest(manifest_path)
    if out_dir is None:
        out_dir = str(Path(cfg.out_dir)) + "_replay"
    cfg = apply_overrides(cfg, {"out_dir": str(out_dir)})
    return run_experiment(cfg)
