"""Figure assembly for the four supported kinds.

All rendering goes through the Agg backend at a fixed dpi so repeated
renders of the same inputs are byte-identical.  The "bare" option strips
every decoration (text, ticks, colorbar) and pins each panel to exactly
half the canvas; the pixel-equality guarantee for equal heatmap inputs
holds in that mode, where no asymmetric furniture exists.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend must be pinned first
import numpy as np  # noqa: E402

from . import schema  # noqa: E402
from .schema import SchemaError  # noqa: E402

KINDS = ("heatmap-pair", "trajectories", "h-curve", "sweep")

_DPI = 100


@dataclass(frozen=True)
class PlotJob:
    """One figure request against a run directory.

    combo picks the M<m>_k<k>_rep<r> leg (first one when None); index picks
    the snapshot grid pair for heatmaps (last one when None).
    """

    run: Path
    figure: str
    out: Path
    combo: str | None = None
    index: int | None = None
    cmap: str = "viridis"
    bare: bool = False

    def __post_init__(self) -> None:
        if self.figure not in KINDS:
            raise SchemaError(
                f"unknown figure kind '{self.figure}'; expected one of {', '.join(KINDS)}")


def shared_raster(data: np.ndarray, vmin: float, vmax: float, cmap: str) -> np.ndarray:
    """RGBA bytes of one heatmap panel under an explicit shared scale.

    This is the exact colormap pipeline the heatmap panels feed imshow,
    exposed so equality of two panels can be checked at the raster level.
    """
    norm = matplotlib.colors.Normalize(vmin=vmin, vmax=vmax)
    return matplotlib.colormaps[cmap](norm(np.asarray(data, dtype=float)), bytes=True)


def render(job: PlotJob) -> Path:
    out = Path(job.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig = {
        "heatmap-pair": _heatmap_pair,
        "trajectories": _trajectories,
        "h-curve": _h_curve,
        "sweep": _sweep,
    }[job.figure](job)
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def _strip(ax) -> None:
    ax.set_axis_off()
    ax.margins(0)


# -- heatmap pair ------------------------------------------------------------

def _heatmap_pair(job: PlotJob):
    combo = schema.pick_combo(job.run, job.combo)
    indices = schema.grid_indices(combo)
    index = indices[-1] if job.index is None else job.index
    if index not in indices:
        raise SchemaError(f"{combo.path.name} has no grid pair t{index}; "
                          f"available: {indices}")
    rho, psi2 = schema.load_grid_pair(combo, index)
    vmax = float(max(rho.max(), psi2.max())) or 1.0
    box = schema.manifest_box(job.run)
    extent = box if box else None
    snap_times = schema.manifest_snapshot_times(job.run)
    stamp = f" at t = {snap_times[index]:.4g}" if index < len(snap_times) else ""

    if job.bare:
        fig = plt.figure(figsize=(8.0, 4.0))
        axes = [fig.add_axes([0.0, 0.0, 0.5, 1.0]),
                fig.add_axes([0.5, 0.0, 0.5, 1.0])]
    else:
        fig, axes = plt.subplots(1, 2, figsize=(8.0, 4.4), sharey=True)

    images = []
    for ax, data, title in zip(axes, (rho, psi2),
                               ("sample density", "state density")):
        # transpose: file rows index x_a, which belongs on the horizontal axis
        images.append(ax.imshow(
            data.T, origin="lower", cmap=job.cmap, vmin=0.0, vmax=vmax,
            extent=extent, aspect="auto", interpolation="nearest"))
        if job.bare:
            _strip(ax)
        else:
            ax.set_title(title + stamp, fontsize=10)
            ax.set_xlabel("x_a")
    if not job.bare:
        axes[0].set_ylabel("x_b")
        fig.colorbar(images[0], ax=axes, location="bottom", shrink=0.6,
                     pad=0.16, label="density")
    return fig


# -- trajectory panels -------------------------------------------------------

def _trajectories(job: PlotJob):
    combo = schema.pick_combo(job.run, job.combo)
    spread = schema.load_spread(combo)
    traces = schema.load_traces(combo)
    box = schema.manifest_box(job.run)

    fig, (ax_s, ax_t) = plt.subplots(1, 2, figsize=(9.0, 4.4))
    palette = plt.rcParams["axes.prop_cycle"].by_key()["color"]

    for si in np.unique(spread["set"]):
        color = palette[int(si) % len(palette)]
        sel = spread["set"] == si
        first = spread["stage"][sel] == "initial"
        score = float(spread["score"][sel][0])
        ax_s.plot(spread["x_a"][sel][first], spread["x_b"][sel][first],
                  ".", color=color, ms=2, alpha=0.5)
        ax_s.plot(spread["x_a"][sel][~first], spread["x_b"][sel][~first],
                  "x", color=color, ms=4,
                  label=f"set {int(si)}: score {score:.2f}")

    for ti in np.unique(traces["trace"]):
        color = palette[int(ti) % len(palette)]
        sel = traces["trace"] == ti
        ax_t.plot(traces["x_a"][sel], traces["x_b"][sel],
                  "-", color=color, lw=0.7)
        ax_t.plot(traces["x_a"][sel][:1], traces["x_b"][sel][:1],
                  "o", color=color, ms=4)

    for ax, title in ((ax_s, "cluster spread"), (ax_t, "single trajectories")):
        if box:
            ax.set_xlim(box[0], box[1])
            ax.set_ylim(box[2], box[3])
        if job.bare:
            _strip(ax)
        else:
            ax.set_title(title, fontsize=10)
            ax.set_xlabel("x_a")
            ax.set_ylabel("x_b")
    if not job.bare:
        ax_s.legend(fontsize=7, loc="upper right")
        fig.tight_layout()
    return fig


# -- H(t) curve --------------------------------------------------------------

def _h_curve(job: PlotJob):
    combo = schema.pick_combo(job.run, job.combo)
    methods = schema.load_h_series(combo)

    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for name, marker in zip(sorted(methods), "os^d"):
        tab = methods[name]
        bars = tab["boot_std"]
        yerr = bars if bool(np.isfinite(bars).all()) else None
        ax.errorbar(tab["time"], tab["H"], yerr=yerr, fmt=marker + "-",
                    ms=4, lw=0.9, capsize=2, label=name)

    fit = schema.fit_for_combo(job.run, combo)
    if fit is None:
        print(f"notice: no fit row for {combo.path.name}; rendering data-only",
              file=sys.stderr)
        if not job.bare:
            ax.text(0.02, 0.02, "no fit available", transform=ax.transAxes,
                    fontsize=8, color="gray")
    else:
        some = next(iter(methods.values()))
        t_dense = np.linspace(float(some["time"].min()),
                              float(some["time"].max()), 400)
        curve = (fit["H0"] - fit["R"]) * np.exp(-t_dense / fit["tau"]) + fit["R"]
        ax.plot(t_dense, curve, "k--", lw=1.0,
                label=f"fit: tau = {fit['tau']:.3g}, R = {fit['R']:.3g}")

    ax.set_ylim(bottom=0.0)
    if job.bare:
        _strip(ax)
    else:
        ax.set_xlabel("t")
        ax.set_ylabel("H")
        ax.set_title(combo.path.name, fontsize=10)
        ax.legend(fontsize=8)
        fig.tight_layout()
    return fig


# -- coupling sweep ----------------------------------------------------------

def _sweep(job: PlotJob):
    table = schema.load_sweep(job.run)

    fig, (ax_tau, ax_r) = plt.subplots(2, 1, figsize=(6.4, 6.6), sharex=True)
    for m, marker in zip(np.unique(table["M"]), "os^dv<>"):
        sel = table["M"] == m
        order = np.argsort(table["k"][sel])
        k = table["k"][sel][order]
        ax_tau.errorbar(k, table["mean_tau"][sel][order],
                        yerr=table["std_tau"][sel][order],
                        fmt=marker, ms=5, capsize=3, label=f"M = {int(m)}")
        ax_r.errorbar(k, table["mean_R"][sel][order],
                      yerr=table["std_R"][sel][order],
                      fmt=marker, ms=5, capsize=3, label=f"M = {int(m)}")

    if job.bare:
        _strip(ax_tau)
        _strip(ax_r)
    else:
        ax_tau.set_ylabel("tau")
        ax_r.set_ylabel("R")
        ax_r.set_xlabel("k")
        ax_tau.legend(fontsize=8)
        fig.tight_layout()
    return fig
