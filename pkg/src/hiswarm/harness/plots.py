"""Figures for a finished run, rendered straight to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .audit import sample_report_positions  # noqa: E402


def _obstacle_rects(ax, inst):
    for o in inst.obstacles:
        pts = np.asarray(o.points)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        ax.add_patch(plt.Rectangle(lo[:2], *(hi - lo)[:2], color="0.6", zorder=1))


def plot_xy(report, inst, path, rate=20.0):
    """Top view of every executed trajectory, starts as circles and goals as crosses."""
    times, pos = sample_report_positions(report, rate)
    fig, ax = plt.subplots(figsize=(6, 6))
    _obstacle_rects(ax, inst)
    cmap = plt.get_cmap("tab20")
    for k, rb in enumerate(inst.robots):
        xy = pos[rb.id]
        col = cmap(k % 20)
        ax.plot(xy[:, 0], xy[:, 1], color=col, lw=1.2, zorder=2)
        ax.plot(*rb.start[:2], "o", color=col, ms=5, zorder=3)
        ax.plot(*rb.goal[:2], "x", color=col, ms=6, zorder=3)
    ws = inst.workspace
    ax.set_xlim(ws.min[0], ws.max[0])
    ax.set_ylim(ws.min[1], ws.max[1])
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{report.name}: executed trajectories")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_separation(report, inst, path, rate=20.0):
    """Closest robot pair over time against the collision threshold."""
    times, pos = sample_report_positions(report, rate)
    ids = sorted(pos)
    X = np.stack([pos[i] for i in ids])
    half = (np.asarray(inst.shape.max) - np.asarray(inst.shape.min)) / 2
    # Chebyshev gap normalised by box size: below 1 on every axis means overlap
    worst = np.full(len(times), np.inf)
    for a in range(len(ids) - 1):
        r = np.abs(X[a + 1 :] - X[a][None]) / (2 * half)
        worst = np.minimum(worst, r.max(axis=2).min(axis=0))
    fig, ax = plt.subplots(figsize=(7, 3))
    if len(ids) > 1:
        ax.plot(times, worst, lw=1.0)
    ax.axhline(1.0, color="r", ls="--", lw=0.8, label="contact")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("closest pair (box units)")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_timings(timings, path):
    """Per-cycle planning time split by stage."""
    fig, ax = plt.subplots(figsize=(7, 3))
    n = len(timings.get("cycle", []))
    x = np.arange(n)
    bottom = np.zeros(n)
    for stage in ("route", "discrete", "trajectory"):
        v = np.asarray(timings.get(stage, [0.0] * n))
        ax.bar(x, v, bottom=bottom, label=stage)
        bottom += v
    ax.axhline(1.0, color="r", ls="--", lw=0.8)
    ax.set_xlabel("low-level cycle")
    ax.set_ylabel("seconds")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_all(report, inst, outdir) -> list:
    from pathlib import Path

    out = Path(outdir)
    files = [out / "trajectories_xy.png", out / "separation.png", out / "timings.png"]
    plot_xy(report, inst, files[0])
    plot_separation(report, inst, files[1])
    plot_timings(report.timings, files[2])
    return [str(f) for f in files]
