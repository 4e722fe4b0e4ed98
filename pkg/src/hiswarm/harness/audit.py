"""Post-hoc collision audit of executed trajectories.

Deliberately independent of the planners: it samples positions straight from
the Bezier control points and tests box overlap with plain numpy and scipy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull as QHull

PENETRATION = 1e-9


@dataclass
class CollisionEvent:
    a: int
    b: object  # robot id, or "obstacle:<index>"
    t_start: float
    t_end: float
    depth: float

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "t_start": self.t_start, "t_end": self.t_end, "depth": self.depth}


def _de_casteljau(points, s):
    """Bezier positions at parameters ``s`` in [0, 1] (shape (len(s), 3))."""
    P = np.broadcast_to(points, (len(s),) + points.shape).copy()
    s = s[:, None, None]
    for k in range(points.shape[0] - 1, 0, -1):
        P = (1 - s) * P[:, :k] + s * P[:, 1 : k + 1]
    return P[:, 0]


def sample_curves(curves, times) -> np.ndarray:
    """Positions at ``times`` for a list of (t0, points, duration); holds the last point after the end."""
    out = np.empty((len(times), 3))
    curves = sorted(curves, key=lambda c: c[0])
    starts = np.array([c[0] for c in curves])
    idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(curves) - 1)
    for k in np.unique(idx):
        t0, pts, dur = curves[k]
        m = idx == k
        s = np.clip((times[m] - t0) / dur, 0.0, 1.0)
        out[m] = _de_casteljau(np.asarray(pts, float), s)
    return out


def sample_report_positions(report, rate: float):
    """(times, {robot: positions}) on a common grid at ``rate`` Hz."""
    curves = {}
    t_end = 0.0
    for r in report.robots:
        cs = [(c["t0"], c["control_points"], c["duration"]) for c in r["trajectory"]]
        if not cs:
            cs = [(0.0, [r["final_position"]], 1.0)]
        curves[r["id"]] = cs
        t_end = max(t_end, max(c[0] + c[2] for c in cs))
    n = int(np.ceil(t_end * rate)) + 1
    times = np.linspace(0.0, t_end, n) if n > 1 else np.zeros(1)
    return times, {rid: sample_curves(cs, times) for rid, cs in curves.items()}


def _obstacle_equations(obstacles, shape):
    """Facet equations of each obstacle grown by the robot box (Minkowski sum with -shape)."""
    lo, hi = np.asarray(shape.min, float), np.asarray(shape.max, float)
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    eqs = []
    for o in obstacles:
        pts = np.asarray(o.points, float)
        grown = (pts[:, None, :] - corners[None, :, :]).reshape(-1, 3)
        eqs.append(QHull(grown).equations)
    return eqs


def _merge(flags, times, depth):
    """Runs of True in ``flags`` as (t_start, t_end, max depth)."""
    out = []
    if not flags.any():
        return out
    f = np.concatenate([[False], flags, [False]]).astype(int)
    d = np.diff(f)
    for s, e in zip(np.nonzero(d == 1)[0], np.nonzero(d == -1)[0]):
        out.append((float(times[s]), float(times[e - 1]), float(depth[s:e].max())))
    return out


def audit_positions(times, positions: dict, shape, obstacles=()) -> list:
    """Collision events among robot boxes and against obstacles."""
    ids = sorted(positions)
    half = (np.asarray(shape.max, float) - np.asarray(shape.min, float)) / 2
    centre = (np.asarray(shape.max, float) + np.asarray(shape.min, float)) / 2
    X = np.stack([positions[i] + centre for i in ids])  # (R, T, 3)
    events = []
    for a in range(len(ids)):
        # penetration depth per axis; boxes overlap when every axis overlaps
        gap = 2 * half[None, None, :] - np.abs(X[a + 1 :] - X[a][None])
        depth = gap.min(axis=2)
        for k in np.nonzero((depth > PENETRATION).any(axis=1))[0]:
            for t0, t1, dd in _merge(depth[k] > PENETRATION, times, depth[k]):
                events.append(CollisionEvent(ids[a], ids[a + 1 + k], t0, t1, dd))
    for j, eq in enumerate(_obstacle_equations(obstacles, shape)):
        for a, rid in enumerate(ids):
            signed = positions[rid] @ eq[:, :3].T + eq[:, 3]  # <= 0 inside
            depth = -signed.max(axis=1)
            for t0, t1, dd in _merge(depth > PENETRATION, times, depth):
                events.append(CollisionEvent(rid, f"obstacle:{j}", t0, t1, dd))
    events.sort(key=lambda e: (e.t_start, e.a, str(e.b)))
    return events


def audit_collisions(report, shape, rate: float = 100.0, obstacles=()) -> list:
    times, pos = sample_report_positions(report, rate)
    return audit_positions(times, pos, shape, obstacles)
