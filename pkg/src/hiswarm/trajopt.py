"""Piecewise Bezier trajectories: safety corridors, min-derivative QP, rescaling."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .geometry import Aabb, Hyperplane, Overlapping, separate_hard, swept_hull
from .optkernel import QuadraticProgram, solve_qp


class Infeasible(RuntimeError):
    pass


class SeparationFailed(RuntimeError):
    pass


# ---------------------------------------------------------------- Bernstein basis


def bernstein(p: int, s) -> np.ndarray:
    """Basis values B_0..B_p at normalised times ``s`` in [0, 1], shape (len(s), p+1)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))[:, None]
    v = np.arange(p + 1)
    binom = np.array([comb(p, k) for k in v], dtype=float)
    return binom * s**v * (1.0 - s) ** (p - v)


def _diff(points: np.ndarray, order: int) -> np.ndarray:
    d = np.asarray(points, dtype=float)
    for _ in range(order):
        d = d[1:] - d[:-1]
    return d


@dataclass
class BezierCurve:
    points: np.ndarray  # (p+1, 3)
    duration: float

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 2:
            raise ValueError("degree must be >= 1")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    @property
    def degree(self) -> int:
        return self.points.shape[0] - 1

    def hodograph(self, order: int) -> np.ndarray:
        """Control points of the ``order``-th derivative curve (empty past the degree)."""
        p = self.degree
        if order > p:
            return np.zeros((0, self.points.shape[1]))
        scale = factorial(p) / factorial(p - order) / self.duration**order
        return scale * _diff(self.points, order)

    def eval(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        h = self.hodograph(order)
        if h.shape[0] == 0:
            return np.zeros(t.shape + (self.points.shape[1],))
        s = np.clip(t / self.duration, 0.0, 1.0)
        out = bernstein(h.shape[0] - 1, s.ravel()) @ h
        return out.reshape(t.shape + (self.points.shape[1],))

    def scaled(self, factor: float) -> "BezierCurve":
        return BezierCurve(self.points.copy(), self.duration * factor)


def bezier_eval(c: BezierCurve, t, order: int = 0) -> np.ndarray:
    """Value or derivative at time ``t``; orders above the degree give zero."""
    if order < 0:
        raise ValueError("order must be non-negative")
    return c.eval(t, order)


def bernstein_product_integrals(q: int) -> np.ndarray:
    """M[v, w] = int_0^1 B_v^q B_w^q ds, exactly."""
    v = np.arange(q + 1)
    cv = np.array([comb(q, k) for k in v], dtype=float)
    c2 = np.array([[comb(2 * q, a + b) for b in v] for a in v], dtype=float)
    return np.outer(cv, cv) / c2 / (2 * q + 1)


def difference_matrix(p: int, order: int) -> np.ndarray:
    """D with D @ points = order-th forward differences, shape (p-order+1, p+1)."""
    D = np.eye(p + 1)
    for _ in range(order):
        D = D[1:] - D[:-1]
    return D


def gram_matrix(p: int, order: int, duration: float) -> np.ndarray:
    """Q with u' Q u = int_0^T |f^(order)|^2 dt for one coordinate."""
    if order > p:
        return np.zeros((p + 1, p + 1))
    D = difference_matrix(p, order)
    scale = (factorial(p) / factorial(p - order)) ** 2 / duration ** (2 * order - 1)
    return scale * D.T @ bernstein_product_integrals(p - order) @ D


# ---------------------------------------------------------------- trajectories


@dataclass
class DynLimits:
    v_max: float = 5.0
    a_max: float = 5.0
    gamma: float = 1.2
    weights: dict = field(default_factory=lambda: {4: 1.0})  # derivative order -> weight
    C: int = 4
    p: int = 7

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("rescale factor must exceed 1")
        if self.p < self.C + 1:
            raise ValueError("degree must be at least C + 1")


@dataclass
class PiecewiseTrajectory:
    curves: list
    relaxed: bool = False
    cost: float | None = None
    kkt: float | None = None
    rescales: int = 0

    @property
    def durations(self) -> np.ndarray:
        return np.array([c.duration for c in self.curves])

    @property
    def duration(self) -> float:
        return float(self.durations.sum())

    @property
    def joints(self) -> np.ndarray:
        return np.r_[0.0, np.cumsum(self.durations)]

    def eval(self, t, order: int = 0) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        T = self.joints
        k = np.clip(np.searchsorted(T, t, side="right") - 1, 0, len(self.curves) - 1)
        out = np.zeros((t.size, 3))
        for i in np.unique(k):
            m = k == i
            out[m] = self.curves[i].eval(np.clip(t[m] - T[i], 0.0, self.curves[i].duration), order)
        return out

    def state(self, t: float, C: int) -> np.ndarray:
        """Derivatives 0..C at time ``t``, shape (C+1, 3)."""
        return np.vstack([self.eval(t, j) for j in range(C + 1)])

    def end_state(self, C: int) -> np.ndarray:
        c = self.curves[-1]
        return np.vstack([c.eval(c.duration, j) for j in range(C + 1)])

    def head(self, n: int) -> "PiecewiseTrajectory":
        return PiecewiseTrajectory(self.curves[:n], self.relaxed, rescales=self.rescales)

    def scaled(self, factor: float) -> "PiecewiseTrajectory":
        return PiecewiseTrajectory([c.scaled(factor) for c in self.curves], self.relaxed, self.cost, self.kkt, self.rescales)

    def peaks(self, samples: int = 200) -> tuple:
        """Sampled max speed and max acceleration."""
        v = a = 0.0
        for c in self.curves:
            ts = np.linspace(0.0, c.duration, samples)
            v = max(v, float(np.linalg.norm(c.eval(ts, 1), axis=1).max()))
            a = max(a, float(np.linalg.norm(c.eval(ts, 2), axis=1).max()))
        return v, a

    def continuity_residual(self, C: int) -> float:
        r = 0.0
        for a, b in zip(self.curves, self.curves[1:]):
            for j in range(C + 1):
                r = max(r, float(np.abs(a.eval(a.duration, j) - b.eval(0.0, j)).max()))
        return r

    def sample(self, rate: float, t0: float = 0.0):
        """Uniform samples (t, xyz) at ``rate`` Hz including both ends."""
        n = max(2, int(np.ceil(self.duration * rate)) + 1)
        ts = np.linspace(0.0, self.duration, n)
        return ts + t0, self.eval(ts)

    def to_dict(self) -> dict:
        return {
            "relaxed": self.relaxed,
            "curves": [{"duration": c.duration, "control_points": c.points.tolist()} for c in self.curves],
        }

    @classmethod
    def from_dict(cls, d) -> "PiecewiseTrajectory":
        return cls([BezierCurve(np.array(c["control_points"]), c["duration"]) for c in d["curves"]], d["relaxed"])


# ---------------------------------------------------------------- corridors


@dataclass(frozen=True)
class SafetyCorridor:
    """Halfspaces n.x + b <= 0 for one segment; an empty tuple is unbounded."""

    halfspaces: tuple = ()
    short: bool = False

    @property
    def A(self) -> np.ndarray:
        return np.array([h.normal for h in self.halfspaces]).reshape(-1, 3)

    @property
    def b(self) -> np.ndarray:
        return np.array([h.offset for h in self.halfspaces])

    def contains(self, p, tol: float = 1e-8):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        if not self.halfspaces:
            return np.ones(len(p), dtype=bool)
        return (p @ self.A.T + self.b <= tol).all(axis=1)


def enclosing_radius(shape: Aabb) -> float:
    """Radius of the smallest origin-centred sphere around the shape."""
    return float(np.linalg.norm(np.maximum(np.abs(shape.min), np.abs(shape.max))))


def safety_radii(shape: Aabb, limits: DynLimits, delta_l: float) -> tuple:
    r = enclosing_radius(shape)
    return 2.0 * (limits.v_max * delta_l + r), limits.v_max * delta_l + r


def _box_distance(a: Aabb, b: Aabb) -> float:
    gap = np.maximum(0.0, np.maximum(a.min - b.max, b.min - a.max))
    return float(np.linalg.norm(gap))


def _points(path) -> np.ndarray:
    pts = np.asarray(getattr(path, "vertices", path), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("path must be a sequence of 3-D positions")
    return pts


def _segment(pts, k):
    """k-th segment of a waypoint list; paths that ended stay put."""
    i = min(k, len(pts) - 1)
    j = min(k + 1, len(pts) - 1)
    return pts[i], pts[j]


def build_corridors(path, neighbors, obstacles, shape: Aabb, limits: DynLimits, delta_l: float, dt: float = 0.5, short_horizon=None):
    """One corridor per segment of ``path`` (waypoints on a shared dt grid).

    Segments starting before ``short_horizon`` (default ``delta_l``) get a
    plane per nearby neighbor and per nearby obstacle; later segments only
    obstacle planes.
    """
    horizon = delta_l if short_horizon is None else short_horizon
    pts = _points(path)
    d_r, d_e = safety_radii(shape, limits, delta_l)
    nbrs = [(rid, _points(q)) for rid, q in neighbors]
    out = []
    for k in range(len(pts) - 1):
        a, b = _segment(pts, k)
        mine = swept_hull(shape, a, b)
        mbox = mine.bounds
        planes = []
        short = k * dt < horizon - 1e-12
        if short:
            for rid, q in nbrs:
                qa, qb = _segment(q, k)
                other = swept_hull(shape, qa, qb)
                if _box_distance(mbox, other.bounds) > d_r:
                    continue
                try:
                    h = separate_hard(mine, other)
                except Overlapping as e:
                    raise SeparationFailed(f"segment {k} overlaps robot {rid}") from e
                planes.append(Hyperplane(h.normal, h.offset + shape.support(h.normal)))
        for o in obstacles:
            if _box_distance(mbox, o.bounds) > d_e:
                continue
            try:
                h = separate_hard(mine, o)
            except Overlapping as e:
                raise SeparationFailed(f"segment {k} overlaps an obstacle") from e
            n = h.normal
            # push the plane onto the obstacle, then back off by the robot extent
            planes.append(Hyperplane(n, -float((o.points @ n).min()) + shape.support(n)))
        out.append(SafetyCorridor(tuple(planes), short))
    return out


# ---------------------------------------------------------------- QP


def _deriv_row(p: int, tau: float, order: int, at_end: bool) -> np.ndarray:
    """Coefficients over one segment's control points of f^(order) at 0 or tau."""
    row = np.zeros(p + 1)
    D = difference_matrix(p, order)
    row[:] = D[-1] if at_end else D[0]
    return row * factorial(p) / factorial(p - order) / tau**order


class _Builder:
    def __init__(self, K, p, taus):
        self.K, self.p, self.taus = K, p, list(taus)
        self.n = K * (p + 1) * 3
        self.rows, self.rhs = [], []

    def col(self, k, v, d):
        return ((k * (self.p + 1)) + v) * 3 + d

    def deriv(self, k, order, at_end, d):
        r = np.zeros(self.n)
        coef = _deriv_row(self.p, self.taus[k], order, at_end)
        for v in range(self.p + 1):
            if coef[v]:
                r[self.col(k, v, d)] = coef[v]
        return r

    def eq(self, row, rhs):
        s = np.abs(row).max()
        self.rows.append(row / s)
        self.rhs.append(rhs / s)


def _assemble(initial_state, goal, durations, limits, corridors=None, waypoints=None):
    p, C = limits.p, limits.C
    taus = [float(t) for t in durations]
    K = len(taus)
    if K < 1:
        raise ValueError("need at least one segment")
    x0 = np.atleast_2d(np.asarray(initial_state, dtype=float))
    goal = np.asarray(goal, dtype=float).reshape(3)
    B = _Builder(K, p, taus)
    H = np.zeros((B.n, B.n))
    for k, tau in enumerate(taus):
        Q = sum(w * gram_matrix(p, j, tau) for j, w in limits.weights.items() if w)
        sl = slice(k * (p + 1) * 3, (k + 1) * (p + 1) * 3)
        H[sl, sl] = 2.0 * np.kron(Q, np.eye(3))  # objective = integral
    H = 0.5 * (H + H.T)
    for d in range(3):
        for j in range(min(C, x0.shape[0] - 1) + 1):
            B.eq(B.deriv(0, j, False, d), x0[j, d])
        B.eq(B.deriv(K - 1, 0, True, d), goal[d])
        for j in range(1, C + 1):
            B.eq(B.deriv(K - 1, j, True, d), 0.0)
        for k in range(K - 1):
            for j in range(C + 1):
                B.eq(B.deriv(k, j, True, d) - B.deriv(k + 1, j, False, d), 0.0)
        for k, w in (waypoints or {}).items():
            if k < K - 1:
                B.eq(B.deriv(k, 0, True, d), float(np.asarray(w)[d]))
    A_in, b_in = [], []
    for k, cor in enumerate(corridors or []):
        for h in cor.halfspaces:
            for v in range(p + 1):
                r = np.zeros(B.n)
                r[[B.col(k, v, d) for d in range(3)]] = h.normal
                A_in.append(r)
                b_in.append(-h.offset)
    return QuadraticProgram(H, np.zeros(B.n), np.array(B.rows), np.array(B.rhs), np.array(A_in), np.array(b_in)), B


def _to_traj(x, B, relaxed, res):
    pts = x.reshape(B.K, B.p + 1, 3)
    curves = [BezierCurve(pts[k], B.taus[k]) for k in range(B.K)]
    return PiecewiseTrajectory(curves, relaxed, res.fun, res.kkt)


def solve_trajectory_qp(corridors, initial_state, goal, durations, limits: DynLimits, waypoints=None):
    """Minimum weighted-derivative trajectory with every control point in its corridor.

    ``initial_state`` rows are derivatives 0..C at the start. ``waypoints``
    optionally pins f at the end of chosen segments ({segment: position}).
    """
    if len(corridors) != len(durations):
        raise ValueError("one corridor per segment")
    qp, B = _assemble(initial_state, goal, durations, limits, corridors, waypoints)
    res = solve_qp(qp)
    if not res.success:
        raise Infeasible(f"trajectory QP {res.status}")
    return _to_traj(res.x, B, False, res)


def relaxed_fallback(path, initial_state, limits: DynLimits, durations=None, dt: float = 0.5):
    """Corridor-free QP through every discrete waypoint at its segment end."""
    pts = _points(path)
    K = len(pts) - 1
    if K < 1:
        pts = np.vstack([pts, pts])
        K = 1
    if durations is None:
        durations = [dt] * K
    wps = {k: pts[k + 1] for k in range(K - 1)}
    qp, B = _assemble(initial_state, pts[-1], durations, limits, None, wps)
    res = solve_qp(qp)
    if not res.success:
        raise Infeasible(f"relaxed QP {res.status}")
    return _to_traj(res.x, B, True, res)


def rescale_trajectory(tr: PiecewiseTrajectory, limits: DynLimits, samples: int = 200, max_iter: int = 200):
    """Stretch all durations by gamma until sampled speed and acceleration fit the limits."""
    out = tr
    n = 0
    while n < max_iter:
        v, a = out.peaks(samples)
        if v <= limits.v_max and a <= limits.a_max:
            break
        out = out.scaled(limits.gamma)
        n += 1
    out.rescales = tr.rescales + n
    return out


def rescales_needed(v_peak: float, a_peak: float, limits: DynLimits) -> int:
    """Smallest n with v/gamma^n <= V_max and a/gamma^2n <= A_max."""
    lg = np.log(limits.gamma)
    nv = np.log(v_peak / limits.v_max) / lg if v_peak > limits.v_max else 0.0
    na = np.log(a_peak / limits.a_max) / (2 * lg) if a_peak > limits.a_max else 0.0
    return int(np.ceil(max(nv, na) - 1e-12))


def rest_state(p, C: int) -> np.ndarray:
    s = np.zeros((C + 1, 3))
    s[0] = np.asarray(p, dtype=float)
    return s

