"""Convex geometry: planes, polytopes, boxes, swept hulls and linear separation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SEP_TOL = 1e-9  # strict-disjointness tolerance, meters
DEFAULT_PENALTY = 10.0


class Overlapping(ValueError):
    """Hulls intersect or are closer than the separation tolerance."""


class Degenerate(ValueError):
    pass


def vec3(p) -> np.ndarray:
    v = np.asarray(p, dtype=float).reshape(3)
    if not np.isfinite(v).all():
        raise ValueError(f"non-finite coordinate {v}")
    return v


@dataclass(frozen=True)
class Hyperplane:
    """{p : normal.p + offset = 0}; the admissible side is normal.p + offset <= 0."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(-1)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm < 1e-15:
            raise Degenerate("zero normal")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def signed(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float) @ self.normal + self.offset

    def flipped(self) -> "Hyperplane":
        return Hyperplane(-self.normal, -self.offset)

    def project(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p - np.multiply.outer(self.signed(p), self.normal)


@dataclass(frozen=True)
class ConvexPolytope:
    halfspaces: tuple

    def __post_init__(self):
        hs = tuple(self.halfspaces)
        if not hs:
            raise ValueError("polytope needs at least one halfspace")
        object.__setattr__(self, "halfspaces", hs)

    @cached_property
    def A(self) -> np.ndarray:
        return np.array([h.normal for h in self.halfspaces])

    @cached_property
    def b(self) -> np.ndarray:
        return np.array([h.offset for h in self.halfspaces])

    def contains(self, p, tol: float = 1e-9):
        """Vectorised membership: A p + b <= tol."""
        p = np.asarray(p, dtype=float)
        return (p @ self.A.T + self.b <= tol).all(axis=-1)


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo, hi = vec3(self.min), vec3(self.max)
        if (lo > hi).any():
            raise ValueError("Aabb min must be <= max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def centered(cls, half) -> "Aabb":
        half = vec3(half)
        return cls(-half, half)

    @property
    def half(self) -> np.ndarray:
        return 0.5 * (self.max - self.min)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.max + self.min)

    def corners(self) -> np.ndarray:
        bits = np.array([[(i >> k) & 1 for k in range(3)] for i in range(8)], dtype=bool)
        return np.where(bits, self.max, self.min)

    def translated(self, p) -> "Aabb":
        p = vec3(p)
        return Aabb(self.min + p, self.max + p)

    def dilated(self, other: "Aabb") -> "Aabb":
        """Minkowski sum with another box."""
        return Aabb(self.min + other.min, self.max + other.max)

    def support(self, n) -> float:
        n = np.asarray(n, dtype=float)
        return float(np.where(n > 0, self.max, self.min) @ n)

    def overlaps(self, other: "Aabb", tol: float = SEP_TOL) -> bool:
        # touching (gap below tol) counts as overlap
        return bool((self.min <= other.max + tol).all() and (other.min <= self.max + tol).all())

    def contains(self, p, tol: float = 0.0):
        p = np.asarray(p, dtype=float)
        return ((p >= self.min - tol) & (p <= self.max + tol)).all(axis=-1)

    def as_hull(self) -> "ConvexHull":
        return ConvexHull(self.corners(), box=self)


@dataclass(frozen=True)
class ConvexHull:
    points: np.ndarray
    box: Aabb | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0 or pts.shape[1] != 3:
            raise ValueError("hull needs a non-empty list of 3-D points")
        if not np.isfinite(pts).all():
            raise ValueError("non-finite hull generator")
        pts = np.unique(pts, axis=0)
        object.__setattr__(self, "points", pts)
        if self.box is None:
            lo, hi = pts.min(0), pts.max(0)
            # generators that are exactly the 8 (or fewer, degenerate) box corners
            if len(pts) == len(np.unique(Aabb(lo, hi).corners(), axis=0)) and np.all(
                ((pts == lo) | (pts == hi)).all(1)
            ):
                object.__setattr__(self, "box", Aabb(lo, hi))

    def support(self, n) -> float:
        return float((self.points @ np.asarray(n, dtype=float)).max())

    @property
    def bounds(self) -> Aabb:
        return self.box if self.box is not None else Aabb(self.points.min(0), self.points.max(0))

    def translated(self, p) -> "ConvexHull":
        p = vec3(p)
        return ConvexHull(self.points + p, None if self.box is None else self.box.translated(p))


def swept_hull(shape: Aabb, a, b) -> ConvexHull:
    """Hull of the shape swept along segment [a, b] (Minkowski sum)."""
    a, b = vec3(a), vec3(b)
    c = shape.corners()
    pts = np.vstack([c + a, c + b])
    box = None
    if np.count_nonzero(np.abs(b - a) > 0) <= 1:
        box = Aabb(np.minimum(a, b) + shape.min, np.maximum(a, b) + shape.max)
    hull = ConvexHull(pts)
    if box is not None and hull.box is None:
        hull = ConvexHull(box.corners(), box=box)
    return hull


def min_norm_point(P: np.ndarray, tol: float = 1e-12, max_iter: int = 1000):
    """Wolfe's minimum-norm point of conv(P). Returns (x, weights over rows of P)."""
    P = np.asarray(P, dtype=float)
    scale = max(1.0, float((P * P).sum(1).max()))
    j0 = int(np.argmin((P * P).sum(1)))
    S = [j0]
    lam = np.array([1.0])
    x = P[j0].copy()
    for _ in range(max_iter):
        dots = P @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            Q = P[S]
            k = len(S)
            M = np.zeros((k + 1, k + 1))
            M[:k, :k] = Q @ Q.T
            M[:k, k] = 1.0
            M[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(M, rhs, rcond=None)[0][:k]
            if (alpha > 1e-14).all():
                lam = alpha
                x = alpha @ Q
                break
            neg = alpha <= 1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(neg, lam / (lam - alpha), np.inf)
            theta = float(min(1.0, ratio.min()))
            lam = lam + theta * (alpha - lam)
            keep = lam > 1e-14
            if not keep.any():
                keep[int(np.argmax(lam))] = True
            S = [s for s, kp in zip(S, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = lam @ P[S]
    w = np.zeros(len(P))
    w[S] = lam
    return x, w


def _box_gap_plane(a: Aabb, b: Aabb):
    """Max-margin plane between disjoint boxes when the gap is along one axis."""
    gaps = np.maximum(b.min - a.max, a.min - b.max)
    pos = gaps > SEP_TOL
    if pos.sum() != 1:
        return None
    k = int(np.argmax(pos))
    n = np.zeros(3)
    if b.min[k] - a.max[k] > SEP_TOL:
        n[k] = 1.0
        return Hyperplane(n, -0.5 * (a.max[k] + b.min[k]))
    n[k] = -1.0
    return Hyperplane(n, 0.5 * (b.max[k] + a.min[k]))


def separate_hard(a: ConvexHull, b: ConvexHull) -> Hyperplane:
    """Maximum-margin plane with ``a`` on the non-positive side."""
    if a.box is not None and b.box is not None:
        if a.box.overlaps(b.box):
            raise Overlapping("boxes intersect")
        h = _box_gap_plane(a.box, b.box)
        if h is not None:
            return h
    diff = (a.points[:, None, :] - b.points[None, :, :]).reshape(-1, 3)
    x, _ = min_norm_point(diff)
    d = np.linalg.norm(x)
    if d < SEP_TOL:
        raise Overlapping("hulls intersect")
    n = -x / d
    sa = float((a.points @ n).max())
    sb = float((b.points @ n).min())
    if sb - sa < SEP_TOL:
        raise Overlapping(f"margin {sb - sa:.3g} below tolerance")
    return Hyperplane(n, -0.5 * (sa + sb))


def margin(h: Hyperplane, a: ConvexHull, b: ConvexHull) -> float:
    return float(min(-h.signed(a.points).max(), h.signed(b.points).min()))


def hulls_intersect(a: ConvexHull, b: ConvexHull) -> bool:
    try:
        separate_hard(a, b)
    except Overlapping:
        return True
    return False


def separate_soft(neg, pos, penalty: float = DEFAULT_PENALTY) -> Hyperplane:
    """Soft-margin linear SVM: min 1/2|w|^2 + penalty * sum hinge. ``neg`` ends up mostly on the <= 0 side."""
    from sklearn.svm import SVC

    neg = np.atleast_2d(np.asarray(neg, dtype=float))
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    if len(neg) == 0 or len(pos) == 0:
        raise ValueError("both point sets must be non-empty")
    X = np.vstack([neg, pos])
    if np.ptp(X, axis=0).max() == 0.0:
        raise Degenerate("all points identical")
    y = np.r_[-np.ones(len(neg)), np.ones(len(pos))]
    clf = SVC(kernel="linear", C=penalty, tol=1e-6)
    clf.fit(X, y)
    w = clf.coef_.ravel()
    b = float(clf.intercept_[0])
    if np.linalg.norm(w) < 1e-9 * max(1.0, abs(b)):
        # optimum is a constant classifier: keep its decision with a plane
        # along the principal axis that puts every point on the sign(b) side
        axis = np.linalg.svd(X - X.mean(0))[2][0]
        proj = X @ axis
        off = 1.0 - proj.min() if b > 0 else -1.0 - proj.max()
        return Hyperplane(axis, off)
    # sklearn orders classes ascending, so the positive decision side is +1
    return Hyperplane(w, b)


def soft_margin_objective(w, b, neg, pos, penalty) -> float:
    neg = np.atleast_2d(neg)
    pos = np.atleast_2d(pos)
    hinge = np.r_[np.maximum(0, 1 + neg @ w + b), np.maximum(0, 1 - (pos @ w + b))]
    return float(0.5 * w @ w + penalty * hinge.sum())


def soft_margin_raw(neg, pos, penalty: float = DEFAULT_PENALTY):
    """Unnormalised (w, b) of the soft-margin SVM."""
    from sklearn.svm import SVC

    X = np.vstack([np.atleast_2d(neg), np.atleast_2d(pos)])
    y = np.r_[-np.ones(len(np.atleast_2d(neg))), np.ones(len(np.atleast_2d(pos)))]
    clf = SVC(kernel="linear", C=penalty, tol=1e-6).fit(X, y)
    return clf.coef_.ravel(), float(clf.intercept_[0])


def buffer_by_support(h: Hyperplane, shape) -> Hyperplane:
    """Shift the plane so that ``shape`` placed on the new negative side stays on the old one."""
    return Hyperplane(h.normal, h.offset + shape.support(h.normal))


def polytope_from_planes(planes) -> ConvexPolytope:
    return ConvexPolytope(tuple(planes))
