import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiswarm.geometry import (
    Aabb,
    ConvexHull,
    ConvexPolytope,
    Degenerate,
    Hyperplane,
    Overlapping,
    buffer_by_support,
    hulls_intersect,
    min_norm_point,
    separate_hard,
    separate_soft,
    soft_margin_objective,
    soft_margin_raw,
    swept_hull,
)
from hiswarm.optkernel import QuadraticProgram, solve_qp

BOX = Aabb([-0.12, -0.12, -0.2], [0.12, 0.12, 0.2])


def hull_distance_qp(A, B):
    """min |A'l - B'm|^2 over simplex weights, solved with the in-house QP."""
    na, nb = len(A), len(B)
    M = np.hstack([A.T, -B.T])
    H = 2 * M.T @ M
    eq = np.zeros((2, na + nb))
    eq[0, :na] = 1
    eq[1, na:] = 1
    r = solve_qp(QuadraticProgram(H, np.zeros(na + nb), A_eq=eq, b_eq=[1, 1], A_in=-np.eye(na + nb), b_in=np.zeros(na + nb)))
    assert r.success
    return np.sqrt(max(r.fun, 0.0))


# swept hull

def test_swept_zero_length_is_translated_box():
    cube = Aabb([0, 0, 0], [1, 1, 1])
    h = swept_hull(cube, [0, 0, 0], [0, 0, 0])
    assert len(h.points) == 8
    assert {tuple(p) for p in h.points} == {tuple(p) for p in cube.corners()}
    t = swept_hull(cube, [1, 2, 3], [1, 2, 3])
    assert np.allclose(np.sort(t.points, 0), np.sort(cube.corners() + [1, 2, 3], 0))


def test_swept_extent():
    h = swept_hull(BOX, [0, 0, 0], [1, 0, 0])
    assert h.points[:, 0].min() == pytest.approx(-0.12)
    assert h.points[:, 0].max() == pytest.approx(1.12)
    assert len(swept_hull(BOX, [0, 0, 0], [1, 1, 0.5]).points) == 16


def _in_hull(points, p):
    x, _ = min_norm_point(points - p)
    return np.linalg.norm(x) < 1e-7


def _seg_box_distance(shape, a, b, p, n=1001):
    t = np.linspace(0, 1, n)[:, None]
    q = p - (a + t * (b - a))
    d = np.maximum(0, np.maximum(shape.min - q, q - shape.max))
    return np.linalg.norm(d, axis=1).min()


def test_swept_containment_matches_sampling():
    rng = np.random.default_rng(0)
    a = np.array([0.0, 0.0, 0.0])
    b = np.array([0.8, -0.5, 0.3])
    h = swept_hull(BOX, a, b)
    checked = 0
    for p in rng.uniform([-0.4, -0.8, -0.4], [1.2, 0.4, 0.7], size=(1000, 3)):
        d = _seg_box_distance(BOX, a, b, p)
        if 0 < d < 2e-3:
            continue  # inside the sampling resolution band
        assert _in_hull(h.points, p) == (d == 0.0)
        checked += 1
    assert checked > 900


# hard separation

def test_hard_point_pair():
    h = separate_hard(ConvexHull([[0, 0, 0]]), ConvexHull([[2, 0, 0]]))
    assert h.normal == pytest.approx([1, 0, 0])
    assert h.offset == pytest.approx(-1)


def test_hard_cubes():
    c = Aabb.centered([0.5, 0.5, 0.5])
    h = separate_hard(c.as_hull(), c.translated([3, 0, 0]).as_hull())
    assert h.normal == pytest.approx([1, 0, 0]) and h.offset == pytest.approx(-1.5)


def test_hard_symmetric():
    rng = np.random.default_rng(1)
    A = ConvexHull(rng.random((6, 3)))
    B = ConvexHull(rng.random((6, 3)) + [2, 0.3, 0])
    h1, h2 = separate_hard(A, B), separate_hard(B, A)
    assert h1.normal == pytest.approx(-h2.normal, abs=1e-7)
    assert h1.offset == pytest.approx(-h2.offset, abs=1e-7)


def test_hard_overlap_raises():
    with pytest.raises(Overlapping):
        separate_hard(ConvexHull(np.vstack([np.eye(3), -np.ones(3)])), ConvexHull([[0.1, 0, 0]]))
    c = Aabb([0, 0, 0], [1, 1, 1])
    with pytest.raises(Overlapping):  # touching boxes
        separate_hard(c.as_hull(), c.translated([1, 0, 0]).as_hull())


@pytest.mark.parametrize("seed", range(30))
def test_hard_random_matches_qp_distance(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(int(rng.integers(1, 8)), 3))
    d = rng.normal(size=3)
    B = rng.normal(size=(int(rng.integers(1, 8)), 3)) + 6 * d / np.linalg.norm(d)
    try:
        h = separate_hard(ConvexHull(A), ConvexHull(B))
    except Overlapping:
        assert hull_distance_qp(A, B) < 1e-6
        return
    sa, sb = h.signed(A), h.signed(B)
    assert (sa < 0).all() and (sb > 0).all()
    margin = min(-sa.max(), sb.min())
    assert 2 * margin == pytest.approx(hull_distance_qp(A, B), abs=1e-6)
    assert -sa.max() == pytest.approx(sb.min(), abs=1e-7)


# soft separation

def test_soft_separable_equals_hard():
    rng = np.random.default_rng(4)
    A = rng.random((8, 3))
    B = rng.random((8, 3)) + [2, 0, 0]
    hs = separate_soft(A, B, penalty=1e6)
    hh = separate_hard(ConvexHull(A), ConvexHull(B))
    assert hs.normal == pytest.approx(hh.normal, abs=1e-4)
    assert hs.offset == pytest.approx(hh.offset, abs=1e-4)


def _soft_qp(neg, pos, C):
    X = np.vstack([neg, pos])
    y = np.r_[-np.ones(len(neg)), np.ones(len(pos))]
    n = len(X)
    nv = 4 + n
    H = np.zeros((nv, nv))
    H[:3, :3] = np.eye(3)
    g = np.r_[np.zeros(4), C * np.ones(n)]
    # 1 - y(w.x + b) - xi <= 0 ; -xi <= 0
    A1 = np.hstack([-y[:, None] * X, -y[:, None], -np.eye(n)])
    A2 = np.hstack([np.zeros((n, 4)), -np.eye(n)])
    r = solve_qp(QuadraticProgram(H, g, A_in=np.vstack([A1, A2]), b_in=np.r_[-np.ones(n), np.zeros(n)]))
    assert r.success
    return r.fun


def test_soft_nonseparable_matches_qp():
    neg = np.array([[0.0, 0, 0], [2, 0, 0]])
    pos = np.array([[1.0, 0, 0]])
    h = separate_soft(neg, pos, 1.0)
    pred_neg = h.signed(neg) <= 0
    pred_pos = h.signed(pos) > 0
    assert not (pred_neg.all() and pred_pos.all())
    w, b = soft_margin_raw(neg, pos, 1.0)
    assert soft_margin_objective(w, b, neg, pos, 1.0) == pytest.approx(_soft_qp(neg, pos, 1.0), abs=1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_soft_random_matches_qp(seed):
    rng = np.random.default_rng(50 + seed)
    neg = rng.normal(size=(6, 3))
    pos = rng.normal(size=(6, 3)) + 0.8
    w, b = soft_margin_raw(neg, pos, 2.0)
    assert soft_margin_objective(w, b, neg, pos, 2.0) == pytest.approx(_soft_qp(neg, pos, 2.0), rel=1e-4, abs=1e-5)


def test_soft_scaling_invariance():
    rng = np.random.default_rng(7)
    neg = rng.normal(size=(10, 3))
    pos = rng.normal(size=(10, 3)) + 0.7
    h1 = separate_soft(neg, pos, 5.0)
    h2 = separate_soft(10 * neg, 10 * pos, 5.0 / 100)
    X = np.vstack([neg, pos])
    assert ((h1.signed(X) > 0) == (h2.signed(10 * X) > 0)).all()


def test_soft_identical_points():
    with pytest.raises(Degenerate):
        separate_soft([[1, 1, 1]], [[1, 1, 1]])


# buffering

def test_buffer_zero_support():
    h = Hyperplane([1, 0, 0], 0.3)
    b = buffer_by_support(h, ConvexHull([[0, 0, 0]]))
    assert b.offset == h.offset


def test_buffer_cube():
    h = Hyperplane([1, 0, 0], 0.0)
    b = buffer_by_support(h, Aabb.centered([0.12] * 3).as_hull())
    assert b.offset == pytest.approx(0.12)  # x <= -0.12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_buffer_keeps_shape_inside(seed):
    rng = np.random.default_rng(seed)
    h = Hyperplane(rng.normal(size=3), rng.normal())
    shape = ConvexHull(rng.normal(scale=0.5, size=(5, 3)))
    buf = buffer_by_support(h, shape)
    for p in rng.normal(scale=3, size=(50, 3)):
        if buf.signed(p) <= 0:
            assert (h.signed(p + shape.points) <= 1e-9).all()


# polytope

def test_polytope_from_separating_planes_agrees_with_disjointness():
    rng = np.random.default_rng(11)
    for _ in range(20):
        center = ConvexHull(rng.normal(scale=0.3, size=(5, 3)))
        others = [ConvexHull(rng.normal(scale=0.3, size=(5, 3)) + 2.5 * u / np.linalg.norm(u)) for u in rng.normal(size=(4, 3))]
        planes = []
        for o in others:
            try:
                planes.append(separate_hard(center, o))
            except Overlapping:
                pass
        if not planes:
            continue
        P = ConvexPolytope(planes)
        assert P.contains(center.points).all()
        for p in rng.normal(scale=2, size=(50, 3)):
            if P.contains(p):
                # a point in the cell is never inside a separated obstacle
                for o, h in zip(others, planes):
                    assert not _in_hull(o.points, p) or h.signed(p) > 0


def test_aabb_hull_detection_and_intersection():
    box = Aabb([0, 0, 0], [1, 1, 1])
    assert ConvexHull(box.corners()).box is not None
    assert hulls_intersect(box.as_hull(), swept_hull(Aabb.centered([0.1] * 3), [-1, 0.5, 0.5], [2, 0.5, 0.5]))
    assert not hulls_intersect(box.as_hull(), swept_hull(Aabb.centered([0.1] * 3), [-1, 2, 0.5], [2, 3, 0.5]))
