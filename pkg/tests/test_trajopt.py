import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiswarm.geometry import Aabb, Hyperplane, hulls_intersect, swept_hull
from hiswarm.trajopt import (
    BezierCurve,
    DynLimits,
    Infeasible,
    PiecewiseTrajectory,
    SafetyCorridor,
    SeparationFailed,
    bernstein,
    bezier_eval,
    build_corridors,
    enclosing_radius,
    gram_matrix,
    relaxed_fallback,
    rescale_trajectory,
    rescales_needed,
    rest_state,
    safety_radii,
    solve_trajectory_qp,
)

SHAPE = Aabb.centered([0.12, 0.12, 0.2])


# ---------------------------------------------------------------- oracles


def fd_min_snap(T, N, a, b):
    """Rest-to-rest minimum snap on a uniform grid of N steps.

    Unknowns are the fourth differences d_i; with x_0..x_3 = a the grid
    values follow by summation, and x_{N-3}..x_N = b becomes four linear
    rows (value and first three differences at the end). The cost is the
    least-norm d scaled by h^-7.
    """
    h = T / N
    i = np.arange(N - 3)
    m = N - i
    M = np.vstack([(m - 1) * (m - 2) * (m - 3) / 6.0, (m - 2) * (m - 3) / 2.0, m - 3.0, np.ones_like(m, dtype=float)])
    M /= np.abs(M).max(axis=1, keepdims=True)
    c = np.zeros(4)
    c[0] = (b - a) / ((N - 1) * (N - 2) * (N - 3) / 6.0)
    d = np.linalg.lstsq(M, c, rcond=None)[0]
    return float((d**2).sum() / h**7)


def quad_integral(c, order, n=4000):
    """Composite Simpson integral of |f^(order)|^2."""
    ts = np.linspace(0, c.duration, 2 * n + 1)
    f = (c.eval(ts, order) ** 2).sum(1)
    w = np.ones(2 * n + 1)
    w[1:-1:2], w[2:-1:2] = 4, 2
    return float(f @ w * (ts[1] - ts[0]) / 3)


def random_curve(rng, p=None, tau=None):
    p = int(rng.integers(1, 11)) if p is None else p
    tau = float(rng.uniform(0.2, 3.0)) if tau is None else tau
    return BezierCurve(rng.normal(size=(p + 1, 3)), tau)


# ---------------------------------------------------------------- Bernstein


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10), st.floats(0, 1))
def test_partition_of_unity(p, s):
    assert abs(bernstein(p, s).sum() - 1.0) < 1e-12


def test_partition_of_unity_bulk():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = int(rng.integers(0, 11))
        assert abs(bernstein(p, rng.uniform()).sum() - 1.0) < 1e-12


def test_constant_curve():
    q = np.array([1.0, -2.0, 0.5])
    c = BezierCurve(np.tile(q, (8, 1)), 1.3)
    ts = np.linspace(0, 1.3, 17)
    assert np.allclose(c.eval(ts), q, atol=1e-14)
    for k in range(1, 9):
        assert np.allclose(bezier_eval(c, ts, k), 0.0, atol=1e-9)


def test_linear_curve():
    a, b = np.array([0.0, 1.0, 2.0]), np.array([3.0, -1.0, 2.0])
    c = BezierCurve([a, b], 2.0)
    for t in (0.0, 0.4, 1.1, 2.0):
        assert np.allclose(bezier_eval(c, t), a + t / 2.0 * (b - a))
        assert np.allclose(bezier_eval(c, t, 1), (b - a) / 2.0)


def test_order_above_degree_is_zero():
    c = BezierCurve(np.eye(3), 1.0)
    assert np.all(bezier_eval(c, 0.3, 5) == 0)


def test_endpoint_interpolation():
    rng = np.random.default_rng(1)
    for _ in range(100):
        c = random_curve(rng)
        assert np.abs(c.eval(0.0) - c.points[0]).max() < 1e-12
        assert np.abs(c.eval(c.duration) - c.points[-1]).max() < 1e-12


def test_derivative_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(100):
        c = random_curve(rng)
        t = rng.uniform(0.05, 0.95) * c.duration
        h = 1e-6 * c.duration
        fd = (c.eval(t + h) - c.eval(t - h)) / (2 * h)
        scale = max(1.0, np.abs(c.eval(t, 1)).max())
        assert np.abs(fd - c.eval(t, 1)).max() < 1e-6 * scale * 10


def test_convex_hull_property():
    rng = np.random.default_rng(3)
    c = random_curve(rng, p=7)
    pts = c.eval(np.linspace(0, c.duration, 200))
    lo, hi = c.points.min(0), c.points.max(0)
    assert (pts >= lo - 1e-12).all() and (pts <= hi + 1e-12).all()


@pytest.mark.parametrize("order", [0, 1, 2, 3, 4])
def test_gram_matches_quadrature(order):
    rng = np.random.default_rng(order)
    c = random_curve(rng, p=7, tau=0.7)
    G = gram_matrix(7, order, c.duration)
    exact = sum(c.points[:, d] @ G @ c.points[:, d] for d in range(3))
    assert exact == pytest.approx(quad_integral(c, order), rel=1e-8)


# ---------------------------------------------------------------- corridors


def test_safety_radii():
    r = enclosing_radius(SHAPE)
    assert r == pytest.approx(np.sqrt(0.12**2 + 0.12**2 + 0.2**2))
    assert r == pytest.approx(0.2623, abs=1e-4)
    d_r, d_e = safety_radii(SHAPE, DynLimits(), 1.0)
    assert d_r == pytest.approx(2 * (5 + r))
    assert d_e == pytest.approx(5 + r)
    assert d_r == pytest.approx(10.52, abs=0.01)


def test_no_neighbors_unbounded():
    path = np.array([[0, 0, 1], [0.5, 0, 1], [1, 0, 1.0]])
    cors = build_corridors(path, [], [], SHAPE, DynLimits(), 1.0)
    assert len(cors) == 2
    assert all(c.halfspaces == () for c in cors)
    assert cors[0].short and cors[1].short


def test_long_horizon_ignores_robots():
    path = np.array([[0.0, 0, 1]] * 5)
    other = np.array([[1.0, 0, 1]] * 5)
    cors = build_corridors(path, [(1, other)], [], SHAPE, DynLimits(), 1.0, dt=0.5)
    assert [c.short for c in cors] == [True, True, False, False]
    assert [len(c.halfspaces) for c in cors] == [1, 1, 0, 0]


def test_overlapping_neighbor_raises():
    path = np.array([[0.0, 0, 1], [0.1, 0, 1]])
    with pytest.raises(SeparationFailed):
        build_corridors(path, [(1, path + [0.05, 0, 0])], [], SHAPE, DynLimits(), 1.0)


def test_obstacle_plane_touches_obstacle():
    box = Aabb([2.0, -1, 0], [3.0, 1, 2]).as_hull()
    path = np.array([[0.0, 0, 1], [0.5, 0, 1]])
    (cor,) = build_corridors(path, [], [box], SHAPE, DynLimits(), 1.0)
    (h,) = cor.halfspaces
    assert np.allclose(h.normal, [1, 0, 0])
    # robot centre may go up to the obstacle face minus its half extent
    assert -h.offset == pytest.approx(2.0 - 0.12)


def two_robot_instance(rng, K=4):
    """Two robots with separated swept hulls on a shared 0.5 s grid, plus a box."""
    while True:
        a0 = rng.uniform([-1, -1, 0.5], [1, 1, 1.5])
        pa = np.vstack([a0, a0 + np.cumsum(rng.normal(size=(K, 3)) * [0.4, 0.4, 0.1], 0)])
        b0 = a0 + rng.uniform([-1.5, 0.8, -0.3], [1.5, 1.5, 0.3]) * rng.choice([-1, 1])
        pb = np.vstack([b0, b0 + np.cumsum(rng.normal(size=(K, 3)) * [0.4, 0.4, 0.1], 0)])
        if any(
            hulls_intersect(swept_hull(SHAPE, pa[k], pa[k + 1]), swept_hull(SHAPE, pb[k], pb[k + 1]))
            for k in range(K)
        ):
            continue
        c = rng.uniform(-3, 3, 3)
        if np.linalg.norm(np.vstack([pa, pb]) - c, axis=1).min() < 1.5:
            continue
        return pa, pb, [Aabb(c - 0.3, c + 0.3).as_hull()]


def test_corridor_validity_random():
    rng = np.random.default_rng(5)
    lim = DynLimits()
    for _ in range(50):
        pa, pb, obs = two_robot_instance(rng)
        for me, other in ((pa, pb), (pb, pa)):
            cors = build_corridors(me, [(1, other)], obs, SHAPE, lim, 1.0)
            for k, cor in enumerate(cors):
                for end in (me[k], me[k + 1]):
                    corners = SHAPE.corners() + end
                    for h in cor.halfspaces:
                        # the dilated endpoint clears the unbuffered plane
                        raw = Hyperplane(h.normal, h.offset - SHAPE.support(h.normal))
                        assert raw.signed(corners).max() <= 1e-9
                    assert cor.contains(end).all()


def test_planes_are_mutual():
    """Both robots see the same separating plane from opposite sides."""
    rng = np.random.default_rng(6)
    pa, pb, _ = two_robot_instance(rng)
    ca = build_corridors(pa, [(1, pb)], [], SHAPE, DynLimits(), 1.0)
    cb = build_corridors(pb, [(0, pa)], [], SHAPE, DynLimits(), 1.0)
    for k in (0, 1):
        (ha,), (hb,) = ca[k].halfspaces, cb[k].halfspaces
        assert np.allclose(ha.normal, -hb.normal)
        ra = ha.offset - SHAPE.support(ha.normal)
        rb = hb.offset - SHAPE.support(hb.normal)
        assert ra == pytest.approx(-rb)


# ---------------------------------------------------------------- QP


def test_constant_when_goal_is_start():
    a = np.array([1.0, 2.0, 3.0])
    tr = solve_trajectory_qp([SafetyCorridor()], rest_state(a, 4), a, [1.0], DynLimits())
    assert tr.cost == pytest.approx(0.0, abs=1e-6)
    assert np.abs(tr.curves[0].points - a).max() < 1e-9


def test_single_segment_c4_is_overdetermined():
    # ten end conditions on eight control points per axis
    with pytest.raises(Infeasible):
        solve_trajectory_qp([SafetyCorridor()], rest_state([0, 0, 0], 4), [1, 0, 0], [2.0], DynLimits())


def test_min_snap_matches_collocation():
    lim = DynLimits(C=3)
    a, b, T = np.zeros(3), np.array([1.0, 0.0, 0.0]), 2.0
    tr = solve_trajectory_qp([SafetyCorridor()], rest_state(a, 3), b, [T], lim)
    c = tr.curves[0]
    for j in range(4):
        assert np.abs(c.eval(0.0, j) - (a if j == 0 else 0)).max() < 1e-8
        assert np.abs(c.eval(T, j) - (b if j == 0 else 0)).max() < 1e-8
    oracle = fd_min_snap(T, 20000, 0.0, 1.0)
    assert tr.cost == pytest.approx(oracle, rel=0.01)
    assert tr.cost == pytest.approx(quad_integral(c, 4), rel=1e-8)


def test_multi_segment_rest_to_rest():
    lim = DynLimits()
    a, b = np.zeros(3), np.array([1.0, 2.0, 0.5])
    tr = solve_trajectory_qp([SafetyCorridor()] * 3, rest_state(a, 4), b, [0.5] * 3, lim)
    assert tr.continuity_residual(4) < 1e-6
    assert tr.kkt < 1e-6
    assert np.abs(tr.state(0.0, 4) - rest_state(a, 4)).max() < 1e-8
    assert np.abs(tr.end_state(4) - rest_state(b, 4)).max() < 1e-8
    # more segments can only help
    tr4 = solve_trajectory_qp([SafetyCorridor()] * 4, rest_state(a, 4), b, [0.375] * 4, lim)
    assert tr4.cost <= tr.cost * (1 + 1e-9)


def test_contradictory_corridor_infeasible():
    wall = SafetyCorridor((Hyperplane([1, 0, 0], 0.0),))
    with pytest.raises(Infeasible):
        solve_trajectory_qp([wall] * 2, rest_state([-1, 0, 0], 4), [1, 0, 0], [0.5, 0.5], DynLimits())


def test_corridor_bends_trajectory():
    lim = DynLimits()
    free = solve_trajectory_qp([SafetyCorridor()] * 3, rest_state([0, 0, 0], 4), [2, 0, 0], [0.5] * 3, lim)
    assert np.abs(free.eval(np.linspace(0, 1.5, 50))[:, 1:]).max() < 1e-9  # straight line
    lid = SafetyCorridor((Hyperplane([1, 0, 0], -1.2),))
    tr = solve_trajectory_qp([lid, SafetyCorridor(), SafetyCorridor()], rest_state([0, 0, 0], 4), [2, 0, 0], [0.5] * 3, lim)
    assert (tr.curves[0].points[:, 0] <= 1.2 + 1e-8).all()
    assert tr.cost >= free.cost - 1e-9


def test_qp_validity_random_two_robot():
    rng = np.random.default_rng(7)
    lim = DynLimits()
    solved = 0
    for _ in range(30):
        pa, pb, obs = two_robot_instance(rng)
        for me, other in ((pa, pb), (pb, pa)):
            cors = build_corridors(me, [(1, other)], obs, SHAPE, lim, 1.0)
            try:
                tr = solve_trajectory_qp(cors, rest_state(me[0], 4), me[-1], [0.5] * len(cors), lim)
            except Infeasible:
                continue
            solved += 1
            for c, cor in zip(tr.curves, cors):
                assert cor.contains(c.points, tol=1e-8).all()
            assert tr.continuity_residual(4) < 1e-6
            assert tr.kkt < 1e-6
    assert solved >= 30


def test_qp_deterministic():
    rng = np.random.default_rng(8)
    pa, pb, obs = two_robot_instance(rng)
    cors = build_corridors(pa, [(1, pb)], obs, SHAPE, DynLimits(), 1.0)
    args = (cors, rest_state(pa[0], 4), pa[-1], [0.5] * 4, DynLimits())
    try:
        r1, r2 = solve_trajectory_qp(*args), solve_trajectory_qp(*args)
    except Infeasible:
        pytest.skip("instance infeasible")
    assert r1.cost == r2.cost
    assert all((a.points == b.points).all() for a, b in zip(r1.curves, r2.curves))


# ---------------------------------------------------------------- fallback


def test_relaxed_passes_waypoints():
    rng = np.random.default_rng(9)
    lim = DynLimits()
    for _ in range(20):
        pts = np.cumsum(rng.normal(size=(6, 3)), 0)
        tr = relaxed_fallback(pts, rest_state(pts[0], 4), lim)
        assert tr.relaxed
        ends = tr.joints[1:]
        assert np.abs(tr.eval(ends) - pts[1:]).max() < 1e-8
        assert tr.continuity_residual(4) < 1e-6


def test_relaxed_stationary_is_constant():
    q = np.array([0.5, 0.5, 1.0])
    tr = relaxed_fallback(np.tile(q, (4, 1)), rest_state(q, 4), DynLimits())
    assert np.abs(tr.eval(np.linspace(0, tr.duration, 30)) - q).max() < 1e-9


def test_relaxed_cost_not_above_constrained():
    rng = np.random.default_rng(10)
    lim = DynLimits()
    checked = 0
    for _ in range(20):
        pa, pb, obs = two_robot_instance(rng)
        cors = build_corridors(pa, [(1, pb)], obs, SHAPE, lim, 1.0)
        wps = {k: pa[k + 1] for k in range(len(cors) - 1)}
        try:
            tr = solve_trajectory_qp(cors, rest_state(pa[0], 4), pa[-1], [0.5] * 4, lim, waypoints=wps)
        except Infeasible:
            continue
        rel = relaxed_fallback(pa, rest_state(pa[0], 4), lim)
        assert rel.cost <= tr.cost * (1 + 1e-9) + 1e-9
        checked += 1
    assert checked > 0


# ---------------------------------------------------------------- rescaling


def constant_speed(speed, T=1.0):
    pts = np.linspace([0, 0, 0], [speed * T, 0, 0], 8)
    return PiecewiseTrajectory([BezierCurve(pts, T)])


def test_rescale_within_limits_unchanged():
    tr = constant_speed(3.0)
    out = rescale_trajectory(tr, DynLimits())
    assert out.rescales == 0
    assert out.duration == tr.duration


def test_rescale_peak_eight():
    out = rescale_trajectory(constant_speed(8.0), DynLimits())
    assert out.rescales == 3
    v, a = out.peaks()
    assert v == pytest.approx(8 / 1.2**3)
    assert v <= 5.0


def test_rescale_count_matches_log():
    rng = np.random.default_rng(11)
    lim = DynLimits()
    for _ in range(30):
        c = random_curve(rng, p=7, tau=rng.uniform(0.2, 1.0))
        tr = PiecewiseTrajectory([c])
        v, a = tr.peaks()
        out = rescale_trajectory(tr, lim)
        v2, a2 = out.peaks()
        assert v2 <= lim.v_max and a2 <= lim.a_max
        assert abs(out.rescales - rescales_needed(v, a, lim)) <= 1


def test_rescale_keeps_control_points():
    rng = np.random.default_rng(12)
    tr = PiecewiseTrajectory([random_curve(rng, p=7, tau=0.3) for _ in range(2)])
    out = rescale_trajectory(tr, DynLimits())
    assert out.rescales > 0
    for a, b in zip(tr.curves, out.curves):
        assert (a.points == b.points).all()
        assert b.duration == pytest.approx(a.duration * 1.2**out.rescales)


def test_export_round_trip():
    rng = np.random.default_rng(13)
    tr = PiecewiseTrajectory([random_curve(rng, p=7) for _ in range(3)], relaxed=True)
    back = PiecewiseTrajectory.from_dict(tr.to_dict())
    assert back.relaxed
    ts = np.linspace(0, tr.duration, 40)
    assert np.allclose(back.eval(ts), tr.eval(ts))
