import heapq
import itertools
import math

import numpy as np
import pytest

from hiswarm.cellplan import (
    CROSSED,
    IN_BUFFER,
    OUTSIDE,
    Agent,
    CellPlanProblem,
    Infeasible,
    MoveGraph,
    Reserved,
    assign_local_goals,
    assignment_objective,
    cell_crossing_update,
    classify,
    ecbs_mapfc,
    find_conflicts,
    lns_improve,
    min_buffer,
    plans_of,
    sum_of_costs,
    valid_path,
)
from hiswarm.geometry import Hyperplane, hulls_intersect, swept_hull
from hiswarm.roadmap import ROBOT_BOX, Roadmap, annotate_conflicts, connected_components

# ---------------------------------------------------------------- instance helpers


def grid_graph(nx, ny, nz=1, sx=0.5, sy=0.5, sz=0.5, drop=(), directed=()):
    pts = [(i * sx, j * sy, k * sz) for i in range(nx) for j in range(ny) for k in range(nz)]
    idx = {}
    keep = []
    for n, p in enumerate(pts):
        if n not in drop:
            idx[n] = len(keep)
            keep.append(p)
    edges = []
    for a, b in itertools.combinations(range(len(pts)), 2):
        if a in idx and b in idx:
            d = np.abs(np.subtract(pts[a], pts[b]))
            if np.isclose(d, [sx, 0, 0]).all() or np.isclose(d, [0, sy, 0]).all() or np.isclose(d, [0, 0, sz]).all():
                edges.append((idx[a], idx[b]))
    r = Roadmap(keep, edges, directed)
    return r, MoveGraph(range(r.n), r.edges, r.directed_edges, annotate_conflicts(r, ROBOT_BOX))


def random_instance(seed, max_v=12, max_agents=3, tight=True):
    rng = np.random.default_rng(seed)
    while True:
        nx, ny = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        nz = 1 if nx * ny > 6 else 2
        sy = 0.3 if tight else 0.5
        sz = 0.3 if tight else 0.5
        total = nx * ny * nz
        k = max(0, total - max_v)
        drop = set(int(v) for v in rng.choice(total, size=k + int(rng.integers(0, 2)), replace=False))
        r, g = grid_graph(nx, ny, nz, 0.5, sy, sz, drop)
        if r.n < 3 or len(connected_components(r.n, r.edges)) != 1:
            continue
        na = int(rng.integers(1, min(max_agents, r.n // 2) + 1))
        starts = [int(v) for v in rng.choice(r.n, na, replace=False)]
        goals = [int(v) for v in rng.choice(r.n, na, replace=False)]
        # distinct, mutually compatible starts and goals
        if any(b in g.conVV(a) for a, b in itertools.combinations(starts, 2)):
            continue
        if any(b in g.conVV(a) for a, b in itertools.combinations(goals, 2)):
            continue
        agents = [Agent(i, s, t) for i, (s, t) in enumerate(zip(starts, goals))]
        return r, g, agents


def joint_optimum(g: MoveGraph, agents, limit=200000):
    """Sum-of-costs optimum by Dijkstra over joint states with per-agent commit flags."""
    n = len(agents)
    goals = [a.goal for a in agents]
    start = (tuple(a.start for a in agents), tuple(False for _ in agents))
    dist = {start: 0}
    heap = [(0, start)]
    pops = 0
    while heap:
        d, (pos, done) = heapq.heappop(heap)
        if dist.get((pos, done), math.inf) < d:
            continue
        if all(done):
            return d
        pops += 1
        if pops > limit:
            raise RuntimeError("oracle state limit")
        options = []
        for i in range(n):
            if done[i]:
                options.append([(pos[i], True)])
                continue
            opts = [(v, False) for v in [pos[i]] + g.succ[pos[i]]]
            if pos[i] == goals[i]:
                opts.append((pos[i], True))  # stay here for good from now on
            options.append(opts)
        for choice in itertools.product(*options):
            nxt = tuple(v for v, _ in choice)
            ndone = tuple(c for _, c in choice)
            if any(c and nxt[i] != goals[i] for i, (_, c) in enumerate(choice)):
                continue
            if _joint_conflict(g, pos, nxt):
                continue
            step = sum(1 for i in range(n) if not ndone[i])
            # committing this step: the agent was already at its goal, no charge
            nd = d + step
            key = (nxt, ndone)
            if nd < dist.get(key, math.inf):
                dist[key] = nd
                heapq.heappush(heap, (nd, key))
    return math.inf


def _joint_conflict(g, pos, nxt):
    n = len(pos)
    for i, j in itertools.combinations(range(n), 2):
        if pos[j] in g.conVV(pos[i]) or nxt[j] in g.conVV(nxt[i]):
            return True
        mi, mj = pos[i] != nxt[i], pos[j] != nxt[j]
        if mi and mj and g.key(pos[j], nxt[j]) in g.conEE(g.key(pos[i], nxt[i])):
            return True
        if mi and not mj and pos[j] in g.conEV(g.key(pos[i], nxt[i])):
            return True
        if mj and not mi and pos[i] in g.conEV(g.key(pos[j], nxt[j])):
            return True
    return False


def geometric_sweep(r: Roadmap, paths, starts=None):
    """Conflicts recomputed from positions and swept boxes, without annotations."""
    starts = starts or [0] * len(paths)
    P = r.positions
    T = max(s + len(p) for s, p in zip(starts, paths)) + 1

    def at(k, t):
        i = t - starts[k]
        if i < 0:
            return None
        return paths[k][min(i, len(paths[k]) - 1)]

    bad = []
    for t in range(T):
        for i, j in itertools.combinations(range(len(paths)), 2):
            a, b, a2, b2 = at(i, t), at(j, t), at(i, t + 1), at(j, t + 1)
            if a is None or b is None:
                continue
            if ROBOT_BOX.translated(P[a]).overlaps(ROBOT_BOX.translated(P[b])):
                bad.append(("vertex", i, j, t))
                continue
            if a2 is None or b2 is None or (a == a2 and b == b2):
                continue
            ha = swept_hull(ROBOT_BOX, P[a], P[a2])
            hb = swept_hull(ROBOT_BOX, P[b], P[b2])
            if hulls_intersect(ha, hb):
                bad.append(("move", i, j, t))
    return bad


# ---------------------------------------------------------------- assignment


def test_assign_nearest():
    A = assign_local_goals([(0, [0, 0, 0])], [(5, [1, 0, 0]), (6, [2, 0, 0])])
    assert A.A == {0: 5} and A.U == 0


def test_assign_equidistant_split():
    robots = [(i, [0, 0, 0]) for i in range(3)]
    goals = [(0, [1, 0, 0]), (1, [-1, 0, 0])]
    A = assign_local_goals(robots, goals, 1.0, 1.0)
    counts = sorted(list(A.A.values()).count(g) for g in (0, 1))
    assert counts == [1, 2] and A.U == 1
    best = min(
        assignment_objective(dict(zip(range(3), ch)), robots, goals, 1.0, 1.0) for ch in itertools.product((0, 1), repeat=3)
    )
    assert A.objective == pytest.approx(best)


def _brute_assign(robots, goals, alpha, beta):
    gids = [g for g, _ in goals]
    return min(
        assignment_objective(dict(zip([r for r, _ in robots], ch)), robots, goals, alpha, beta)
        for ch in itertools.product(gids, repeat=len(robots))
    )


@pytest.mark.parametrize("seed", range(20))
def test_assign_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    robots = [(i, rng.uniform(-3, 3, 3)) for i in range(int(rng.integers(1, 5)))]
    goals = [(10 + j, rng.uniform(-3, 3, 3)) for j in range(int(rng.integers(1, 4)))]
    A = assign_local_goals(robots, goals)
    assert A.objective == pytest.approx(_brute_assign(robots, goals, 1.0, 10.0), abs=1e-6)
    assert set(A.A) == {r for r, _ in robots}
    counts = {g: list(A.A.values()).count(g) for g, _ in goals}
    assert all(A.queue[g] >= counts[g] - 1 and A.U >= A.queue[g] for g in counts)


# ---------------------------------------------------------------- checker and ECBS


def test_checker_detects_swap_and_vertex():
    r, g = grid_graph(3, 1)
    plans = plans_of([[0, 1], [1, 0]], [Agent(0, 0, 1), Agent(1, 1, 0)])
    assert [c.kind for c in find_conflicts(g, plans)] == ["edge"]
    plans = plans_of([[0, 1], [2, 1]], [Agent(0, 0, 1), Agent(1, 2, 1)])
    # both moves end at vertex 1: they already overlap during the step
    assert [(c.kind, c.t) for c in find_conflicts(g, plans)][:2] == [("edge", 0), ("vertex", 1)]


def _crossing():
    # two long edges crossing at the origin; endpoints pairwise far apart
    r = Roadmap([[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [-1, 1, 0], [1, 1, 0]], [(0, 1), (2, 3), (0, 4), (4, 3), (3, 5), (5, 1)])
    return r, MoveGraph(range(r.n), r.edges, [], annotate_conflicts(r, ROBOT_BOX))


def test_checker_generalized_crossing_edges():
    r, g = _crossing()
    assert all(b not in g.conVV(a) for a, b in itertools.combinations(range(4), 2))
    a, b = Agent(0, 0, 1), Agent(1, 2, 3)
    kinds = [c.kind for c in find_conflicts(g, plans_of([[0, 1], [2, 3]], [a, b]))]
    assert kinds == ["edge"]
    paths = ecbs_mapfc(CellPlanProblem(g, [a, b]), 1.0)
    assert not find_conflicts(g, plans_of(paths, [a, b]))
    assert geometric_sweep(r, paths) == []


def test_single_robot_shortest():
    r, g = grid_graph(4, 3)
    paths = ecbs_mapfc(CellPlanProblem(g, [Agent(0, 0, r.n - 1)]), 1.0)
    assert len(paths[0]) - 1 == g.dist_to(r.n - 1)[0]
    assert valid_path(g, paths[0])


def test_swap_on_path_with_spur():
    # 0 - 1 - 2 with spur 3 above 1
    r = Roadmap([[0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1, 0]], [(0, 1), (1, 2), (1, 3)])
    g = MoveGraph(range(4), r.edges, [], annotate_conflicts(r, ROBOT_BOX))
    agents = [Agent(0, 0, 2), Agent(1, 2, 0)]
    opt = joint_optimum(g, agents)
    for w in (1.0, 1.5, 2.0):
        paths = ecbs_mapfc(CellPlanProblem(g, agents), w)
        assert not find_conflicts(g, plans_of(paths, agents))
        assert sum_of_costs(paths) <= w * opt + 1e-9
    # B ducks into the spur; moves sharing vertex 1 conflict, so A arrives at 4, B at 6
    assert opt == 10


@pytest.mark.parametrize("seed", range(12))
def test_ecbs_bound_vs_joint_search(seed):
    r, g, agents = random_instance(seed)
    opt = joint_optimum(g, agents)
    for w in (1.0, 1.5, 2.0):
        try:
            paths = ecbs_mapfc(CellPlanProblem(g, agents), w, budget=20.0)
        except Infeasible:
            assert opt == math.inf
            continue
        assert sum_of_costs(paths) <= w * opt + 1e-9
        assert not find_conflicts(g, plans_of(paths, agents))


@pytest.mark.parametrize("seed", range(10))
def test_ecbs_outputs_survive_geometric_sweep(seed):
    rng = np.random.default_rng(1000 + seed)
    r, g = grid_graph(6, 4, 2, 0.5, 0.3, 0.3, drop=set(int(v) for v in rng.choice(48, 6, replace=False)))
    comp = max(connected_components(r.n, r.edges), key=len)
    n = int(rng.integers(2, 7))
    starts, goals = [], []
    for v in rng.permutation(comp):
        v = int(v)
        if all(u not in g.conVV(v) for u in starts):
            starts.append(v)
        if len(starts) == n:
            break
    for v in rng.permutation(comp):
        v = int(v)
        if all(u not in g.conVV(v) for u in goals):
            goals.append(v)
        if len(goals) == len(starts):
            break
    agents = [Agent(i, s, t) for i, (s, t) in enumerate(zip(starts, goals))]
    sub = MoveGraph(comp, r.edges, [], g.ann)
    paths = ecbs_mapfc(CellPlanProblem(sub, agents), 1.5, budget=20.0)
    assert all(valid_path(sub, p) and p[0] == a.start and p[-1] == a.goal for p, a in zip(paths, agents))
    assert geometric_sweep(r, paths) == []


def test_reserved_paths_are_hard():
    r, g = grid_graph(5, 2)
    # reserved robot sweeps the bottom row; the agent must not touch it
    res = Reserved([0, 2, 4, 6, 8], 0, stay=False)
    agents = [Agent(0, 9, 1)]
    paths = ecbs_mapfc(CellPlanProblem(g, agents, [res]), 1.0)
    plans = plans_of(paths, agents) + [res]
    assert find_conflicts(g, plans) == []


def test_arrival_start_step():
    # two lanes; robot 1 only appears at its start at step 2
    r, g = grid_graph(4, 2)
    agents = [Agent(0, 0, 7), Agent(1, 7, 0, start_step=2)]
    paths = ecbs_mapfc(CellPlanProblem(g, agents), 1.0)
    assert paths[1][0] == 7 and paths[0][0] == 0
    assert not find_conflicts(g, plans_of(paths, agents))
    assert geometric_sweep(r, paths, [0, 2]) == []


def test_goal_not_before():
    r, g = grid_graph(4, 1)
    paths = ecbs_mapfc(CellPlanProblem(g, [Agent(0, 0, 3, not_before=6)]), 1.0)
    p = paths[0]
    assert p[-1] == 3 and len(p) - 1 == 6
    assert 3 not in p[:-1]


def test_staying_reserved_on_goal_is_infeasible():
    r, g = grid_graph(3, 1)
    with pytest.raises(Infeasible):
        ecbs_mapfc(CellPlanProblem(g, [Agent(0, 0, 2)], [Reserved([2], 0, True)]), 1.0)


# ---------------------------------------------------------------- LNS


def test_lns_zero_budget_returns_initial():
    r, g = grid_graph(4, 3)
    p = CellPlanProblem(g, [Agent(0, 0, 11)])
    init = [[0, 1, 2, 5, 8, 11]]
    assert lns_improve(init, p, 0.0) == init


def test_lns_fixes_detour():
    r, g = grid_graph(4, 3)
    p = CellPlanProblem(g, [Agent(0, 0, 2)])
    detour = [0, 3, 6, 7, 8, 5, 2]
    assert valid_path(g, detour)
    out = lns_improve([detour], p, 5.0, max_iters=1)
    assert len(out[0]) - 1 == g.dist_to(2)[0]


@pytest.mark.parametrize("seed", range(4))
def test_lns_monotone_and_valid(seed):
    r, g, agents = random_instance(60 + seed, max_agents=3)
    p = CellPlanProblem(g, agents, w_init=2.0, w_iter=1.2)
    try:
        init = ecbs_mapfc(p, 2.0, budget=10.0)
    except Infeasible:
        pytest.skip("instance without solution")
    hist = []
    out = lns_improve(init, p, 2.0, seed=seed, max_iters=5, history=hist)
    assert hist == sorted(hist, reverse=True)
    assert sum_of_costs(out) <= sum_of_costs(init)
    assert not find_conflicts(g, plans_of(out, agents))


# ---------------------------------------------------------------- crossing


def test_min_buffer_product():
    assert min_buffer(1.0, 5.0) == 5.0


def test_buffer_threshold():
    face = Hyperplane([1, 0, 0], 0.0)  # cell on x <= 0
    assert classify([-6, 0, 0], face, 5.0) == OUTSIDE
    assert classify([-4, 0, 0], face, 5.0) == IN_BUFFER
    assert classify([0.1, 0, 0], face, 5.0) == CROSSED


def test_crossing_directive_locks_goal():
    face = Hyperplane([1, 0, 0], 0.0)
    d = cell_crossing_update([-0.2, 0, 0], face, 3, 17, 4.5, 0.5, 1.0)
    assert d.state == IN_BUFFER and d.freeze and (d.start_vertex, d.start_time) == (17, 4.5)
    with pytest.raises(ValueError):
        cell_crossing_update([-0.2, 0, 0], face, 3, 17, 4.5, 1.0, 5.0, d_buf=1.0)
