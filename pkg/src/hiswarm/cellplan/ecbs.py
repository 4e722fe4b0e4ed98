"""Bounded-suboptimal MAPF with generalized conflicts (ECBS over annotation sets)."""

from __future__ import annotations

import bisect
import heapq
import itertools
import time
from dataclasses import dataclass, field

from .model import Agent, MoveGraph, Occupancy, Reserved, find_conflicts, plans_of, sum_of_costs


class Infeasible(RuntimeError):
    pass


class Timeout(RuntimeError):
    pass


@dataclass
class CellPlanProblem:
    graph: MoveGraph
    agents: list  # Agent
    reserved: list = field(default_factory=list)  # Reserved
    w_init: float = 2.0
    w_iter: float = 1.5
    time_budget: float = 1.0

    def __post_init__(self):
        starts = [(a.start, a.start_step) for a in self.agents]
        if len(set(starts)) != len(starts):
            raise ValueError("agents share a start")


@dataclass
class Constraints:
    vertex: frozenset = frozenset()  # (v, t)
    move: frozenset = frozenset()  # (u, v, t); u == v forbids waiting

    def add(self, kind, item):
        if kind == "vertex":
            return Constraints(self.vertex | {item}, self.move)
        return Constraints(self.vertex, self.move | {item})

    def latest(self) -> int:
        ts = [t for _, t in self.vertex] + [t for _, _, t in self.move]
        return max(ts, default=-1)


def horizon_bound(h0: int, start_step: int, extra: int = 0) -> int:
    """Last timestep a path may use: 4x the lower bound, with slack for short paths."""
    return start_step + max(4 * h0, h0 + 16) + extra


def _goal_ready(g: MoveGraph, agent: Agent, cons: Constraints, hard: Occupancy | None) -> int:
    """Earliest time from which the agent may stay at its goal for good (None if never)."""
    goal = agent.goal
    t0 = max(agent.start_step, agent.not_before)
    for v, t in cons.vertex:
        if v == goal:
            t0 = max(t0, t + 1)
    for u, v, t in cons.move:
        if u == goal and v == goal:
            t0 = max(t0, t + 1)
    if hard is not None:
        last = hard.horizon
        if hard.vertex_hits(goal, last) or hard.move_hits(goal, goal, last):
            return None  # a staying obstacle blocks the goal forever
        for t in range(last - 1, t0 - 1, -1):
            if hard.vertex_hits(goal, t) or hard.move_hits(goal, goal, t):
                t0 = max(t0, t + 1)
                break
    return t0


def low_level(
    g: MoveGraph,
    agent: Agent,
    cons: Constraints,
    soft: Occupancy | None,
    hard: Occupancy | None,
    w: float,
    deadline: float | None = None,
):
    """Focal search in (vertex, time) space.

    Returns (path, f_min) or None. FOCAL holds open nodes with f <= w * f_min
    and is ordered by soft conflicts with the other agents' paths.
    """
    dist = g.dist_to(agent.goal)
    if agent.start not in dist:
        return None
    ready = _goal_ready(g, agent, cons, hard)
    if ready is None:
        return None
    h0 = dist[agent.start]
    tcap = max(cons.latest(), ready, soft.horizon if soft else 0, hard.horizon if hard else 0) + 1
    horizon = horizon_bound(h0, agent.start_step, max(0, tcap - agent.start_step))
    s0 = agent.start_step
    # node: (f, g, conf, v, t, parent)
    nodes = []
    start = (h0, 0, 0, agent.start, s0, -1)
    nodes.append(start)
    open_sorted = [(h0, 0)]  # (f, node id), sorted
    focal = [(0, h0, 0, 0)]  # (conf, f, -g, id)
    in_focal = {0}
    best_g = {(agent.start, min(s0, tcap)): 0}
    closed = set()
    f_min = h0
    expansions = 0
    while open_sorted:
        expansions += 1
        if deadline is not None and expansions % 256 == 0 and time.perf_counter() > deadline:
            raise Timeout("low-level search over budget")
        f_min = open_sorted[0][0]
        bound = w * f_min + 1e-9
        # refresh focal with open nodes now under the bound
        k = bisect.bisect_right(open_sorted, (bound, float("inf")))
        for f, nid in open_sorted[:k]:
            if nid not in in_focal:
                n = nodes[nid]
                heapq.heappush(focal, (n[2], n[0], -n[1], nid))
                in_focal.add(nid)
        while focal:
            conf, f, ng, nid = heapq.heappop(focal)
            if f <= bound and nid not in closed:
                break
            if nid not in closed:
                in_focal.discard(nid)
        else:
            break
        i = bisect.bisect_left(open_sorted, (f, nid))
        del open_sorted[i]
        closed.add(nid)
        f, gc, conf, v, t, _ = nodes[nid]
        if v == agent.goal and t >= ready:
            path = []
            while nid >= 0:
                path.append(nodes[nid][3])
                nid = nodes[nid][5]
            return path[::-1], f_min
        if t + 1 > horizon:
            continue
        for u in [v] + g.succ[v]:
            if u not in dist:
                continue
            if (u, t + 1) in cons.vertex or (v, u, t) in cons.move:
                continue
            if u == agent.goal and t + 1 < agent.not_before:
                continue
            if hard is not None and hard.hits(v, u, t):
                continue
            key = (u, min(t + 1, tcap))
            ng2 = gc + 1
            if best_g.get(key, 1 << 30) <= ng2:
                continue
            best_g[key] = ng2
            c2 = conf + (soft.hits(v, u, t) if soft is not None else 0)
            f2 = ng2 + dist[u]
            nodes.append((f2, ng2, c2, u, t + 1, nid))
            j = len(nodes) - 1
            bisect.insort(open_sorted, (f2, j))
            if f2 <= bound:
                heapq.heappush(focal, (c2, f2, -ng2, j))
                in_focal.add(j)
    return None


@dataclass
class _Node:
    cons: list  # per agent Constraints
    paths: list
    lbs: list
    cost: int
    nconf: int
    id: int
    lb: int = 0

    def __post_init__(self):
        self.lb = sum(self.lbs)

    def key(self) -> tuple:
        return tuple((c.vertex, c.move) for c in self.cons)


def _soft_for(g, agents, paths, skip):
    keep = [k for k, p in enumerate(paths) if k != skip and p is not None]
    return Occupancy(g, plans_of([paths[k] for k in keep], [agents[k] for k in keep]))


def ecbs_mapfc(
    p: CellPlanProblem,
    w: float | None = None,
    budget: float | None = None,
    max_nodes: int = 20000,
    max_classify: int = 4,
    stats: dict | None = None,
) -> list:
    """Vertex lists per agent (same order as ``p.agents``), trimmed at goal arrival."""
    w = p.w_init if w is None else float(w)
    if w < 1:
        raise ValueError("w must be >= 1")
    g = p.graph
    agents = list(p.agents)
    n = len(agents)
    if n == 0:
        return []
    budget = p.time_budget if budget is None else budget
    deadline = None if budget is None else time.perf_counter() + budget
    hard = Occupancy(g, p.reserved) if p.reserved else None
    ids = itertools.count()

    paths, lbs = [None] * n, [0] * n
    cons = [Constraints() for _ in range(n)]
    for i, a in enumerate(agents):
        soft = _soft_for(g, agents, paths, i)
        res = low_level(g, a, cons[i], soft, hard, w, deadline)
        if res is None:
            raise Infeasible(f"robot {a.robot} has no path within the horizon")
        paths[i], lbs[i] = res
    root = _Node(cons, paths, lbs, sum_of_costs(paths), 0, next(ids))
    root.nconf = _pair_count(find_conflicts(g, plans_of(paths, agents)))
    # OPEN ordered by lower bound, FOCAL by conflicts among nodes with cost <= w * min lb
    by_lb = [(root.lb, root.id, root)]
    by_cost = [(root.cost, root.id, root)]
    focal = []
    live = {root.id}
    seen = {root.key()}
    expanded = 0

    def split(node, c):
        out = []
        for who, mv in ((c.i, c.a), (c.j, c.b)):
            item = ("vertex", (mv[0], c.t)) if c.kind == "vertex" else ("move", (mv[0], mv[1], c.t))
            ncons = list(node.cons)
            ncons[who] = node.cons[who].add(*item)
            soft = _soft_for(g, agents, node.paths, who)
            out.append((who, ncons, low_level(g, agents[who], ncons[who], soft, hard, w, deadline)))
        return out

    while live:
        if deadline is not None and time.perf_counter() > deadline:
            if stats is not None:
                stats.update(nodes=expanded, open=len(live))
            raise Timeout("ECBS over budget")
        while by_lb[0][1] not in live:
            heapq.heappop(by_lb)
        lb_min = by_lb[0][0]
        bound = w * lb_min + 1e-9
        # the bound never shrinks, so nodes only ever move into FOCAL
        while by_cost and by_cost[0][0] <= bound:
            _, nid, nd = heapq.heappop(by_cost)
            heapq.heappush(focal, (nd.nconf, nd.cost, nid, nd))
        _, _, bid, best = heapq.heappop(focal)
        live.discard(bid)
        conf = find_conflicts(g, plans_of(best.paths, agents))
        if not conf:
            if stats is not None:
                stats.update(nodes=expanded, lb=lb_min, cost=best.cost)
            return best.paths
        expanded += 1
        if expanded > max_nodes:
            raise Timeout("ECBS node limit reached")
        # earliest conflict per pair; split on the most cardinal one (both
        # sides' lower bounds rise), earlier first among equals
        first = {}
        for c in conf:
            first.setdefault((c.i, c.j), c)
        cands = sorted(first.values(), key=lambda c: (c.t, c.i, c.j))[:max_classify]
        chosen = None
        for c in cands:
            kids = split(best, c)
            rank = sum(1 for who, _, res in kids if res is None or res[1] > best.lbs[who])
            if chosen is None or rank > chosen[0]:
                chosen = (rank, kids)
            if rank == 2:
                break
        for who, ncons, res in chosen[1]:
            if res is None:
                continue
            npaths = list(best.paths)
            nlbs = list(best.lbs)
            npaths[who], nlbs[who] = res
            child = _Node(ncons, npaths, nlbs, sum_of_costs(npaths), 0, next(ids))
            k = child.key()
            if k in seen:  # same constraint set reached through another branch order
                continue
            seen.add(k)
            child.nconf = _pair_count(find_conflicts(g, plans_of(npaths, agents)))
            live.add(child.id)
            heapq.heappush(by_lb, (child.lb, child.id, child))
            if child.cost <= bound:
                heapq.heappush(focal, (child.nconf, child.cost, child.id, child))
            else:
                heapq.heappush(by_cost, (child.cost, child.id, child))
    raise Infeasible("constraint tree exhausted")


def _pair_count(conflicts) -> int:
    return len({(c.i, c.j) for c in conflicts})
