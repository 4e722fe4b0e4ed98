"""Inter-cell routing: cell graph, k shortest paths, minimal-influx MCF, MCF/OD and one-shot MCF."""

from __future__ import annotations

import heapq
import itertools
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field

import numpy as np

from .optkernel import INFEASIBLE, IntegerProgram, LinearProgram, solve_ilp

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 1000.0
_ROUND = 9


class NoPath(ValueError):
    pass


class Unsolvable(RuntimeError):
    pass


class BothUnsolvable(Unsolvable):
    pass


class RoutingError(RuntimeError):
    """ILP reported infeasible although every commodity had a path."""


@dataclass
class CellGraph:
    nodes: list
    weights: dict  # (m, l) -> positive weight, both directions present
    centroids: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = sorted(self.nodes)
        adj = {m: [] for m in self.nodes}
        for (m, l), w in self.weights.items():
            if not w > 0:
                raise ValueError(f"edge ({m}, {l}) has non-positive weight")
            adj[m].append(l)
        self.adj = {m: sorted(v) for m, v in adj.items()}

    @property
    def edges(self) -> list:
        return sorted(self.weights)

    def path_cost(self, path) -> float:
        return float(sum(self.weights[(a, b)] for a, b in zip(path, path[1:])))


def build_cell_graph(p) -> CellGraph:
    cents = {}
    for c in p.cells:
        cents[c.id] = p.roadmap.positions[sorted(c.vertices)].mean(axis=0)
    w = {}
    for a, b in p.faces:
        d = float(np.linalg.norm(cents[a] - cents[b]))
        w[(a, b)] = w[(b, a)] = max(d, 1e-9)
    return CellGraph([c.id for c in p.cells], w, cents)


def graph_from_edges(n: int, weighted_edges) -> CellGraph:
    """Helper for tests and small instances: undirected (u, v, w) triples."""
    w = {}
    for u, v, c in weighted_edges:
        w[(u, v)] = w[(v, u)] = float(c)
    return CellGraph(list(range(n)), w)


# ---------------------------------------------------------------- k shortest paths


def _key(g: CellGraph, path) -> tuple:
    return (round(g.path_cost(path), _ROUND), tuple(path))


def _dijkstra(g: CellGraph, s, t, banned_nodes=(), banned_edges=()):
    """Lexicographically smallest among the cheapest s-t paths, or None."""
    banned_nodes = set(banned_nodes)
    banned_edges = set(banned_edges)
    heap = [(0.0, (s,))]
    done = set()
    while heap:
        d, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == t:
            return list(path)
        for v in g.adj.get(u, ()):
            if v in done or v in banned_nodes or (u, v) in banned_edges:
                continue
            heapq.heappush(heap, (round(d + g.weights[(u, v)], _ROUND), path + (v,)))
    return None


class PathEnumerator:
    """Yen's algorithm, producing simple s-t paths lazily in (cost, path) order."""

    def __init__(self, g: CellGraph, s, t):
        self.g, self.s, self.t = g, s, t
        self.paths: list = []
        self._cand: list = []
        self._seen: set = set()
        self._exhausted = False

    def get(self, k: int) -> list:
        while len(self.paths) < k and not self._exhausted:
            self._next()
        return self.paths[:k]

    def _push(self, path):
        key = _key(self.g, path)
        if key[1] not in self._seen:
            self._seen.add(key[1])
            heapq.heappush(self._cand, key)

    def _next(self):
        if not self.paths:
            p = _dijkstra(self.g, self.s, self.t)
            if p is None:
                raise NoPath(f"cell {self.t} unreachable from {self.s}")
            self._seen.add(tuple(p))
            self.paths.append(p)
            return
        last = self.paths[-1]
        for i in range(len(last) - 1):
            root = last[: i + 1]
            banned_e = {(q[i], q[i + 1]) for q in self.paths if len(q) > i + 1 and q[: i + 1] == root}
            spur = _dijkstra(self.g, root[-1], self.t, banned_nodes=root[:-1], banned_edges=banned_e)
            if spur is not None:
                self._push(root[:-1] + spur)
        if not self._cand:
            self._exhausted = True
            return
        _, path = heapq.heappop(self._cand)
        self.paths.append(list(path))


def k_shortest_paths(g: CellGraph, s, t, k: int) -> list:
    if s == t:
        return [[s]]
    return PathEnumerator(g, s, t).get(k)


# ---------------------------------------------------------------- MCF ILP


@dataclass
class Commodity:
    start: int
    goal: int
    robots: list

    @property
    def count(self) -> int:
        return len(self.robots)


def make_commodities(starts: dict, goals: dict) -> list:
    """Group robots by (start cell, goal cell); robot ids sorted inside each group."""
    groups = {}
    for r in sorted(starts):
        groups.setdefault((starts[r], goals[r]), []).append(r)
    return [Commodity(s, g, rs) for (s, g), rs in sorted(groups.items())]


@dataclass
class FlowSolution:
    commodities: list
    paths: list  # per commodity: list of (path tuple, robots on it), paths with zero flow omitted
    allowed: list  # per commodity: allowed path lists
    L_sg: list
    L_in: float
    objective: float  # alpha * sum L_sg + beta * L_in
    cost: float  # node cost: sum over commodities of their largest allowed-path cost
    method: str = ""
    stats: dict = field(default_factory=dict)

    @property
    def flows(self) -> dict:
        """(commodity index, (m, l)) -> integer flow."""
        out = {}
        for o, lst in enumerate(self.paths):
            for path, n in lst:
                for e in zip(path, path[1:]):
                    out[(o, e)] = out.get((o, e), 0) + n
        return out

    def influx(self) -> dict:
        return influx_of(self.commodities, self.paths)

    @property
    def max_influx(self) -> int:
        return max(self.influx().values(), default=0)

    def robot_routes(self) -> dict:
        """robot id -> cell sequence; robots fill paths in path order."""
        out = {}
        for c, lst in zip(self.commodities, self.paths):
            it = iter(c.robots)
            for path, n in lst:
                for _ in range(n):
                    out[next(it)] = list(path)
        return out

    def route_cost(self, g: CellGraph) -> float:
        return float(sum(n * g.path_cost(p) for lst in self.paths for p, n in lst))


def influx_of(commodities, paths) -> dict:
    """Robots entering each cell that is neither their start nor their goal."""
    out = {}
    for c, lst in zip(commodities, paths):
        for path, n in lst:
            for v in path[1:-1]:
                out[v] = out.get(v, 0) + n
    return out


def node_cost(g: CellGraph, allowed) -> float:
    return float(sum(max(g.path_cost(p) for p in ps) for ps in allowed))


def solve_min_influx_mcf(
    g: CellGraph,
    commodities,
    allowed_paths,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    theta: dict | None = None,
    timeout: float | None = None,
) -> FlowSolution:
    """Exact ILP over path variables; ``theta`` adds hard influx limits.

    Flows live on allowed paths (each flow-carrying edge lies on an allowed
    path), which keeps conservation implicit. A tiny route-length term picks
    the shortest among equal-objective solutions.
    """
    allowed = [[tuple(p) for p in ps] for ps in allowed_paths]
    if any(not ps for ps in allowed):
        raise ValueError("every commodity needs at least one allowed path")
    O = len(commodities)
    xs = [(o, j) for o in range(O) for j in range(len(allowed[o]))]
    nx = len(xs)
    iL = nx  # L_sg variables
    iin = nx + O  # L_in
    n = nx + O + 1
    total = sum(c.count for c in commodities)
    maxcost = max(g.path_cost(p) for ps in allowed for p in ps) if g.weights else 0.0
    eps = 1e-3 * min(alpha, beta) / (1.0 + total * (1.0 + maxcost))
    c = np.zeros(n)
    for k, (o, j) in enumerate(xs):
        c[k] = eps * g.path_cost(allowed[o][j])
    c[iL:iin] = alpha
    c[iin] = beta

    A_ub, b_ub = [], []
    # L_sg >= y_e for every edge of the commodity's allowed paths
    for o in range(O):
        on_edge = {}
        for k, (oo, j) in enumerate(xs):
            if oo == o:
                for e in zip(allowed[o][j], allowed[o][j][1:]):
                    on_edge.setdefault(e, []).append(k)
        for e in sorted(on_edge):
            row = np.zeros(n)
            row[on_edge[e]] = 1.0
            row[iL + o] = -1.0
            A_ub.append(row)
            b_ub.append(0.0)
    # L_in >= influx of each cell over commodities for which it is intermediate
    through = {}
    for k, (o, j) in enumerate(xs):
        for v in allowed[o][j][1:-1]:
            through.setdefault(v, []).append(k)
    for v in sorted(through):
        row = np.zeros(n)
        row[through[v]] = 1.0
        row[iin] = -1.0
        A_ub.append(row)
        b_ub.append(0.0)
        if theta is not None and math.isfinite(theta.get(v, math.inf)):
            row = np.zeros(n)
            row[through[v]] = 1.0
            A_ub.append(row)
            b_ub.append(float(theta[v]))
    A_eq = np.zeros((O, n))
    for k, (o, _) in enumerate(xs):
        A_eq[o, k] = 1.0
    b_eq = np.array([float(cm.count) for cm in commodities])
    bounds = [(0.0, float(commodities[o].count)) for o, _ in xs]
    bounds += [(0.0, float(cm.count)) for cm in commodities] + [(0.0, float(total))]
    integer = np.zeros(n, dtype=bool)
    integer[:nx] = True
    res = solve_ilp(
        IntegerProgram(LinearProgram(c, np.array(A_ub) if A_ub else None, b_ub or None, A_eq, b_eq, bounds), integer),
        timeout=timeout,
    )
    if not res.success:
        if theta is not None and res.status == INFEASIBLE:
            raise Unsolvable("influx limits cannot be met on the allowed paths")
        raise RoutingError(f"MCF ILP status {res.status}")
    x = np.rint(res.x[:nx]).astype(int)
    paths = [[] for _ in range(O)]
    for k, (o, j) in enumerate(xs):
        if x[k] > 0:
            paths[o].append((allowed[o][j], int(x[k])))
    L_sg = []
    for o, lst in enumerate(paths):
        ys = {}
        for path, m in lst:
            for e in zip(path, path[1:]):
                ys[e] = ys.get(e, 0) + m
        L_sg.append(max(ys.values(), default=0))
    flux = influx_of(commodities, paths)
    L_in = max(flux.values(), default=0)
    return FlowSolution(
        list(commodities),
        paths,
        allowed,
        L_sg,
        L_in,
        alpha * sum(L_sg) + beta * L_in,
        node_cost(g, allowed),
        stats={"ilp_nodes": res.nodes},
    )


# ---------------------------------------------------------------- routers


def _theta_of(theta, nodes) -> dict:
    if isinstance(theta, dict):
        return {v: float(theta.get(v, math.inf)) for v in nodes}
    return {v: float(theta) for v in nodes}


def congested_cells(sol: FlowSolution, theta: dict) -> list:
    return sorted(v for v, f in sol.influx().items() if f > theta.get(v, math.inf))


def _trivial_paths(commodities):
    return [[(c.start,)] if c.start == c.goal else None for c in commodities]


def mcf_od(
    g: CellGraph,
    commodities,
    theta,
    w_mcf: float = 2.0,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    stop: threading.Event | None = None,
    max_expansions: int = 100000,
) -> FlowSolution:
    """Best-first search over conflict-tree nodes (per-commodity path counts)."""
    if w_mcf < 1:
        raise ValueError("w_mcf must be >= 1")
    theta = _theta_of(theta, g.nodes)
    enums = [None if c.start == c.goal else PathEnumerator(g, c.start, c.goal) for c in commodities]

    def paths_for(o, k):
        return [[commodities[o].start]] if enums[o] is None else enums[o].get(k)

    pmin = [g.path_cost(paths_for(o, 1)[0]) for o in range(len(commodities))]
    root = tuple(1 for _ in commodities)
    allowed = [paths_for(o, 1) for o in range(len(commodities))]
    sol = solve_min_influx_mcf(g, commodities, allowed, alpha, beta)
    tie = itertools.count()
    open_ = [(round(sol.cost, _ROUND), sum(root), root, next(tie), sol)]
    visited = {root}
    trace = []
    while open_:
        if stop is not None and stop.is_set():
            raise TimeoutError("mcf_od stopped")
        cost, _, counts, _, P = heapq.heappop(open_)
        trace.append((cost, counts))
        cs = congested_cells(P, theta)
        if not cs:
            P.method = "mcf_od"
            P.stats.update(trace=trace, expansions=len(trace), visited=len(visited))
            return P
        if len(trace) >= max_expansions:
            break
        conf = sorted(
            o for o, lst in enumerate(P.paths) if any(v in cs for path, _ in lst for v in path[1:-1])
        )
        for o in conf:
            child = counts[:o] + (counts[o] + 1,) + counts[o + 1:]
            if child in visited:
                continue
            visited.add(child)
            ps = paths_for(o, child[o])
            if len(ps) < child[o]:
                continue  # no further simple path
            if g.path_cost(ps[-1]) > w_mcf * pmin[o] + 1e-9:
                continue
            allowed = list(P.allowed)
            allowed[o] = [tuple(p) for p in ps]
            A = solve_min_influx_mcf(g, commodities, allowed, alpha, beta)
            heapq.heappush(open_, (round(A.cost, _ROUND), sum(child), child, next(tie), A))
    raise Unsolvable("conflict tree exhausted with congestion left")


def bounded_paths(g: CellGraph, c: Commodity, w_mcf: float) -> list:
    if c.start == c.goal:
        return [[c.start]]
    en = PathEnumerator(g, c.start, c.goal)
    best = g.path_cost(en.get(1)[0])
    k = 1
    while True:
        ps = en.get(k + 1)
        if len(ps) == k or g.path_cost(ps[-1]) > w_mcf * best + 1e-9:
            return ps[:k]
        k += 1


def one_shot_mcf(
    g: CellGraph,
    commodities,
    theta,
    w_mcf: float = 2.0,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    timeout: float | None = None,
) -> FlowSolution:
    if w_mcf < 1:
        raise ValueError("w_mcf must be >= 1")
    theta = _theta_of(theta, g.nodes)
    allowed = [bounded_paths(g, c, w_mcf) for c in commodities]
    sol = solve_min_influx_mcf(g, commodities, allowed, alpha, beta, theta=theta, timeout=timeout)
    sol.method = "one_shot"
    # node cost over the paths that actually carry flow
    sol.cost = float(sum(max(g.path_cost(p) for p, _ in lst) for lst in sol.paths))
    return sol


def greedy_routing(g: CellGraph, commodities) -> FlowSolution:
    paths, allowed = [], []
    for c in commodities:
        p = tuple(k_shortest_paths(g, c.start, c.goal, 1)[0])
        paths.append([(p, c.count)])
        allowed.append([p])
    L_sg = [c.count if len(p[0][0]) > 1 else 0 for c, p in zip(commodities, paths)]
    flux = influx_of(commodities, paths)
    L_in = max(flux.values(), default=0)
    return FlowSolution(
        list(commodities), paths, allowed, L_sg, L_in, DEFAULT_ALPHA * sum(L_sg) + DEFAULT_BETA * L_in,
        node_cost(g, allowed), method="greedy",
    )


def race_routers(g: CellGraph, commodities, theta, w_mcf: float = 2.0, timeout: float = 1.0, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA) -> FlowSolution:
    """MCF/OD if it finishes within ``timeout`` seconds, else one-shot MCF.

    ``timeout <= 0`` skips MCF/OD. The choice is recorded in ``stats``.
    """
    t0 = time.perf_counter()
    if timeout <= 0:
        try:
            sol = one_shot_mcf(g, commodities, theta, w_mcf, alpha, beta)
        except Unsolvable as e:
            raise BothUnsolvable(str(e)) from e
        sol.stats["race"] = {"winner": "one_shot", "mcf_od": "skipped"}
        return sol
    stop = threading.Event()
    with ThreadPoolExecutor(max_workers=2) as pool:
        f_od = pool.submit(mcf_od, g, commodities, theta, w_mcf, alpha, beta, stop)
        f_os = pool.submit(one_shot_mcf, g, commodities, theta, w_mcf, alpha, beta)
        od_state = "ok"
        try:
            sol = f_od.result(timeout=timeout)
        except FutureTimeout:
            stop.set()
            od_state = "timeout"
            sol = None
        except Unsolvable:
            od_state = "unsolvable"
            sol = None
        if sol is not None:
            f_os.cancel()
            sol.stats["race"] = {"winner": "mcf_od", "mcf_od": od_state}
            return sol
        try:
            sol = f_os.result()
        except Unsolvable as e:
            raise BothUnsolvable("neither router met the influx limits") from e
    sol.stats["race"] = {"winner": "one_shot", "mcf_od": od_state, "elapsed": time.perf_counter() - t0}
    return sol
