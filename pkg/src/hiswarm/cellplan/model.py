"""Cell move graph, discrete paths and the exhaustive generalized-conflict checker."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

from ..roadmap import ConflictAnnotations, edge_key


@dataclass
class DiscretePath:
    robot: int
    vertices: list  # one vertex id per timestep
    dt: float = 0.5
    offset: float = 0.0  # time of vertices[0] (s)

    def times(self) -> list:
        return [self.offset + k * self.dt for k in range(len(self.vertices))]

    @property
    def cost(self) -> int:
        return len(self.vertices) - 1


@dataclass(frozen=True)
class Agent:
    robot: int
    start: int
    goal: int
    start_step: int = 0  # appears at ``start`` at this step (cell-crossing arrivals)
    not_before: int = 0  # may not stand on ``goal`` before this step


@dataclass
class Reserved:
    """Fixed plan acting as a dynamic obstacle.

    With ``stay`` the robot remains on its last vertex forever; otherwise it
    leaves the cell after its last step.
    """

    vertices: list
    start_step: int = 0
    stay: bool = True

    def at(self, t):
        k = t - self.start_step
        if k < 0:
            return None
        if k < len(self.vertices):
            return self.vertices[k]
        return self.vertices[-1] if self.stay else None

    @property
    def end(self) -> int:
        return self.start_step + len(self.vertices)


class MoveGraph:
    """Traversal graph for one cell with lookups into conflict annotations.

    Vertices are global roadmap ids. Undirected edges can be used both ways,
    directed (local-goal) edges one way only. Waiting is always allowed.
    """

    def __init__(self, vertices, edges, directed, ann: ConflictAnnotations):
        self.vertices = sorted(set(vertices))
        vs = set(self.vertices)
        succ = {v: set() for v in self.vertices}
        self.directed = set()
        for u, v in edges:
            if u in vs and v in vs:
                succ[u].add(v)
                succ[v].add(u)
        for u, v in directed:
            if u in vs and v in vs:
                succ[u].add(v)
                self.directed.add((u, v))
        self.succ = {v: sorted(s) for v, s in succ.items()}
        pred = {v: [] for v in self.vertices}
        for u, ss in self.succ.items():
            for v in ss:
                pred[v].append(u)
        self.pred = pred
        self.ann = ann
        self._dist = {}

    @classmethod
    def from_cell(cls, cell, ann):
        return cls(cell.vertices, cell.edges, cell.directed_edges, ann)

    def key(self, u, v):
        if u == v:
            return None
        return (u, v) if (u, v) in self.directed else edge_key(u, v)

    def conVV(self, v):
        return self.ann.conVV.get(v, {v})

    def conEE(self, e):
        return self.ann.conEE.get(e, {e})

    def conEV(self, e):
        return self.ann.conEV.get(e, set(e))

    def dist_to(self, goal) -> dict:
        """Unit-step distances to ``goal`` (BFS over reversed edges)."""
        d = self._dist.get(goal)
        if d is None:
            d = {goal: 0}
            q = deque([goal])
            while q:
                v = q.popleft()
                for u in self.pred.get(v, ()):
                    if u not in d:
                        d[u] = d[v] + 1
                        q.append(u)
            self._dist[goal] = d
        return d


# ---------------------------------------------------------------- occupancy tables


class Occupancy:
    """Per-timestep counts of vertices, moves and waits for a set of fixed plans.

    Entries beyond ``horizon`` repeat the last row (staying robots only).
    """

    def __init__(self, g: MoveGraph, plans):
        self.g = g
        plans = list(plans)
        self.horizon = max((p.end for p in plans), default=0) + 1
        self.occ, self.moves, self.waits, self.covered = [], [], [], []
        for t in range(self.horizon + 1):
            occ, mv, wt, cov = Counter(), Counter(), Counter(), Counter()
            for p in plans:
                a = p.at(t)
                if a is None:
                    continue
                occ[a] += 1
                b = p.at(t + 1)
                if b is None:
                    continue
                if a == b:
                    wt[a] += 1
                else:
                    e = g.key(a, b)
                    mv[e] += 1
                    for v in g.conEV(e):
                        cov[v] += 1
            self.occ.append(occ)
            self.moves.append(mv)
            self.waits.append(wt)
            self.covered.append(cov)

    def _i(self, t):
        return min(t, self.horizon)

    def vertex_hits(self, v, t) -> int:
        occ = self.occ[self._i(t)]
        if not occ:
            return 0
        return sum(occ[u] for u in self.g.conVV(v) if u in occ)

    def move_hits(self, u, v, t) -> int:
        i = self._i(t)
        if u == v:
            return self.covered[i].get(u, 0)
        e = self.g.key(u, v)
        mv, wt = self.moves[i], self.waits[i]
        n = sum(mv[d] for d in self.g.conEE(e) if d in mv) if mv else 0
        if wt:
            n += sum(wt[w] for w in self.g.conEV(e) if w in wt)
        return n

    def hits(self, u, v, t) -> int:
        """Conflicts caused by moving u -> v during step t -> t+1."""
        return self.vertex_hits(v, t + 1) + self.move_hits(u, v, t)


# ---------------------------------------------------------------- exhaustive checker


@dataclass(frozen=True)
class Conflict:
    kind: str  # "vertex", "edge", "edge_vertex"
    i: int  # agent index (reserved plans are numbered after agents)
    j: int
    t: int  # vertex: time of the state; moves: step t -> t+1
    a: tuple  # (u, v) move of i, or (v, v) for a vertex conflict
    b: tuple


def plans_of(paths, agents) -> list:
    """Agents' paths as staying plans starting at their start steps."""
    return [Reserved(list(p), a.start_step, True) for p, a in zip(paths, agents)]


def find_conflicts(g: MoveGraph, plans, first_only: bool = False, pairs=None) -> list:
    """Every vertex, edge-edge and edge-vertex conflict among ``plans``.

    ``pairs`` restricts checking to index pairs (i, j) with i < j.
    """
    plans = list(plans)
    n = len(plans)
    T = max((p.end for p in plans), default=0) + 1
    if pairs is None:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    out = []
    for t in range(T + 1):
        pos = [p.at(t) for p in plans]
        nxt = [p.at(t + 1) for p in plans]
        for i, j in pairs:
            a, b = pos[i], pos[j]
            if a is None or b is None:
                continue
            if b in g.conVV(a):
                out.append(Conflict("vertex", i, j, t, (a, a), (b, b)))
                if first_only:
                    return out
                continue
            a2, b2 = nxt[i], nxt[j]
            if a2 is None or b2 is None:
                continue
            if a != a2 and b != b2:
                ea, eb = g.key(a, a2), g.key(b, b2)
                if eb in g.conEE(ea):
                    out.append(Conflict("edge", i, j, t, (a, a2), (b, b2)))
            elif a != a2 and b == b2:
                if b in g.conEV(g.key(a, a2)):
                    out.append(Conflict("edge_vertex", i, j, t, (a, a2), (b, b)))
            elif a == a2 and b != b2:
                if a in g.conEV(g.key(b, b2)):
                    out.append(Conflict("edge_vertex", i, j, t, (a, a), (b, b2)))
            if first_only and out:
                return out
    return out


def valid_path(g: MoveGraph, path) -> bool:
    return all(v == u or v in g.succ.get(u, ()) for u, v in zip(path, path[1:]))


def sum_of_costs(paths) -> int:
    return sum(len(p) - 1 for p in paths)
