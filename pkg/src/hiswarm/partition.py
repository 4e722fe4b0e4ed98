"""Roadmap partitioning into convex cells and local-goal generation on shared faces."""

from __future__ import annotations

import heapq
import json
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    DEFAULT_PENALTY,
    SEP_TOL,
    Aabb,
    ConvexPolytope,
    Hyperplane,
    buffer_by_support,
    separate_soft,
    swept_hull,
)
from .roadmap import ROBOT_BOX, Roadmap, _hull_hits, _intersects, _box_hits

BALANCE_TOL = 0.15


class Infeasible(ValueError):
    pass


class NonSeparable(RuntimeError):
    pass


class CellEmptied(RuntimeError):
    pass


class NoGoalOnFace(RuntimeError):
    pass


# ---------------------------------------------------------------- graph split


def _adjacency(n, edges):
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    return [sorted(a) for a in adj]


def _bfs(adj, src, allowed=None):
    dist = {src: 0}
    dq = deque([src])
    while dq:
        u = dq.popleft()
        for v in adj[u]:
            if v not in dist and (allowed is None or v in allowed):
                dist[v] = dist[u] + 1
                dq.append(v)
    return dist


def _connected(adj, verts: set) -> bool:
    if len(verts) <= 1:
        return True
    src = min(verts)
    return len(_bfs(adj, src, verts)) == len(verts)


def _farthest_seeds(adj, n, Q):
    seeds = []
    # hop distance to the nearest seed; unreachable vertices count as far away
    best = np.full(n, np.inf)
    d0 = _bfs(adj, 0)
    first = max(d0, key=lambda v: (d0[v], -v))
    for _ in range(Q):
        s = first if not seeds else int(np.argmax(np.where(np.isin(np.arange(n), seeds), -1, best)))
        seeds.append(s)
        d = _bfs(adj, s)
        dv = np.full(n, np.inf)
        for v, k in d.items():
            dv[v] = k
        best = np.minimum(best, dv)
        best[np.isinf(best)] = 1e9
    return seeds


def cut_size(edges, label) -> int:
    return sum(1 for u, v in edges if label[u] != label[v])


def partition_graph(r: Roadmap, Q: int, balance_tol: float = BALANCE_TOL, refine_passes: int = 8) -> list:
    """Q connected, balanced vertex sets: seeded greedy growth, then boundary refinement."""
    n = r.n
    if Q < 1 or Q > n:
        raise Infeasible(f"Q={Q} not in [1, {n}]")
    if Q == 1:
        return [set(range(n))]
    adj = _adjacency(n, r.edges)
    cap = int(np.floor((1 + balance_tol) * n / Q))
    if cap * Q < n:
        raise Infeasible("balance tolerance too tight")
    seeds = _farthest_seeds(adj, n, Q)
    label = -np.ones(n, dtype=int)
    sizes = [0] * Q
    heaps = []
    for q, s in enumerate(seeds):
        label[s] = q
        sizes[q] = 1
        d = _bfs(adj, s)
        h = []
        for v in adj[s]:
            heapq.heappush(h, (d.get(v, 0), v))
        heaps.append((h, d))
    unassigned = n - Q
    while unassigned:
        order = sorted(range(Q), key=lambda q: (sizes[q], q))
        grown = False
        for q in order:
            h, d = heaps[q]
            if sizes[q] >= cap:
                continue
            while h and label[h[0][1]] >= 0:
                heapq.heappop(h)
            if not h:
                continue
            _, v = heapq.heappop(h)
            label[v] = q
            sizes[q] += 1
            unassigned -= 1
            for w in adj[v]:
                if label[w] < 0:
                    heapq.heappush(h, (d.get(w, 0), w))
            grown = True
            break
        if not grown:
            # disconnected leftovers: hand them to the smallest region with room
            for v in np.nonzero(label < 0)[0]:
                q = min((q for q in range(Q) if sizes[q] < cap), key=lambda q: (sizes[q], q), default=None)
                if q is None:
                    raise Infeasible("no region has room for a disconnected component")
                label[v] = q
                sizes[q] += 1
            unassigned = 0
    label = _refine(adj, r.edges, label, Q, cap, refine_passes)
    return [set(np.nonzero(label == q)[0].tolist()) for q in range(Q)]


def _refine(adj, edges, label, Q, cap, passes):
    """Kernighan-Lin style single-vertex moves with positive cut gain."""
    label = label.copy()
    sizes = np.bincount(label, minlength=Q)
    members = [set(np.nonzero(label == q)[0].tolist()) for q in range(Q)]
    for _ in range(passes):
        moved = False
        for v in range(len(label)):
            a = label[v]
            counts = defaultdict(int)
            for w in adj[v]:
                counts[label[w]] += 1
            best, gain = None, 0
            for b in sorted(counts):
                if b == a:
                    continue
                g = counts[b] - counts[a]
                if g > gain and sizes[b] + 1 <= cap and sizes[a] > 1:
                    best, gain = b, g
            if best is None:
                continue
            members[a].discard(v)
            if not _connected(adj, members[a]):
                members[a].add(v)
                continue
            members[best].add(v)
            label[v] = best
            sizes[a] -= 1
            sizes[best] += 1
            moved = True
        if not moved:
            break
    return label


# ---------------------------------------------------------------- separation


def linear_separation(r: Roadmap, groups, penalty: float = DEFAULT_PENALTY, max_iter: int = 50):
    """Soft-margin planes for every group pair; move violators until every vertex is strictly inside."""
    groups = [set(g) for g in groups]
    Q = len(groups)
    P = r.positions
    label = -np.ones(r.n, dtype=int)
    for q, g in enumerate(groups):
        for v in g:
            if label[v] >= 0:
                raise ValueError("groups must be disjoint")
            label[v] = q
    moves = 0
    bounced = defaultdict(int)
    for _ in range(max_iter):
        planes = {}
        for m in range(Q):
            for l in range(m + 1, Q):
                gm = P[label == m]
                gl = P[label == l]
                if len(gm) == 0 or len(gl) == 0:
                    raise NonSeparable(f"group {m if len(gm) == 0 else l} emptied")
                h = separate_soft(gm, gl, penalty)
                planes[(m, l)] = h
                planes[(l, m)] = h.flipped()
        S = np.full((Q, Q, r.n), -np.inf)  # S[m, l] = signed distance to plane (m, l)
        for (m, l), h in planes.items():
            S[m, l] = h.signed(P)
        worst = S.max(axis=1)  # per cell, worst plane value for every vertex
        changed = []
        for v in np.nonzero(label >= 0)[0]:
            m = label[v]
            if worst[m, v] <= -SEP_TOL:
                continue
            inside = np.nonzero(worst[:, v] < -SEP_TOL)[0]
            if inside.size:
                changed.append((v, int(inside[0])))
            elif bounced[v] >= 3:
                changed.append((v, -1))  # lies in no cell: drop it from the partition
            else:
                changed.append((v, int(np.argmax(np.where(np.arange(Q) == m, -np.inf, S[m, :, v])))))
        if not changed:
            return planes, [set(np.nonzero(label == q)[0].tolist()) for q in range(Q)], moves
        for v, t in changed:
            label[v] = t
            bounced[v] += 1
        moves += len(changed)
    raise NonSeparable(f"no fixed point after {max_iter} iterations")


def collision_config(shape: Aabb) -> Aabb:
    """Minkowski sum shape + (-shape): inter-robot collision configuration."""
    return Aabb(shape.min - shape.max, shape.max - shape.min)


# ---------------------------------------------------------------- cells


@dataclass
class Cell:
    id: int
    polytope: ConvexPolytope | None  # unbuffered planes, cell on the <= 0 side
    vertices: list  # global vertex ids (base vertices plus attached local goals)
    edges: list = field(default_factory=list)  # undirected (u, v) inside the cell
    directed_edges: list = field(default_factory=list)  # goal in-edges and out-edges
    local_goals: list = field(default_factory=list)  # exits: (goal vertex, neighbour cell)
    entries: list = field(default_factory=list)  # entries: (goal vertex, neighbour cell)
    neighbor_faces: dict = field(default_factory=dict)  # neighbour -> Hyperplane (unbuffered)
    buffered_faces: dict = field(default_factory=dict)  # neighbour -> buffered Hyperplane

    def sub_roadmap(self, r: Roadmap) -> tuple:
        """(Roadmap over local indices, list mapping local -> global id)."""
        ids = sorted(self.vertices)
        loc = {g: i for i, g in enumerate(ids)}
        return (
            Roadmap(r.positions[ids], [(loc[u], loc[v]) for u, v in self.edges], [(loc[u], loc[v]) for u, v in self.directed_edges]),
            ids,
        )


@dataclass
class Partition:
    cells: list
    roadmap: Roadmap  # base roadmap plus local-goal vertices and directed edges
    planes: dict  # (m, l) -> Hyperplane with m on the <= 0 side
    faces: list  # sorted neighbour pairs (m, l), m < l
    goal_face: dict = field(default_factory=dict)  # goal vertex -> (from cell, to cell)
    n_base: int = 0  # vertices with id < n_base are grid vertices

    @property
    def Q(self) -> int:
        return len(self.cells)

    def owner_of_vertex(self) -> dict:
        """Base vertex -> its cell (goals excluded)."""
        out = {}
        for c in self.cells:
            for v in c.vertices:
                if v not in self.goal_face:
                    out[v] = c.id
        return out

    def to_json(self) -> str:
        doc = {
            "Q": self.Q,
            "n_base": self.n_base,
            "roadmap": json.loads(self.roadmap.to_json()),
            "faces": [list(f) for f in self.faces],
            "planes": [[m, l, *map(float, h.normal), float(h.offset)] for (m, l), h in sorted(self.planes.items())],
            "goal_face": [[g, m, l] for g, (m, l) in sorted(self.goal_face.items())],
            "cells": [
                {
                    "id": c.id,
                    "vertices": sorted(c.vertices),
                    "edges": [list(e) for e in sorted(c.edges)],
                    "directed_edges": [list(e) for e in sorted(c.directed_edges)],
                    "local_goals": [list(x) for x in c.local_goals],
                    "entries": [list(x) for x in c.entries],
                }
                for c in self.cells
            ],
        }
        return json.dumps(doc, sort_keys=True)


def _cell_polytope(m, Q, planes):
    hs = [planes[(m, l)] for l in range(Q) if l != m and (m, l) in planes]
    return ConvexPolytope(hs) if hs else None


def neighbor_pairs(r: Roadmap, groups, min_face_edges: int = 1) -> list:
    label = {}
    for q, g in enumerate(groups):
        for v in g:
            label[v] = q
    count = defaultdict(int)
    for u, v in r.edges:
        a, b = label.get(u), label.get(v)
        if a is not None and b is not None and a != b:
            count[(min(a, b), max(a, b))] += 1
    return sorted(k for k, c in count.items() if c >= min_face_edges)


def make_partition(r: Roadmap, groups, planes, min_face_edges: int = 1) -> Partition:
    Q = len(groups)
    faces = neighbor_pairs(r, groups, min_face_edges)
    cells = []
    for m, g in enumerate(groups):
        verts = sorted(g)
        gs = set(verts)
        edges = [(u, v) for u, v in r.edges if u in gs and v in gs]
        nf = {}
        for a, b in faces:
            if a == m:
                nf[b] = planes[(a, b)]
            elif b == m:
                nf[a] = planes[(b, a)]
        cells.append(Cell(m, _cell_polytope(m, Q, planes), verts, edges, neighbor_faces=nf))
    return Partition(cells, r, dict(planes), faces, {}, r.n)


def buffer_cell_faces(p: Partition, shape: Aabb = ROBOT_BOX) -> Partition:
    """Shift every cell plane by the collision-configuration support and drop vertices in the band."""
    ccol = collision_config(shape).as_hull()
    P = p.roadmap.positions
    cells = []
    for c in p.cells:
        bplanes = {l: buffer_by_support(p.planes[(c.id, l)], ccol) for l in range(p.Q) if l != c.id}
        keep = []
        for v in c.vertices:
            if v in p.goal_face:
                keep.append(v)
                continue
            # touching shapes count as a conflict, so the band is closed on its inner side
            if all(h.signed(P[v]) < -SEP_TOL for h in bplanes.values()):
                keep.append(v)
        if not any(v not in p.goal_face for v in keep):
            raise CellEmptied(f"cell {c.id} lost all vertices to buffering")
        ks = set(keep)
        cells.append(
            Cell(
                c.id,
                c.polytope,
                keep,
                [(u, v) for u, v in c.edges if u in ks and v in ks],
                [(u, v) for u, v in c.directed_edges if u in ks and v in ks],
                list(c.local_goals),
                list(c.entries),
                dict(c.neighbor_faces),
                {l: bplanes[l] for l in c.neighbor_faces},
            )
        )
    return Partition(cells, p.roadmap, p.planes, p.faces, dict(p.goal_face), p.n_base)


# ---------------------------------------------------------------- local goals


@dataclass
class _Item:
    kind: str  # "v" or "e"
    owners: frozenset
    key: tuple  # (v,) or (u, v)
    hull: object


class _Structure:
    """Spatially indexed set of vertices and edges with their owning cells."""

    def __init__(self):
        self.items: list[_Item] = []
        self._centers = []
        self._radii = []
        self._tree = None
        self._dirty = 0

    def add(self, item: _Item):
        b = item.hull.bounds
        self.items.append(item)
        self._centers.append(b.center)
        self._radii.append(float(np.linalg.norm(b.half)))
        self._tree = None

    def near(self, hull, extra=0.0):
        if not self.items:
            return []
        if self._tree is None:
            self._tree = cKDTree(np.array(self._centers))
            self._rmax = max(self._radii)
        b = hull.bounds
        r = float(np.linalg.norm(b.half)) + self._rmax + 1e-6 + extra
        return [self.items[i] for i in sorted(self._tree.query_ball_point(b.center, r))]


def _conflicts(new: _Item, old: _Item, goal_vertices: set) -> bool:
    if new.owners & old.owners:
        return False
    shared = set(new.key) & set(old.key) & goal_vertices
    if shared:
        return False
    return _intersects(new.hull, old.hull)


def _base_structure(p: Partition, shape: Aabb) -> _Structure:
    st = _Structure()
    P = p.roadmap.positions
    for c in p.cells:
        own = frozenset([c.id])
        for v in c.vertices:
            if v in p.goal_face:
                continue
            st.add(_Item("v", own, (v,), shape.translated(P[v]).as_hull()))
        for u, v in c.edges:
            st.add(_Item("e", own, (u, v), swept_hull(shape, P[u], P[v])))
    return st


def _plane_basis(n):
    a = np.eye(3)[int(np.argmin(np.abs(n)))]
    u1 = np.cross(n, a)
    u1 /= np.linalg.norm(u1)
    return u1, np.cross(n, u1)


def _clip_polygon(poly, halfplanes):
    """Sutherland-Hodgman clip of a convex 2-D polygon by a.x + b <= 0 constraints."""
    pts = [np.asarray(p, dtype=float) for p in poly]
    for a, b in halfplanes:
        if not pts:
            break
        out = []
        for i in range(len(pts)):
            p, q = pts[i], pts[(i + 1) % len(pts)]
            fp, fq = a @ p + b, a @ q + b
            if fp <= 0:
                out.append(p)
            if (fp < 0 < fq) or (fq < 0 < fp):
                out.append(p + fp / (fp - fq) * (q - p))
        pts = out
    return np.array(pts) if len(pts) >= 3 else None


def _poly_area(poly) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(x @ np.roll(y, -1) - y @ np.roll(x, -1)))


def _fan(poly):
    tri = [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]
    area = np.array([0.5 * abs((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0]) for a, b, c in tri])
    if area.sum() <= 0:
        return tri, np.full(len(tri), 1.0 / len(tri))
    return tri, area / area.sum()


def sample_local_goals(
    p: Partition,
    shape: Aabb = ROBOT_BOX,
    per_face: int = 4,
    connect_radius: float = 1.0,
    seed: int = 0,
    obstacles=(),
    workspace: Aabb | None = None,
    max_attempts: int = 60,
    max_links: int = 2,
    stats=None,
) -> Partition:
    """Sample directed local goals on every shared face (m -> l and l -> m), keeping P1-P3."""
    obstacles = list(obstacles)
    stats = defaultdict(int) if stats is None else stats
    ccol = collision_config(shape).as_hull()
    P = p.roadmap.positions
    positions = [row for row in P]
    goal_face = dict(p.goal_face)
    st = _base_structure(p, shape)
    vtree = cKDTree(P)
    cell_of = p.owner_of_vertex()
    cells = {c.id: c for c in p.cells}
    base_verts = {c.id: np.array(sorted(v for v in c.vertices if v not in goal_face), dtype=int) for c in p.cells}
    new_dir = defaultdict(list)
    exits = defaultdict(list)
    entries = defaultdict(list)
    added_goals = []  # positions of accepted goals for P1

    def p1_ok(g):
        box = shape.translated(g)
        for v in vtree.query_ball_point(g, float(np.linalg.norm(2 * ccol.bounds.half)) + 1e-6):
            if box.overlaps(shape.translated(P[v])):
                return False
        for q in added_goals:
            if box.overlaps(shape.translated(q)):
                return False
        return True

    def _links(g, near, tree, hull_of):
        # nearest obstacle-free vertices within the radius (distance, then id)
        idx = tree.query_ball_point(g, connect_radius)
        cand = sorted((float(np.linalg.norm(P[near[i]] - g)), int(near[i])) for i in idx)
        out = []
        for _, v in cand:
            if obstacles and _hull_hits(hull_of(v), obstacles):
                continue
            out.append(v)
            if len(out) == max_links:
                break
        return out

    def setup(m, l):
        h = p.planes[(m, l)]
        # stay inside both cells; P1-P3 are checked explicitly, so no extra
        # erosion is needed against the other faces
        others = [p.planes[(m, k)] for k in range(p.Q) if k not in (m, l)]
        others += [p.planes[(l, k)] for k in range(p.Q) if k not in (m, l)]
        vm, vl = base_verts[m], base_verts[l]
        near_m = vm[np.abs(h.signed(P[vm])) <= connect_radius] if len(vm) else vm
        near_l = vl[np.abs(h.signed(P[vl])) <= connect_radius] if len(vl) else vl
        if not len(near_m) or not len(near_l):
            return None
        u1, u2 = _plane_basis(h.normal)
        proj = h.project(P[np.r_[near_m, near_l]])
        origin = proj.mean(0)
        c1 = (proj - origin) @ u1
        c2 = (proj - origin) @ u2
        rect = np.array([[c1.min(), c2.min()], [c1.max(), c2.min()], [c1.max(), c2.max()], [c1.min(), c2.max()]])
        cons = [(o.normal, o.offset) for o in others]
        if workspace is not None:
            for k in range(3):
                e = np.eye(3)[k]
                cons += [(e, -workspace.max[k]), (-e, workspace.min[k])]
        poly = _clip_polygon(rect, [(np.array([n @ u1, n @ u2]), n @ origin + b) for n, b in cons])
        if poly is None:
            return None
        tri, w = _fan(poly)
        return dict(
            poly=poly, m=m, l=l, rng=np.random.default_rng([seed, m, l]), tri=tri, w=w, origin=origin, u1=u1, u2=u2,
            near_m=near_m, near_l=near_l, tm=cKDTree(P[near_m]), tl=cKDTree(P[near_l]), accepted=0,
        )

    def attempt(S):
        m, l, rng = S["m"], S["l"], S["rng"]
        k = int(rng.choice(len(S["tri"]), p=S["w"]))
        r1, r2 = rng.random(2)
        if r1 + r2 > 1:
            r1, r2 = 1 - r1, 1 - r2
        a0, a1, a2 = S["tri"][k]
        xy = a0 + r1 * (a1 - a0) + r2 * (a2 - a0)
        g = S["origin"] + xy[0] * S["u1"] + xy[1] * S["u2"]
        if workspace is not None and not workspace.contains(g):
            stats["workspace"] += 1
            return
        if obstacles and _box_hits(shape.translated(g), obstacles):
            stats["obstacle"] += 1
            return
        if not p1_ok(g):
            stats["P1"] += 1
            return
        gid = len(positions)
        ins = _links(g, S["near_m"], S["tm"], lambda u: swept_hull(shape, P[u], g))
        outs = _links(g, S["near_l"], S["tl"], lambda v: swept_hull(shape, g, P[v]))
        if not ins or not outs:
            stats["no_link"] += 1
            return
        gsets = set(goal_face) | {gid}
        cand = [_Item("v", frozenset([m, l]), (gid,), shape.translated(g).as_hull())]
        cand += [_Item("e", frozenset([m]), (u, gid), swept_hull(shape, P[u], g)) for u in ins]
        cand += [_Item("e", frozenset([l]), (gid, v), swept_hull(shape, g, P[v])) for v in outs]
        for it in cand:
            if any(_conflicts(it, old, gsets) for old in st.near(it.hull)):
                stats["P2/P3"] += 1
                return
        for it in cand:
            st.add(it)
        positions.append(g)
        added_goals.append(g)
        goal_face[gid] = (m, l)
        new_dir[m] += [(u, gid) for u in ins]
        new_dir[l] += [(gid, v) for v in outs]
        exits[m].append((gid, l))
        entries[l].append((gid, m))
        S["accepted"] += 1

    # small faces first, so larger neighbours cannot crowd them out
    plans = []
    for a, b in p.faces:
        states = [setup(a, b), setup(b, a)]
        area = min((_poly_area(S["poly"]) for S in states if S is not None), default=0.0)
        plans.append((area, a, b, states))
    plans.sort(key=lambda x: (x[0], x[1], x[2]))
    for _, a, b, states in plans:
        # per_face counts both directions: first one goal each, then the rest
        quota = [per_face - per_face // 2, per_face // 2]
        for phase in (1, None):
            live = [(S, max(1, q) if phase is None else 1) for S, q in zip(states, quota) if S is not None]
            for _ in range(max_attempts * per_face):
                live = [(S, q) for S, q in live if S["accepted"] < q]
                if not live:
                    break
                for S, _q in live:
                    attempt(S)
        for (m, l), S in zip(((a, b), (b, a)), states):
            if S is None or S["accepted"] == 0:
                raise NoGoalOnFace(f"face {m}->{l} received no local goal")

    all_dir = [e for c in sorted(new_dir) for e in new_dir[c]]
    roadmap = Roadmap(np.array(positions), p.roadmap.edges, list(p.roadmap.directed_edges) + all_dir)
    out_cells = []
    for c in p.cells:
        gv = [g for g, _ in exits[c.id]] + [g for g, _ in entries[c.id]]
        out_cells.append(
            Cell(
                c.id,
                c.polytope,
                sorted(set(c.vertices) | set(gv)),
                list(c.edges),
                sorted(set(c.directed_edges) | set(new_dir[c.id])),
                list(c.local_goals) + exits[c.id],
                list(c.entries) + entries[c.id],
                dict(c.neighbor_faces),
                dict(c.buffered_faces),
            )
        )
    return Partition(out_cells, roadmap, p.planes, p.faces, goal_face, p.n_base)


def audit_partition(p: Partition, shape: Aabb = ROBOT_BOX) -> list:
    """Exhaustive cross-cell check of the P1/P2/P3 properties.

    Returns a list of (kind, a, b) violations: "P1" vertex-vertex, "P2" edge-edge,
    "P3" edge-vertex, between structure owned by disjoint cell sets. Goal pairs are
    always checked for P1. Pairs sharing a local-goal vertex are exempt.
    """
    P = p.roadmap.positions
    goals = set(p.goal_face)
    items = []
    for c in p.cells:
        own = frozenset([c.id])
        for v in c.vertices:
            if v in goals:
                continue
            items.append(_Item("v", own, (v,), shape.translated(P[v]).as_hull()))
        for u, v in c.edges:
            items.append(_Item("e", own, (u, v), swept_hull(shape, P[u], P[v])))
    for g, (m, l) in sorted(p.goal_face.items()):
        items.append(_Item("v", frozenset([m, l]), (g,), shape.translated(P[g]).as_hull()))
    for u, v in p.roadmap.directed_edges:
        if v in goals:
            own = frozenset([p.goal_face[v][0]])
        elif u in goals:
            own = frozenset([p.goal_face[u][1]])
        else:
            continue
        items.append(_Item("e", own, (u, v), swept_hull(shape, P[u], P[v])))
    centers = np.array([it.hull.bounds.center for it in items])
    radii = np.array([np.linalg.norm(it.hull.bounds.half) for it in items])
    tree = cKDTree(centers)
    out = []
    for i, j in sorted(tree.query_pairs(2 * radii.max() + 1e-6)):
        a, b = items[i], items[j]
        if np.linalg.norm(centers[i] - centers[j]) > radii[i] + radii[j] + 1e-6:
            continue
        both_goals = a.kind == b.kind == "v" and a.key[0] in goals and b.key[0] in goals
        if a.owners & b.owners and not both_goals:
            continue
        if set(a.key) & set(b.key) & goals:
            continue
        if not _intersects(a.hull, b.hull):
            continue
        kinds = {a.kind, b.kind}
        tag = "P1" if kinds == {"v"} else "P2" if kinds == {"e"} else "P3"
        out.append((tag, a.key, b.key))
    return out


def build_partition(
    r: Roadmap,
    Q: int,
    shape: Aabb = ROBOT_BOX,
    per_face: int = 4,
    connect_radius: float = 1.0,
    seed: int = 0,
    obstacles=(),
    workspace: Aabb | None = None,
    balance_tol: float = BALANCE_TOL,
    penalty: float = DEFAULT_PENALTY,
    min_face_edges: int = 6,
    max_links: int = 2,
) -> Partition:
    """Full pipeline: split, separate, buffer, sample local goals."""
    groups = partition_graph(r, Q, balance_tol)
    if Q == 1:
        return make_partition(r, groups, {})
    planes, groups, _ = linear_separation(r, groups, penalty)
    p = make_partition(r, groups, planes, min_face_edges)
    p = buffer_cell_faces(p, shape)
    return sample_local_goals(p, shape, per_face, connect_radius, seed, obstacles, workspace, max_links=max_links)


def cell_adjacency_connected(p: Partition) -> bool:
    adj = _adjacency(p.Q, p.faces)
    return p.Q == 0 or len(_bfs(adj, 0)) == p.Q
