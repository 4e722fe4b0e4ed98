"""Grid roadmap over free space plus generalized (embodied) conflict annotation."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import SEP_TOL, Aabb, ConvexHull, hulls_intersect, swept_hull

# robot collision box used across the package (half extents 0.12, 0.12, 0.2 m)
ROBOT_BOX = Aabb([-0.12, -0.12, -0.2], [0.12, 0.12, 0.2])


class EmptyRoadmap(ValueError):
    pass


def edge_key(u: int, v: int) -> tuple:
    return (u, v) if u < v else (v, u)


@dataclass
class Roadmap:
    positions: np.ndarray  # (N, 3), vertex id = row index
    edges: list = field(default_factory=list)  # canonical (u, v), u < v
    directed_edges: list = field(default_factory=list)  # ordered (u, v)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        n = len(self.positions)
        self.edges = sorted({edge_key(int(u), int(v)) for u, v in self.edges})
        self.directed_edges = sorted({(int(u), int(v)) for u, v in self.directed_edges})
        for u, v in self.edges + self.directed_edges:
            if u == v:
                raise ValueError("self-loop")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) references a missing vertex")

    @property
    def n(self) -> int:
        return len(self.positions)

    def all_edges(self) -> list:
        """Undirected edges followed by directed ones (each a tuple key)."""
        return list(self.edges) + list(self.directed_edges)

    def successors(self) -> dict:
        """Traversal adjacency: undirected edges both ways, directed edges one way."""
        adj = defaultdict(list)
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for u, v in self.directed_edges:
            adj[u].append(v)
        return {k: sorted(set(vs)) for k, vs in adj.items()}

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertices": [[i, *map(float, p)] for i, p in enumerate(self.positions)],
                "edges": [list(e) for e in self.edges],
                "directed_edges": [list(e) for e in self.directed_edges],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Roadmap":
        d = json.loads(text)
        verts = sorted(d["vertices"])
        return cls(np.array([v[1:] for v in verts]), d["edges"], d.get("directed_edges", []))


def _box_hits(box: Aabb, obstacles) -> bool:
    hull = None
    for o in obstacles:
        ob = o.bounds
        if not box.overlaps(ob):
            continue
        if o.box is not None:
            return True
        hull = hull or box.as_hull()
        if hulls_intersect(hull, o):
            return True
    return False


def _hull_hits(h: ConvexHull, obstacles) -> bool:
    hb = h.bounds
    for o in obstacles:
        if not hb.overlaps(o.bounds):
            continue
        if h.box is not None and o.box is not None:
            return True
        if hulls_intersect(h, o):
            return True
    return False


def grid_points(workspace: Aabb, spacing: float) -> np.ndarray:
    counts = np.floor((workspace.max - workspace.min) / spacing + 1e-9).astype(int) + 1
    axes = [workspace.min[k] + spacing * np.arange(counts[k]) for k in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], 1), counts


def build_grid_roadmap(workspace: Aabb, obstacles, spacing: float, shape: Aabb = ROBOT_BOX) -> Roadmap:
    """6-connected grid anchored at the workspace min corner."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    obstacles = list(obstacles)
    pts, counts = grid_points(workspace, spacing)
    idx = -np.ones(len(pts), dtype=int)
    keep = []
    for i, p in enumerate(pts):
        if not _box_hits(shape.translated(p), obstacles):
            idx[i] = len(keep)
            keep.append(i)
    if not keep:
        raise EmptyRoadmap("no free grid vertex")
    ijk = np.stack(np.unravel_index(np.arange(len(pts)), counts), 1)
    edges = []
    for axis in range(3):
        step = int(np.prod(counts[axis + 1:]))  # C-order stride
        ok = ijk[:, axis] + 1 < counts[axis]
        for i in np.nonzero(ok)[0]:
            j = i + step
            if idx[i] < 0 or idx[j] < 0:
                continue
            if obstacles and _hull_hits(swept_hull(shape, pts[i], pts[j]), obstacles):
                continue
            edges.append((int(idx[i]), int(idx[j])))
    return Roadmap(pts[keep], edges)


@dataclass
class ConflictAnnotations:
    conVV: dict
    conEE: dict
    conEV: dict

    def vertex_conflicts(self, u, v) -> bool:
        return v in self.conVV.get(u, ())

    def edge_conflicts(self, e, d) -> bool:
        return d in self.conEE.get(e, ())

    def edge_vertex_conflicts(self, e, v) -> bool:
        return v in self.conEV.get(e, ())


def _intersects(a: ConvexHull, b: ConvexHull) -> bool:
    if a.box is not None and b.box is not None:
        return a.box.overlaps(b.box)
    if not a.bounds.overlaps(b.bounds):
        return False
    return hulls_intersect(a, b)


def vertex_pairs_in_conflict(positions, shape: Aabb, others=None):
    """Pairs (i, j) whose translated shapes overlap; self-pairs omitted.

    With ``others`` given, pairs are (i in positions, j in others).
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    ext = 2.0 * np.maximum(np.abs(shape.min), np.abs(shape.max))  # centered-or-not safe bound
    reach = float(np.linalg.norm(ext)) + 1e-6
    tree = cKDTree(positions)
    out = []
    if others is None:
        for i, j in sorted(tree.query_pairs(reach)):
            if shape.translated(positions[i]).overlaps(shape.translated(positions[j])):
                out.append((i, j))
        return out
    others = np.asarray(others, dtype=float).reshape(-1, 3)
    for j, lst in enumerate(tree.query_ball_point(others, reach)):
        for i in sorted(lst):
            if shape.translated(positions[i]).overlaps(shape.translated(others[j])):
                out.append((i, j))
    return out


def annotate_conflicts(r: Roadmap, shape: Aabb = ROBOT_BOX) -> ConflictAnnotations:
    P = r.positions
    conVV = {v: {v} for v in range(r.n)}
    for i, j in vertex_pairs_in_conflict(P, shape):
        conVV[i].add(j)
        conVV[j].add(i)

    edges = r.all_edges()
    hulls = [swept_hull(shape, P[u], P[v]) for u, v in edges]
    conEE = {e: {e} for e in edges}
    conEV = {e: set(e) for e in edges}
    if edges:
        mids = np.array([0.5 * (P[u] + P[v]) for u, v in edges])
        rad = np.array([np.linalg.norm(h.bounds.half) for h in hulls])
        tree = cKDTree(mids)
        rmax = float(rad.max())
        for a, b in sorted(tree.query_pairs(2 * rmax + 1e-6)):
            if np.linalg.norm(mids[a] - mids[b]) > rad[a] + rad[b] + 1e-6:
                continue
            if _intersects(hulls[a], hulls[b]):
                conEE[edges[a]].add(edges[b])
                conEE[edges[b]].add(edges[a])
        vtree = cKDTree(P)
        vrad = float(np.linalg.norm(shape.half)) + float(np.linalg.norm(shape.center))
        for a, e in enumerate(edges):
            for v in sorted(vtree.query_ball_point(mids[a], rad[a] + vrad + 1e-6)):
                if v in conEV[e]:
                    continue
                if _intersects(hulls[a], shape.translated(P[v]).as_hull()):
                    conEV[e].add(v)
    return ConflictAnnotations(conVV, conEE, conEV)


def connected_components(n: int, edges) -> list:
    """Undirected components as sorted lists (directed edges treated as undirected)."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as cc

    e = np.array(list(edges), dtype=int).reshape(-1, 2)
    m = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    k, lab = cc(m, directed=False)
    return [sorted(np.nonzero(lab == i)[0].tolist()) for i in range(k)]
