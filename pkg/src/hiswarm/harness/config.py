"""Instances and simulator settings, with strict YAML loading.

Every error carries the 1-based line of the offending node.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from ..geometry import Aabb, ConvexHull
from ..roadmap import ROBOT_BOX
from ..trajopt import DynLimits


class ParseError(ValueError):
    pass


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------- types


@dataclass
class RobotSpec:
    id: int
    start: np.ndarray
    goal: np.ndarray


@dataclass
class Instance:
    workspace: Aabb
    obstacles: list  # ConvexHull
    robots: list  # RobotSpec
    shape: Aabb = ROBOT_BOX
    name: str = "instance"

    def __post_init__(self):
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise SchemaError("robot ids must be unique")
        for r in self.robots:
            for what in ("start", "goal"):
                p = getattr(r, what)
                if not self.workspace.contains(p, 1e-9):
                    raise SchemaError(f"robot {r.id} {what} {p.tolist()} lies outside the workspace")
        for what in ("start", "goal"):
            P = [getattr(r, what) for r in self.robots]
            for i in range(len(P)):
                for j in range(i + 1, len(P)):
                    if self.shape.translated(P[i]).overlaps(self.shape.translated(P[j])):
                        raise SchemaError(f"robots {ids[i]} and {ids[j]} collide at their {what}s")


@dataclass
class SimConfig:
    Q: int = 3
    theta: int = 3  # influx limit per cell
    w_mcf: float = 2.0
    delta_h: float = 5.0
    delta_l: float = 1.0
    dt: float = 0.5
    w_init: float = 2.0
    w_iter: float = 1.5
    ecbs_budget: float = 2.0  # seconds per cell and tick
    ecbs_max_nodes: int = 2000
    lns_iters: int = 2
    lns_neighborhood: int = 3
    limits: DynLimits = field(default_factory=DynLimits)
    traj_segments: int = 4
    seed: int = 0
    spacing: float = 0.5
    per_face: int = 4
    connect_radius: float = 1.0
    horizon: float = 120.0  # simulated seconds
    router: str = "race"
    route_timeout: float = 2.0
    audit_rate: float = 100.0

    def __post_init__(self):
        if not self.delta_h >= self.delta_l > 0:
            raise SchemaError("need delta_h >= delta_l > 0")
        ratio = self.delta_l / self.dt
        if self.dt <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise SchemaError("dt must divide delta_l")
        if self.router not in ROUTERS:
            raise SchemaError(f"router must be one of {sorted(ROUTERS)}")
        if self.traj_segments < round(ratio):
            raise SchemaError("traj_segments must cover one low-level interval")

    @property
    def steps_per_tick(self) -> int:
        return int(round(self.delta_l / self.dt))

    @property
    def ticks_per_route(self) -> int:
        return max(1, int(round(self.delta_h / self.delta_l)))


ROUTERS = {"race", "mcf-od", "one-shot", "greedy"}


# ---------------------------------------------------------------- YAML with line numbers


class _Node:
    """Plain value plus the line it came from."""

    __slots__ = ("value", "line")

    def __init__(self, value, line):
        self.value, self.line = value, line


def _convert(node):
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = _convert(k)
            if not isinstance(key.value, str):
                raise SchemaError(f"line {key.line}: keys must be strings")
            if key.value in out:
                raise SchemaError(f"line {key.line}: duplicate key '{key.value}'")
            out[key.value] = (_convert(v), key.line)
        return _Node(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_convert(v) for v in node.value], line)
    return _Node(yaml.SafeLoader("").construct_object(node), line)


def parse_yaml(text: str) -> _Node:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        ctx = getattr(e, "context_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        opened = f" ({e.context} at line {ctx.line + 1})" if ctx is not None and getattr(e, "context", None) else ""
        raise ParseError(f"{where}{getattr(e, 'problem', None) or e}{opened}") from e
    if node is None:
        raise ParseError("line 1: empty document")
    return _convert(node)


def _mapping(n: _Node, allowed, required=(), what="mapping") -> dict:
    if not isinstance(n.value, dict):
        raise SchemaError(f"line {n.line}: expected a {what}")
    for k, (_, line) in n.value.items():
        if k not in allowed:
            raise SchemaError(f"line {line}: unknown key '{k}' in {what}")
    for k in required:
        if k not in n.value:
            raise SchemaError(f"line {n.line}: missing key '{k}' in {what}")
    return {k: v for k, (v, _) in n.value.items()}


def _number(n: _Node, integer=False, positive=False, what="value"):
    v = n.value
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"line {n.line}: {what} must be a number")
    if integer and not isinstance(v, int):
        raise SchemaError(f"line {n.line}: {what} must be an integer")
    if not np.isfinite(v):
        raise SchemaError(f"line {n.line}: {what} must be finite")
    if positive and v <= 0:
        raise SchemaError(f"line {n.line}: {what} must be positive")
    return v


def _vec3(n: _Node, what="point") -> np.ndarray:
    if not isinstance(n.value, list) or len(n.value) != 3:
        raise SchemaError(f"line {n.line}: {what} must be a list of three numbers")
    return np.array([_number(x, what=what) for x in n.value], dtype=float)


def _box(n: _Node, what="box") -> Aabb:
    d = _mapping(n, {"min", "max"}, ("min", "max"), what)
    lo, hi = _vec3(d["min"], f"{what} min"), _vec3(d["max"], f"{what} max")
    if (lo > hi).any():
        raise SchemaError(f"line {n.line}: {what} min must not exceed max")
    return Aabb(lo, hi)


def _obstacle(n: _Node) -> ConvexHull:
    d = _mapping(n, {"box", "hull"}, (), "obstacle")
    if len(d) != 1:
        raise SchemaError(f"line {n.line}: an obstacle is either a box or a hull")
    if "box" in d:
        return _box(d["box"], "obstacle box").as_hull()
    pts = d["hull"]
    if not isinstance(pts.value, list) or not pts.value:
        raise SchemaError(f"line {pts.line}: hull needs a list of points")
    return ConvexHull(np.array([_vec3(p, "hull point") for p in pts.value]))


def instance_from_node(root: _Node) -> Instance:
    d = _mapping(root, {"name", "workspace", "shape", "obstacles", "robots"}, ("workspace", "robots"), "instance")
    name = "instance"
    if "name" in d:
        if not isinstance(d["name"].value, str):
            raise SchemaError(f"line {d['name'].line}: name must be a string")
        name = d["name"].value
    ws = _box(d["workspace"], "workspace")
    shape = _box(d["shape"], "shape") if "shape" in d else ROBOT_BOX
    obs = []
    if "obstacles" in d:
        if not isinstance(d["obstacles"].value, list):
            raise SchemaError(f"line {d['obstacles'].line}: obstacles must be a list")
        obs = [_obstacle(o) for o in d["obstacles"].value]
    rn = d["robots"]
    if not isinstance(rn.value, list) or not rn.value:
        raise SchemaError(f"line {rn.line}: robots must be a non-empty list")
    robots = []
    for r in rn.value:
        rd = _mapping(r, {"id", "start", "goal"}, ("id", "start", "goal"), "robot")
        robots.append(RobotSpec(int(_number(rd["id"], integer=True, what="id")), _vec3(rd["start"], "start"), _vec3(rd["goal"], "goal")))
    try:
        return Instance(ws, obs, robots, shape, name)
    except SchemaError as e:
        raise SchemaError(f"line {rn.line}: {e}") from e


_INT_KEYS = {"Q", "theta", "ecbs_max_nodes", "lns_iters", "lns_neighborhood", "traj_segments", "seed", "per_face"}
_FLOAT_KEYS = {"w_mcf", "delta_h", "delta_l", "dt", "w_init", "w_iter", "ecbs_budget", "spacing", "connect_radius", "horizon", "route_timeout", "audit_rate"}
_LIMIT_KEYS = {"v_max", "a_max", "gamma", "weights", "C", "p"}


def config_from_node(root: _Node) -> SimConfig:
    d = _mapping(root, _INT_KEYS | _FLOAT_KEYS | {"limits", "router"}, (), "config")
    kw = {}
    for k, n in d.items():
        if k in _INT_KEYS:
            kw[k] = int(_number(n, integer=True, what=k))
            if k != "seed" and kw[k] < (0 if k == "lns_iters" else 1):
                raise SchemaError(f"line {n.line}: {k} is out of range")
        elif k in _FLOAT_KEYS:
            kw[k] = float(_number(n, positive=True, what=k))
        elif k == "router":
            if n.value not in ROUTERS:
                raise SchemaError(f"line {n.line}: router must be one of {sorted(ROUTERS)}")
            kw[k] = n.value
    if "limits" in d:
        ld = _mapping(d["limits"], _LIMIT_KEYS, (), "limits")
        lk = {}
        for k, n in ld.items():
            if k == "weights":
                wd = n.value
                if not isinstance(wd, dict):
                    raise SchemaError(f"line {n.line}: weights must map derivative order to weight")
                lk[k] = {}
                for wk, (wn, line) in wd.items():
                    if not wk.isdigit():
                        raise SchemaError(f"line {line}: weight keys are derivative orders")
                    lk[k][int(wk)] = float(_number(wn, what="weight"))
            elif k in ("C", "p"):
                lk[k] = int(_number(n, integer=True, positive=True, what=k))
            else:
                lk[k] = float(_number(n, positive=True, what=k))
        try:
            kw["limits"] = DynLimits(**lk)
        except ValueError as e:
            raise SchemaError(f"line {d['limits'].line}: {e}") from e
    try:
        return SimConfig(**kw)
    except SchemaError as e:
        raise SchemaError(f"line {root.line}: {e}") from e


def _read(path) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()


def load_instance(path) -> Instance:
    return instance_from_node(parse_yaml(_read(path)))


def load_config(path) -> SimConfig:
    return config_from_node(parse_yaml(_read(path)))


# ---------------------------------------------------------------- dumping


def _r(v) -> list:
    return [round(float(x), 9) for x in v]


def _box_dict(b: Aabb) -> dict:
    return {"min": _r(b.min), "max": _r(b.max)}


def instance_to_dict(inst: Instance) -> dict:
    obs = []
    for o in inst.obstacles:
        if o.box is not None:
            obs.append({"box": _box_dict(o.box)})
        else:
            obs.append({"hull": [_r(p) for p in o.points]})
    return {
        "name": inst.name,
        "workspace": _box_dict(inst.workspace),
        "shape": _box_dict(inst.shape),
        "obstacles": obs,
        "robots": [{"id": r.id, "start": _r(r.start), "goal": _r(r.goal)} for r in inst.robots],
    }


def config_to_dict(cfg: SimConfig) -> dict:
    d = asdict(cfg)
    d["limits"]["weights"] = {str(k): v for k, v in cfg.limits.weights.items()}
    return d


def save_instance(inst: Instance, path):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(instance_to_dict(inst), f, sort_keys=False, default_flow_style=None)


def save_config(cfg: SimConfig, path):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)
