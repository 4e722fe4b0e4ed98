"""Receding-horizon replanning loop: route every delta_h, plan cells and trajectories every delta_l.

Robots track their trajectories exactly. Every low-level tick the robots
execute the first delta_l / dt segments of their trajectories. All robots
share one duration scale per tick, so segment k spans the same time window
for everybody. That keeps the pairwise corridor planes valid.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..cellplan import (
    Agent,
    CellPlanProblem,
    Infeasible as MapfInfeasible,
    MoveGraph,
    Reserved,
    Timeout as MapfTimeout,
    assign_local_goals,
    ecbs_mapfc,
    find_conflicts,
    lns_improve,
)
from ..partition import build_partition
from ..roadmap import annotate_conflicts, build_grid_roadmap
from ..routing import (
    NoPath,
    Unsolvable,
    build_cell_graph,
    greedy_routing,
    k_shortest_paths,
    make_commodities,
    mcf_od,
    one_shot_mcf,
    race_routers,
)
from ..trajopt import (
    BezierCurve,
    Infeasible as QPInfeasible,
    PiecewiseTrajectory,
    SeparationFailed,
    build_corridors,
    relaxed_fallback,
    rescales_needed,
    solve_trajectory_qp,
)
from .config import Instance, SimConfig

GOAL_TOL = 0.1
REST_TOL = 1e-3
RESOLVE_TRIES = 2
JOINT_ORDERS = (99, 2, 1)  # derivative orders matched at a replanning joint, tried in turn


class PartitionFailed(RuntimeError):
    pass


class RoutingUnsolvable(RuntimeError):
    pass


# ---------------------------------------------------------------- world


@dataclass
class World:
    inst: Instance
    cfg: SimConfig
    partition: object
    graphs: dict  # cell -> MoveGraph
    cell_graph: object
    owner: dict  # base vertex -> cell
    positions: np.ndarray
    starts: dict  # robot -> vertex
    goals: dict
    exits: dict  # cell -> [(goal vertex, next cell)]
    build_time: float = 0.0


def build_world(inst: Instance, cfg: SimConfig, Q: int | None = None) -> World:
    t0 = time.perf_counter()
    Q = cfg.Q if Q is None else Q
    try:
        r = build_grid_roadmap(inst.workspace, inst.obstacles, cfg.spacing, inst.shape)
        p = build_partition(
            r, Q, inst.shape, cfg.per_face, cfg.connect_radius, cfg.seed, inst.obstacles, inst.workspace
        )
    except Exception as e:  # noqa: BLE001 - surfaced with its stage
        raise PartitionFailed(f"partition stage: {type(e).__name__}: {e}") from e
    ann = annotate_conflicts(p.roadmap, inst.shape)
    graphs = {c.id: MoveGraph.from_cell(c, ann) for c in p.cells}
    owner = p.owner_of_vertex()
    P = p.roadmap.positions
    tree = cKDTree(P[: p.n_base])
    starts, goals = {}, {}
    for rb in inst.robots:
        for what, q, out in (("start", rb.start, starts), ("goal", rb.goal, goals)):
            d, v = tree.query(q)
            if d > 1e-6:
                raise PartitionFailed(f"partition stage: robot {rb.id} {what} is not on a roadmap vertex (off by {d:.3g} m)")
            if int(v) not in owner:
                raise PartitionFailed(f"partition stage: robot {rb.id} {what} lies in a buffered face band")
            out[rb.id] = int(v)
    exits = {c.id: sorted(c.local_goals) for c in p.cells}
    return World(inst, cfg, p, graphs, build_cell_graph(p), owner, P, starts, goals, exits, time.perf_counter() - t0)


def initial_commodities(w: World) -> list:
    return make_commodities(
        {r: w.owner[v] for r, v in w.starts.items()}, {r: w.owner[v] for r, v in w.goals.items()}
    )


def route(w: World, commodities, router: str | None = None, theta=None):
    cfg = w.cfg
    router = router or cfg.router
    theta = cfg.theta if theta is None else theta
    if router == "greedy":
        return greedy_routing(w.cell_graph, commodities)
    if router == "one-shot":
        return one_shot_mcf(w.cell_graph, commodities, theta, cfg.w_mcf)
    if router == "mcf-od":
        return mcf_od(w.cell_graph, commodities, theta, cfg.w_mcf)
    return race_routers(w.cell_graph, commodities, theta, cfg.w_mcf, timeout=cfg.route_timeout)


# ---------------------------------------------------------------- robot state


@dataclass
class Lock:
    """Crossing committed one tick ahead: frozen path to an exit and its arrival step."""

    path: list
    exit: int
    src: int
    dst: int

    @property
    def arrival(self) -> int:
        return len(self.path) - 1


@dataclass
class Robot:
    id: int
    vertex: int
    cell: int
    goal_vertex: int
    goal_cell: int
    state: np.ndarray
    route: list = field(default_factory=list)
    lock: Lock | None = None
    curves: list = field(default_factory=list)  # executed (t0, BezierCurve)


@dataclass
class SimReport:
    name: str
    robots: list  # dict per robot
    makespan: float
    success_rate: float
    collisions: list
    relaxed_fallbacks: int
    mapf_fallbacks: int
    reduced_joints: int
    n_max: dict  # cell -> max robots seen in it
    routing: list  # per routing call: method, max influx, fallback
    ticks: int
    timings: dict = field(default_factory=dict)  # stage -> list of per-tick seconds (not deterministic)
    events: list = field(default_factory=list)

    def to_dict(self, with_timings: bool = False) -> dict:
        d = {
            "name": self.name,
            "makespan": self.makespan,
            "success_rate": self.success_rate,
            "ticks": self.ticks,
            "relaxed_fallbacks": self.relaxed_fallbacks,
            "mapf_fallbacks": self.mapf_fallbacks,
            "reduced_joints": self.reduced_joints,
            "n_max": {str(k): v for k, v in sorted(self.n_max.items())},
            "routing": self.routing,
            "collisions": self.collisions,
            "events": self.events,
            "robots": self.robots,
        }
        if with_timings:
            d["timings"] = self.timings
        return d

    def trajectory(self, rid) -> list:
        return [(c["t0"], BezierCurve(np.array(c["control_points"]), c["duration"])) for c in self.robots_by_id[rid]["trajectory"]]

    @property
    def robots_by_id(self) -> dict:
        return {r["id"]: r for r in self.robots}


# ---------------------------------------------------------------- simulator


class Simulator:
    def __init__(self, w: World):
        self.w = w
        self.cfg = w.cfg
        self.C = w.cfg.limits.C
        self.robots = {}
        for rb in w.inst.robots:
            v = w.starts[rb.id]
            st = np.zeros((self.C + 1, 3))
            st[0] = w.positions[v]
            self.robots[rb.id] = Robot(rb.id, v, w.owner[v], w.goals[rb.id], w.owner[w.goals[rb.id]], st)
        self.t = 0.0
        self.tick = 0
        self.scale_exp = 0
        self.n_max = {c: 0 for c in w.graphs}
        self.routing_log = []
        self.events = []
        self.relaxed = 0
        self.mapf_fallbacks = 0
        self.reduced_joints = 0
        self.timings = {"route": [], "discrete": [], "trajectory": [], "cycle": []}

    # ------------------------------------------------------------ routing

    def reroute(self):
        w = self.w
        starts, goals = {}, {}
        for r in self.robots.values():
            starts[r.id] = r.lock.dst if r.lock else r.cell
            goals[r.id] = r.goal_cell
        comms = make_commodities(starts, goals)
        fallback = None
        try:
            try:
                sol = route(w, comms)
            except Unsolvable as e:
                # influx limits cannot be met: keep moving on shortest routes
                fallback = str(e)
                sol = greedy_routing(w.cell_graph, comms)
        except NoPath as e:
            raise RoutingUnsolvable(f"routing stage: {e}") from e
        routes = sol.robot_routes()
        for r in self.robots.values():
            r.route = list(routes[r.id])
        race = sol.stats.get("race", {}) if hasattr(sol, "stats") else {}
        self.routing_log.append(
            {
                "tick": self.tick,
                "method": sol.method,
                "winner": race.get("winner", sol.method),
                "max_influx": int(sol.max_influx),
                "fallback": fallback,
            }
        )

    def _next_cell(self, r: Robot):
        if r.cell == r.goal_cell:
            return None
        if len(r.route) < 2 or r.route[0] != r.cell:
            r.route = list(k_shortest_paths(self.w.cell_graph, r.cell, r.goal_cell, 1)[0])
        return r.route[1]

    # ------------------------------------------------------------ discrete planning

    def _hold_vertex(self, g: MoveGraph, start, taken: set):
        """Nearest base vertex (BFS) from ``start`` clear of every vertex in ``taken``."""
        goals = self.w.partition.goal_face
        seen = {start}
        q = deque([start])
        while q:
            v = q.popleft()
            if v not in goals and not (g.conVV(v) & taken):
                return v
            for u in g.succ[v]:
                if u not in seen and u in g.succ:
                    seen.add(u)
                    q.append(u)
        return start

    def _cell_problem(self, m, members, arrivals, reserved, holds_only=False):
        """Agents with targets for one cell."""
        w, n_l = self.w, self.cfg.steps_per_tick
        g = w.graphs[m]
        P = w.positions
        busy = set()
        for res in reserved:
            busy.add(res.vertices[-1])
        # robots entering this cell this tick sit on their entry first
        movers = [(r, r.vertex, 0) for r in members] + [(r, r.lock.exit, r.lock.arrival) for r in arrivals]
        target = {}
        exit_bound = set()
        groups = {}
        for r, start, _ in movers:
            if r.goal_cell == m:
                target[r.id] = r.goal_vertex
            elif not holds_only:
                groups.setdefault(self._next_cell(r), []).append((r, start))
        for nxt, lst in sorted(groups.items()):
            free = [(gv, P[gv]) for gv, l in w.exits[m] if l == nxt and gv not in busy]
            if not free:
                continue
            asg = assign_local_goals([(r.id, P[s]) for r, s in lst], free)
            first = {}
            for r, s in sorted(lst, key=lambda x: x[0].id):
                gv = asg.A[r.id]
                d = float(np.linalg.norm(P[s] - P[gv]))
                if gv not in first or (d, r.id) < first[gv][0]:
                    first[gv] = ((d, r.id), r.id)
            for gv, (_, rid) in first.items():
                target[rid] = gv
                exit_bound.add(rid)
        taken = set(target.values()) | busy
        agents = []
        for r, start, step in sorted(movers, key=lambda x: x[0].id):
            if r.id not in target:
                h = self._hold_vertex(g, start, taken) if step == 0 else start
                target[r.id] = h
                taken.add(h)
            nb = n_l + 1 if r.id in exit_bound else 0
            agents.append(Agent(r.id, start, target[r.id], step, nb))
        return agents, exit_bound

    def _solve_cell(self, m, agents, reserved):
        cfg = self.cfg
        g = self.w.graphs[m]
        prob = CellPlanProblem(g, agents, reserved, cfg.w_init, cfg.w_iter, cfg.ecbs_budget)
        paths = ecbs_mapfc(prob, max_nodes=cfg.ecbs_max_nodes)
        if cfg.lns_iters > 0 and len(agents) > 1:
            paths = lns_improve(
                paths, prob, cfg.ecbs_budget, seed=cfg.seed + 7919 * self.tick + m,
                max_iters=cfg.lns_iters, neighborhood=cfg.lns_neighborhood,
            )
        return paths

    def plan_cells(self):
        """Global vertex path per robot for this tick, plus next tick's crossing locks."""
        w, n_l = self.w, self.cfg.steps_per_tick
        paths = {}
        plan_cell = {}
        exit_targets = {}
        for m in sorted(w.graphs):
            g = w.graphs[m]
            members = [r for r in self.robots.values() if r.cell == m and r.lock is None]
            arrivals = [r for r in self.robots.values() if r.lock is not None and r.lock.dst == m]
            reserved = [Reserved(list(r.lock.path), 0, True) for r in self.robots.values() if r.lock and r.lock.src == m]
            # robots already handed over but still standing on one of our exits
            for r in self.robots.values():
                if r.cell != m and r.lock is None and r.vertex in g.succ:
                    reserved.append(Reserved([r.vertex], 0, True))
            if not members and not arrivals:
                continue
            res = None
            for holds_only in (False, True):
                agents, exit_bound = self._cell_problem(m, members, arrivals, reserved, holds_only)
                try:
                    res = self._solve_cell(m, agents, reserved)
                    break
                except (MapfInfeasible, MapfTimeout) as e:
                    self.events.append({"tick": self.tick, "stage": "discrete", "cell": m, "holds_only": holds_only, "error": str(e)})
            if res is None:
                # last resort: everybody waits where they are
                self.mapf_fallbacks += 1
                agents = [Agent(a.robot, a.start, a.start, a.start_step) for a in agents]
                res = [[a.start] for a in agents]
                exit_bound = set()
            for a, pth in zip(agents, res):
                r = self.robots[a.robot]
                if a.start_step > 0:
                    pth = list(r.lock.path) + list(pth[1:])
                paths[a.robot] = list(pth)
                plan_cell[a.robot] = m
                if a.robot in exit_bound:
                    exit_targets[a.robot] = (m, a.goal)
        locks = self._propose_locks(paths, exit_targets)
        return paths, plan_cell, locks

    def _propose_locks(self, paths, exit_targets):
        w, n_l = self.w, self.cfg.steps_per_tick
        goal_face = w.partition.goal_face
        locks = {}
        for rid, (m, gv) in sorted(exit_targets.items()):
            pth = paths[rid]
            if gv not in pth:
                continue
            s = pth.index(gv)
            if n_l < s <= 2 * n_l:
                locks[rid] = Lock(list(pth[n_l : s + 1]), gv, m, goal_face[gv][1])
        # frozen paths and arrivals fixed together must not clash inside any cell
        changed = True
        while changed:
            changed = False
            for c in sorted(w.graphs):
                frozen = [(rid, Reserved(lk.path, 0, True)) for rid, lk in sorted(locks.items()) if lk.src == c]
                arriving = [(rid, Reserved([lk.exit], lk.arrival, True)) for rid, lk in sorted(locks.items()) if lk.dst == c]
                if not frozen or not arriving:
                    continue
                items = frozen + arriving
                conf = find_conflicts(w.graphs[c], [p for _, p in items])
                bad = sorted({items[k.j][0] if k.j >= len(frozen) else items[k.i][0] for k in conf})
                if bad:
                    del locks[bad[-1]]
                    self.events.append({"tick": self.tick, "stage": "crossing", "cancelled_lock": bad[-1]})
                    changed = True
                    break
        return locks

    # ------------------------------------------------------------ trajectories

    def plan_trajectories(self, paths):
        w, cfg = self.w, self.cfg
        K, n_l, lim = cfg.traj_segments, cfg.steps_per_tick, cfg.limits
        P = w.positions
        ids = sorted(paths)
        pts = {}
        for rid in ids:
            pth = list(paths[rid]) + [paths[rid][-1]] * (K + 1)
            pts[rid] = P[pth[: K + 1]]
        corridors = {}
        for rid in ids:
            nb = [(j, pts[j]) for j in ids if j != rid]
            # neighbour planes on every segment: the tail planned now is the
            # state the next tick starts from, so it must already respect them
            try:
                corridors[rid] = build_corridors(pts[rid], nb, w.inst.obstacles, w.inst.shape, lim, cfg.delta_l, cfg.dt, K * cfg.dt)
            except SeparationFailed as e:
                corridors[rid] = None
                self.events.append({"tick": self.tick, "stage": "corridor", "robot": rid, "error": str(e)})
        # re-solving at a longer duration keeps the joint with the executed
        # trajectory smooth; when that stops helping, stretch the solution in
        # time instead, which honours the limits but lets the derivatives jump
        n = max(0, self.scale_exp - 1)
        trajs = {}
        for attempt in range(RESOLVE_TRIES):
            durations = [cfg.dt * lim.gamma**n] * K
            # a joint order that failed at the shorter duration is not retried
            first = {rid: self._joint_order(trajs[rid]) if attempt else self.C for rid in ids}
            trajs = {rid: self._solve_one(self.robots[rid], pts[rid], corridors[rid], durations, first[rid]) for rid in ids}
            need = max(rescales_needed(*trajs[rid].head(n_l).peaks(), lim) for rid in ids)
            if need == 0 or attempt == RESOLVE_TRIES - 1:
                break
            n += need
        if need > 0:
            for rid, tr in list(trajs.items()):
                trajs[rid] = tr.scaled(lim.gamma**need)
                trajs[rid].rescales += need
                trajs[rid].joint_order = self._joint_order(tr)
            self.events.append({"tick": self.tick, "stage": "rescale", "stretch": need})
            n += need
        for rid in ids:
            c0 = self._joint_order(trajs[rid])
            if c0 < self.C and not trajs[rid].relaxed:
                self.reduced_joints += 1
                self.events.append({"tick": self.tick, "stage": "trajectory", "robot": rid, "joint_order": c0})
            if trajs[rid].relaxed:
                self.relaxed += 1
                self.events.append({"tick": self.tick, "stage": "trajectory", "robot": rid, "relaxed": True})
        self.scale_exp = n
        return trajs, lim.gamma**n

    def _joint_order(self, tr) -> int:
        return 1 if tr.relaxed else getattr(tr, "joint_order", self.C)

    def _solve_one(self, r: Robot, pts, cors, durations, max_order=None):
        cfg = self.cfg
        lim, n_l = cfg.limits, cfg.steps_per_tick
        if np.ptp(pts, axis=0).max() == 0.0 and np.abs(r.state[1:]).max() < 1e-12:
            c = BezierCurve(np.tile(pts[0], (lim.p + 1, 1)), durations[0])
            return PiecewiseTrajectory([BezierCurve(c.points, d) for d in durations], cost=0.0, kkt=0.0)
        if cors is not None:
            # keep the corridors before smoothness: drop the higher-order
            # matching at the joint with the executed trajectory first
            top = self.C if max_order is None else max_order
            for c0 in sorted({min(c, top) for c in JOINT_ORDERS}, reverse=True):
                try:
                    tr = solve_trajectory_qp(cors, r.state[: c0 + 1], pts[-1], durations, lim, waypoints={n_l - 1: pts[n_l]})
                except QPInfeasible:
                    continue
                tr.joint_order = c0
                return tr
        return relaxed_fallback(pts, r.state, lim, durations)

    # ------------------------------------------------------------ loop

    def finished(self) -> bool:
        return all(
            r.vertex == r.goal_vertex and r.lock is None and np.abs(r.state[1:]).max() < REST_TOL
            for r in self.robots.values()
        )

    def step(self):
        cfg = self.cfg
        n_l = cfg.steps_per_tick
        t_route = 0.0
        if self.tick % cfg.ticks_per_route == 0:
            t0 = time.perf_counter()
            self.reroute()
            t_route = time.perf_counter() - t0
        t0 = time.perf_counter()
        paths, plan_cell, locks = self.plan_cells()
        t_dis = time.perf_counter() - t0
        t0 = time.perf_counter()
        trajs, scale = self.plan_trajectories(paths)
        t_traj = time.perf_counter() - t0
        for rid, tr in sorted(trajs.items()):
            r = self.robots[rid]
            head = tr.head(n_l)
            t = self.t
            for c in head.curves:
                r.curves.append((t, c))
                t += c.duration
            r.state = head.end_state(self.C)
            r.vertex = paths[rid][min(n_l, len(paths[rid]) - 1)]
            r.cell = plan_cell[rid]
            while len(r.route) > 1 and r.route[0] != r.cell:
                r.route.pop(0)
            r.lock = locks.get(rid)
        self.t += n_l * cfg.dt * scale
        for r in self.robots.values():
            self.n_max[r.cell] = max(self.n_max[r.cell], sum(1 for q in self.robots.values() if q.cell == r.cell))
        self.tick += 1
        self.timings["route"].append(t_route)
        self.timings["discrete"].append(t_dis)
        self.timings["trajectory"].append(t_traj)
        self.timings["cycle"].append(t_route + t_dis + t_traj)

    def run(self) -> SimReport:
        while not self.finished() and self.t < self.cfg.horizon:
            self.step()
        return self.report()

    def report(self) -> SimReport:
        from .audit import audit_collisions

        inst = self.w.inst
        robots = []
        goals = {rb.id: rb.goal for rb in inst.robots}
        for rid in sorted(self.robots):
            r = self.robots[rid]
            final = r.curves[-1][1].eval(r.curves[-1][1].duration) if r.curves else self.w.positions[r.vertex]
            err = float(np.linalg.norm(final - goals[rid]))
            robots.append(
                {
                    "id": rid,
                    "final_position": [round(float(x), 9) for x in final],
                    "goal_error": err,
                    "reached": err < GOAL_TOL,
                    "arrival_time": self._arrival_time(r, goals[rid]),
                    "trajectory": [
                        {"t0": t0, "duration": c.duration, "control_points": c.points.tolist()} for t0, c in r.curves
                    ],
                }
            )
        rep = SimReport(
            inst.name, robots, 0.0, 0.0, [], self.relaxed, self.mapf_fallbacks, self.reduced_joints, dict(self.n_max),
            self.routing_log, self.tick, {k: list(v) for k, v in self.timings.items()}, list(self.events),
        )
        events = audit_collisions(rep, inst.shape, self.cfg.audit_rate, inst.obstacles)
        rep.collisions = [e.to_dict() for e in events]
        hit = set()
        for e in events:
            hit.update(x for x in (e.a, e.b) if isinstance(x, int))
        for rd in robots:
            rd["collisions"] = sum(1 for e in events if rd["id"] in (e.a, e.b))
            rd["success"] = bool(rd["reached"] and rd["id"] not in hit)
        arrivals = [rd["arrival_time"] for rd in robots if rd["arrival_time"] is not None]
        rep.makespan = float(max(arrivals)) if len(arrivals) == len(robots) else float(self.t)
        rep.success_rate = sum(rd["success"] for rd in robots) / len(robots)
        return rep

    def _arrival_time(self, r: Robot, goal):
        """First executed-curve end after which the robot stays within tolerance of its goal."""
        t_arr = None
        for t0, c in r.curves:
            ts = np.linspace(0.0, c.duration, 20)
            far = np.linalg.norm(c.eval(ts) - goal, axis=1) >= GOAL_TOL
            if far.any():
                t_arr = None
                last = int(np.nonzero(far)[0][-1])
                if last < len(ts) - 1:
                    t_arr = t0 + ts[last + 1]
            elif t_arr is None:
                t_arr = t0
        return None if t_arr is None else float(t_arr)


def run_simulation(inst: Instance, cfg: SimConfig, world: World | None = None) -> SimReport:
    w = world if world is not None else build_world(inst, cfg)
    rep = Simulator(w).run()
    rep.timings["build"] = [w.build_time]
    return rep
