"""Local-goal assignment ILP: nearest goals first, queues spread evenly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..optkernel import IntegerProgram, LinearProgram, solve_ilp

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 10.0
_TIE = 1e-7  # per goal rank; far below any distance difference that matters


@dataclass
class GoalAssignment:
    A: dict  # robot id -> goal id
    queue: dict  # goal id -> robots waiting behind the first (u_j)
    U: int
    objective: float  # sum D + alpha sum u + beta U, tie-break excluded


def assignment_objective(A, robots, goals, alpha, beta) -> float:
    pos_r = {r: np.asarray(p, float) for r, p in robots}
    pos_g = {g: np.asarray(p, float) for g, p in goals}
    D = sum(float(np.linalg.norm(pos_r[r] - pos_g[g])) for r, g in A.items())
    counts = {g: 0 for g, _ in goals}
    for g in A.values():
        counts[g] += 1
    u = {g: max(0, c - 1) for g, c in counts.items()}
    return D + alpha * sum(u.values()) + beta * max(u.values(), default=0)


def assign_local_goals(robots, goals, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA) -> GoalAssignment:
    """Exact ILP; ``robots`` and ``goals`` are lists of (id, position)."""
    if not goals:
        raise ValueError("no local goals to assign")
    robots = sorted(robots, key=lambda x: x[0])
    goals = sorted(goals, key=lambda x: x[0])
    nr, ng = len(robots), len(goals)
    if nr == 0:
        return GoalAssignment({}, {g: 0 for g, _ in goals}, 0, 0.0)
    P = np.array([p for _, p in robots], float)
    G = np.array([p for _, p in goals], float)
    D = np.linalg.norm(P[:, None, :] - G[None, :, :], axis=2)
    nA = nr * ng
    n = nA + ng + 1  # A, u_j, U
    c = np.zeros(n)
    c[:nA] = (D + _TIE * np.arange(ng)[None, :]).ravel()
    c[nA:nA + ng] = alpha
    c[-1] = beta
    A_eq = np.zeros((nr, n))
    for i in range(nr):
        A_eq[i, i * ng:(i + 1) * ng] = 1.0
    A_ub = []
    b_ub = []
    for j in range(ng):
        row = np.zeros(n)
        row[j:nA:ng] = 1.0  # sum_i A_ij - 1 <= u_j
        row[nA + j] = -1.0
        A_ub.append(row)
        b_ub.append(1.0)
        row = np.zeros(n)
        row[nA + j] = 1.0  # u_j <= U
        row[-1] = -1.0
        A_ub.append(row)
        b_ub.append(0.0)
    bounds = [(0.0, 1.0)] * nA + [(0.0, float(nr))] * (ng + 1)
    integer = np.zeros(n, bool)
    integer[:nA] = True
    res = solve_ilp(IntegerProgram(LinearProgram(c, np.array(A_ub), b_ub, A_eq, np.ones(nr), bounds), integer))
    if not res.success:
        raise RuntimeError(f"assignment ILP status {res.status}")
    X = np.rint(res.x[:nA]).reshape(nr, ng)
    A = {robots[i][0]: goals[int(np.argmax(X[i]))][0] for i in range(nr)}
    counts = X.sum(axis=0)
    queue = {goals[j][0]: int(max(0, counts[j] - 1)) for j in range(ng)}
    return GoalAssignment(A, queue, max(queue.values()), assignment_objective(A, robots, goals, alpha, beta))
