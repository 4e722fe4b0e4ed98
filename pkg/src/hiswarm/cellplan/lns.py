"""Anytime improvement by replanning random robot subsets."""

from __future__ import annotations

import time

import numpy as np

from .ecbs import CellPlanProblem, Infeasible, Timeout, ecbs_mapfc
from .model import Reserved, sum_of_costs


def lns_improve(
    initial: list,
    p: CellPlanProblem,
    budget: float,
    seed: int = 0,
    max_iters: int | None = None,
    neighborhood: int = 5,
    history: list | None = None,
) -> list:
    """Best-so-far paths after ``budget`` seconds (or ``max_iters`` rounds).

    Each round replans a random subset at ``p.w_iter`` with every other robot
    fixed, and keeps the result only if the sum of costs strictly drops.
    """
    best = [list(x) for x in initial]
    cost = sum_of_costs(best)
    if history is not None:
        history.append(cost)
    n = len(best)
    if budget <= 0 or n == 0 or (max_iters is not None and max_iters <= 0):
        return best
    rng = np.random.default_rng(seed)
    deadline = time.perf_counter() + budget
    it = 0
    while time.perf_counter() < deadline and (max_iters is None or it < max_iters):
        it += 1
        k = min(neighborhood, n)
        sub = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
        fixed = [Reserved(best[i], p.agents[i].start_step, True) for i in range(n) if i not in sub]
        q = CellPlanProblem(p.graph, [p.agents[i] for i in sub], list(p.reserved) + fixed, p.w_iter, p.w_iter)
        try:
            new = ecbs_mapfc(q, p.w_iter, budget=max(1e-3, deadline - time.perf_counter()))
        except (Infeasible, Timeout):
            new = None
        if new is not None and sum_of_costs(new) < sum_of_costs([best[i] for i in sub]):
            for i, path in zip(sub, new):
                best[i] = path
            cost = sum_of_costs(best)
        if history is not None:
            history.append(cost)
    return best
