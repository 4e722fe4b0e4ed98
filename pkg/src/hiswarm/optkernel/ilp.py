"""Best-bound branch and bound over the simplex LP relaxation."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, LPResult, solve_lp

TIMEOUT = "timeout"
_INT_TOL = 1e-6


@dataclass
class IntegerProgram:
    lp: LinearProgram
    integer: np.ndarray  # bool mask

    def __post_init__(self):
        self.integer = np.asarray(self.integer, dtype=bool).ravel()
        if self.integer.size != self.lp.n:
            raise ValueError("integrality mask length mismatch")
        for i in np.nonzero(self.integer)[0]:
            lo, hi = self.lp.bounds[i]
            if lo is None or hi is None:
                raise ValueError(f"integer variable {i} needs finite bounds")


@dataclass
class ILPResult:
    status: str
    x: np.ndarray | None = None
    fun: float | None = None
    bound: float | None = None
    nodes: int = 0

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL

    @property
    def gap(self) -> float:
        if self.fun is None or self.bound is None:
            return math.inf
        return self.fun - self.bound


def _relax(ip: IntegerProgram, bounds) -> LPResult:
    lp = ip.lp
    return solve_lp(LinearProgram(lp.c, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, bounds))


def _pruned(bound, best_f):
    if not math.isfinite(best_f):
        return False
    return bound >= best_f - 1e-9 * max(1.0, abs(best_f))


def solve_ilp(ip: IntegerProgram, timeout: float | None = None, max_nodes: int = 200000) -> ILPResult:
    """Exact minimisation; branches on the most fractional variable (lowest index on ties)."""
    t0 = time.perf_counter()
    root_bounds = [tuple(b) for b in ip.lp.bounds]
    root = _relax(ip, root_bounds)
    if root.status == INFEASIBLE:
        return ILPResult(INFEASIBLE, nodes=1)
    if root.status == UNBOUNDED:
        return ILPResult(UNBOUNDED, nodes=1)
    if not root.success:
        return ILPResult(root.status, nodes=1)

    counter = itertools.count()
    heap = [(root.fun, next(counter), root_bounds, root)]
    best_x, best_f = None, math.inf
    nodes = 1
    int_idx = np.nonzero(ip.integer)[0]
    while heap:
        bound, _, bounds, res = heapq.heappop(heap)
        if _pruned(bound, best_f):
            continue
        x = res.x
        frac = np.abs(x[int_idx] - np.round(x[int_idx]))
        if frac.size == 0 or frac.max() <= _INT_TOL:
            xr = x.copy()
            xr[int_idx] = np.round(xr[int_idx])
            best_x, best_f = xr, float(ip.lp.c @ xr)
            continue
        if timeout is not None and time.perf_counter() - t0 > timeout or nodes >= max_nodes:
            lb = min([bound] + [h[0] for h in heap])
            status = TIMEOUT
            return ILPResult(status, best_x, None if best_x is None else best_f, lb, nodes)
        # most fractional: distance to nearest integer closest to 0.5
        score = np.abs(frac - 0.5)
        j = int(int_idx[int(np.argmin(score))])
        v = x[j]
        lo, hi = bounds[j]
        for new in ((lo, math.floor(v)), (math.ceil(v), hi)):
            if new[0] is not None and new[1] is not None and new[0] > new[1]:
                continue
            child_bounds = list(bounds)
            child_bounds[j] = new
            r = _relax(ip, child_bounds)
            nodes += 1
            if r.success and not _pruned(r.fun, best_f):
                heapq.heappush(heap, (r.fun, next(counter), child_bounds, r))
    if best_x is None:
        return ILPResult(INFEASIBLE, nodes=nodes)
    return ILPResult(OPTIMAL, best_x, best_f, best_f, nodes)
