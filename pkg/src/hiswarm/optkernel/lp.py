"""Dense two-phase simplex with Bland's rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_TOL = 1e-9


@dataclass
class LinearProgram:
    """min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi.

    ``bounds`` is a list of ``(lo, hi)`` pairs, ``None`` meaning infinite.
    Omitted bounds default to ``(0, None)``.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    bounds: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n)
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n)
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        if len(self.bounds) != n:
            raise ValueError("bounds length does not match objective")

    @property
    def n(self) -> int:
        return self.c.size


def _rows(A, b, n):
    if A is None or (hasattr(A, "__len__") and len(A) == 0):
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError("constraint dimensions inconsistent")
    return A, b


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    fun: float | None = None
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


def _standardize(lp: LinearProgram):
    """Map to  min c'z  s.t.  M z (<=,=) r,  z >= 0  and return the back-map.

    x = shift + T z, where T has one or two non-zero entries per column.
    """
    n = lp.n
    cols = []  # (original var, sign)
    shift = np.zeros(n)
    extra_ub = []  # (var column index list with signs, rhs)
    for i, (lo, hi) in enumerate(lp.bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi + _TOL:
            return None
        if np.isfinite(lo):
            shift[i] = lo
            cols.append((i, 1.0))
            if np.isfinite(hi):
                extra_ub.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[i] = hi
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    m = len(cols)
    T = np.zeros((n, m))
    for j, (i, s) in enumerate(cols):
        T[i, j] = s

    A_ub = lp.A_ub @ T
    b_ub = lp.b_ub - lp.A_ub @ shift
    if extra_ub:
        E = np.zeros((len(extra_ub), m))
        for r, (j, v) in enumerate(extra_ub):
            E[r, j] = 1.0
        A_ub = np.vstack([A_ub, E])
        b_ub = np.concatenate([b_ub, [v for _, v in extra_ub]])
    A_eq = lp.A_eq @ T
    b_eq = lp.b_eq - lp.A_eq @ shift
    c = lp.c @ T
    const = float(lp.c @ shift)
    return c, A_ub, b_ub, A_eq, b_eq, T, shift, const


def _pivot(tab, r, k):
    tab[r] /= tab[r, k]
    col = tab[:, k].copy()
    col[r] = 0.0
    nz = np.nonzero(np.abs(col) > 0.0)[0]
    if nz.size:
        tab[nz] -= np.outer(col[nz], tab[r])


def _simplex(tab, basis, n_cols, allowed, max_iter):
    """Minimise the objective held in the last row of ``tab``.

    Bland's rule: entering = lowest eligible index with negative reduced cost,
    leaving = lowest basis index among ratio-test ties.
    """
    m = tab.shape[0] - 1
    it = 0
    while True:
        obj = tab[-1, :n_cols]
        cand = np.nonzero((obj < -_TOL) & allowed)[0]
        if cand.size == 0:
            return "optimal", it
        k = int(cand[0])
        col = tab[:m, k]
        pos = np.nonzero(col > _TOL)[0]
        if pos.size == 0:
            return "unbounded", it
        ratios = tab[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + _TOL * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(tab, r, k)
        basis[r] = k
        it += 1
        if it > max_iter:
            return "iteration_limit", it


def solve_lp(lp: LinearProgram, max_iter: int = 50000) -> LPResult:
    std = _standardize(lp)
    if std is None:
        return LPResult(INFEASIBLE)
    c, A_ub, b_ub, A_eq, b_eq, T, shift, const = std
    nz = c.size
    mu, me = A_ub.shape[0], A_eq.shape[0]
    m = mu + me
    # columns: z | slacks(mu) | one artificial per row without a feasible slack | rhs
    rhs = np.r_[b_ub, b_eq]
    neg = rhs < 0
    needs_art = [i for i in range(m) if i >= mu or neg[i]]
    art = nz + mu
    n_cols = art + len(needs_art)
    tab = np.zeros((m + 1, n_cols + 1))
    tab[:mu, :nz] = A_ub
    tab[:mu, nz:nz + mu] = np.eye(mu)
    tab[:mu, -1] = b_ub
    tab[mu:m, :nz] = A_eq
    tab[mu:m, -1] = b_eq
    tab[:m][neg] *= -1.0
    basis = [nz + i for i in range(m)]
    for a, i in enumerate(needs_art):
        tab[i, art + a] = 1.0
        basis[i] = art + a
    total_it = 0
    if needs_art:
        tab[-1, :] = 0.0
        for a, i in enumerate(needs_art):
            tab[-1, :] -= tab[i, :]
            tab[-1, art + a] += 1.0
        allowed = np.ones(n_cols, dtype=bool)
        status, it = _simplex(tab, basis, n_cols, allowed, max_iter)
        total_it += it
        if status == "iteration_limit":
            return LPResult("iteration_limit", iterations=total_it)
        if -tab[-1, -1] > 1e-7 * max(1.0, np.abs(tab[:m, -1]).max(initial=0.0)):
            return LPResult(INFEASIBLE, iterations=total_it)
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= art:
                row = tab[i, :art]
                k = np.nonzero(np.abs(row) > 1e-9)[0]
                if k.size:
                    _pivot(tab, i, int(k[0]))
                    basis[i] = int(k[0])
    allowed = np.zeros(n_cols, dtype=bool)
    allowed[:art] = True
    tab[-1, :] = 0.0
    tab[-1, :nz] = c
    for i in range(m):
        if basis[i] < n_cols and tab[-1, basis[i]] != 0.0:
            tab[-1, :] -= tab[-1, basis[i]] * tab[i, :]
    status, it = _simplex(tab, basis, n_cols, allowed, max_iter)
    total_it += it
    if status == "unbounded":
        return LPResult(UNBOUNDED, iterations=total_it)
    if status == "iteration_limit":
        return LPResult("iteration_limit", iterations=total_it)
    z = np.zeros(n_cols)
    for i in range(m):
        z[basis[i]] = tab[i, -1]
    x = shift + T @ z[:nz]
    return LPResult(OPTIMAL, x=x, fun=float(lp.c @ x), iterations=total_it)
