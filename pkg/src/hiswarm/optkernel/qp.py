"""Convex QP by primal active set after nullspace elimination of equalities.

    min  1/2 x'Hx + g'x   s.t.  A_eq x = b_eq,  A_in x <= b_in
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, solve_lp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
DEGENERATE = "degenerate"


class NotConvex(ValueError):
    pass


@dataclass
class QuadraticProgram:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        if self.H.shape != (n, n):
            raise ValueError("H must be n x n")
        if not np.allclose(self.H, self.H.T, atol=1e-12 * max(1.0, np.abs(self.H).max())):
            raise NotConvex("cost matrix not symmetric")
        self.A_eq, self.b_eq = _mat(self.A_eq, self.b_eq, n)
        self.A_in, self.b_in = _mat(self.A_in, self.b_in, n)

    @property
    def n(self) -> int:
        return self.g.size

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


def _mat(A, b, n):
    if A is None or len(A) == 0:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return A, np.asarray(b, dtype=float).ravel()


@dataclass
class QPResult:
    status: str
    x: np.ndarray | None = None
    fun: float | None = None
    lam_eq: np.ndarray | None = None
    lam_in: np.ndarray | None = None
    kkt: float | None = None
    iterations: int = 0

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


def _null_space(A, tol=1e-10):
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n), 0
    u, s, vt = np.linalg.svd(A, full_matrices=True)
    rank = int((s > tol * max(1.0, s[0] if s.size else 1.0)).sum())
    return vt[rank:].T, rank


def kkt_residual(qp: QuadraticProgram, x, lam_eq, lam_in) -> float:
    """Max of scaled stationarity, primal infeasibility, dual infeasibility and complementarity."""
    grad = qp.H @ x + qp.g
    stat = grad + qp.A_eq.T @ lam_eq + qp.A_in.T @ lam_in
    scale = max(1.0, np.abs(qp.g).max(initial=0.0), np.abs(qp.H @ x).max(initial=0.0))
    r = [np.abs(stat).max(initial=0.0) / scale]
    bscale = 1.0 + np.abs(x).max(initial=0.0)
    if qp.A_eq.shape[0]:
        r.append(np.abs(qp.A_eq @ x - qp.b_eq).max() / bscale)
    if qp.A_in.shape[0]:
        slack = qp.A_in @ x - qp.b_in
        r.append(max(0.0, slack.max()) / bscale)
        r.append(max(0.0, -lam_in.min()) / scale)
        r.append(np.abs(lam_in * slack).max() / (scale * bscale))
    return float(max(r))


def solve_qp(qp: QuadraticProgram, max_iter: int | None = None, tol: float = 1e-9) -> QPResult:
    n = qp.n
    Hs = np.abs(qp.H).max(initial=0.0)
    if n and np.linalg.eigvalsh(qp.H).min() < -1e-9 * max(1.0, Hs):
        raise NotConvex("cost matrix is not positive semidefinite")

    # equality elimination  x = x0 + Z z
    if qp.A_eq.shape[0]:
        x0, *_ = np.linalg.lstsq(qp.A_eq, qp.b_eq, rcond=None)
        res = np.abs(qp.A_eq @ x0 - qp.b_eq).max()
        if res > 1e-8 * (1.0 + np.abs(qp.b_eq).max()):
            return QPResult(INFEASIBLE)
    else:
        x0 = np.zeros(n)
    Z, _ = _null_space(qp.A_eq)
    H = Z.T @ qp.H @ Z
    H = 0.5 * (H + H.T)
    c = Z.T @ (qp.H @ x0 + qp.g)
    G = qp.A_in @ Z
    h = qp.b_in - qp.A_in @ x0
    m, nz = G.shape

    if nz == 0:
        if m and (G.shape[0] and (h < -tol * (1 + np.abs(qp.b_in).max())).any()):
            return QPResult(INFEASIBLE)
        z = np.zeros(0)
        W: list[int] = []
        it = 0
    else:
        z = _start_point(H, c, G, h, tol)
        if z is None:
            return QPResult(INFEASIBLE)
        status, z, W, it = _active_set(H, c, G, h, z, tol, max_iter or 50 * (nz + m) + 100)
        if status != OPTIMAL:
            return QPResult(status, iterations=it)

    x = x0 + Z @ z
    lam_eq, lam_in = _multipliers(qp, x, W)
    return QPResult(OPTIMAL, x, qp.objective(x), lam_eq, lam_in, kkt_residual(qp, x, lam_eq, lam_in), it)


def _hscale(h):
    return 1.0 + np.abs(h).max(initial=0.0)


def _start_point(H, c, G, h, tol):
    nz = H.shape[0]
    try:
        L = np.linalg.cholesky(H + 1e-14 * np.eye(nz) * max(1.0, np.abs(H).max()))
        z = -np.linalg.solve(L.T, np.linalg.solve(L, c))
        if G.shape[0] == 0 or (G @ z - h).max() <= tol * _hscale(h):
            return z
    except np.linalg.LinAlgError:
        if G.shape[0] == 0:
            return np.zeros(nz)
    if G.shape[0] == 0:
        return np.zeros(nz)
    z = _elastic_start(H, c, G, h, z, tol)
    if z is not None:
        return z
    # phase one: min s  s.t.  G z - s <= h,  s >= 0
    lp = LinearProgram(
        c=np.r_[np.zeros(nz), 1.0],
        A_ub=np.hstack([G, -np.ones((G.shape[0], 1))]),
        b_ub=h,
        bounds=[(None, None)] * nz + [(0.0, None)],
    )
    r = solve_lp(lp)
    if not r.success or r.x[-1] > 1e-8 * _hscale(h):
        return None
    return r.x[:nz]


def _elastic_start(H, c, G, h, z, tol):
    """Feasible point from an exact-penalty problem that starts feasible.

    min f(z) + M s  s.t.  G z - s <= h, s >= 0, started at the unconstrained
    minimiser with s = worst violation. Returns None unless s reaches zero;
    the phase-one LP then settles feasibility.
    """
    m, nz = G.shape
    if not np.isfinite(z).all():
        return None
    M = 1e4 * (1.0 + np.abs(c).max(initial=0.0) + np.abs(H).max(initial=0.0) * (1.0 + np.abs(z).max()))
    Ha = np.zeros((nz + 1, nz + 1))
    Ha[:nz, :nz] = H
    ca = np.r_[c, M]
    Ga = np.zeros((m + 1, nz + 1))
    Ga[:m, :nz] = G
    Ga[:m, nz] = -1.0
    Ga[m, nz] = -1.0
    ha = np.r_[h, 0.0]
    y = np.r_[z, max(0.0, float((G @ z - h).max()))]
    status, y, _, _ = _active_set(Ha, ca, Ga, ha, y, tol, 20 * (nz + m) + 100)
    if status != OPTIMAL or (G @ y[:nz] - h).max() > tol * _hscale(h):
        return None
    return y[:nz]


def _active_set(H, c, G, h, z, tol, max_iter):
    m, nz = G.shape
    W: list[int] = []
    it = 0
    full = False  # last step reached the working-set minimiser
    while it < max_iter:
        it += 1
        grad = H @ z + c
        Zw, _ = _null_space(G[W]) if W else (np.eye(nz), 0)
        if full or Zw.shape[1] == 0:
            p = np.zeros(nz)
            unbounded_dir = False
        else:
            Hw = Zw.T @ H @ Zw
            gw = Zw.T @ grad
            w, V = np.linalg.eigh(Hw)
            big = w > 1e-10 * max(1.0, np.abs(w).max(initial=0.0))
            coef = V.T @ gw
            if (~big).any() and np.abs(coef[~big]).max() > 1e-10 * max(1.0, np.abs(gw).max()):
                # descent direction of zero curvature
                q = -V[:, ~big] @ coef[~big]
                unbounded_dir = True
            else:
                q = -V[:, big] @ (coef[big] / w[big])
                unbounded_dir = False
            p = Zw @ q
        if not unbounded_dir and np.abs(p).max(initial=0.0) <= 1e-12 * (1.0 + np.abs(z).max(initial=0.0)):
            if not W:
                return OPTIMAL, z, W, it
            lam, *_ = np.linalg.lstsq(G[W].T, -grad, rcond=None)
            gs = max(1.0, np.abs(grad).max())
            if lam.min() >= -1e-10 * gs:
                return OPTIMAL, z, W, it
            drop = int(np.argmin(lam))
            W.pop(drop)
            full = False
            continue
        # ratio test
        Gp = G @ p
        alpha = np.inf if unbounded_dir else 1.0
        block = -1
        thr = 1e-12 * (1.0 + np.abs(G).max(axis=1)) * max(1.0, np.abs(p).max())
        cand = Gp > thr
        if W:
            cand[W] = False
        idx = np.nonzero(cand)[0]
        if idx.size:
            steps = np.maximum(0.0, h[idx] - G[idx] @ z) / Gp[idx]
            k = int(np.argmin(steps))  # first minimum = lowest index
            if steps[k] < alpha:
                alpha, block = float(steps[k]), int(idx[k])
        if not np.isfinite(alpha):
            return UNBOUNDED, z, W, it
        z = z + alpha * p
        full = block < 0 and not unbounded_dir
        if block >= 0:
            W.append(block)
    return DEGENERATE, z, W, it


def _multipliers(qp: QuadraticProgram, x, W):
    """Multipliers of the equalities and of the final working set."""
    grad = qp.H @ x + qp.g
    ne = qp.A_eq.shape[0]
    W = sorted(W)
    M = np.vstack([qp.A_eq, qp.A_in[W]]) if W else qp.A_eq
    lam_eq = np.zeros(ne)
    lam_in = np.zeros(qp.A_in.shape[0])
    if M.shape[0]:
        sol = _nnls_like(M.T, -grad, ne)
        lam_eq = sol[:ne]
        lam_in[W] = sol[ne:]
    return lam_eq, lam_in


def _nnls_like(A, b, n_free):
    """Least squares with the trailing variables constrained non-negative."""
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    if (sol[n_free:] >= -1e-12).all():
        return sol
    from scipy.optimize import lsq_linear

    lb = np.r_[np.full(n_free, -np.inf), np.zeros(A.shape[1] - n_free)]
    return lsq_linear(A, b, bounds=(lb, np.full(A.shape[1], np.inf)), method="bvls").x
