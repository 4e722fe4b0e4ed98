"""Small exact solvers: simplex LP, branch-and-bound ILP, active-set QP."""

from .ilp import TIMEOUT, ILPResult, IntegerProgram, solve_ilp
from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, LPResult, solve_lp
from .qp import NotConvex, QPResult, QuadraticProgram, kkt_residual, solve_qp
from .dump import dump_lp, dump_qp

__all__ = [
    "INFEASIBLE", "OPTIMAL", "UNBOUNDED", "TIMEOUT",
    "LinearProgram", "LPResult", "solve_lp",
    "IntegerProgram", "ILPResult", "solve_ilp",
    "QuadraticProgram", "QPResult", "solve_qp", "kkt_residual", "NotConvex",
    "dump_lp", "dump_qp",
]
