"""Plain-text LP-style dumps of models, for eyeballing."""

import numpy as np


def _expr(row, names):
    terms = []
    for j in np.nonzero(row)[0]:
        v = row[j]
        terms.append(f"{'-' if v < 0 else '+'} {abs(v):.6g} {names[j]}")
    return " ".join(terms) if terms else "0"


def dump_lp(lp, integer=None, names=None) -> str:
    names = names or [f"x{j}" for j in range(lp.n)]
    out = ["Minimize", f" obj: {_expr(lp.c, names)}", "Subject To"]
    for i, (row, b) in enumerate(zip(lp.A_ub, lp.b_ub)):
        out.append(f" u{i}: {_expr(row, names)} <= {b:.6g}")
    for i, (row, b) in enumerate(zip(lp.A_eq, lp.b_eq)):
        out.append(f" e{i}: {_expr(row, names)} = {b:.6g}")
    out.append("Bounds")
    for name, (lo, hi) in zip(names, lp.bounds):
        lo = "-inf" if lo is None else f"{lo:.6g}"
        hi = "+inf" if hi is None else f"{hi:.6g}"
        out.append(f" {lo} <= {name} <= {hi}")
    if integer is not None and np.any(integer):
        out.append("General")
        out.append(" " + " ".join(n for n, f in zip(names, integer) if f))
    out.append("End")
    return "\n".join(out)


def dump_qp(qp, names=None) -> str:
    names = names or [f"x{j}" for j in range(qp.n)]
    quad = []
    for i in range(qp.n):
        for j in range(i, qp.n):
            v = qp.H[i, j] * (1.0 if i == j else 2.0)
            if v:
                quad.append(f"{v:+.6g} {names[i]}*{names[j]}")
    out = ["Minimize", f" obj: {_expr(qp.g, names)} + [ {' '.join(quad)} ] / 2", "Subject To"]
    for i, (row, b) in enumerate(zip(qp.A_in, qp.b_in)):
        out.append(f" c{i}: {_expr(row, names)} <= {b:.6g}")
    for i, (row, b) in enumerate(zip(qp.A_eq, qp.b_eq)):
        out.append(f" e{i}: {_expr(row, names)} = {b:.6g}")
    out.append("End")
    return "\n".join(out)
