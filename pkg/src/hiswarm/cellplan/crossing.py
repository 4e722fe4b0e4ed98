"""Cell-crossing protocol: freeze exits inside a buffer band before the shared face."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Hyperplane

OUTSIDE, IN_BUFFER, CROSSED = "outside", "in_buffer", "crossed"


def min_buffer(delta_l: float, v_max: float) -> float:
    """Smallest buffer distance that guarantees one next-cell plan before crossing."""
    return float(delta_l) * float(v_max)


def classify(position, face: Hyperplane, d_buf: float) -> str:
    """``face`` has the current cell on its non-positive side."""
    s = float(face.signed(np.asarray(position, float)))
    if s > 0:
        return CROSSED
    # the face shifted toward the cell by d_buf: offset + d_buf for a unit normal
    if s + d_buf >= 0:
        return IN_BUFFER
    return OUTSIDE


@dataclass
class CrossingDirective:
    state: str
    freeze: bool = False  # keep the current-cell plan fixed
    next_cell: int | None = None
    start_vertex: int | None = None  # locked local goal
    start_time: float | None = None  # locked arrival at it


def cell_crossing_update(
    position,
    face: Hyperplane,
    next_cell: int,
    locked_goal: int | None,
    locked_arrival: float | None,
    delta_l: float,
    v_max: float,
    d_buf: float | None = None,
) -> CrossingDirective:
    need = min_buffer(delta_l, v_max)
    d_buf = need if d_buf is None else float(d_buf)
    if d_buf < need - 1e-12:
        raise ValueError(f"buffer {d_buf} below delta_l * V_max = {need}")
    st = classify(position, face, d_buf)
    if st == IN_BUFFER:
        return CrossingDirective(st, True, next_cell, locked_goal, locked_arrival)
    if st == CROSSED:
        return CrossingDirective(st, False, next_cell)
    return CrossingDirective(st)
