"""Per-cell planning: goal assignment, ECBS with generalized conflicts, LNS, crossing protocol."""

from .assign import GoalAssignment, assign_local_goals, assignment_objective
from .crossing import CROSSED, IN_BUFFER, OUTSIDE, CrossingDirective, cell_crossing_update, classify, min_buffer
from .ecbs import CellPlanProblem, Constraints, Infeasible, Timeout, ecbs_mapfc, low_level
from .lns import lns_improve
from .model import Agent, Conflict, DiscretePath, MoveGraph, Occupancy, Reserved, find_conflicts, plans_of, sum_of_costs, valid_path

__all__ = [
    "GoalAssignment", "assign_local_goals", "assignment_objective",
    "CROSSED", "IN_BUFFER", "OUTSIDE", "CrossingDirective", "cell_crossing_update", "classify", "min_buffer",
    "CellPlanProblem", "Constraints", "Infeasible", "Timeout", "ecbs_mapfc", "low_level",
    "lns_improve",
    "Agent", "Conflict", "DiscretePath", "MoveGraph", "Occupancy", "Reserved",
    "find_conflicts", "plans_of", "sum_of_costs", "valid_path",
]
