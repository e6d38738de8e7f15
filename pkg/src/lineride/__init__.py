"""Exact and heuristic solvers for the line-based dial-a-ride problem
without time windows, built on stopping-pattern generation."""

from .model import (
    Direction,
    Instance,
    Request,
    Solution,
    StoppingPattern,
    generate_instance,
    validate_solution,
)
from .master import MasterConfig, solve_explicit
from .bnp import branch_and_price, root_node_heuristic

__all__ = [
    "Direction",
    "Instance",
    "Request",
    "Solution",
    "StoppingPattern",
    "MasterConfig",
    "generate_instance",
    "validate_solution",
    "solve_explicit",
    "branch_and_price",
    "root_node_heuristic",
]
