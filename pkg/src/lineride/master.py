"""Pattern-assignment MILP over a given pattern set, plus the exhaustive oracle.

The model assigns one stopping pattern to every (position, vehicle) slot,
assigns requests to direction-compatible slots whose pattern covers both
endpoints, links consecutive sublines at turn stations, and charges driven
distance per vehicle. Built over the complete pattern set it is the
brute-force reference solver; built over a generated column pool it is the
(integer) restricted master problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from . import backend
from .backend import BINARY, CONTINUOUS, Model
from .model import (
    Direction,
    Instance,
    Assignment,
    Solution,
    StoppingPattern,
    TourEntry,
    TOLERANCE,
    enumerate_all_patterns,
    overlap_groups,
    position_direction,
    solution_objective,
)


class ConfigurationError(ValueError):
    """Model configuration is inconsistent with the supplied pattern set."""


class NotIntegralError(ValueError):
    """Primal values handed to the decoder are not integral."""


@dataclass(frozen=True)
class MasterConfig:
    """Shape of the master model: position count, relaxation, symmetry toggles.

    ``fixings`` are branching decisions applied as variable bounds; keys are
    the x/y variable keys of the built model.
    """

    positions: int
    relaxed: bool = False
    single_stop_symmetry: bool = True
    tour_length_ordering: bool = True
    require_all_requests: bool = False
    fixings: tuple = ()

    def __post_init__(self):
        if self.positions < 1:
            raise ConfigurationError("need at least one position per vehicle")
        for key, value in self.fixings:
            if key[0] not in ("x", "y"):
                raise ConfigurationError(f"can only fix x/y variables, got {key!r}")
            if value not in (0, 1):
                raise ConfigurationError(f"fixings must be binary, got {value!r}")

    @classmethod
    def for_instance(cls, instance: Instance, positions_fraction: float = 1.0, **kwargs) -> "MasterConfig":
        """Default shape: positions = fraction of 2m (the worst-case need)."""
        if not 0.0 < positions_fraction <= 1.0:
            raise ConfigurationError("positions fraction must be in (0, 1]")
        q = max(1, round(positions_fraction * 2 * max(instance.m, 1)))
        return cls(positions=q, **kwargs)

    def relaxed_copy(self) -> "MasterConfig":
        return replace(self, relaxed=True)

    def integer_copy(self) -> "MasterConfig":
        return replace(self, relaxed=False)

    def with_fixings(self, fixings) -> "MasterConfig":
        return replace(self, fixings=tuple(fixings))


def x_key(request_id: int, position: int, vehicle: int):
    return ("x", request_id, position, vehicle)


def y_key(pattern_index: int, position: int, vehicle: int):
    return ("y", pattern_index, position, vehicle)


def build_master(instance: Instance, patterns: Sequence[StoppingPattern], config: MasterConfig) -> Model:
    """Assemble the master model over ``patterns`` (index order is significant)."""
    n, q, c = instance.n, config.positions, instance.vehicles
    if config.single_stop_symmetry:
        present = {p.stations for p in patterns}
        missing = [h for h in range(1, n + 1) if ((h,) not in present)]
        if missing:
            raise ConfigurationError(
                f"single-stop symmetry rows need every single-stop pattern; missing stations {missing}"
            )

    lengths = [p.length(instance.distances) for p in patterns]
    serving: dict[int, list[int]] = {r.id: [] for r in instance.requests}
    for j, pattern in enumerate(patterns):
        for r in instance.requests:
            if pattern.serves(r):
                serving[r.id].append(j)
    by_lowest: dict[int, list[int]] = {h: [] for h in range(1, n + 1)}
    by_highest: dict[int, list[int]] = {h: [] for h in range(1, n + 1)}
    for j, pattern in enumerate(patterns):
        by_lowest[pattern.lowest].append(j)
        by_highest[pattern.highest].append(j)
    single_stop_indices = [j for j, p in enumerate(patterns) if p.is_single_stop]

    positions_of = {
        d: [p for p in range(1, q + 1) if position_direction(p) is d] for d in Direction
    }

    model = Model(name="master")
    kind = CONTINUOUS if config.relaxed else BINARY
    # Relaxed variables keep an open upper bound: the assignment rows already
    # imply <= 1, and free upper bounds make the LP duals price every pooled
    # column (no column can hide at an upper bound with positive reduced cost).
    ub = None if config.relaxed else 1.0

    for r in instance.requests:
        gain = instance.w_pax + instance.w_dist * instance.direct_distance(r)
        for p in positions_of[r.direction]:
            for k in range(c):
                model.add_variable(x_key(r.id, p, k), kind, 0.0, ub, obj=gain)
    for j in range(len(patterns)):
        for p in range(1, q + 1):
            for k in range(c):
                model.add_variable(y_key(j, p, k), kind, 0.0, ub)
    for h in range(1, n + 1):
        for p in range(1, q + 1):
            for k in range(c):
                model.add_variable(("start", h, p, k), kind, 0.0, ub)
                model.add_variable(("end", h, p, k), kind, 0.0, ub)
    for k in range(c):
        model.add_variable(("d", k), CONTINUOUS, 0.0, None, obj=-instance.w_dist)

    for r in instance.requests:
        coeffs = {
            x_key(r.id, p, k): 1.0
            for p in positions_of[r.direction]
            for k in range(c)
        }
        sense = "=" if config.require_all_requests else "<="
        model.add_constraint(("accept", r.id), coeffs, sense, 1.0)

    for direction in Direction:
        for group in overlap_groups(instance, direction):
            if len(group.members) <= instance.capacity:
                continue
            for p in positions_of[direction]:
                for k in range(c):
                    coeffs = {x_key(r, p, k): 1.0 for r in sorted(group.members)}
                    model.add_constraint(
                        ("cap", direction.value, group.segment[0], p, k),
                        coeffs, "<=", float(instance.capacity),
                    )

    for p in range(2, q + 1):
        for h in range(1, n + 1):
            for k in range(c):
                model.add_constraint(
                    ("connect", h, p, k),
                    {("start", h, p, k): 1.0, ("end", h, p - 1, k): -1.0},
                    "=", 0.0,
                )
    for p in range(1, q + 1):
        for k in range(c):
            model.add_constraint(
                ("one_start", p, k),
                {("start", h, p, k): 1.0 for h in range(1, n + 1)}, "=", 1.0,
            )
            model.add_constraint(
                ("one_end", p, k),
                {("end", h, p, k): 1.0 for h in range(1, n + 1)}, "=", 1.0,
            )
            model.add_constraint(
                ("pattern_choice", p, k),
                {y_key(j, p, k): 1.0 for j in range(len(patterns))}, "=", 1.0,
            )

    for r in instance.requests:
        for p in positions_of[r.direction]:
            for k in range(c):
                coeffs = {x_key(r.id, p, k): 1.0}
                for j in serving[r.id]:
                    coeffs[y_key(j, p, k)] = -1.0
                model.add_constraint(("serve", r.id, p, k), coeffs, "<=", 0.0)

    # The subline assigned to an ascending position starts at its lowest and
    # ends at its highest station; descending positions mirror the roles.
    for p in range(1, q + 1):
        ascending = position_direction(p) is Direction.ASCENDING
        start_source = by_lowest if ascending else by_highest
        end_source = by_highest if ascending else by_lowest
        for h in range(1, n + 1):
            for k in range(c):
                coeffs = {y_key(j, p, k): 1.0 for j in start_source[h]}
                coeffs[("start", h, p, k)] = -1.0
                model.add_constraint(("start_link", h, p, k), coeffs, "<=", 0.0)
                coeffs = {y_key(j, p, k): 1.0 for j in end_source[h]}
                coeffs[("end", h, p, k)] = -1.0
                model.add_constraint(("end_link", h, p, k), coeffs, "<=", 0.0)

    for k in range(c):
        coeffs = {
            y_key(j, p, k): lengths[j]
            for j in range(len(patterns))
            if lengths[j]
            for p in range(1, q + 1)
        }
        coeffs[("d", k)] = -1.0
        model.add_constraint(("tour_len", k), coeffs, "<=", 0.0)

    if config.single_stop_symmetry:
        for k in range(c):
            for p in range(3, q + 1):
                for j in single_stop_indices:
                    model.add_constraint(
                        ("idle_chain", j, p, k),
                        {
                            y_key(j, p - 2, k): 1.0,
                            y_key(j, p - 1, k): 1.0,
                            y_key(j, p, k): -1.0,
                        },
                        "<=", 1.0,
                    )

    if config.tour_length_ordering:
        for k in range(c - 1):
            model.add_constraint(
                ("tour_order", k),
                {("d", k + 1): 1.0, ("d", k): -1.0}, "<=", 0.0,
            )

    for key, value in config.fixings:
        if not model.has_variable(key):
            raise ConfigurationError(f"fixing references unknown variable {key!r}")
        model.fix_variable(key, float(value))
    return model


def decode_solution(
    instance: Instance,
    patterns: Sequence[StoppingPattern],
    config: MasterConfig,
    values: dict,
) -> Solution:
    """Read tours and assignments off integral primal values.

    Trailing single-stop positions are idle padding (the vehicle parks at its
    final station) and are trimmed from the reported tours. The objective is
    recomputed from the decoded tours and accepted requests.
    """
    q, c = config.positions, instance.vehicles

    def integral(key):
        value = values[key]
        if abs(value - round(value)) > TOLERANCE:
            raise NotIntegralError(f"variable {key!r} has fractional value {value!r}")
        return int(round(value))

    tours = []
    for k in range(c):
        entries = []
        for p in range(1, q + 1):
            chosen = [j for j in range(len(patterns)) if integral(y_key(j, p, k)) == 1]
            if len(chosen) != 1:
                raise NotIntegralError(
                    f"position {p} of vehicle {k} selects {len(chosen)} patterns"
                )
            entries.append(TourEntry(p, chosen[0], patterns[chosen[0]]))
        while entries and entries[-1].pattern.is_single_stop:
            entries.pop()
        tours.append(tuple(entries))

    assignments = []
    for r in instance.requests:
        for p in range(1, q + 1):
            if position_direction(p) is not r.direction:
                continue
            for k in range(c):
                key = x_key(r.id, p, k)
                if key in values and integral(key) == 1:
                    earlier = sum(
                        len(entry.pattern.stations)
                        for entry in tours[k]
                        if entry.position < p
                    )
                    pattern = tours[k][p - 1].pattern
                    order = pattern.travel_order(position_direction(p))
                    within = order.index(r.origin)
                    assignments.append(Assignment(r.id, k, p, earlier + within))

    accepted = {a.request_id for a in assignments}
    rejected = frozenset(r.id for r in instance.requests) - accepted
    solution = Solution(
        tours=tuple(tours),
        assignments=tuple(assignments),
        rejected=rejected,
        objective=0.0,
    )
    driven = sum(solution.tour_length(k, instance.distances) for k in range(c))
    objective = solution_objective(instance, sorted(accepted), driven)
    return replace(solution, objective=objective)


@dataclass(frozen=True)
class ExplicitResult:
    solution: Optional[Solution]
    bound: float
    status: str

    @property
    def objective(self) -> Optional[float]:
        return self.solution.objective if self.solution is not None else None


def solve_explicit(
    instance: Instance,
    config: Optional[MasterConfig] = None,
    time_limit: Optional[float] = None,
    patterns: Optional[Sequence[StoppingPattern]] = None,
) -> ExplicitResult:
    """Solve the master over every stopping pattern (or a fixed given pool)."""
    if config is None:
        config = MasterConfig.for_instance(instance)
    if patterns is None:
        patterns = list(enumerate_all_patterns(instance.n))
    model = build_master(instance, patterns, config.integer_copy())
    result = backend.solve_mip(model, time_limit=time_limit)
    if result.status == backend.INFEASIBLE:
        return ExplicitResult(None, -math.inf, result.status)
    if not result.has_solution:
        return ExplicitResult(None, result.bound if result.bound is not None else math.inf, result.status)
    solution = decode_solution(instance, patterns, config, result.values)
    bound = result.bound if result.bound is not None else solution.objective
    return ExplicitResult(solution, bound, result.status)
