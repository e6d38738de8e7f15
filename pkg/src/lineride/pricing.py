"""Profitable-stopping-pattern solvers on an acyclic tournament digraph.

A stopping pattern in one direction is a path from an artificial start depot
0 through the stations it visits (in line order) to an end depot n+1. Request
rewards are collected when both endpoints lie on the path; arc weights charge
driven distance and, in pricing mode, the dual prices of the start and end
stations. Descending problems are mirrored onto the ascending form by
reversing the station axis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import backend
from .backend import BINARY, CONTINUOUS, Model
from .master import ConfigurationError
from .model import (
    Direction,
    EnumerationLimitError,
    Instance,
    StoppingPattern,
    overlap_groups,
)
from .rmp import DualLookupError, DualValues

#: Acceptance threshold for reduced costs: strictly above keeps zero-gain
#: columns out and the generation loop finite.
EPSILON = 1e-6

#: Expansion budget for the exact pruned search.
SEARCH_NODE_BUDGET = 5_000_000


def _graph_station(h: int, n: int, direction: Direction) -> int:
    """Map an original station to the ascending-form axis (an involution)."""
    return h if direction is Direction.ASCENDING else n + 1 - h


def reduced_cost(
    instance: Instance,
    pattern: StoppingPattern,
    position: int,
    vehicle: int,
    direction: Direction,
    duals: DualValues,
) -> float:
    """Dual-adjusted profit of assigning ``pattern`` to (position, vehicle).

    Positive means the column would improve the relaxed master. The start
    penalty applies at the travel start (lowest station when ascending,
    highest when descending); the end penalty at the travel end.
    """
    try:
        zeta = duals.zeta[(position, vehicle)]
        nu = duals.nu[vehicle]
        total = -zeta
        for r in instance.requests_in(direction):
            if pattern.serves(r):
                total += duals.iota[(r.id, position, vehicle)]
        start = pattern.start_station(direction)
        end = pattern.end_station(direction)
        total -= duals.lam[(start, position, vehicle)]
        total -= duals.mu[(end, position, vehicle)]
    except KeyError as exc:
        raise DualLookupError(
            f"missing dual for position {position}, vehicle {vehicle}: {exc}"
        ) from exc
    return total - pattern.length(instance.distances) * nu


@dataclass(frozen=True)
class TournamentDigraph:
    """Arc-weighted acyclic tournament on depot 0, stations 1..n, depot n+1.

    Stations are in ascending-form coordinates; ``direction`` records how to
    map them back. ``rewards`` entries are (low, high, reward, request id).
    """

    n: int
    start_weights: tuple[float, ...]
    end_weights: tuple[float, ...]
    interior: np.ndarray
    rewards: tuple[tuple[int, int, float, int], ...]
    big_m: float
    direction: Direction
    position: int = 0
    vehicle: int = 0

    def weight(self, g: int, h: int) -> float:
        if not 0 <= g < h <= self.n + 1:
            raise ValueError(f"no arc ({g},{h})")
        if g == 0 and h == self.n + 1:
            return self.big_m
        if g == 0:
            return self.start_weights[h - 1]
        if h == self.n + 1:
            return self.end_weights[g - 1]
        return float(self.interior[g - 1, h - 1])

    @property
    def total_reward(self) -> float:
        """Upper bound on any pattern's profit: all rewards, no cost."""
        return sum(w for _, _, w, _ in self.rewards)

    def original_station(self, h: int) -> int:
        return _graph_station(h, self.n, self.direction)


def build_pricing_graph(
    instance: Instance,
    position: int,
    vehicle: int,
    direction: Direction,
    duals: DualValues,
) -> TournamentDigraph:
    """Encode the dual prices of one (position, vehicle) slot as arc weights."""
    n = instance.n
    try:
        nu = duals.nu[vehicle]
        start_w, end_w = [], []
        for g in range(1, n + 1):
            h = _graph_station(g, n, direction)
            start_w.append(duals.lam[(h, position, vehicle)])
            end_w.append(duals.mu[(h, position, vehicle)])
        rewards = []
        for r in instance.requests_in(direction):
            go = _graph_station(r.origin, n, direction)
            gd = _graph_station(r.destination, n, direction)
            rewards.append((min(go, gd), max(go, gd), duals.iota[(r.id, position, vehicle)], r.id))
    except KeyError as exc:
        raise DualLookupError(
            f"missing dual for position {position}, vehicle {vehicle}: {exc}"
        ) from exc
    distances = np.asarray(instance.distances)
    if direction is Direction.DESCENDING:
        distances = distances[::-1, ::-1]
    interior = nu * distances
    big_m = sum(w for _, _, w, _ in rewards) + nu * float(np.triu(distances, 1).sum()) + 1.0
    return TournamentDigraph(
        n=n,
        start_weights=tuple(start_w),
        end_weights=tuple(end_w),
        interior=interior,
        rewards=tuple(sorted(rewards, key=lambda item: item[3])),
        big_m=big_m,
        direction=direction,
        position=position,
        vehicle=vehicle,
    )


def _build_path_model(
    graph: TournamentDigraph,
    binary_requests: bool,
    exclude_single_stops: bool,
    capacity_rows: Sequence[tuple[Sequence[int], int]] = (),
    forbidden: Iterable[tuple[int, ...]] = (),
) -> Model:
    """Shared path MILP: depot rows, flow conservation, reward linking.

    ``capacity_rows`` pairs request-id groups with the capacity bound;
    ``forbidden`` lists visited-station sets (graph coordinates) excluded via
    no-good rows on the station-visit indicators.
    """
    n = graph.n
    model = Model(name="pricing", mip_gap=0.0)
    arcs = [(g, h) for g in range(0, n + 1) for h in range(g + 1, n + 2)
            if not (g == 0 and h == n + 1)]
    for g, h in arcs:
        model.add_variable(("arc", g, h), BINARY, obj=-graph.weight(g, h))
    kind = BINARY if binary_requests else CONTINUOUS
    for low, high, reward, rid in graph.rewards:
        model.add_variable(("serve", rid), kind, 0.0, 1.0 if binary_requests else None, obj=reward)

    model.add_constraint(
        "enter", {("arc", 0, h): 1.0 for h in range(1, n + 1)}, "=", 1.0
    )
    model.add_constraint(
        "leave", {("arc", h, n + 1): 1.0 for h in range(1, n + 1)}, "=", 1.0
    )
    for h in range(1, n + 1):
        coeffs = {("arc", g, h): 1.0 for g in range(0, h)}
        for g in range(h + 1, n + 2):
            coeffs[("arc", h, g)] = -1.0
        model.add_constraint(("flow", h), coeffs, "=", 0.0)
    for low, high, reward, rid in graph.rewards:
        coeffs = {("serve", rid): 1.0}
        coeffs.update({("arc", g, low): -1.0 for g in range(0, low)})
        model.add_constraint(("visit_origin", rid), coeffs, "<=", 0.0)
        coeffs = {("serve", rid): 1.0}
        coeffs.update({("arc", g, high): -1.0 for g in range(0, high)})
        model.add_constraint(("visit_destination", rid), coeffs, "<=", 0.0)
    if exclude_single_stops:
        model.add_constraint(
            "interior",
            {("arc", g, h): 1.0 for g in range(1, n + 1) for h in range(g + 1, n + 1)},
            ">=", 1.0,
        )
    for i, (members, bound) in enumerate(capacity_rows):
        model.add_constraint(
            ("cap", i), {("serve", rid): 1.0 for rid in members}, "<=", float(bound)
        )
    for i, stations in enumerate(sorted(set(forbidden))):
        chosen = set(stations)
        coeffs: dict = {}
        for h in range(1, n + 1):
            sign = 1.0 if h in chosen else -1.0
            for g in range(0, h):
                coeffs[("arc", g, h)] = coeffs.get(("arc", g, h), 0.0) + sign
        model.add_constraint(("exclude", i), coeffs, "<=", float(len(chosen) - 1))
    return model


def _decode_path(graph: TournamentDigraph, values: dict) -> tuple[list[int], list[int]]:
    """Visited original stations and accepted request ids from primal values."""
    visited_graph = [
        h for h in range(1, graph.n + 1)
        if sum(values.get(("arc", g, h), 0.0) for g in range(0, h)) > 0.5
    ]
    stations = sorted(graph.original_station(h) for h in visited_graph)
    accepted = [rid for _, _, _, rid in graph.rewards if values.get(("serve", rid), 0.0) > 0.5]
    return stations, accepted


@dataclass(frozen=True)
class PricedPattern:
    """A generated column: the pattern, its pricing profit and target slot."""

    pattern: StoppingPattern
    profit: float
    position: int
    vehicle: int
    direction: Direction
    reduced_cost: float


def most_profitable_pattern(
    graph: TournamentDigraph,
    forbidden: Iterable[tuple[int, ...]] = (),
    time_limit: Optional[float] = None,
) -> Optional[tuple[float, StoppingPattern]]:
    """Best non-single-stop pattern and its profit, threshold-free.

    ``forbidden`` station sets (original coordinates) are excluded, which is
    how branching decisions that ban a column at some slot are honored. None
    only when the exclusions leave no admissible pattern at all.
    """
    graph_forbidden = [
        tuple(sorted(_graph_station(h, graph.n, graph.direction) for h in stations))
        for stations in forbidden
        if len(stations) > 1
    ]
    model = _build_path_model(
        graph, binary_requests=False, exclude_single_stops=True, forbidden=graph_forbidden
    )
    result = backend.solve_mip(model, time_limit=time_limit)
    if result.status == backend.INFEASIBLE or not result.has_solution:
        return None
    stations, _ = _decode_path(graph, result.values)
    return result.objective, StoppingPattern(tuple(stations), graph.n)


class PricingEngine:
    """Reusable pricing models: one compiled MILP per direction.

    Pricing problems for different slots share all structure; only the
    objective coefficients (dual prices) differ, so each solve is a cost
    swap plus a re-run. Slots with banned patterns fall back to a fresh
    model carrying the exclusion rows.
    """

    def __init__(self, instance: Instance):
        self._instance = instance
        self._mips: dict[Direction, backend.CompiledMIP] = {}

    def _model_for(self, graph: TournamentDigraph) -> backend.Model:
        return _build_path_model(graph, binary_requests=False, exclude_single_stops=True)

    def _objective_for(self, graph: TournamentDigraph) -> dict:
        objective = {}
        n = graph.n
        for g in range(0, n + 1):
            for h in range(g + 1, n + 2):
                if g == 0 and h == n + 1:
                    continue
                objective[("arc", g, h)] = -graph.weight(g, h)
        for _, _, reward, rid in graph.rewards:
            objective[("serve", rid)] = reward
        return objective

    def solve(
        self, graph: TournamentDigraph, forbidden: Iterable[tuple[int, ...]] = ()
    ) -> Optional[tuple[float, StoppingPattern]]:
        forbidden = tuple(forbidden)
        if forbidden:
            return most_profitable_pattern(graph, forbidden)
        mip = self._mips.get(graph.direction)
        if mip is None:
            mip = backend.compile_mip(self._model_for(graph), presolve=False)
            self._mips[graph.direction] = mip
        result = mip.solve(self._objective_for(graph))
        if result.status == backend.INFEASIBLE or not result.has_solution:
            return None
        stations, _ = _decode_path(graph, result.values)
        return result.objective, StoppingPattern(tuple(stations), graph.n)


def solve_pricing(
    graph: TournamentDigraph,
    zeta: float,
    time_limit: Optional[float] = None,
    forbidden: Iterable[tuple[int, ...]] = (),
) -> Optional[PricedPattern]:
    """Most profitable non-single-stop pattern for one slot, if it improves.

    Returns the pattern whose profit exceeds the slot's opportunity cost by
    more than the acceptance threshold, or None when no such pattern exists.
    """
    solved = most_profitable_pattern(graph, forbidden, time_limit)
    if solved is None:
        return None
    profit, pattern = solved
    if profit <= zeta + EPSILON:
        return None
    return PricedPattern(
        pattern=pattern,
        profit=profit,
        position=graph.position,
        vehicle=graph.vehicle,
        direction=graph.direction,
        reduced_cost=profit - zeta,
    )


def _distance_graph(
    instance: Instance, rewards: Mapping[int, float], direction: Direction
) -> TournamentDigraph:
    """Plain-profit form: raw distances as interior weights, free depot arcs."""
    n = instance.n
    distances = np.asarray(instance.distances)
    if direction is Direction.DESCENDING:
        distances = distances[::-1, ::-1]
    reward_entries = []
    for r in instance.requests_in(direction):
        go = _graph_station(r.origin, n, direction)
        gd = _graph_station(r.destination, n, direction)
        reward_entries.append((min(go, gd), max(go, gd), float(rewards.get(r.id, 0.0)), r.id))
    total = sum(w for _, _, w, _ in reward_entries)
    return TournamentDigraph(
        n=n,
        start_weights=(0.0,) * n,
        end_weights=(0.0,) * n,
        interior=distances,
        rewards=tuple(sorted(reward_entries, key=lambda item: item[3])),
        big_m=total + float(np.triu(distances, 1).sum()) + 1.0,
        direction=direction,
    )


@dataclass(frozen=True)
class PatternProfit:
    pattern: StoppingPattern
    accepted: frozenset[int]
    profit: float


def solve_mpsp(
    instance: Instance,
    rewards: Mapping[int, float],
    direction: Direction,
    capacity: int,
    time_limit: Optional[float] = None,
) -> PatternProfit:
    """Most profitable capacitated stopping pattern in one direction.

    Maximizes accepted rewards minus pattern length subject to the capacity
    on every overlapped segment. Single-stop (and empty) patterns are not
    admitted, so the profit may be negative.
    """
    if instance.n < 2:
        raise ConfigurationError("need at least two stations for a non-trivial pattern")
    graph = _distance_graph(instance, rewards, direction)
    capacity_rows = [
        (sorted(group.members), capacity)
        for group in overlap_groups(instance, direction)
        if len(group.members) > capacity
    ]
    model = _build_path_model(
        graph, binary_requests=True, exclude_single_stops=True, capacity_rows=capacity_rows
    )
    result = backend.solve_mip(model, time_limit=time_limit)
    if not result.has_solution:
        raise backend.BackendError(f"pattern search ended with status {result.status}")
    stations, accepted = _decode_path(graph, result.values)
    return PatternProfit(
        StoppingPattern(tuple(stations), instance.n), frozenset(accepted), result.objective
    )


def solve_mpusp(
    instance: Instance,
    rewards: Mapping[int, float],
    direction: Direction,
    time_limit: Optional[float] = None,
) -> tuple[StoppingPattern, float]:
    """Uncapacitated variant; accepting every covered request is optimal, so
    only the pattern and profit are reported."""
    if instance.n < 2:
        raise ConfigurationError("need at least two stations for a non-trivial pattern")
    graph = _distance_graph(instance, rewards, direction)
    model = _build_path_model(graph, binary_requests=False, exclude_single_stops=True)
    result = backend.solve_mip(model, time_limit=time_limit)
    if not result.has_solution:
        raise backend.BackendError(f"pattern search ended with status {result.status}")
    stations, _ = _decode_path(graph, result.values)
    return StoppingPattern(tuple(stations), instance.n), result.objective


def evaluate_pattern_profit(
    instance: Instance,
    rewards: Mapping[int, float],
    direction: Direction,
    stations: Sequence[int],
) -> float:
    """Uncapacitated profit of a fixed station set: covered rewards minus length."""
    chosen = set(stations)
    pattern = StoppingPattern(tuple(sorted(chosen)), instance.n)
    realized = sum(
        rewards.get(r.id, 0.0)
        for r in instance.requests_in(direction)
        if pattern.serves(r)
    )
    return realized - pattern.length(instance.distances)


def brute_force_mpsp(
    instance: Instance,
    rewards: Mapping[int, float],
    direction: Direction,
    capacity: Optional[int],
    seed_patterns: Iterable[Sequence[int]] = (),
) -> PatternProfit:
    """Exact reference solver by exhaustive search, independent of any MILP.

    With a binding capacity it enumerates every non-single-stop pattern and
    every accepted subset (guarded to n <= 12, m <= 12). Without one
    (capacity None or >= request count) it runs a pruned choose/skip search
    over stations with an admissible optimistic bound, which also handles
    the larger reduction instances. ``seed_patterns`` warm-start the bound.
    """
    requests = instance.requests_in(direction)
    uncapacitated = capacity is None or capacity >= len(requests)
    if uncapacitated:
        return _pruned_pattern_search(instance, rewards, direction, seed_patterns)
    if instance.n > 12 or len(requests) > 12:
        raise EnumerationLimitError(
            f"capacitated enumeration guarded to n <= 12 and m <= 12, got n={instance.n}, m={len(requests)}"
        )
    distances = np.asarray(instance.distances)
    groups = [frozenset(g.members) for g in overlap_groups(instance, direction)]
    positive = [r for r in requests if rewards.get(r.id, 0.0) > 0.0]
    best: Optional[tuple[float, tuple[int, ...], frozenset[int]]] = None
    for combo_size in range(2, instance.n + 1):
        for stations in itertools.combinations(range(1, instance.n + 1), combo_size):
            chosen = set(stations)
            length = sum(distances[g - 1, h - 1] for g, h in zip(stations, stations[1:]))
            served = [r for r in positive if r.origin in chosen and r.destination in chosen]
            served_ids = frozenset(r.id for r in served)
            if all(len(served_ids & g) <= capacity for g in groups):
                best_reward = sum(rewards[r.id] for r in served)
                best_subset = served_ids
            else:
                best_reward = 0.0
                best_subset = frozenset()
                for size in range(len(served), 0, -1):
                    for subset in itertools.combinations(served, size):
                        ids = frozenset(r.id for r in subset)
                        if any(len(ids & g) > capacity for g in groups):
                            continue
                        reward = sum(rewards[r.id] for r in subset)
                        if reward > best_reward:
                            best_reward = reward
                            best_subset = ids
            profit = best_reward - length
            if best is None or profit > best[0] + 1e-12:
                best = (profit, stations, best_subset)
    assert best is not None
    profit, stations, accepted = best
    return PatternProfit(StoppingPattern(stations, instance.n), accepted, profit)


def _pruned_pattern_search(
    instance: Instance,
    rewards: Mapping[int, float],
    direction: Direction,
    seed_patterns: Iterable[Sequence[int]],
) -> PatternProfit:
    """Exact uncapacitated optimum via choose/skip recursion over stations.

    The bound counts every reward whose endpoints are still choosable at full
    value and ignores future driving cost, so it never underestimates.
    """
    n = instance.n
    if n < 2:
        raise ConfigurationError("need at least two stations for a non-trivial pattern")
    if n > 40:
        raise EnumerationLimitError(f"pattern search guarded to n <= 40, got {n}")
    distances = np.asarray(instance.distances)
    requests = [
        (r.low, r.high, float(rewards.get(r.id, 0.0)), r.id)
        for r in instance.requests_in(direction)
        if rewards.get(r.id, 0.0) > 0.0
    ]
    at_station: dict[int, list[int]] = {h: [] for h in range(1, n + 1)}
    for i, (low, high, _, _) in enumerate(requests):
        at_station[low].append(i)
        at_station[high].append(i)

    best_profit = -float("inf")
    best_stations: tuple[int, ...] = ()
    for stations in [tuple(range(1, n + 1)), *map(tuple, seed_patterns)]:
        if len(set(stations)) < 2:
            continue
        profit = evaluate_pattern_profit(instance, rewards, direction, stations)
        if profit > best_profit:
            best_profit, best_stations = profit, tuple(sorted(set(stations)))

    pending = [2] * len(requests)  # endpoints not yet chosen; -1 marks dead
    optimistic = sum(w for _, _, w, _ in requests)
    chosen: list[int] = []
    expansions = 0

    def recurse(h: int, cost: float, realized: float, optimistic: float):
        nonlocal best_profit, best_stations, expansions
        expansions += 1
        if expansions > SEARCH_NODE_BUDGET:
            raise EnumerationLimitError(
                f"pattern search exceeded its {SEARCH_NODE_BUDGET} node budget"
            )
        if optimistic - cost <= best_profit + 1e-12:
            return
        if h > n:
            if len(chosen) >= 2 and realized - cost > best_profit + 1e-12:
                best_profit = realized - cost
                best_stations = tuple(chosen)
            return

        # choose h
        step = distances[chosen[-1] - 1, h - 1] if chosen else 0.0
        gained = 0.0
        for i in at_station[h]:
            if pending[i] < 0:
                continue
            pending[i] -= 1
            if pending[i] == 0:
                gained += requests[i][2]
        chosen.append(h)
        recurse(h + 1, cost + step, realized + gained, optimistic)
        chosen.pop()
        for i in at_station[h]:
            if pending[i] >= 0:
                pending[i] += 1

        # skip h: every request touching h dies
        killed = []
        lost = 0.0
        for i in at_station[h]:
            if pending[i] < 0:
                continue
            lost += requests[i][2]
            killed.append((i, pending[i]))
            pending[i] = -1
        recurse(h + 1, cost, realized, optimistic - lost)
        for i, state in killed:
            pending[i] = state

    recurse(1, 0.0, 0.0, optimistic)
    pattern = StoppingPattern(best_stations, n)
    accepted = frozenset(
        rid for low, high, _, rid in requests
        if low in set(best_stations) and high in set(best_stations)
    )
    return PatternProfit(pattern, accepted, best_profit)
