"""Best-first branch-and-price search and the root-only heuristic.

One shared column pool grows across the whole tree. Each node runs column
generation under its branching fixings, prices every (position, vehicle)
slot, and is pruned by bound, by infeasibility, or by optimality of an
integral relaxation; otherwise it branches on the most fractional request
or pattern variable.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .master import MasterConfig, decode_solution
from .model import Direction, Instance, Solution, TOLERANCE, position_direction
from .pricing import EPSILON, PricingEngine, build_pricing_graph
from .rmp import (
    ColumnPool,
    RMP_INFEASIBLE,
    RMP_NO_INCUMBENT,
    RelaxationCache,
    solve_rmp_integer,
)

log = logging.getLogger(__name__)

#: Cap on the time slice granted to a single incumbent solve.
INCUMBENT_SLICE = 60.0


@dataclass(frozen=True)
class BnPNode:
    """A search node: inherited fixings plus the bound its parent proved."""

    fixings: tuple
    parent_bound: float
    depth: int
    seq: int

    def sort_key(self):
        return (-self.parent_bound, self.seq)


@dataclass
class SearchStats:
    """Tree and work counters.

    Every dequeued node ends in exactly one of the pruned buckets or
    ``branched``; nodes never dequeued (or interrupted mid-solve) count as
    ``open_at_end``, so created = pruned + branched + open_at_end.
    """

    nodes_created: int = 0
    nodes_processed: int = 0
    pruned_bound: int = 0
    pruned_infeasible: int = 0
    pruned_optimal: int = 0
    branched: int = 0
    open_at_end: int = 0
    cg_iterations: int = 0
    columns_generated: int = 0
    rrmp_time: float = 0.0
    pricing_time: float = 0.0
    incumbent_time: float = 0.0
    final_gap: Optional[float] = None
    incumbent_history: list = field(default_factory=list)
    node_log: list = field(default_factory=list)


@dataclass
class CgOutcome:
    """Result of running column generation at one node."""

    objective: float
    values: dict
    duals: object
    new_columns: int
    proven: bool


class _Clock:
    def __init__(self, limit: Optional[float]):
        self.start = time.perf_counter()
        self.limit = limit

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def remaining(self) -> float:
        if self.limit is None:
            return math.inf
        return self.limit - self.elapsed()

    def expired(self) -> bool:
        return self.remaining() <= 0.0


def _forbidden_by_slot(node_fixings, pool: ColumnPool) -> dict:
    """Patterns banned per slot by zero-fixed pattern variables."""
    banned: dict = {}
    for key, value in node_fixings:
        if key[0] == "y" and value == 0:
            _, j, p, k = key
            banned.setdefault((p, k), []).append(pool[j].stations)
    return banned


class _SlotScreen:
    """Admissible upper bound on a slot's best pattern profit.

    On metric instances a pattern spanning stations a..b drives at least the
    direct distance between a and b, so crediting every same-direction
    request inside [a, b] at zero detour cost bounds the pricing optimum
    from above. The interval reward sums come from a 2-D prefix table, so a
    slot costs O(n^2) to screen instead of an integer solve. Non-metric
    instances fall back to the coarse all-rewards bound.
    """

    def __init__(self, instance: Instance):
        self.n = instance.n
        d = np.asarray(instance.distances)
        self.metric = bool((d[:, None, :] + d[None, :, :] >= d[:, :, None] - 1e-9).all())
        self.span = d
        self.min_hop = float(min(
            (d[g, h] for g in range(self.n) for h in range(self.n) if g != h),
            default=0.0,
        ))
        self.intervals = {
            direction: [(r.low, r.high) for r in instance.requests_in(direction)]
            for direction in Direction
        }
        self._upper = np.triu_indices(self.n, k=1)

    def bound(self, direction, iota, lam, mu, nu) -> float:
        if not self.metric:
            return sum(iota) - min(lam) - min(mu) - nu * self.min_hop
        n = self.n
        inside = np.zeros((n + 1, n + 1))
        for (low, high), reward in zip(self.intervals[direction], iota):
            inside[low, high] += reward
        # inside[a, b] <- total reward of requests with [low, high] within [a, b]
        inside = np.cumsum(inside[::-1], axis=0)[::-1]
        inside = np.cumsum(inside, axis=1)
        if direction is Direction.ASCENDING:
            start_pen, end_pen = np.asarray(lam), np.asarray(mu)
        else:
            start_pen, end_pen = np.asarray(mu), np.asarray(lam)
        profit = (
            inside[1:, 1:]
            - start_pen[:, None]
            - end_pen[None, :]
            - nu * self.span
        )
        return float(profit[self._upper].max()) if self._upper[0].size else -np.inf


def column_generation(
    instance: Instance,
    node: Optional[BnPNode],
    pool: ColumnPool,
    config: MasterConfig,
    clock: Optional[_Clock] = None,
    stats: Optional[SearchStats] = None,
    cache: Optional[RelaxationCache] = None,
    pricing_memo: Optional[dict] = None,
    engine: Optional[PricingEngine] = None,
) -> Optional[CgOutcome]:
    """Alternate restricted-relaxation solves with pattern pricing until no
    priced pattern improves, the deadline passes, or the node proves infeasible
    (None). The bound is only proven when a full pricing round came up empty.

    ``pricing_memo`` may be shared across nodes: pricing problems are pure
    functions of the slot's dual prices, which recur heavily in the tree.
    """
    clock = clock or _Clock(None)
    stats = stats or SearchStats()
    cache = cache or RelaxationCache(instance, config)
    engine = engine or PricingEngine(instance)
    memo = pricing_memo if pricing_memo is not None else {}
    fixings = node.fixings if node is not None else ()
    banned = _forbidden_by_slot(fixings, pool)
    slots = [(p, k) for p in range(1, config.positions + 1) for k in range(instance.vehicles)]
    screen = _SlotScreen(instance)
    added_total = 0

    while True:
        tick = time.perf_counter()
        relax = cache.solve(pool, fixings)
        stats.rrmp_time += time.perf_counter() - tick
        if relax is None:
            return None
        stats.cg_iterations += 1
        if clock.expired():
            return CgOutcome(relax.objective, relax.values, relax.duals, added_total, proven=False)

        duals = relax.duals
        candidates: dict = {}
        proven = True
        tick = time.perf_counter()
        for p, k in slots:
            direction = position_direction(p)
            excluded = tuple(sorted(banned.get((p, k), [])))
            iota = tuple(duals.iota[(r.id, p, k)] for r in instance.requests_in(direction))
            lam = tuple(duals.lam[(h, p, k)] for h in range(1, instance.n + 1))
            mu = tuple(duals.mu[(h, p, k)] for h in range(1, instance.n + 1))
            zeta = duals.zeta[(p, k)]
            nu = duals.nu[k]
            if screen.bound(direction, iota, lam, mu, nu) <= zeta + EPSILON:
                continue  # provably no profitable pattern at this slot
            # The opportunity cost only moves the profitability bar, so slots
            # (and earlier nodes) sharing the remaining duals share a solve.
            key = (direction, nu, iota, lam, mu, excluded)
            if key in memo:
                solved = memo[key]
            else:
                if clock.expired():
                    proven = False
                    break
                graph = build_pricing_graph(instance, p, k, direction, duals)
                solved = engine.solve(graph, forbidden=excluded)
                memo[key] = solved
            if solved is not None and solved[0] > zeta + EPSILON:
                candidates[(p, k)] = solved[1]
        stats.pricing_time += time.perf_counter() - tick

        ordered = [candidates[slot] for slot in sorted(candidates)]
        new_indices = pool.add(ordered)
        added_total += len(new_indices)
        stats.columns_generated += len(new_indices)
        log.info(
            "cg iter=%d pool=%d rrmp=%.6f added=%d elapsed=%.2fs",
            stats.cg_iterations, len(pool), relax.objective, len(new_indices), clock.elapsed(),
        )
        if not proven:
            return CgOutcome(relax.objective, relax.values, relax.duals, added_total, proven=False)
        if not new_indices:
            return CgOutcome(relax.objective, relax.values, relax.duals, added_total, proven=True)


def _fractional(value: float) -> float:
    return abs(value - round(value))


def branch(node: BnPNode, values: dict, bound: float, seq: "itertools.count") -> tuple[BnPNode, BnPNode]:
    """Split on the most fractional request variable, falling back to pattern
    variables; left child pins it to 0, right child to 1.

    The right child draws the earlier sequence number: pinning a variable to
    1 restricts the relaxation far more, so on bound ties the search dives
    toward integral solutions first.
    """
    chosen = None
    for prefix in ("x", "y"):
        fractional = [
            (abs(_fractional(value) - 0.5), key[1:], key)
            for key, value in values.items()
            if key[0] == prefix and _fractional(value) > TOLERANCE
        ]
        if fractional:
            chosen = min(fractional)[2]
            break
    if chosen is None:
        raise ValueError("no fractional request or pattern variable to branch on")
    right = BnPNode(node.fixings + ((chosen, 1),), bound, node.depth + 1, next(seq))
    left = BnPNode(node.fixings + ((chosen, 0),), bound, node.depth + 1, next(seq))
    return left, right


#: Search termination statuses.
BNP_OPTIMAL = "optimal"
BNP_TIME_LIMIT = "time_limit"
BNP_INFEASIBLE = "infeasible"


@dataclass
class BnPResult:
    solution: Optional[Solution]
    bound: float
    status: str
    stats: SearchStats
    pool: ColumnPool
    root_bound: Optional[float] = None

    @property
    def objective(self) -> Optional[float]:
        return self.solution.objective if self.solution is not None else None


def _better(candidate: Optional[Solution], incumbent: Optional[Solution]) -> bool:
    if candidate is None:
        return False
    return incumbent is None or candidate.objective > incumbent.objective + TOLERANCE


def branch_and_price(
    instance: Instance,
    config: Optional[MasterConfig] = None,
    time_limit: Optional[float] = None,
    pool: Optional[ColumnPool] = None,
) -> BnPResult:
    """Exact search: best-first on parent bounds, column generation per node.

    Returns the best incumbent, the final global bound, and work statistics.
    On time-out the incumbent is best-so-far and the bound is unproven only
    in the sense of being the loosest open-node bound.
    """
    if config is None:
        config = MasterConfig.for_instance(instance)
    clock = _Clock(time_limit)
    stats = SearchStats()
    pool = pool if pool is not None else ColumnPool.initial(instance)
    cache = RelaxationCache(instance, config)
    engine = PricingEngine(instance)
    pricing_memo: dict = {}
    seq = itertools.count()

    best: Optional[Solution] = None
    tick = time.perf_counter()
    incumbent, _ = solve_rmp_integer(
        instance, pool, config, time_limit=_incumbent_slice(clock)
    )
    stats.incumbent_time += time.perf_counter() - tick
    if _better(incumbent, best):
        best = incumbent
        stats.incumbent_history.append(best.objective)

    root = BnPNode(fixings=(), parent_bound=math.inf, depth=0, seq=next(seq))
    stats.nodes_created += 1
    queue: list = []
    heapq.heappush(queue, (root.sort_key(), root))
    root_bound: Optional[float] = None
    interrupted = False

    def lower_bound() -> float:
        return best.objective if best is not None else -math.inf

    while queue:
        if clock.expired():
            interrupted = True
            break
        _, node = heapq.heappop(queue)
        if node.parent_bound <= lower_bound() + TOLERANCE:
            stats.pruned_bound += 1
            stats.nodes_processed += 1
            _log_node(stats, node, None, best, pool, "pruned_bound")
            continue

        cg = column_generation(instance, node, pool, config, clock, stats, cache, pricing_memo, engine)
        if cg is None:
            stats.pruned_infeasible += 1
            stats.nodes_processed += 1
            _log_node(stats, node, None, best, pool, "pruned_infeasible")
            continue
        if not cg.proven:
            interrupted = True
            heapq.heappush(queue, (node.sort_key(), node))
            break
        node_bound = cg.objective
        if node.depth == 0:
            root_bound = node_bound

        if cg.new_columns > 0 and not clock.expired():
            tick = time.perf_counter()
            incumbent, inc_status = solve_rmp_integer(
                instance, pool, config, time_limit=_incumbent_slice(clock)
            )
            stats.incumbent_time += time.perf_counter() - tick
            if inc_status not in (RMP_INFEASIBLE, RMP_NO_INCUMBENT) and _better(incumbent, best):
                best = incumbent
                stats.incumbent_history.append(best.objective)

        if node_bound <= lower_bound() + TOLERANCE:
            stats.pruned_bound += 1
            stats.nodes_processed += 1
            _log_node(stats, node, node_bound, best, pool, "pruned_bound")
            continue

        if _is_integral(cg.values):
            candidate = decode_solution(
                instance, pool.patterns, config.with_fixings(node.fixings), cg.values
            )
            if _better(candidate, best):
                best = candidate
                stats.incumbent_history.append(best.objective)
            stats.pruned_optimal += 1
            stats.nodes_processed += 1
            _log_node(stats, node, node_bound, best, pool, "pruned_optimal")
            continue

        left, right = branch(node, cg.values, node_bound, seq)
        stats.nodes_created += 2
        stats.branched += 1
        stats.nodes_processed += 1
        heapq.heappush(queue, (left.sort_key(), left))
        heapq.heappush(queue, (right.sort_key(), right))
        _log_node(stats, node, node_bound, best, pool, "branched")

    stats.open_at_end += len(queue)
    open_bounds = [node.parent_bound for _, node in queue]
    if interrupted or queue:
        bound = max([lower_bound(), *(b for b in open_bounds if math.isfinite(b))], default=math.inf)
        if any(not math.isfinite(b) for b in open_bounds):
            bound = math.inf
        status = BNP_TIME_LIMIT
    else:
        bound = lower_bound()
        status = BNP_OPTIMAL if best is not None else BNP_INFEASIBLE
    if best is not None and math.isfinite(bound):
        denom = max(abs(bound), TOLERANCE)
        stats.final_gap = max(0.0, (bound - best.objective) / denom)
    return BnPResult(best, bound, status, stats, pool, root_bound)


def _incumbent_slice(clock: _Clock) -> Optional[float]:
    remaining = clock.remaining()
    if math.isinf(remaining):
        return None
    return max(0.0, min(INCUMBENT_SLICE, remaining / 4.0))


def _is_integral(values: dict) -> bool:
    return all(
        _fractional(value) <= TOLERANCE
        for key, value in values.items()
        if key[0] in ("x", "y")
    )


def _log_node(stats: SearchStats, node: BnPNode, node_bound, best, pool: ColumnPool, action: str):
    entry = {
        "seq": node.seq,
        "depth": node.depth,
        "parent_bound": node.parent_bound,
        "node_bound": node_bound,
        "incumbent": best.objective if best is not None else None,
        "pool_size": len(pool),
        "action": action,
    }
    stats.node_log.append(entry)
    log.info(
        "node seq=%d depth=%d parent_ub=%s node_ub=%s incumbent=%s pool=%d action=%s",
        entry["seq"], entry["depth"], entry["parent_bound"], entry["node_bound"],
        entry["incumbent"], entry["pool_size"], action,
    )


@dataclass
class HeuristicResult:
    solution: Optional[Solution]
    bound: float
    bound_proven: bool
    gap: float
    stats: SearchStats
    pool: ColumnPool

    @property
    def objective(self) -> Optional[float]:
        return self.solution.objective if self.solution is not None else None


def root_node_heuristic(
    instance: Instance,
    config: Optional[MasterConfig] = None,
    time_limit: Optional[float] = 900.0,
    pool: Optional[ColumnPool] = None,
) -> HeuristicResult:
    """Column generation at the root only, then one integer solve over the
    generated columns; reports that incumbent, the root bound, and their gap."""
    if config is None:
        config = MasterConfig.for_instance(instance)
    clock = _Clock(time_limit)
    stats = SearchStats()
    pool = pool if pool is not None else ColumnPool.initial(instance)

    cg = column_generation(instance, None, pool, config, clock, stats)
    if cg is None:
        return HeuristicResult(None, -math.inf, False, math.inf, stats, pool)
    tick = time.perf_counter()
    remaining = clock.remaining()
    incumbent, status = solve_rmp_integer(
        instance, pool, config,
        time_limit=None if math.isinf(remaining) else max(0.0, remaining),
    )
    stats.incumbent_time += time.perf_counter() - tick
    if status in (RMP_INFEASIBLE, RMP_NO_INCUMBENT) or incumbent is None:
        return HeuristicResult(None, cg.objective, cg.proven, math.inf, stats, pool)
    bound = cg.objective
    if bound <= TOLERANCE:
        gap = 0.0 if incumbent.objective >= bound - TOLERANCE else math.inf
    else:
        gap = max(0.0, (bound - incumbent.objective) / bound)
    stats.final_gap = gap
    return HeuristicResult(incumbent, bound, cg.proven, gap, stats, pool)
