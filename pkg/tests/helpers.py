"""Shared test utilities: tiny instances and an independent tour enumerator."""

import itertools

import numpy as np

from lineride.model import (
    Instance,
    Request,
    enumerate_all_patterns,
    position_direction,
)


def line_instance(coords, requests, vehicles=1, capacity=2, w_pax=10.0, w_dist=1.0,
                  rewards=None):
    """Stations on a 1-D line at the given coordinates."""
    coords = np.asarray(coords, dtype=float)
    distances = np.abs(coords[:, None] - coords[None, :])
    reqs = tuple(Request(i, o, d) for i, (o, d) in enumerate(requests))
    return Instance(
        n=len(coords),
        distances=distances,
        requests=reqs,
        vehicles=vehicles,
        capacity=capacity,
        w_pax=w_pax,
        w_dist=w_dist,
        rewards=rewards,
    )


def nine_station_instance(**kwargs):
    """Unit-spaced line with one descending request pooled between two
    ascending ones; the classic two-subline tour serves all three."""
    return line_instance(
        range(9),
        [(1, 9), (5, 9), (8, 2)],
        **kwargs,
    )


def exhaustive_tour_optimum(instance, positions):
    """Independent reference optimum for single-vehicle instances.

    Enumerates every sequence of stopping patterns over the given number of
    positions (alternating directions, glued at turn stations) and every
    capacity-feasible assignment of requests to positions. Exponential; only
    for tiny instances.
    """
    assert instance.vehicles == 1, "reference enumerator is single-vehicle"
    patterns = list(enumerate_all_patterns(instance.n))
    requests = instance.requests
    best = 0.0

    def feasible_assignments(tour):
        options = []
        for r in requests:
            slots = [None]
            for p, pattern in enumerate(tour, start=1):
                if position_direction(p) is r.direction and pattern.serves(r):
                    slots.append(p)
            options.append(slots)
        for combo in itertools.product(*options):
            by_position = {}
            for r, slot in zip(requests, combo):
                if slot is not None:
                    by_position.setdefault(slot, []).append(r)
            feasible = True
            for onboard in by_position.values():
                for h in range(1, instance.n):
                    load = sum(1 for r in onboard if r.low <= h and r.high >= h + 1)
                    if load > instance.capacity:
                        feasible = False
                        break
                if not feasible:
                    break
            if feasible:
                yield [r for r, slot in zip(requests, combo) if slot is not None]

    def extend(tour, last_end):
        nonlocal best
        if len(tour) == positions:
            driven = sum(p.length(instance.distances) for p in tour)
            for accepted in feasible_assignments(tour):
                direct = sum(instance.direct_distance(r) for r in accepted)
                value = instance.w_pax * len(accepted) + instance.w_dist * (direct - driven)
                best = max(best, value)
            return
        direction = position_direction(len(tour) + 1)
        for pattern in patterns:
            if tour and pattern.start_station(direction) != last_end:
                continue
            tour.append(pattern)
            extend(tour, pattern.end_station(direction))
            tour.pop()

    extend([], None)
    return best
