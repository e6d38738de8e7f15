"""Core data model: stations on a line, requests, stopping patterns, tours.

Stations are numbered 1..n along the line. A vehicle tour is a sequence of
directional sublines, each described by a stopping pattern (the subset of
stations it halts at). Odd tour positions run in ascending station order,
even positions in descending order, and consecutive sublines are glued at
the shared turn station.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

#: Absolute tolerance for all objective/value comparisons.
TOLERANCE = 1e-6

#: Hard cap for full pattern enumeration (2^n - 1 patterns).
MAX_ENUMERATION_STATIONS = 20


class EnumerationLimitError(Exception):
    """An exhaustive routine was asked to run beyond its size guard."""


class InvalidInstanceError(ValueError):
    """Instance data violates a structural invariant."""


class InvalidPatternError(ValueError):
    """Stopping pattern data violates a structural invariant."""


class Direction(enum.Enum):
    ASCENDING = "asc"
    DESCENDING = "desc"

    @property
    def opposite(self) -> "Direction":
        return Direction.DESCENDING if self is Direction.ASCENDING else Direction.ASCENDING


DIRECTIONS = (Direction.ASCENDING, Direction.DESCENDING)


def position_direction(position: int) -> Direction:
    """Direction of a 1-based tour position: odd ascending, even descending."""
    if position < 1:
        raise ValueError(f"positions are 1-based, got {position}")
    return Direction.ASCENDING if position % 2 == 1 else Direction.DESCENDING


@dataclass(frozen=True)
class Request:
    id: int
    origin: int
    destination: int

    def __post_init__(self):
        if self.origin == self.destination:
            raise InvalidInstanceError(
                f"request {self.id}: origin and destination coincide at {self.origin}"
            )

    @property
    def direction(self) -> Direction:
        return Direction.ASCENDING if self.origin < self.destination else Direction.DESCENDING

    @property
    def low(self) -> int:
        return min(self.origin, self.destination)

    @property
    def high(self) -> int:
        return max(self.origin, self.destination)


def direction_of(request: Request) -> Direction:
    """Travel direction of a request along the line."""
    return request.direction


@dataclass(frozen=True, eq=False)
class Instance:
    """A line of n stations with symmetric distances, requests and a fleet.

    ``rewards`` is an optional per-request reward vector used by the
    stand-alone pattern-profit solvers; the tour solvers ignore it.
    """

    n: int
    distances: np.ndarray
    requests: tuple[Request, ...]
    vehicles: int
    capacity: int
    w_pax: float
    w_dist: float
    name: Optional[str] = None
    rewards: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        if d.shape != (self.n, self.n):
            raise InvalidInstanceError(f"distance matrix must be {self.n}x{self.n}, got {d.shape}")
        if (d < 0).any():
            raise InvalidInstanceError("distances must be nonnegative")
        if not np.allclose(d, d.T, atol=TOLERANCE):
            raise InvalidInstanceError("distance matrix must be symmetric")
        if not np.allclose(np.diag(d), 0.0, atol=TOLERANCE):
            raise InvalidInstanceError("self distances must be zero")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "requests", tuple(self.requests))
        for r in self.requests:
            if not (1 <= r.origin <= self.n and 1 <= r.destination <= self.n):
                raise InvalidInstanceError(f"request {r.id}: stations out of range 1..{self.n}")
        if self.vehicles < 1:
            raise InvalidInstanceError("need at least one vehicle")
        if self.capacity < 0:
            raise InvalidInstanceError("capacity must be nonnegative")
        if self.w_pax < 0 or self.w_dist < 0:
            raise InvalidInstanceError("objective weights must be nonnegative")
        if self.rewards is not None:
            rewards = tuple(float(v) for v in self.rewards)
            if len(rewards) != len(self.requests):
                raise InvalidInstanceError("rewards must align with requests")
            object.__setattr__(self, "rewards", rewards)

    @property
    def m(self) -> int:
        return len(self.requests)

    def distance(self, g: int, h: int) -> float:
        return float(self.distances[g - 1, h - 1])

    def direct_distance(self, request: Request) -> float:
        return self.distance(request.origin, request.destination)

    def requests_in(self, direction: Direction) -> tuple[Request, ...]:
        return tuple(r for r in self.requests if r.direction is direction)

    def reward_map(self) -> dict[int, float]:
        """Per-request rewards as a dict; requires the rewards field."""
        if self.rewards is None:
            raise InvalidInstanceError("instance carries no rewards")
        return {r.id: w for r, w in zip(self.requests, self.rewards)}


@dataclass(frozen=True)
class StoppingPattern:
    """Subset of stations a subline halts at, as a sorted 1-based tuple."""

    stations: tuple[int, ...]
    n: int

    def __post_init__(self):
        stations = tuple(int(s) for s in self.stations)
        if not stations:
            raise InvalidPatternError("a stopping pattern must stop somewhere")
        if any(s < 1 or s > self.n for s in stations):
            raise InvalidPatternError(f"stations out of range 1..{self.n}: {stations}")
        if any(a >= b for a, b in zip(stations, stations[1:])):
            raise InvalidPatternError(f"stations must be strictly increasing: {stations}")
        object.__setattr__(self, "stations", stations)

    @property
    def lowest(self) -> int:
        return self.stations[0]

    @property
    def highest(self) -> int:
        return self.stations[-1]

    @property
    def is_single_stop(self) -> bool:
        return len(self.stations) == 1

    def stops_at(self, station: int) -> bool:
        return station in self.stations

    def serves(self, request: Request) -> bool:
        return request.origin in self.stations and request.destination in self.stations

    def travel_order(self, direction: Direction) -> tuple[int, ...]:
        """Stations in the order the subline visits them."""
        if direction is Direction.ASCENDING:
            return self.stations
        return tuple(reversed(self.stations))

    def start_station(self, direction: Direction) -> int:
        return self.lowest if direction is Direction.ASCENDING else self.highest

    def end_station(self, direction: Direction) -> int:
        return self.highest if direction is Direction.ASCENDING else self.lowest

    def bits(self) -> tuple[int, ...]:
        """0/1 vector over stations 1..n."""
        marks = [0] * self.n
        for s in self.stations:
            marks[s - 1] = 1
        return tuple(marks)

    def length(self, distances: np.ndarray) -> float:
        return pattern_length(self, distances)


def pattern_length(pattern: StoppingPattern, distances: np.ndarray) -> float:
    """Sum of distances between consecutive stops; 0 for single-stop patterns."""
    if not pattern.stations:
        raise InvalidPatternError("empty pattern has no length")
    d = np.asarray(distances)
    return float(
        sum(d[g - 1, h - 1] for g, h in zip(pattern.stations, pattern.stations[1:]))
    )


def pattern_serves(pattern: StoppingPattern, request: Request) -> bool:
    """Whether the pattern stops at both endpoints of the request."""
    return pattern.serves(request)


def single_stop_patterns(n: int) -> list[StoppingPattern]:
    return [StoppingPattern((h,), n) for h in range(1, n + 1)]


def full_pattern(n: int) -> StoppingPattern:
    return StoppingPattern(tuple(range(1, n + 1)), n)


def enumerate_all_patterns(n: int) -> Iterator[StoppingPattern]:
    """All 2^n - 1 stopping patterns on n stations, single stops first."""
    if n < 1:
        raise InvalidPatternError("need at least one station")
    if n > MAX_ENUMERATION_STATIONS:
        raise EnumerationLimitError(
            f"refusing to enumerate 2^{n} - 1 patterns (limit n <= {MAX_ENUMERATION_STATIONS})"
        )
    for size in range(1, n + 1):
        for combo in itertools.combinations(range(1, n + 1), size):
            yield StoppingPattern(combo, n)


@dataclass(frozen=True)
class OverlapGroup:
    """Maximal set of same-direction requests all traversing one segment.

    ``segment`` is the witness pair of consecutive stations (h, h+1).
    Requests overlap pairwise because their station intervals share it.
    """

    direction: Direction
    members: frozenset[int]
    segment: tuple[int, int]


def overlap_groups(instance: Instance, direction: Direction) -> list[OverlapGroup]:
    """Segment-maximal overlap groups for one direction, deduplicated.

    Pairwise spatial overlap of line intervals is an interval graph, so its
    maximal cliques sit on consecutive-station segments; one group per
    distinct segment membership suffices for capacity constraints.
    """
    groups: list[OverlapGroup] = []
    seen: set[frozenset[int]] = set()
    requests = instance.requests_in(direction)
    for h in range(1, instance.n):
        members = frozenset(r.id for r in requests if r.low <= h and r.high >= h + 1)
        if not members or members in seen:
            continue
        seen.add(members)
        groups.append(OverlapGroup(direction, members, (h, h + 1)))
    return groups


def generate_instance(
    n: int,
    m: int,
    vehicles: int,
    capacity: int,
    seed: int,
    w_pax: float = 10.0,
    w_dist: float = 1.0,
    coord_scale: float = 10.0,
    name: Optional[str] = None,
) -> Instance:
    """Random instance: 2-D uniform station coordinates ordered along one axis.

    Euclidean distances between the sampled points guarantee a symmetric
    metric. Origins/destinations are uniform and distinct per request. The
    same seed always yields the same instance.
    """
    if n < 2:
        raise InvalidInstanceError("need at least two stations")
    if m < 1:
        raise InvalidInstanceError("need at least one request")
    rng = np.random.default_rng(seed)
    points = rng.uniform(0.0, coord_scale, size=(n, 2))
    points = points[np.argsort(points[:, 0])]
    diffs = points[:, None, :] - points[None, :, :]
    distances = np.sqrt((diffs**2).sum(axis=2))
    distances = (distances + distances.T) / 2.0
    np.fill_diagonal(distances, 0.0)
    requests = []
    for i in range(m):
        origin = int(rng.integers(1, n + 1))
        destination = int(rng.integers(1, n))
        if destination >= origin:
            destination += 1
        requests.append(Request(i, origin, destination))
    return Instance(
        n=n,
        distances=distances,
        requests=tuple(requests),
        vehicles=vehicles,
        capacity=capacity,
        w_pax=w_pax,
        w_dist=w_dist,
        name=name,
    )


@dataclass(frozen=True)
class TourEntry:
    position: int
    pattern_index: int
    pattern: StoppingPattern

    @property
    def direction(self) -> Direction:
        return position_direction(self.position)


@dataclass(frozen=True)
class Assignment:
    request_id: int
    vehicle: int
    position: int
    boarding_index: int


@dataclass(frozen=True)
class Solution:
    """Decoded tours plus request assignments and the solver objective."""

    tours: tuple[tuple[TourEntry, ...], ...]
    assignments: tuple[Assignment, ...]
    rejected: frozenset[int]
    objective: float

    @property
    def accepted_ids(self) -> frozenset[int]:
        return frozenset(a.request_id for a in self.assignments)

    def tour_stop_sequence(self, vehicle: int) -> list[int]:
        """Flat stop list of a vehicle tour, turn stations included once."""
        stops: list[int] = []
        for entry in self.tours[vehicle]:
            order = entry.pattern.travel_order(entry.direction)
            if stops and stops[-1] == order[0]:
                stops.extend(order[1:])
            else:
                stops.extend(order)
        return stops

    def tour_length(self, vehicle: int, distances: np.ndarray) -> float:
        return float(
            sum(entry.pattern.length(distances) for entry in self.tours[vehicle])
        )


def empty_solution(instance: Instance) -> Solution:
    """The all-idle solution: no tours, every request rejected, objective 0."""
    return Solution(
        tours=tuple(() for _ in range(instance.vehicles)),
        assignments=(),
        rejected=frozenset(r.id for r in instance.requests),
        objective=0.0,
    )


def solution_objective(instance: Instance, accepted: Sequence[int], total_driven: float) -> float:
    """Weighted accepted count plus saved distance (direct minus driven)."""
    by_id = {r.id: r for r in instance.requests}
    direct = sum(instance.direct_distance(by_id[r]) for r in accepted)
    return instance.w_pax * len(accepted) + instance.w_dist * (direct - total_driven)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str):
        self.violations.append(message)


def validate_solution(instance: Instance, solution: Solution) -> ValidationReport:
    """Check feasibility invariants and recompute the objective.

    Violations are returned as data, never raised: tour connectivity,
    request-direction/position parity, pattern coverage of both endpoints,
    per-segment capacity, accepted/rejected partition, objective match.
    """
    report = ValidationReport()
    by_id = {r.id: r for r in instance.requests}

    if len(solution.tours) != instance.vehicles:
        report.add(
            f"solution has {len(solution.tours)} tours for {instance.vehicles} vehicles"
        )
        return report

    for k, tour in enumerate(solution.tours):
        for prev, entry in zip(tour, tour[1:]):
            if entry.position != prev.position + 1:
                report.add(f"vehicle {k}: positions {prev.position},{entry.position} not consecutive")
            if prev.pattern.end_station(prev.direction) != entry.pattern.start_station(entry.direction):
                report.add(
                    f"vehicle {k}: tour breaks between positions {prev.position} and {entry.position}"
                )

    entries = {
        (k, entry.position): entry
        for k, tour in enumerate(solution.tours)
        for entry in tour
    }
    seen_requests: set[int] = set()
    for a in solution.assignments:
        if a.request_id in seen_requests:
            report.add(f"request {a.request_id} assigned more than once")
        seen_requests.add(a.request_id)
        request = by_id.get(a.request_id)
        if request is None:
            report.add(f"assignment references unknown request {a.request_id}")
            continue
        entry = entries.get((a.vehicle, a.position))
        if entry is None:
            report.add(
                f"request {a.request_id} assigned to missing position {a.position} of vehicle {a.vehicle}"
            )
            continue
        if position_direction(a.position) is not request.direction:
            report.add(
                f"request {a.request_id} travels {request.direction.value} but sits on position {a.position}"
            )
        if not entry.pattern.serves(request):
            report.add(
                f"pattern at vehicle {a.vehicle} position {a.position} skips an endpoint of request {a.request_id}"
            )

    by_slot: dict[tuple[int, int], list[Request]] = {}
    for a in solution.assignments:
        if a.request_id in by_id and (a.vehicle, a.position) in entries:
            by_slot.setdefault((a.vehicle, a.position), []).append(by_id[a.request_id])
    for (k, p), onboard in by_slot.items():
        for h in range(1, instance.n):
            load = sum(1 for r in onboard if r.low <= h and r.high >= h + 1)
            if load > instance.capacity:
                report.add(
                    f"vehicle {k} position {p}: {load} passengers over segment ({h},{h + 1}) exceeds Q={instance.capacity}"
                )

    accepted = solution.accepted_ids
    expected_rejected = frozenset(by_id) - accepted
    if solution.rejected != expected_rejected:
        report.add("rejected set does not complement the accepted assignments")

    driven = sum(solution.tour_length(k, instance.distances) for k in range(instance.vehicles))
    recomputed = solution_objective(instance, sorted(accepted), driven)
    if abs(recomputed - solution.objective) > TOLERANCE:
        report.add(
            f"objective mismatch: stored {solution.objective!r}, recomputed {recomputed!r}"
        )
    return report
