"""Column pool and restricted master solves for column generation.

The pool is the shared, append-only set of generated stopping patterns.
Solving the relaxed restricted master yields the dual prices that drive
pattern pricing; solving it with integrality yields incumbents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import backend
from .master import ConfigurationError, MasterConfig, build_master, decode_solution
from .model import (
    Instance,
    Solution,
    StoppingPattern,
    empty_solution,
    full_pattern,
    single_stop_patterns,
)

#: Duals this close to zero are treated as exactly zero (solver noise).
_DUAL_NOISE = 1e-9


class DualLookupError(KeyError):
    """A dual price required by pricing is missing from the extracted set."""


class ColumnPool:
    """Append-only, duplicate-free pattern store with stable indices.

    Every single-stop pattern is seeded at construction and never removed,
    so the idle-chain symmetry rows of the master are complete from the
    first solve onward.
    """

    def __init__(self, n: int):
        self.n = n
        self._patterns: list[StoppingPattern] = []
        self._index: dict[tuple[int, ...], int] = {}
        self.add(single_stop_patterns(n))

    @classmethod
    def initial(cls, instance: Instance, include_full: bool = True) -> "ColumnPool":
        """Starting pool: all single stops plus the everywhere-stopping pattern."""
        pool = cls(instance.n)
        if include_full:
            pool.add([full_pattern(instance.n)])
        return pool

    def add(self, patterns: Iterable[StoppingPattern]) -> list[int]:
        """Add new patterns, silently skipping duplicates; returns new indices."""
        new_indices = []
        for pattern in patterns:
            if pattern.n != self.n:
                raise ConfigurationError(
                    f"pattern over {pattern.n} stations added to a pool over {self.n}"
                )
            if pattern.stations in self._index:
                continue
            index = len(self._patterns)
            self._patterns.append(pattern)
            self._index[pattern.stations] = index
            new_indices.append(index)
        return new_indices

    def __len__(self) -> int:
        return len(self._patterns)

    def __getitem__(self, index: int) -> StoppingPattern:
        return self._patterns[index]

    def __contains__(self, pattern: StoppingPattern) -> bool:
        return pattern.stations in self._index

    def index_of(self, pattern: StoppingPattern) -> Optional[int]:
        return self._index.get(pattern.stations)

    @property
    def patterns(self) -> tuple[StoppingPattern, ...]:
        return tuple(self._patterns)

    def fingerprint(self) -> tuple[tuple[int, ...], ...]:
        """Content snapshot for reproducibility checks."""
        return tuple(p.stations for p in self._patterns)


def add_columns(pool: ColumnPool, patterns: Iterable[StoppingPattern]) -> list[int]:
    return pool.add(patterns)


@dataclass
class DualValues:
    """Dual prices of the relaxed restricted master, keyed like the model rows.

    zeta: pattern-choice rows per (position, vehicle), free sign.
    iota: request-service rows per (request, position, vehicle), >= 0.
    lam/mu: start-/end-station linking rows per (station, position, vehicle), >= 0.
    nu: tour-length rows per vehicle, >= 0.
    psi: idle-chain rows per (single-stop pattern, position, vehicle), >= 0.
    diagnostics: remaining rows (acceptance, capacity, connectivity, ...).
    """

    zeta: dict = field(default_factory=dict)
    iota: dict = field(default_factory=dict)
    lam: dict = field(default_factory=dict)
    mu: dict = field(default_factory=dict)
    nu: dict = field(default_factory=dict)
    psi: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def _nonnegative(value: float, key) -> float:
    if value < -1e-6:
        raise backend.BackendError(f"dual for {key!r} violates its sign: {value!r}")
    return 0.0 if abs(value) < _DUAL_NOISE else max(value, 0.0)


def extract_duals(raw: dict) -> DualValues:
    """Sort raw constraint duals into the families pricing consumes."""
    duals = DualValues()
    for key, value in raw.items():
        family = key[0]
        if family == "pattern_choice":
            duals.zeta[key[1:]] = 0.0 if abs(value) < _DUAL_NOISE else value
        elif family == "serve":
            duals.iota[key[1:]] = _nonnegative(value, key)
        elif family == "start_link":
            duals.lam[key[1:]] = _nonnegative(value, key)
        elif family == "end_link":
            duals.mu[key[1:]] = _nonnegative(value, key)
        elif family == "tour_len":
            duals.nu[key[1]] = _nonnegative(value, key)
        elif family == "idle_chain":
            duals.psi[key[1:]] = _nonnegative(value, key)
        else:
            duals.diagnostics[key] = value
    return duals


@dataclass
class RelaxationResult:
    objective: float
    values: dict
    duals: DualValues


class RelaxationCache:
    """Reuses the compiled relaxed master across solves at a fixed pool size.

    Search nodes differ only in their branching fixings, which are plain
    variable bounds, so the assembled LP can be kept and re-solved with
    bound overrides until the pool grows.
    """

    def __init__(self, instance: Instance, config: MasterConfig):
        self._instance = instance
        self._config = config.relaxed_copy().with_fixings(())
        self._compiled = None
        self._pool_size = -1

    def solve(self, pool: ColumnPool, fixings=()) -> Optional[RelaxationResult]:
        if len(pool) != self._pool_size:
            model = build_master(self._instance, pool.patterns, self._config)
            self._compiled = backend.compile_lp(model)
            self._pool_size = len(pool)
        overrides = {key: (float(value), float(value)) for key, value in fixings}
        result = self._compiled.solve(overrides)
        if result.status == backend.INFEASIBLE:
            return None
        if result.status != backend.OPTIMAL:
            raise backend.BackendError(f"relaxed master ended with status {result.status}")
        return RelaxationResult(result.objective, result.values, extract_duals(result.duals))


def solve_rrmp(instance: Instance, pool: ColumnPool, config: MasterConfig) -> Optional[RelaxationResult]:
    """LP-relax the restricted master and extract duals; None if the node's
    fixings make it infeasible."""
    return RelaxationCache(instance, config).solve(pool, config.fixings)


#: Status values of an integer restricted-master solve.
RMP_OPTIMAL = "optimal"
RMP_TIME_LIMIT = "time_limit"
RMP_FALLBACK = "fallback"
RMP_INFEASIBLE = "infeasible"
RMP_NO_INCUMBENT = "no_incumbent"


def solve_rmp_integer(
    instance: Instance,
    pool: ColumnPool,
    config: MasterConfig,
    time_limit: Optional[float] = None,
) -> tuple[Optional[Solution], str]:
    """Solve the restricted master with integrality over the pooled columns.

    A starved solve (time limit, no incumbent) falls back to the all-idle
    solution, which is always feasible with pooled single stops unless the
    configuration demands that every request is served.
    """
    model = build_master(instance, pool.patterns, config.integer_copy())
    result = backend.solve_mip(model, time_limit=time_limit)
    if result.status == backend.INFEASIBLE:
        return None, RMP_INFEASIBLE
    if not result.has_solution:
        if config.require_all_requests or config.fixings:
            return None, RMP_NO_INCUMBENT
        return empty_solution(instance), RMP_FALLBACK
    solution = decode_solution(instance, pool.patterns, config, result.values)
    status = RMP_OPTIMAL if result.status == backend.OPTIMAL else RMP_TIME_LIMIT
    return solution, status
