"""Clique-to-pattern reduction instances and their equivalence check.

A graph and a target clique size are compiled into an uncapacitated
most-profitable-pattern instance on a line: base stations force the coarse
shape of any good pattern, interleaved vertex stations encode which graph
vertices are picked, and request rewards at strictly separated magnitudes
make the profit hit a closed-form threshold exactly when the picked
vertices form a clique.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .master import ConfigurationError
from .model import Direction, Instance, Request
from .pricing import PatternProfit, brute_force_mpsp


@dataclass(frozen=True)
class GadgetSpec:
    """A clique question plus the reward magnitudes used to encode it.

    The defaults keep each reward tier large enough to dominate everything
    achievable on lower tiers for graphs up to 10 vertices and cliques up
    to size 4; ``validate`` checks the actual totals.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    clique_size: int
    base_reward: float = 1e10       # per consecutive pair of base stations
    base_spacing: float = 1e7       # half the gap between consecutive bases
    particularity_reward: float = 1e4
    consistency_reward: float = 1e2
    edge_reward: float = 1.0

    def __post_init__(self):
        edges = []
        for u, v in self.edges:
            if not (1 <= u <= self.n_vertices and 1 <= v <= self.n_vertices) or u == v:
                raise ConfigurationError(f"bad edge ({u},{v}) on {self.n_vertices} vertices")
            edges.append((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", tuple(sorted(set(edges))))
        if self.clique_size < 1:
            raise ConfigurationError("clique size must be positive")
        if self.n_vertices < self.clique_size:
            raise ConfigurationError("graph has fewer vertices than the clique size")
        self.validate()

    def validate(self):
        """Reject reward magnitudes that are not strictly separated enough."""
        n, b = self.n_vertices, self.clique_size
        alpha, beta = self.base_reward, self.base_spacing
        gamma, delta, eps = self.particularity_reward, self.consistency_reward, self.edge_reward
        if not (alpha > beta > gamma > delta > eps > 0):
            raise ConfigurationError("rewards must satisfy alpha > beta > gamma > delta > eps > 0")
        total_particularity = 2 * math.comb(b, 2) * n * (n - 1) * gamma
        total_consistency = n * b * b * delta
        total_edge = len(self.edges) * b * b * eps
        small = total_particularity + total_consistency + total_edge
        if not 2 * beta > small:
            raise ConfigurationError("station spacing must outweigh all low-tier rewards")
        if not alpha > 2 * (b + 1) * 2 * beta + small:
            raise ConfigurationError("base rewards must outweigh all driving and low-tier rewards")
        if not gamma > 2 * b * delta + 2 * n * b * eps:
            raise ConfigurationError("particularity rewards must outweigh consistency and edge gains")
        if not delta > n * b * eps:
            raise ConfigurationError("consistency rewards must outweigh edge gains")

    @property
    def threshold(self) -> float:
        """Profit achieved exactly when the graph has a clique of the target size."""
        b = self.clique_size
        pairs = math.comb(b, 2)
        return (
            (2 * b + 1) * self.base_reward
            + 2 * pairs * self.particularity_reward
            + b * self.consistency_reward
            + pairs * self.edge_reward
            - (2 * b + 1) * 2 * self.base_spacing
        )


def _station_layout(spec: GadgetSpec):
    """Station order: left bases interleaved with vertex blocks, then right.

    Returns (labels, base_index, vertex_index) where vertex_index maps
    (side, gap, vertex) to the 1-based station number.
    """
    n, b = spec.n_vertices, spec.clique_size
    labels = []
    base_index: dict[tuple[str, int], int] = {}
    vertex_index: dict[tuple[str, int, int], int] = {}
    for side in ("L", "R"):
        for j in range(1, b + 2):
            labels.append(("base", side, j))
            base_index[(side, j)] = len(labels)
            if j <= b:
                for i in range(1, n + 1):
                    labels.append(("vertex", side, j, i))
                    vertex_index[(side, j, i)] = len(labels)
    return labels, base_index, vertex_index


def clique_to_mpusp(spec: GadgetSpec) -> tuple[Instance, float]:
    """Compile the clique question into a pattern-profit instance.

    All requests run in ascending station order; distances not pinned by the
    construction are completed as shortest paths over the pinned ones, which
    keeps the matrix metric. Returns the instance (rewards attached) and the
    profit threshold equivalent to clique existence.
    """
    n, b = spec.n_vertices, spec.clique_size
    beta = spec.base_spacing
    labels, base_index, vertex_index = _station_layout(spec)
    total = len(labels)

    pinned: dict[tuple[int, int], float] = {}

    def pin(a: int, c: int, value: float):
        key = (min(a, c), max(a, c))
        pinned[key] = min(pinned.get(key, math.inf), value)

    base_order = [base_index[(side, j)] for side in ("L", "R") for j in range(1, b + 2)]
    for a, c in zip(base_order, base_order[1:]):
        pin(a, c, 2 * beta)
    for side in ("L", "R"):
        for j in range(1, b + 1):
            left_base = base_index[(side, j)]
            right_base = base_index[(side, j + 1)]
            block = [vertex_index[(side, j, i)] for i in range(1, n + 1)]
            for v in block:
                pin(left_base, v, beta)
                pin(v, right_base, beta)
            for v, w in itertools.combinations(block, 2):
                pin(v, w, 2 * beta)

    rows, cols, data = [], [], []
    for (a, c), value in pinned.items():
        rows.extend([a - 1, c - 1])
        cols.extend([c - 1, a - 1])
        data.extend([value, value])
    graph = csr_matrix((data, (rows, cols)), shape=(total, total))
    distances = shortest_path(graph, method="D", directed=False)
    if not np.isfinite(distances).all():
        raise ConfigurationError("pinned distances do not connect all stations")

    requests: list[Request] = []
    rewards: list[float] = []

    def add_request(origin: int, destination: int, reward: float):
        requests.append(Request(len(requests), min(origin, destination), max(origin, destination)))
        rewards.append(reward)

    for a, c in zip(base_order, base_order[1:]):
        add_request(a, c, spec.base_reward)
    for side in ("L", "R"):
        for j, jp in itertools.combinations(range(1, b + 1), 2):
            for i in range(1, n + 1):
                for ip in range(1, n + 1):
                    if i != ip:
                        add_request(
                            vertex_index[(side, j, i)],
                            vertex_index[(side, jp, ip)],
                            spec.particularity_reward,
                        )
    for i in range(1, n + 1):
        for j in range(1, b + 1):
            for jp in range(1, b + 1):
                add_request(
                    vertex_index[("L", j, i)],
                    vertex_index[("R", jp, i)],
                    spec.consistency_reward,
                )
    for u, v in spec.edges:
        for j in range(1, b + 1):
            for jp in range(1, b + 1):
                add_request(
                    vertex_index[("L", j, u)],
                    vertex_index[("R", jp, v)],
                    spec.edge_reward,
                )

    instance = Instance(
        n=total,
        distances=distances,
        requests=tuple(requests),
        vehicles=1,
        capacity=max(len(requests), 1),
        w_pax=1.0,
        w_dist=1.0,
        name=f"clique-{n}v-{len(spec.edges)}e-b{b}",
        rewards=tuple(rewards),
    )
    return instance, spec.threshold


def has_clique(n_vertices: int, edges, size: int) -> bool:
    """Direct subset enumeration."""
    adjacency = {tuple(sorted(e)) for e in edges}
    if size <= 1:
        return n_vertices >= size
    for combo in itertools.combinations(range(1, n_vertices + 1), size):
        if all(
            (u, v) in adjacency for u, v in itertools.combinations(combo, 2)
        ):
            return True
    return False


def _seed_patterns(spec: GadgetSpec) -> list[tuple[int, ...]]:
    """Good warm starts for the exhaustive search: bases only, and bases plus
    one vertex block choice per gap."""
    _, base_index, vertex_index = _station_layout(spec)
    bases = tuple(sorted(base_index.values()))
    with_first = tuple(sorted(
        list(bases)
        + [vertex_index[(side, j, 1)] for side in ("L", "R") for j in range(1, spec.clique_size + 1)]
    ))
    return [bases, with_first]


def gadget_optimum(spec: GadgetSpec, instance: Optional[Instance] = None) -> PatternProfit:
    """Exact best pattern profit of the compiled instance, by pruned search."""
    if instance is None:
        instance, _ = clique_to_mpusp(spec)
    return brute_force_mpsp(
        instance,
        instance.reward_map(),
        Direction.ASCENDING,
        capacity=None,
        seed_patterns=_seed_patterns(spec),
    )


def verify_gadget(instance: Instance, threshold: float, spec: GadgetSpec) -> bool:
    """True iff reaching the profit threshold coincides with clique existence,
    both sides computed independently (pruned search vs. subset enumeration)."""
    optimum = brute_force_mpsp(
        instance,
        instance.reward_map(),
        Direction.ASCENDING,
        capacity=None,
        seed_patterns=_seed_patterns(spec),
    )
    reached = bool(optimum.profit >= threshold - 1e-6)
    return reached == has_clique(spec.n_vertices, spec.edges, spec.clique_size)
