import numpy as np
import pytest

from lineride.model import Direction, StoppingPattern, generate_instance
from lineride.master import MasterConfig
from lineride.pricing import (
    EPSILON,
    PricingEngine,
    TournamentDigraph,
    brute_force_mpsp,
    build_pricing_graph,
    evaluate_pattern_profit,
    most_profitable_pattern,
    reduced_cost,
    solve_mpsp,
    solve_mpusp,
    solve_pricing,
)
from lineride.rmp import ColumnPool, DualLookupError, DualValues, solve_rrmp

from helpers import line_instance


def zero_duals(instance, positions):
    duals = DualValues()
    for p in range(1, positions + 1):
        for k in range(instance.vehicles):
            duals.zeta[(p, k)] = 0.0
            direction = Direction.ASCENDING if p % 2 == 1 else Direction.DESCENDING
            for r in instance.requests_in(direction):
                duals.iota[(r.id, p, k)] = 0.0
            for h in range(1, instance.n + 1):
                duals.lam[(h, p, k)] = 0.0
                duals.mu[(h, p, k)] = 0.0
    for k in range(instance.vehicles):
        duals.nu[k] = 0.0
    return duals


def test_reduced_cost_all_zero_duals():
    inst = line_instance([0.0, 1.0, 3.0], [(1, 3)])
    duals = zero_duals(inst, 2)
    pattern = StoppingPattern((1, 3), 3)
    assert reduced_cost(inst, pattern, 1, 0, Direction.ASCENDING, duals) == 0.0


def test_reduced_cost_hand_computed():
    inst = line_instance([0.0, 2.0], [(1, 2)])
    duals = zero_duals(inst, 1)
    duals.zeta[(1, 0)] = 1.0
    duals.iota[(0, 1, 0)] = 5.0
    duals.nu[0] = 1.0
    pattern = StoppingPattern((1, 2), 2)  # length 2
    value = reduced_cost(inst, pattern, 1, 0, Direction.ASCENDING, duals)
    assert value == pytest.approx(2.0)


def test_reduced_cost_descending_swaps_penalties():
    inst = line_instance([0.0, 1.0, 2.0], [(3, 1)])
    duals = zero_duals(inst, 2)
    duals.lam[(3, 2, 0)] = 4.0  # start of a descending subline is its highest
    duals.mu[(1, 2, 0)] = 1.0
    pattern = StoppingPattern((1, 3), 3)
    value = reduced_cost(inst, pattern, 2, 0, Direction.DESCENDING, duals)
    assert value == pytest.approx(-5.0)


def test_reduced_cost_missing_dual_raises():
    inst = line_instance([0.0, 1.0], [(1, 2)])
    with pytest.raises(DualLookupError):
        reduced_cost(inst, StoppingPattern((1, 2), 2), 1, 0, Direction.ASCENDING, DualValues())


def test_pricing_graph_weights():
    inst = line_instance([0.0, 1.0, 3.0], [(1, 3)])
    duals = zero_duals(inst, 1)
    graph = build_pricing_graph(inst, 1, 0, Direction.ASCENDING, duals)
    assert graph.weight(0, 1) == 0.0
    assert graph.weight(1, 4) == 0.0
    assert graph.weight(1, 2) == 0.0  # scaled by nu = 0
    assert graph.weight(0, 4) == graph.big_m > 0

    duals.nu[0] = 1.0
    graph = build_pricing_graph(inst, 1, 0, Direction.ASCENDING, duals)
    assert graph.weight(1, 3) == pytest.approx(3.0)  # raw distance once nu = 1

    duals.lam[(3, 1, 0)] = 7.0
    graph = build_pricing_graph(inst, 1, 0, Direction.ASCENDING, duals)
    assert graph.weight(0, 3) == pytest.approx(7.0)


def test_pricing_graph_mirrors_descending():
    inst = line_instance([0.0, 1.0, 3.0], [(3, 1)])
    duals = zero_duals(inst, 2)
    duals.lam[(3, 2, 0)] = 2.5  # travel start of a descending subline
    graph = build_pricing_graph(inst, 2, 0, Direction.DESCENDING, duals)
    # station 3 maps to mirrored coordinate 1, adjacent to the start depot
    assert graph.weight(0, 1) == pytest.approx(2.5)
    assert graph.original_station(1) == 3
    low, high, _, _ = graph.rewards[0]
    assert (graph.original_station(low), graph.original_station(high)) == (3, 1)


def test_solve_pricing_returns_none_without_profit():
    inst = line_instance([0.0, 1.0, 3.0], [(1, 3)])
    duals = zero_duals(inst, 1)
    graph = build_pricing_graph(inst, 1, 0, Direction.ASCENDING, duals)
    assert solve_pricing(graph, zeta=0.0) is None


def test_solve_pricing_finds_skipping_pattern():
    # reward 5 for 1->3 at shortcut cost 2; the intermediate stop only adds cost
    import numpy as np
    from lineride.model import Instance, Request

    distances = np.array([[0.0, 2.0, 2.0], [2.0, 0.0, 2.0], [2.0, 2.0, 0.0]])
    inst = Instance(3, distances, (Request(0, 1, 3),), 1, 1, 10.0, 1.0)
    duals = zero_duals(inst, 1)
    duals.iota[(0, 1, 0)] = 5.0
    duals.nu[0] = 1.0
    graph = build_pricing_graph(inst, 1, 0, Direction.ASCENDING, duals)
    priced = solve_pricing(graph, zeta=0.0)
    assert priced is not None
    assert priced.pattern.stations == (1, 3)
    assert priced.profit == pytest.approx(3.0, abs=1e-6)
    assert priced.reduced_cost == pytest.approx(3.0, abs=1e-6)


def test_solve_pricing_respects_forbidden_patterns():
    import numpy as np
    from lineride.model import Instance, Request

    distances = np.array([[0.0, 2.0, 2.0], [2.0, 0.0, 2.0], [2.0, 2.0, 0.0]])
    inst = Instance(3, distances, (Request(0, 1, 3),), 1, 1, 10.0, 1.0)
    duals = zero_duals(inst, 1)
    duals.iota[(0, 1, 0)] = 10.0
    duals.nu[0] = 1.0
    graph = build_pricing_graph(inst, 1, 0, Direction.ASCENDING, duals)
    best = solve_pricing(graph, zeta=0.0)
    assert best.pattern.stations == (1, 3)
    assert best.profit == pytest.approx(8.0)
    second = solve_pricing(graph, zeta=0.0, forbidden=[(1, 3)])
    assert second is not None
    assert second.pattern.stations == (1, 2, 3)
    assert second.profit == pytest.approx(6.0)


def test_priced_pattern_agrees_with_reduced_cost():
    inst = generate_instance(5, 4, 1, 2, seed=14)
    config = MasterConfig.for_instance(inst)
    pool = ColumnPool.initial(inst)
    relax = solve_rrmp(inst, pool, config)
    for p in (1, 2):
        direction = Direction.ASCENDING if p % 2 == 1 else Direction.DESCENDING
        graph = build_pricing_graph(inst, p, 0, direction, relax.duals)
        priced = solve_pricing(graph, relax.duals.zeta[(p, 0)])
        if priced is None:
            continue
        check = reduced_cost(inst, priced.pattern, p, 0, direction, relax.duals)
        assert check == pytest.approx(priced.reduced_cost, abs=1e-6)
        assert check > EPSILON


def test_engine_matches_fresh_solves():
    inst = generate_instance(6, 5, 1, 2, seed=3)
    engine = PricingEngine(inst)
    rng = np.random.default_rng(0)
    config = MasterConfig.for_instance(inst)
    duals = zero_duals(inst, config.positions)
    for trial in range(6):
        p = int(rng.integers(1, config.positions + 1))
        direction = Direction.ASCENDING if p % 2 == 1 else Direction.DESCENDING
        for r in inst.requests_in(direction):
            duals.iota[(r.id, p, 0)] = float(rng.uniform(0, 8))
        for h in range(1, inst.n + 1):
            duals.lam[(h, p, 0)] = float(rng.uniform(0, 2))
            duals.mu[(h, p, 0)] = float(rng.uniform(0, 2))
        duals.nu[0] = float(rng.uniform(0, 2))
        graph = build_pricing_graph(inst, p, 0, direction, duals)
        fresh = most_profitable_pattern(graph)
        reused = engine.solve(graph)
        assert fresh[0] == pytest.approx(reused[0], abs=1e-6)


def test_mpsp_without_requests_pays_cheapest_hop():
    inst = line_instance([0.0, 1.5, 4.0], [(1, 2)], capacity=1)
    result = solve_mpsp(inst, {}, Direction.DESCENDING, capacity=1)
    assert result.accepted == frozenset()
    assert result.profit == pytest.approx(-1.5)
    bf = brute_force_mpsp(inst, {}, Direction.DESCENDING, capacity=1)
    assert bf.profit == pytest.approx(-1.5)


def test_mpsp_capacity_one_picks_single_overlapping_request():
    inst = line_instance([0.0, 3.0], [(1, 2), (1, 2)], capacity=1)
    rewards = {0: 5.0, 1: 5.0}
    result = solve_mpsp(inst, rewards, Direction.ASCENDING, capacity=1)
    assert len(result.accepted) == 1
    assert result.profit == pytest.approx(5.0 - 3.0)


def test_mpsp_with_slack_capacity_matches_uncapacitated():
    inst = generate_instance(6, 5, 1, 2, seed=10)
    rewards = {r.id: 4.0 + r.id for r in inst.requests}
    capped = solve_mpsp(inst, rewards, Direction.ASCENDING, capacity=len(inst.requests))
    pattern, profit = solve_mpusp(inst, rewards, Direction.ASCENDING)
    assert capped.profit == pytest.approx(profit, abs=1e-6)


def test_mpusp_zero_rewards():
    inst = line_instance([0.0, 2.0, 3.0], [(1, 3)])
    pattern, profit = solve_mpusp(inst, {}, Direction.ASCENDING)
    assert profit == pytest.approx(-1.0)  # cheapest hop is stations 2-3


def test_mpusp_single_request():
    inst = line_instance([0.0, 5.0, 7.0], [(1, 2)])
    pattern, profit = solve_mpusp(inst, {0: 9.0}, Direction.ASCENDING)
    assert pattern.stations == (1, 2)
    assert profit == pytest.approx(9.0 - 5.0)


def test_brute_force_capacity_zero_accepts_nothing():
    inst = line_instance([0.0, 1.0, 2.0], [(1, 3), (1, 2)], capacity=0)
    result = brute_force_mpsp(inst, {0: 3.0, 1: 2.0}, Direction.ASCENDING, capacity=0)
    assert result.accepted == frozenset()
    assert result.profit == pytest.approx(-1.0)


def test_solvers_match_brute_force_on_random_instances():
    rng = np.random.default_rng(99)
    for trial in range(25):
        n = int(rng.integers(3, 8))
        m = int(rng.integers(1, 8))
        q_cap = int(rng.integers(1, 4))
        inst = generate_instance(n, m, 1, q_cap, seed=trial + 500)
        rewards = {r.id: float(np.round(rng.uniform(0, 15), 3)) for r in inst.requests}
        direction = Direction.ASCENDING if trial % 2 == 0 else Direction.DESCENDING
        milp = solve_mpsp(inst, rewards, direction, capacity=q_cap)
        brute = brute_force_mpsp(inst, rewards, direction, capacity=q_cap)
        assert milp.profit == pytest.approx(brute.profit, abs=1e-6), trial
        _, profit_u = solve_mpusp(inst, rewards, direction)
        brute_u = brute_force_mpsp(inst, rewards, direction, capacity=None)
        assert profit_u == pytest.approx(brute_u.profit, abs=1e-6), trial
        assert profit_u >= milp.profit - 1e-6


def test_mirroring_preserves_optimal_profit():
    rng = np.random.default_rng(5)
    for trial in range(5):
        inst = generate_instance(6, 6, 1, 2, seed=trial + 40)
        rewards = {r.id: float(rng.uniform(0, 10)) for r in inst.requests}
        mirrored_requests = tuple(
            type(r)(r.id, inst.n + 1 - r.origin, inst.n + 1 - r.destination)
            for r in inst.requests
        )
        mirrored = type(inst)(
            n=inst.n,
            distances=np.asarray(inst.distances)[::-1, ::-1].copy(),
            requests=mirrored_requests,
            vehicles=inst.vehicles,
            capacity=inst.capacity,
            w_pax=inst.w_pax,
            w_dist=inst.w_dist,
        )
        _, profit_desc = solve_mpusp(inst, rewards, Direction.DESCENDING)
        _, profit_asc = solve_mpusp(mirrored, rewards, Direction.ASCENDING)
        assert profit_desc == pytest.approx(profit_asc, abs=1e-6)


def test_evaluate_pattern_profit_matches_definition():
    inst = line_instance([0.0, 1.0, 4.0], [(1, 3), (2, 3)])
    rewards = {0: 6.0, 1: 2.0}
    profit = evaluate_pattern_profit(inst, rewards, Direction.ASCENDING, (1, 3))
    assert profit == pytest.approx(6.0 - 4.0)
    profit_all = evaluate_pattern_profit(inst, rewards, Direction.ASCENDING, (1, 2, 3))
    assert profit_all == pytest.approx(8.0 - 4.0)


def test_tournament_digraph_total_reward():
    graph = TournamentDigraph(
        n=2,
        start_weights=(0.0, 0.0),
        end_weights=(0.0, 0.0),
        interior=np.zeros((2, 2)),
        rewards=((1, 2, 3.5, 0),),
        big_m=10.0,
        direction=Direction.ASCENDING,
    )
    assert graph.total_reward == pytest.approx(3.5)
    with pytest.raises(ValueError):
        graph.weight(2, 1)
