import math

import numpy as np
import pytest

from lineride import backend
from lineride.master import (
    ConfigurationError,
    MasterConfig,
    NotIntegralError,
    build_master,
    decode_solution,
    solve_explicit,
)
from lineride.model import (
    StoppingPattern,
    enumerate_all_patterns,
    generate_instance,
    single_stop_patterns,
    validate_solution,
)

from helpers import exhaustive_tour_optimum, line_instance, nine_station_instance


def pool_with_singles(n, extra):
    return single_stop_patterns(n) + [StoppingPattern(tuple(s), n) for s in extra]


def test_config_validation():
    with pytest.raises(ConfigurationError):
        MasterConfig(positions=0)
    with pytest.raises(ConfigurationError):
        MasterConfig(positions=2, fixings=((("d", 0), 1),))
    with pytest.raises(ConfigurationError):
        MasterConfig(positions=2, fixings=((("x", 0, 1, 0), 2),))
    config = MasterConfig.for_instance(generate_instance(4, 3, 1, 2, seed=0))
    assert config.positions == 6


def test_build_requires_single_stops_for_symmetry():
    inst = line_instance([0.0, 1.0, 2.0], [(1, 3)])
    with pytest.raises(ConfigurationError):
        build_master(inst, [StoppingPattern((1, 2, 3), 3)], MasterConfig(positions=2))
    # fine when the symmetry family is off
    model = build_master(
        inst,
        [StoppingPattern((1, 2, 3), 3)],
        MasterConfig(positions=2, single_stop_symmetry=False),
    )
    assert model.n_variables > 0


def test_zero_request_instance_is_idle():
    inst = line_instance([0.0, 1.0, 2.0], [])
    result = solve_explicit(inst, MasterConfig(positions=2))
    assert result.solution.objective == pytest.approx(0.0)
    assert all(len(t) == 0 for t in result.solution.tours)


def test_single_request_direct_trip():
    inst = line_instance([0.0, 3.0], [(1, 2)], capacity=1)
    result = solve_explicit(inst, MasterConfig(positions=1))
    assert result.solution.objective == pytest.approx(10.0)
    assert result.solution.accepted_ids == {0}


def test_two_subline_tour_serves_all_three():
    inst = nine_station_instance(capacity=2)
    patterns = pool_with_singles(9, [(1, 5, 9), (2, 6, 8, 9)])
    config = MasterConfig(positions=2)
    model = build_master(inst, patterns, config)
    result = backend.solve_mip(model)
    solution = decode_solution(inst, patterns, config, result.values)
    assert solution.accepted_ids == {0, 1, 2}
    # driven 8 + 7 = 15, direct 8 + 4 + 6 = 18, so 3 requests + 3 saved
    assert solution.objective == pytest.approx(33.0)
    assert result.objective == pytest.approx(solution.objective)
    report = validate_solution(inst, solution)
    assert report.ok, report.violations


def test_decode_boarding_indices():
    inst = nine_station_instance(capacity=2)
    patterns = pool_with_singles(9, [(1, 5, 9), (2, 6, 8, 9)])
    config = MasterConfig(positions=2)
    result = backend.solve_mip(build_master(inst, patterns, config))
    solution = decode_solution(inst, patterns, config, result.values)
    tour = solution.tours[0]
    assert [entry.pattern.stations for entry in tour] == [(1, 5, 9), (2, 6, 8, 9)]
    assert solution.tour_stop_sequence(0) == [1, 5, 9, 8, 6, 2]
    by_request = {a.request_id: a for a in solution.assignments}
    assert by_request[0].boarding_index == 0  # boards at station 1
    assert by_request[1].boarding_index == 1  # boards at station 5
    # the descending rider boards one stop after the carried-over turn station
    assert by_request[2].position == 2
    assert by_request[2].boarding_index == 4


def test_decode_rejects_fractional_values():
    inst = line_instance([0.0, 1.0], [(1, 2)])
    patterns = pool_with_singles(2, [(1, 2)])
    config = MasterConfig(positions=1)
    model = build_master(inst, patterns, config)
    values = {key: 0.0 for key in model.variable_keys}
    values[("y", 0, 1, 0)] = 0.5
    values[("y", 2, 1, 0)] = 0.5
    with pytest.raises(NotIntegralError):
        decode_solution(inst, patterns, config, values)


def test_explicit_matches_exhaustive_tour_search():
    for seed in range(4):
        inst = generate_instance(3, 3, 1, 2, seed=seed)
        for q in (1, 2, 3):
            config = MasterConfig(positions=q)
            milp_value = solve_explicit(inst, config).solution.objective
            reference = exhaustive_tour_optimum(inst, q)
            assert milp_value == pytest.approx(reference, abs=1e-6), (seed, q)


def test_symmetry_toggles_preserve_objective():
    inst = generate_instance(5, 4, 2, 2, seed=11)
    values = []
    for single in (True, False):
        for ordering in (True, False):
            config = MasterConfig.for_instance(
                inst, single_stop_symmetry=single, tour_length_ordering=ordering
            )
            values.append(solve_explicit(inst, config).solution.objective)
    assert max(values) - min(values) <= 1e-6


def test_objective_monotone_in_positions_and_pool():
    inst = generate_instance(4, 3, 1, 2, seed=2)
    previous = -math.inf
    for q in range(1, 7):
        value = solve_explicit(inst, MasterConfig(positions=q)).solution.objective
        assert value >= previous - 1e-9
        previous = value
    full = solve_explicit(inst, MasterConfig(positions=4)).solution.objective
    small_pool = pool_with_singles(4, [(1, 2, 3, 4)])
    restricted = solve_explicit(
        inst, MasterConfig(positions=4), patterns=small_pool
    ).solution.objective
    assert restricted <= full + 1e-9


def test_relaxation_dominates_integer():
    inst = generate_instance(4, 4, 1, 1, seed=13)
    patterns = list(enumerate_all_patterns(4))
    config = MasterConfig.for_instance(inst)
    lp = backend.solve_lp(build_master(inst, patterns, config.relaxed_copy()))
    mip = backend.solve_mip(build_master(inst, patterns, config))
    assert lp.objective >= mip.objective - 1e-6
    # idling every vehicle is always feasible with single stops pooled
    assert mip.objective >= -1e-9


def test_require_all_requests():
    inst = line_instance([0.0, 1.0, 2.0], [(1, 3), (3, 1)], capacity=1)
    config = MasterConfig(positions=2, require_all_requests=True)
    result = solve_explicit(inst, config)
    assert result.solution is not None
    assert result.solution.accepted_ids == {0, 1}
    # a single ascending position cannot carry the descending request
    infeasible = solve_explicit(inst, MasterConfig(positions=1, require_all_requests=True))
    assert infeasible.status == backend.INFEASIBLE
    assert infeasible.solution is None


def test_fixings_are_applied_as_bounds():
    inst = line_instance([0.0, 1.0], [(1, 2)])
    patterns = pool_with_singles(2, [(1, 2)])
    direct_index = len(patterns) - 1
    config = MasterConfig(positions=1, fixings=(((("y", direct_index, 1, 0)), 0),))
    model = build_master(inst, patterns, config)
    result = backend.solve_mip(model)
    solution = decode_solution(inst, patterns, config, result.values)
    assert solution.accepted_ids == set()
    with pytest.raises(ConfigurationError):
        build_master(inst, patterns, MasterConfig(positions=1, fixings=((("y", 99, 1, 0), 1),)))


def test_random_pool_bounded_by_full_pool():
    inst = generate_instance(5, 4, 1, 2, seed=21)
    config = MasterConfig.for_instance(inst)
    full = solve_explicit(inst, config).solution.objective
    rng = np.random.default_rng(0)
    pool = single_stop_patterns(5)
    seen = {p.stations for p in pool}
    while len(pool) < 9:
        stations = tuple(sorted(rng.choice(range(1, 6), size=2, replace=False).tolist()))
        if stations not in seen:
            seen.add(stations)
            pool.append(StoppingPattern(stations, 5))
    restricted = solve_explicit(inst, config, patterns=pool).solution.objective
    assert restricted <= full + 1e-6


def test_explicit_round_trips_through_validator():
    for seed in (0, 1, 2):
        inst = generate_instance(5, 4, 2, 2, seed=seed)
        result = solve_explicit(inst)
        report = validate_solution(inst, result.solution)
        assert report.ok, report.violations
