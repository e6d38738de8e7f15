"""Command-line front end: instance generation, solver runs, benchmarks."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from typing import Optional

import numpy as np

from . import bnp, hardness, io, master, pricing, rmp
from .model import (
    Direction,
    Instance,
    enumerate_all_patterns,
    generate_instance,
    validate_solution,
)

log = logging.getLogger(__name__)

MODES = ("generate", "explicit", "bnp", "root-heuristic", "mpsp", "gadget", "validate", "bench")

#: Time budgets when --time-limit is not given: an hour for exact runs, the
#: usual 15 minutes for the root heuristic and per bench setting.
DEFAULT_TIME_LIMITS = {"root-heuristic": 900.0, "bench": 900.0}
FALLBACK_TIME_LIMIT = 3600.0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lineride",
        description="Solvers for the line-based dial-a-ride problem without time windows.",
    )
    parser.add_argument("--mode", required=True, choices=MODES)
    parser.add_argument("--instance", nargs="*", default=[], help="instance file(s)")
    parser.add_argument("--solution", help="solution file (validate mode)")
    parser.add_argument("--out", help="output path (summary, CSV, or directory)")
    parser.add_argument("--solution-out", help="where to write the solution file")
    parser.add_argument("--time-limit", type=float, default=None)
    parser.add_argument("--w-pax", type=float, default=10.0)
    parser.add_argument("--w-dist", type=float, default=1.0)
    parser.add_argument("--positions-fraction", type=float, default=1.0)
    parser.add_argument("--no-symmetry-single-stop", action="store_true",
                        help="drop the consecutive-single-stop symmetry rows")
    parser.add_argument("--no-symmetry-tour-length", action="store_true",
                        help="drop the tour-length ordering rows")
    parser.add_argument("--require-all-requests", action="store_true")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--pool", default="standard",
                        help="column pool: standard | random:<k> | all")
    parser.add_argument("--stations", type=int, default=10)
    parser.add_argument("--requests", type=int, default=20)
    parser.add_argument("--vehicles", type=int, default=1)
    parser.add_argument("--capacity", type=int, default=6)
    parser.add_argument("--versions", type=int, default=5)
    parser.add_argument("--direction", choices=("asc", "desc"), default="asc")
    parser.add_argument("--graph-vertices", type=int, default=4)
    parser.add_argument("--graph-edges", default="",
                        help="comma-separated edge list, e.g. 1-2,2-4,1-4")
    parser.add_argument("--clique-size", type=int, default=3)
    parser.add_argument("--verify", action="store_true", help="check the gadget equivalence")
    parser.add_argument("--bench-grid", choices=("symmetry", "positions"), default="symmetry")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config_from_args(instance: Instance, args) -> master.MasterConfig:
    return master.MasterConfig.for_instance(
        instance,
        positions_fraction=args.positions_fraction,
        single_stop_symmetry=not args.no_symmetry_single_stop,
        tour_length_ordering=not args.no_symmetry_tour_length,
        require_all_requests=args.require_all_requests,
    )


def _pool_from_args(instance: Instance, args) -> rmp.ColumnPool:
    choice = args.pool
    pool = rmp.ColumnPool.initial(instance)
    if choice == "standard":
        return pool
    if choice == "all":
        pool.add(enumerate_all_patterns(instance.n))
        return pool
    if choice.startswith("random:"):
        count = int(choice.split(":", 1)[1])
        rng = np.random.default_rng(args.seed)
        added = 0
        while added < count:
            stations = tuple(
                h for h in range(1, instance.n + 1) if rng.random() < 0.5
            )
            if len(stations) < 2:
                continue
            from .model import StoppingPattern

            added += len(pool.add([StoppingPattern(stations, instance.n)]))
        return pool
    raise SystemExit(f"unknown pool specification {choice!r}")


def _time_limit(args) -> float:
    if args.time_limit is not None:
        if args.time_limit <= 0:
            raise SystemExit("--time-limit must be positive")
        return args.time_limit
    return DEFAULT_TIME_LIMITS.get(args.mode, FALLBACK_TIME_LIMIT)


def _load_single_instance(args) -> Instance:
    if len(args.instance) != 1:
        raise SystemExit(f"mode {args.mode!r} needs exactly one --instance file")
    path = args.instance[0]
    if not os.path.exists(path):
        raise SystemExit(f"instance file not found: {path}")
    return io.load_instance(path)


def _emit(summary: dict, solution, args):
    if solution is not None:
        summary = dict(summary)
        summary["tours"] = [
            solution.tour_stop_sequence(k) for k in range(len(solution.tours))
        ]
    text = io.dump_summary(summary, args.out)
    print(text)
    solution_path = args.solution_out
    if solution_path is None and args.out:
        stem, _ = os.path.splitext(args.out)
        solution_path = stem + ".solution.json"
    if solution is not None and solution_path:
        io.save_solution(solution, solution_path)
        log.info("solution written to %s", solution_path)


def run_generate(args) -> int:
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    for i in range(args.versions):
        name = f"{args.vehicles}-{args.requests}-{io.version_letter(i)}"
        instance = generate_instance(
            n=args.stations,
            m=args.requests,
            vehicles=args.vehicles,
            capacity=args.capacity,
            seed=args.seed + i,
            w_pax=args.w_pax,
            w_dist=args.w_dist,
            name=name,
        )
        path = os.path.join(out_dir, name + ".json")
        io.save_instance(instance, path)
        print(path)
    return 0


def run_explicit(args) -> int:
    instance = _load_single_instance(args)
    config = _config_from_args(instance, args)
    # explicit mode enumerates the full pattern set unless a fixed random
    # pool is requested
    patterns = None if args.pool in ("all", "standard") else _pool_from_args(instance, args).patterns
    start = time.perf_counter()
    result = master.solve_explicit(instance, config, time_limit=_time_limit(args), patterns=patterns)
    wall = time.perf_counter() - start
    summary = {
        "mode": "explicit",
        "instance": instance.name,
        "objective": result.objective,
        "bound": result.bound,
        "gap": _gap(result.bound, result.objective),
        "status": result.status,
        "accepted": len(result.solution.assignments) if result.solution else None,
        "nodes": None,
        "columns": (2 ** instance.n - 1) if patterns is None else len(patterns),
        "wall_time": wall,
        "config": _config_summary(config, args),
    }
    _emit(summary, result.solution, args)
    return 0


def run_bnp(args) -> int:
    instance = _load_single_instance(args)
    config = _config_from_args(instance, args)
    start = time.perf_counter()
    result = bnp.branch_and_price(
        instance, config, time_limit=_time_limit(args), pool=_pool_from_args(instance, args)
    )
    wall = time.perf_counter() - start
    stats = result.stats
    summary = {
        "mode": "bnp",
        "instance": instance.name,
        "objective": result.objective,
        "bound": result.bound,
        "gap": _gap(result.bound, result.objective),
        "status": result.status,
        "accepted": len(result.solution.assignments) if result.solution else None,
        "nodes": stats.nodes_processed,
        "columns": len(result.pool),
        "cg_iterations": stats.cg_iterations,
        "search_stats": {
            "nodes_created": stats.nodes_created,
            "pruned_bound": stats.pruned_bound,
            "pruned_infeasible": stats.pruned_infeasible,
            "pruned_optimal": stats.pruned_optimal,
            "branched": stats.branched,
            "open_at_end": stats.open_at_end,
            "columns_generated": stats.columns_generated,
            "relaxation_time": round(stats.rrmp_time, 3),
            "pricing_time": round(stats.pricing_time, 3),
            "incumbent_time": round(stats.incumbent_time, 3),
            "final_gap": stats.final_gap,
        },
        "wall_time": wall,
        "config": _config_summary(config, args),
    }
    _emit(summary, result.solution, args)
    return 0


def run_root_heuristic(args) -> int:
    instance = _load_single_instance(args)
    config = _config_from_args(instance, args)
    start = time.perf_counter()
    result = bnp.root_node_heuristic(
        instance, config, time_limit=_time_limit(args), pool=_pool_from_args(instance, args)
    )
    wall = time.perf_counter() - start
    summary = {
        "mode": "root-heuristic",
        "instance": instance.name,
        "objective": result.objective,
        "bound": result.bound,
        "bound_proven": result.bound_proven,
        "gap": result.gap if result.solution is not None else None,
        "status": "feasible" if result.solution is not None else "infeasible",
        "accepted": len(result.solution.assignments) if result.solution else None,
        "nodes": 1,
        "columns": len(result.pool),
        "cg_iterations": result.stats.cg_iterations,
        "wall_time": wall,
        "config": _config_summary(config, args),
    }
    _emit(summary, result.solution, args)
    return 0


def run_mpsp(args) -> int:
    instance = _load_single_instance(args)
    direction = Direction.ASCENDING if args.direction == "asc" else Direction.DESCENDING
    if instance.rewards is not None:
        rewards = instance.reward_map()
    else:
        rewards = {
            r.id: instance.w_pax + instance.w_dist * instance.direct_distance(r)
            for r in instance.requests
        }
    start = time.perf_counter()
    result = pricing.solve_mpsp(
        instance, rewards, direction, instance.capacity, time_limit=_time_limit(args)
    )
    wall = time.perf_counter() - start
    summary = {
        "mode": "mpsp",
        "instance": instance.name,
        "direction": direction.value,
        "stations": list(result.pattern.stations),
        "accepted": sorted(result.accepted),
        "profit": result.profit,
        "wall_time": wall,
    }
    print(io.dump_summary(summary, args.out))
    return 0


def run_gadget(args) -> int:
    edges = []
    if args.graph_edges:
        for chunk in args.graph_edges.split(","):
            u, v = chunk.strip().split("-")
            edges.append((int(u), int(v)))
    spec = hardness.GadgetSpec(
        n_vertices=args.graph_vertices,
        edges=tuple(edges),
        clique_size=args.clique_size,
    )
    instance, threshold = hardness.clique_to_mpusp(spec)
    provenance = {
        "provenance": {
            "graph_vertices": spec.n_vertices,
            "graph_edges": [list(e) for e in spec.edges],
            "clique_size": spec.clique_size,
            "rewards": {
                "base": spec.base_reward,
                "spacing": spec.base_spacing,
                "particularity": spec.particularity_reward,
                "consistency": spec.consistency_reward,
                "edge": spec.edge_reward,
            },
            "threshold": threshold,
        }
    }
    summary = {
        "mode": "gadget",
        "stations": instance.n,
        "requests": instance.m,
        "threshold": threshold,
    }
    if args.out:
        io.save_instance(instance, args.out, extra=provenance)
        summary["instance_file"] = args.out
    if args.verify:
        summary["equivalent"] = hardness.verify_gadget(instance, threshold, spec)
        summary["has_clique"] = hardness.has_clique(spec.n_vertices, spec.edges, spec.clique_size)
    print(io.dump_summary(summary))
    if args.verify and not summary["equivalent"]:
        return 1
    return 0


def run_validate(args) -> int:
    instance = _load_single_instance(args)
    if not args.solution or not os.path.exists(args.solution):
        raise SystemExit("validate mode needs an existing --solution file")
    solution = io.load_solution(args.solution, instance)
    report = validate_solution(instance, solution)
    if report.ok:
        print("solution is valid")
        return 0
    for violation in report.violations:
        print(f"violation: {violation}")
    return 1


def run_bench(args) -> int:
    if not args.instance:
        raise SystemExit("bench mode needs --instance files")
    rows = []
    time_limit = _time_limit(args)
    for path in args.instance:
        if not os.path.exists(path):
            raise SystemExit(f"instance file not found: {path}")
        instance = io.load_instance(path)
        name = instance.name or os.path.basename(path)
        base_config = _config_from_args(instance, args)
        pool = rmp.ColumnPool.initial(instance)
        cg = bnp.column_generation(instance, None, pool, base_config, bnp._Clock(time_limit))
        bound = cg.objective if cg is not None else math.inf
        for label, config in _bench_settings(args, instance, base_config):
            start = time.perf_counter()
            solution, status = rmp.solve_rmp_integer(instance, pool, config, time_limit=time_limit)
            wall = time.perf_counter() - start
            objective = solution.objective if solution is not None else None
            rows.append({
                "instance": name,
                "mode": label,
                "objective": objective,
                "bound": bound,
                "gap": _gap(bound, objective),
                "time": round(wall, 3),
                "nodes": 1,
                "columns": len(pool),
            })
            log.info("bench %s [%s]: objective=%s status=%s %.2fs", name, label, objective, status, wall)
    fieldnames = ["instance", "mode", "objective", "bound", "gap", "time", "nodes", "columns"]
    if args.out:
        with open(args.out, "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
    writer = csv.DictWriter(sys.stdout, fieldnames=fieldnames)
    writer.writeheader()
    writer.writerows(rows)
    return 0


def _bench_settings(args, instance: Instance, base: master.MasterConfig):
    if args.bench_grid == "symmetry":
        from dataclasses import replace

        yield "baseline", base
        yield "no-single-stop-symmetry", replace(base, single_stop_symmetry=False)
        yield "no-tour-ordering", replace(base, tour_length_ordering=False)
        yield "no-symmetry", replace(
            base, single_stop_symmetry=False, tour_length_ordering=False
        )
    else:
        for percent in (10, 25, 50, 75, 100):
            config = master.MasterConfig.for_instance(
                instance,
                positions_fraction=percent / 100.0,
                single_stop_symmetry=base.single_stop_symmetry,
                tour_length_ordering=base.tour_length_ordering,
                require_all_requests=base.require_all_requests,
            )
            yield f"positions-{percent}", config


def _gap(bound: Optional[float], objective: Optional[float]) -> Optional[float]:
    if bound is None or objective is None or not math.isfinite(bound):
        return None
    denominator = max(abs(bound), 1e-9)
    return max(0.0, (bound - objective) / denominator)


def _config_summary(config: master.MasterConfig, args) -> dict:
    return {
        "positions": config.positions,
        "single_stop_symmetry": config.single_stop_symmetry,
        "tour_length_ordering": config.tour_length_ordering,
        "require_all_requests": config.require_all_requests,
        "pool": args.pool,
        "seed": args.seed,
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "generate": run_generate,
        "explicit": run_explicit,
        "bnp": run_bnp,
        "root-heuristic": run_root_heuristic,
        "mpsp": run_mpsp,
        "gadget": run_gadget,
        "validate": run_validate,
        "bench": run_bench,
    }
    try:
        return handlers[args.mode](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
