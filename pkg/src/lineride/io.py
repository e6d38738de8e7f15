"""JSON instance/solution files and run-summary records."""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from .model import (
    Assignment,
    Instance,
    Request,
    Solution,
    StoppingPattern,
    TourEntry,
)


def version_letter(index: int) -> str:
    """0 -> A, 1 -> B, ..., 26 -> AA (spreadsheet style)."""
    letters = ""
    index += 1
    while index > 0:
        index, rem = divmod(index - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def instance_to_dict(instance: Instance) -> dict:
    data = {
        "n": instance.n,
        "distances": [[float(v) for v in row] for row in np.asarray(instance.distances)],
        "requests": [[r.origin, r.destination] for r in instance.requests],
        "c": instance.vehicles,
        "Q": instance.capacity,
        "w_pax": instance.w_pax,
        "w_dist": instance.w_dist,
    }
    if instance.name is not None:
        data["name"] = instance.name
    if instance.rewards is not None:
        data["rewards"] = list(instance.rewards)
    return data


def instance_from_dict(data: dict) -> Instance:
    requests = tuple(
        Request(i, int(o), int(d)) for i, (o, d) in enumerate(data["requests"])
    )
    rewards = data.get("rewards")
    return Instance(
        n=int(data["n"]),
        distances=np.asarray(data["distances"], dtype=float),
        requests=requests,
        vehicles=int(data["c"]),
        capacity=int(data["Q"]),
        w_pax=float(data["w_pax"]),
        w_dist=float(data["w_dist"]),
        name=data.get("name"),
        rewards=tuple(float(v) for v in rewards) if rewards is not None else None,
    )


def save_instance(instance: Instance, path: str, extra: Optional[dict] = None):
    data = instance_to_dict(instance)
    if extra:
        data.update(extra)
    with open(path, "w") as handle:
        json.dump(data, handle, indent=1, sort_keys=True)
        handle.write("\n")


def load_instance(path: str) -> Instance:
    with open(path) as handle:
        return instance_from_dict(json.load(handle))


def solution_to_dict(solution: Solution) -> dict:
    return {
        "objective": solution.objective,
        "tours": [
            [
                {
                    "position": entry.position,
                    "pattern_index": entry.pattern_index,
                    "stations": list(entry.pattern.stations),
                }
                for entry in tour
            ]
            for tour in solution.tours
        ],
        "accepted": [
            {
                "request": a.request_id,
                "vehicle": a.vehicle,
                "position": a.position,
                "boarding_index": a.boarding_index,
            }
            for a in solution.assignments
        ],
        "rejected": sorted(solution.rejected),
    }


def solution_from_dict(data: dict, instance: Instance) -> Solution:
    tours = tuple(
        tuple(
            TourEntry(
                int(entry["position"]),
                int(entry["pattern_index"]),
                StoppingPattern(tuple(entry["stations"]), instance.n),
            )
            for entry in tour
        )
        for tour in data["tours"]
    )
    assignments = tuple(
        Assignment(
            int(a["request"]), int(a["vehicle"]), int(a["position"]), int(a["boarding_index"])
        )
        for a in data["accepted"]
    )
    return Solution(
        tours=tours,
        assignments=assignments,
        rejected=frozenset(int(r) for r in data["rejected"]),
        objective=float(data["objective"]),
    )


def save_solution(solution: Solution, path: str):
    with open(path, "w") as handle:
        json.dump(solution_to_dict(solution), handle, indent=1, sort_keys=True)
        handle.write("\n")


def load_solution(path: str, instance: Instance) -> Solution:
    with open(path) as handle:
        return solution_from_dict(json.load(handle), instance)


def dump_summary(summary: dict, path: Optional[str] = None) -> str:
    """Serialize a run summary; keys sorted so records are reproducible."""
    text = json.dumps(summary, indent=1, sort_keys=True, default=float)
    if path:
        with open(path, "w") as handle:
            handle.write(text + "\n")
    return text
