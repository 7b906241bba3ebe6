"""Per-agent routing: feasibility checks and the greedy nearest-neighbour tour."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Collection, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .instance import DEPOT, Instance


class InfeasibleError(RuntimeError):
    """No feasible tour exists for the requested task set and capacity."""


@dataclass(frozen=True)
class Tour:
    visits: Tuple[int, ...]
    cost: float
    agent: Optional[Tuple[int, int]] = None


EMPTY_TOUR = Tour((DEPOT, DEPOT), 0.0)


@dataclass(frozen=True)
class PayloadState:
    carried: FrozenSet[int] = frozenset()
    load: float = 0.0

    def after(self, inst: Instance, node: int) -> "PayloadState":
        task, is_pickup = node_role(inst, node)
        mass = inst.tasks[task - 1].mass
        if is_pickup:
            return PayloadState(self.carried | {task}, self.load + mass)
        return PayloadState(self.carried - {task}, self.load - mass)


@dataclass(frozen=True)
class Violation:
    step: int
    kind: str  # precedence | capacity | structure
    detail: str


def node_role(inst: Instance, node: int) -> Tuple[int, bool]:
    """(task id, is_pickup) for a non-depot node."""
    for t in inst.tasks:
        if t.pickup_node == node:
            return t.task_id, True
        if t.delivery_node == node:
            return t.task_id, False
    raise KeyError(f"node {node} belongs to no task")


def feasible_next(
    inst: Instance,
    partial: Sequence[int],
    payload: PayloadState,
    remaining: Collection[int],
    capacity: float,
) -> set:
    """Remaining nodes that may legally be visited next."""
    seen = set(partial)
    out = set()
    for v in remaining:
        task, is_pickup = node_role(inst, v)
        t = inst.tasks[task - 1]
        if is_pickup:
            if payload.load + t.mass <= capacity:
                out.add(v)
        elif t.pickup_node in seen:
            out.add(v)
    return out


def tour_cost(visits: Sequence[int], distances) -> float:
    cost = 0.0
    for a, b in zip(visits[:-1], visits[1:]):
        cost += distances[a, b]
    return float(cost)


def check_tour_feasible(
    visits: Sequence[int],
    inst: Instance,
    capacity: float,
    assigned_tasks: Optional[Iterable[int]] = None,
) -> List[Violation]:
    """Step-indexed violations of structure, precedence and capacity.

    When ``assigned_tasks`` is omitted, it is inferred from the nodes visited.
    """
    if isinstance(visits, Tour):
        visits = visits.visits
    visits = list(visits)
    out: List[Violation] = []
    if len(visits) < 2 or visits[0] != DEPOT or visits[-1] != DEPOT:
        out.append(Violation(0, "structure", "tour must start and end at the depot"))
    interior = visits[1:-1]
    roles = {}
    for step, v in enumerate(interior, start=1):
        try:
            roles[v] = node_role(inst, v)
        except KeyError:
            out.append(Violation(step, "structure", f"node {v} is not a task node"))
    if assigned_tasks is None:
        assigned = {task for task, _ in roles.values()}
    else:
        assigned = set(assigned_tasks)
    expected = set()
    for task in assigned:
        t = inst.tasks[task - 1]
        expected |= {t.pickup_node, t.delivery_node}
    counts = {}
    for v in interior:
        counts[v] = counts.get(v, 0) + 1
    for v in sorted(expected):
        if counts.get(v, 0) == 0:
            out.append(Violation(len(visits) - 1, "structure", f"node {v} not visited"))
    for step, v in enumerate(interior, start=1):
        if v in roles and v not in expected:
            out.append(Violation(step, "structure", f"node {v} not assigned"))
    seen = set()
    load = 0.0
    for step, v in enumerate(interior, start=1):
        if v == DEPOT:
            out.append(Violation(step, "structure", "depot revisited mid-tour"))
            continue
        if v in seen:
            out.append(Violation(step, "structure", f"node {v} visited twice"))
            continue
        seen.add(v)
        if v not in roles:
            continue
        task, is_pickup = roles[v]
        t = inst.tasks[task - 1]
        if is_pickup:
            load += t.mass
            if load > capacity:
                out.append(Violation(step, "capacity", f"load {load} exceeds {capacity}"))
        else:
            if t.pickup_node not in seen:
                out.append(Violation(step, "precedence", f"delivery of task {task} before pickup"))
            else:
                load -= t.mass
    return out


def _task_index(inst: Instance, tasks: Iterable[int]) -> np.ndarray:
    return np.array(sorted(t - 1 for t in tasks), dtype=np.int64)


def nnh_tour(
    inst: Instance,
    assigned_tasks: Iterable[int],
    capacity: float,
    agent: Optional[Tuple[int, int]] = None,
) -> Tour:
    """Best greedy tour over all legal first pickups.

    From the depot the tour goes to a starting pickup, then repeatedly moves
    to the nearest remaining node that keeps precedence and capacity (ties go
    to the lowest node id), and finally returns to the depot.
    """
    idx = _task_index(inst, assigned_tasks)
    if idx.size == 0:
        return Tour(EMPTY_TOUR.visits, 0.0, agent)
    pick, drop, mass = inst.task_arrays()
    nodes, is_pick, pair, lmass = _kernels.build_local(idx, pick, drop, mass)
    order = np.empty(nodes.size, np.int64)
    cost = _kernels.nnh_local(inst.distances, nodes, is_pick, pair, lmass, float(capacity), order)
    if not np.isfinite(cost):
        raise InfeasibleError(
            f"no feasible greedy tour for tasks {sorted(int(i) + 1 for i in idx)} at capacity {capacity}"
        )
    visits = (DEPOT, *(int(nodes[j]) for j in order), DEPOT)
    return Tour(visits, float(cost), agent)
