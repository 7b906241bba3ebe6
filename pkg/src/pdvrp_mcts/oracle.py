"""Exact solvers for small instances, used as ground truth."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .instance import DEPOT, Instance
from .routing import EMPTY_TOUR, InfeasibleError, Tour, tour_cost

MAX_ROUTE_TASKS = 12
MAX_SOLVE_TASKS = 6
MAX_SOLVE_AGENTS = 3

_TIE_RTOL = 1e-12


class CapExceeded(ValueError):
    """Instance too large for exhaustive solution."""


@dataclass(frozen=True)
class ExactResult:
    optimal_cost: float
    optimal_assignment: Tuple[int, ...]
    optimal_tours: Tuple[Tour, ...]


def _subproblem(inst: Instance, tasks: Iterable[int]):
    tasks = sorted(set(tasks))
    nodes, is_pick, pair, mass = [], [], [], []
    for task in tasks:
        t = inst.tasks[task - 1]
        nodes += [t.pickup_node, t.delivery_node]
    order = sorted(range(len(nodes)), key=lambda j: nodes[j])
    where = {j: pos for pos, j in enumerate(order)}
    nodes_sorted = [nodes[j] for j in order]
    is_pick = [False] * len(nodes)
    pair = [0] * len(nodes)
    mass = [0.0] * len(nodes)
    for i, task in enumerate(tasks):
        a, b = where[2 * i], where[2 * i + 1]
        is_pick[a] = True
        pair[a], pair[b] = b, a
        mass[a] = mass[b] = inst.tasks[task - 1].mass
    return nodes_sorted, is_pick, pair, mass


def exact_mpdtsp(inst: Instance, assigned_tasks: Iterable[int], capacity: float) -> Tuple[float, Tour]:
    """Shortest precedence- and capacity-feasible depot tour over a task set.

    Dynamic programme over (visited subset, last node). The on-board load is
    a function of the visited subset: picked-up tasks whose delivery is not
    yet in the subset.
    """
    nodes, is_pick, pair, mass = _subproblem(inst, assigned_tasks)
    m = len(nodes)
    if m == 0:
        return 0.0, EMPTY_TOUR
    if m > 2 * MAX_ROUTE_TASKS:
        raise CapExceeded(f"exact routing is limited to {MAX_ROUTE_TASKS} tasks")
    d = inst.distances
    full = (1 << m) - 1

    def load_of(mask):
        load = 0.0
        for j in range(m):
            if is_pick[j] and mask >> j & 1 and not mask >> pair[j] & 1:
                load += mass[j]
        return load

    def successors(mask):
        load = load_of(mask)
        for j in range(m):
            if mask >> j & 1:
                continue
            if is_pick[j]:
                if load + mass[j] <= capacity:
                    yield j
            elif mask >> pair[j] & 1:
                yield j

    # Cost-to-go from (mask, last) to the depot, filled from full masks backwards.
    togo: Dict[Tuple[int, int], float] = {}
    # Enumerate reachable states forward by layer, then resolve backwards.
    layers: List[set] = [set() for _ in range(m + 1)]
    layers[0].add((0, -1))
    for size in range(m):
        for mask, _ in layers[size]:
            for j in successors(mask):
                layers[size + 1].add((mask | 1 << j, j))
    for mask, last in layers[m]:
        togo[mask, last] = d[nodes[last], DEPOT]
    for size in range(m - 1, -1, -1):
        for mask, last in layers[size]:
            here = DEPOT if last < 0 else nodes[last]
            best = np.inf
            for j in successors(mask):
                rest = togo.get((mask | 1 << j, j), np.inf)
                c = d[here, nodes[j]] + rest
                if c < best:
                    best = c
            togo[mask, last] = best
    if not np.isfinite(togo[0, -1]):
        raise InfeasibleError(f"no feasible tour at capacity {capacity}")

    # Reconstruct, preferring the lowest node id among near-ties.
    visits = [DEPOT]
    mask, last = 0, -1
    while mask != full:
        here = DEPOT if last < 0 else nodes[last]
        target = togo[mask, last]
        for j in successors(mask):  # ascending node id
            c = d[here, nodes[j]] + togo.get((mask | 1 << j, j), np.inf)
            if c <= target + _TIE_RTOL * max(1.0, abs(target)):
                break
        visits.append(nodes[j])
        mask, last = mask | 1 << j, j
    visits.append(DEPOT)
    return tour_cost(visits, d), Tour(tuple(visits), tour_cost(visits, d))


def brute_force_mpdtsp(inst: Instance, assigned_tasks: Iterable[int], capacity: float) -> float:
    """Enumerate every permutation; independent check on the DP for tiny sets."""
    nodes, is_pick, pair, mass = _subproblem(inst, assigned_tasks)
    if not nodes:
        return 0.0
    d = inst.distances
    best = np.inf
    for perm in itertools.permutations(range(len(nodes))):
        seen = set()
        load = 0.0
        ok = True
        for j in perm:
            if is_pick[j]:
                load += mass[j]
                if load > capacity:
                    ok = False
                    break
            else:
                if pair[j] not in seen:
                    ok = False
                    break
                load -= mass[j]
            seen.add(j)
        if ok:
            best = min(best, tour_cost([DEPOT, *(nodes[j] for j in perm), DEPOT], d))
    if not np.isfinite(best):
        raise InfeasibleError(f"no feasible tour at capacity {capacity}")
    return best


class ExactPricer:
    """Prices assignments with exact per-agent routing, memoised by task set."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.caps = inst.fleet.capacities()
        self._cache: Dict[Tuple[float, frozenset], float] = {}

    def route(self, agent: int, tasks: frozenset) -> float:
        key = (self.caps[agent], tasks)
        if key not in self._cache:
            try:
                self._cache[key] = exact_mpdtsp(self.inst, tasks, self.caps[agent])[0]
            except InfeasibleError:
                self._cache[key] = np.inf
        return self._cache[key]

    def cost(self, assignment) -> float:
        total = 0.0
        for a in range(len(self.caps)):
            tasks = frozenset(i + 1 for i, x in enumerate(assignment) if x == a)
            if tasks:
                total += self.route(a, tasks)
        return total

    def __call__(self, inst: Instance, assignments: np.ndarray) -> np.ndarray:
        return np.array([self.cost(row) for row in assignments], dtype=float)


def exact_solve(inst: Instance) -> ExactResult:
    """Enumerate all assignments; ties go to the lexicographically smallest."""
    n, k = inst.n_tasks, inst.n_agents
    if n > MAX_SOLVE_TASKS or k > MAX_SOLVE_AGENTS:
        raise CapExceeded(
            f"exact solve is limited to {MAX_SOLVE_TASKS} tasks and {MAX_SOLVE_AGENTS} agents "
            f"(got {n} tasks, {k} agents)"
        )
    pricer = ExactPricer(inst)
    best_cost, best = np.inf, None
    for assignment in itertools.product(range(k), repeat=n):
        c = pricer.cost(assignment)
        if c < best_cost:
            best_cost, best = c, assignment
    if best is None:
        raise InfeasibleError("every assignment is infeasible")
    caps = inst.fleet.capacities()
    tours = []
    for a in range(k):
        tasks = [i + 1 for i, x in enumerate(best) if x == a]
        if tasks:
            _, tour = exact_mpdtsp(inst, tasks, caps[a])
            tours.append(Tour(tour.visits, tour.cost, inst.fleet.agent_label(a)))
    return ExactResult(float(best_cost), tuple(best), tuple(tours))
