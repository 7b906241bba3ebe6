"""Warm-restart replanning on a perturbed instance.

The nominal tree's leaves are ranked by their nominal mean cost, the tree
topology is copied with zeroed statistics, the cheapest fraction of leaves
is re-priced under the perturbed instance, and search then resumes on the
warmed copy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .instance import AgentType, FleetSpec, Instance, Location
from .search import (
    Incumbent,
    NNHPricer,
    Pricer,
    SearchParams,
    SearchTree,
    _price_terminal,
    _rollout,
    backpropagate,
    run_mcts,
)
from .trace import ConvergenceTrace


class TopologyError(ValueError):
    """Perturbed instance has a different task or agent count than the tree."""


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str  # spatial | capacity
    xi: float = 0.0
    seed: int = 0
    agent: int = 0
    capacity: float = 0.0
    pin_depot: bool = False

    def __post_init__(self):
        if self.kind not in ("spatial", "capacity"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "spatial" and not self.xi >= 0:
            raise ValueError("xi must be nonnegative")
        if self.kind == "capacity" and not self.capacity > 0:
            raise ValueError("capacity must be positive")

    def apply(self, inst: Instance) -> Instance:
        if self.kind == "spatial":
            return apply_spatial_perturbation(inst, self.xi, self.seed, self.pin_depot)
        return apply_capacity_perturbation(inst, self.agent, self.capacity)

    def format(self) -> str:
        if self.kind == "spatial":
            text = f"kind=spatial xi={self.xi!r} seed={self.seed}"
            return text + (" pin_depot=1" if self.pin_depot else "")
        return f"kind=capacity agent={self.agent} capacity={self.capacity!r}"

    @classmethod
    def parse(cls, text: str) -> "PerturbationSpec":
        fields = {}
        for tok in text.split("#", 1)[0].split():
            key, sep, value = tok.partition("=")
            if not sep:
                raise ValueError(f"expected key=value, got {tok!r}")
            fields[key] = value
        kind = fields.pop("kind", None)
        try:
            if kind == "spatial":
                spec = cls("spatial", xi=float(fields.pop("xi")), seed=int(fields.pop("seed", 0)),
                           pin_depot=fields.pop("pin_depot", "0") not in ("0", "false"))
            elif kind == "capacity":
                spec = cls("capacity", agent=int(fields.pop("agent")), capacity=float(fields.pop("capacity")))
            else:
                raise ValueError(f"unknown perturbation kind {kind!r}")
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]}") from None
        if fields:
            raise ValueError(f"unexpected fields {sorted(fields)}")
        return spec


def read_perturbation(path) -> PerturbationSpec:
    return PerturbationSpec.parse(Path(path).read_text())


@dataclass
class ReplanParams:
    k: float = 0.05
    rollouts: int = 20
    budget: SearchParams = field(default_factory=SearchParams)
    reprice_incumbent: bool = True

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise ValueError("k must lie in (0, 1]")
        if self.rollouts < 1:
            raise ValueError("rollouts must be at least 1")


def apply_spatial_perturbation(inst: Instance, xi: float, seed, pin_depot: bool = False) -> Instance:
    """Shift every coordinate uniformly within +-xi times the nominal x/y range."""
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    if xi == 0:
        return Instance(inst.locations, inst.tasks, inst.fleet, inst.distances)
    xy = np.array([[loc.x, loc.y] for loc in inst.locations])
    span = xy.max(axis=0) - xy.min(axis=0)
    shift = np.random.default_rng(seed).uniform(-1.0, 1.0, size=xy.shape) * (xi * span)
    if pin_depot:
        shift[0] = 0.0
    moved = xy + shift
    return inst.with_locations(
        Location(loc.id, float(x), float(y)) for loc, (x, y) in zip(inst.locations, moved)
    )


def apply_capacity_perturbation(inst: Instance, agent: int, new_capacity: float) -> Instance:
    """Change one agent's capacity, splitting its type if it is shared."""
    if not 0 <= agent < inst.n_agents:
        raise IndexError(f"agent {agent} out of range [0, {inst.n_agents})")
    if not new_capacity > 0:
        raise ValueError("capacity must be positive")
    types: List[AgentType] = []
    flat = agent
    for t in inst.fleet.agent_types:
        if 0 <= flat < t.count:
            if t.capacity == new_capacity:
                return inst
            before, after = flat, t.count - flat - 1
            if before:
                types.append(AgentType(t.type_id, t.capacity, before))
            types.append(AgentType(t.type_id, float(new_capacity), 1))
            if after:
                types.append(AgentType(t.type_id, t.capacity, after))
        else:
            types.append(t)
        flat -= t.count
    if len({t.type_id for t in types}) != len(types):
        types = [AgentType(i + 1, t.capacity, t.count) for i, t in enumerate(types)]
    return inst.with_fleet(FleetSpec(tuple(types)))


def rank_leaves(tree: SearchTree) -> List[int]:
    """Visited leaves by ascending mean cost, ties by node id."""
    visits, cost_sum = tree.visits, tree.cost_sum
    leaves = [h for h in tree.leaves() if visits[h] > 0]
    if not leaves:
        raise ValueError("tree has no visited leaves")
    return sorted(leaves, key=lambda h: (cost_sum[h] / visits[h], h))


def clone_topology(tree: SearchTree, seed=0) -> SearchTree:
    return tree.copy_topology(seed)


def percentile_count(k: float, n_leaves: int) -> int:
    # round away float noise such as 0.05 * 60 = 3.0000000000000004
    return max(1, math.ceil(round(k * n_leaves, 9)))


@dataclass
class ReevalResult:
    incumbent: Optional[Incumbent]
    trace: ConvergenceTrace
    processed: List[int]
    leaf_costs: List[List[float]]
    failures: int
    carried_cost: Optional[float] = None

    @property
    def iterations(self) -> int:
        return len(self.processed) + (self.carried_cost is not None)

    @property
    def status(self) -> str:
        return "ok" if self.incumbent is not None else "no_solution"


def reevaluate_leaves(
    tree: SearchTree,
    inst: Instance,
    ranked: List[int],
    k: float,
    r: int,
    pricer: Optional[Pricer] = None,
    trace: Optional[ConvergenceTrace] = None,
    iteration_offset: int = 0,
    clock_start: Optional[int] = None,
    carry: Optional[Tuple[int, ...]] = None,
) -> ReevalResult:
    """Re-price the cheapest ``ceil(k * len(ranked))`` leaves, cheapest first.

    Each processed leaf counts as one iteration in the trace. Infeasible
    completions are dropped and counted; no nodes are created. A ``carry``
    assignment (the nominal incumbent) is priced first, as one extra
    iteration, and backpropagated from the deepest tree node on its path.
    """
    if not ranked:
        raise ValueError("no leaves to re-evaluate")
    if not 0 < k <= 1:
        raise ValueError("k must lie in (0, 1]")
    pricer = pricer or NNHPricer(inst)
    trace = ConvergenceTrace() if trace is None else trace
    t0 = time.perf_counter_ns() if clock_start is None else clock_start
    failures_before = tree.failures
    chosen = ranked[: percentile_count(k, len(ranked))]
    leaf_costs = []
    carried_cost = None
    if carry is not None:
        row = np.array([carry], dtype=np.int64)
        costs = np.asarray(pricer(inst, row), dtype=float)
        improved = tree.observe(costs, row)
        if np.isfinite(costs[0]):
            carried_cost = float(costs[0])
            backpropagate(tree, deepest_on_path(tree, carry), [carried_cost])
        else:
            tree.failures += 1
            carried_cost = math.inf
        iteration_offset += 1
        if improved:
            trace.append(iteration_offset, time.perf_counter_ns() - t0, tree.incumbent.cost, "reevaluation")
    for i, leaf in enumerate(chosen, start=1):
        if tree.is_terminal(leaf):
            costs, improved = _price_terminal(tree, inst, leaf, pricer)
        else:
            costs, _, improved = _rollout(tree, inst, leaf, r, pricer)
        backpropagate(tree, leaf, costs)
        leaf_costs.append(costs)
        if improved:
            trace.append(iteration_offset + i, time.perf_counter_ns() - t0, tree.incumbent.cost, "reevaluation")
    return ReevalResult(tree.incumbent, trace, chosen, leaf_costs, tree.failures - failures_before, carried_cost)


def deepest_on_path(tree: SearchTree, assignment) -> int:
    """Deepest existing node whose fixed choices agree with ``assignment``."""
    h = 0
    while not tree.is_leaf(h):
        want = assignment[tree.task_order[tree.depth[h]]]
        h = tree.children(h)[want]
    return h


@dataclass
class ReplanResult:
    incumbent: Optional[Incumbent]
    trace: ConvergenceTrace
    tree: SearchTree
    reevaluation: ReevalResult

    @property
    def reevaluation_iterations(self) -> int:
        return self.reevaluation.iterations


def check_topology(tree: SearchTree, inst: Instance) -> None:
    if (tree.n_tasks, tree.n_agents) != (inst.n_tasks, inst.n_agents):
        raise TopologyError(
            f"tree has {tree.n_tasks} tasks and {tree.n_agents} agents, "
            f"instance has {inst.n_tasks} tasks and {inst.n_agents} agents"
        )


def replan(
    nominal_tree: SearchTree,
    perturbed_inst: Instance,
    rp: ReplanParams,
    sp: SearchParams,
    pricer: Optional[Pricer] = None,
) -> ReplanResult:
    """Rank, clone, re-evaluate, then resume search on the warmed tree.

    ``sp`` supplies gamma, the RNG seed and the budget of the final search
    phase; its iteration numbering continues after the re-evaluated leaves.
    """
    check_topology(nominal_tree, perturbed_inst)
    pricer = pricer or NNHPricer(perturbed_inst)
    t0 = time.perf_counter_ns()
    ranked = rank_leaves(nominal_tree)
    tree = clone_topology(nominal_tree, sp.seed)
    trace = ConvergenceTrace()
    carry = None
    if rp.reprice_incumbent and nominal_tree.incumbent is not None:
        carry = nominal_tree.incumbent.assignment
    reeval = reevaluate_leaves(tree, perturbed_inst, ranked, rp.k, rp.rollouts, pricer, trace, 0, t0, carry)
    done = reeval.iterations
    if (sp.max_iters or 0) > 0 or sp.max_ms is not None:
        search = replace(sp, rollouts=rp.rollouts)
        run_mcts(tree, perturbed_inst, search, pricer, trace, "search", done, t0)
    return ReplanResult(tree.incumbent, trace, tree, reeval)
