"""Monte Carlo tree search over task-to-agent assignments.

Depth d of the tree fixes the agent for the d-th task in ``task_order``.
Nodes live in flat lists (an arena); the children of a node are the
``n_agents`` consecutive ids starting at ``first_child``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .instance import Instance
from .routing import InfeasibleError
from .trace import ConvergenceTrace

Assignment = Tuple[int, ...]
Pricer = Callable[[Instance, np.ndarray], np.ndarray]

ROOT = 0
NO_NODE = -1


@dataclass(frozen=True)
class Incumbent:
    cost: float
    assignment: Assignment


@dataclass
class SearchParams:
    gamma: float = math.sqrt(0.5)
    rollouts: int = 20
    max_iters: Optional[int] = None
    max_ms: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.rollouts < 1:
            raise ValueError("rollouts must be at least 1")


@dataclass(frozen=True)
class TreeNode:
    id: int
    parent: int
    depth: int
    agent_choice: Optional[int]
    children: Tuple[int, ...]
    visits: int
    cost_sum: float


class NNHPricer:
    """Greedy-routing pricer: one compiled call per batch of assignments."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.pick, self.drop, self.mass = inst.task_arrays()
        self.caps = inst.capacities()
        self.dist = np.ascontiguousarray(inst.distances)

    def __call__(self, inst: Instance, assignments: np.ndarray) -> np.ndarray:
        if inst is not self.inst:
            return NNHPricer(inst)(inst, assignments)
        return _kernels.price_batch(
            self.dist, self.pick, self.drop, self.mass, self.caps,
            np.ascontiguousarray(assignments, dtype=np.int64),
        )


def assignment_cost(inst: Instance, assignment: Sequence[int]) -> float:
    """Sum of each agent's greedy tour cost; idle agents cost nothing."""
    n_agents = inst.n_agents
    if len(assignment) != inst.n_tasks or any(not 0 <= a < n_agents for a in assignment):
        raise ValueError(f"assignment must have {inst.n_tasks} entries in [0, {n_agents})")
    cost = NNHPricer(inst)(inst, np.array([assignment], dtype=np.int64))[0]
    if not np.isfinite(cost):
        raise InfeasibleError(f"assignment {tuple(assignment)} has an agent with no feasible tour")
    return float(cost)


class SearchTree:
    def __init__(self, n_tasks: int, n_agents: int, seed=0, task_order: Optional[Sequence[int]] = None):
        if n_tasks < 1 or n_agents < 1:
            raise ValueError("need at least one task and one agent")
        self.n_tasks = n_tasks
        self.n_agents = n_agents
        self.task_order = tuple(range(n_tasks)) if task_order is None else tuple(task_order)
        self.parent: List[int] = [NO_NODE]
        self.depth: List[int] = [0]
        self.agent: List[int] = [NO_NODE]
        self.first_child: List[int] = [NO_NODE]
        self.visits: List[int] = [0]
        self.cost_sum: List[float] = [0.0]
        self.j_max: Optional[float] = None
        self.incumbent: Optional[Incumbent] = None
        self.failures = 0
        self.rng = np.random.default_rng(seed)

    @classmethod
    def for_instance(cls, inst: Instance, seed=0) -> "SearchTree":
        return cls(inst.n_tasks, inst.n_agents, seed)

    def __len__(self):
        return len(self.parent)

    # structure

    def children(self, h: int) -> range:
        fc = self.first_child[h]
        return range(0) if fc == NO_NODE else range(fc, fc + self.n_agents)

    def is_terminal(self, h: int) -> bool:
        return self.depth[h] == self.n_tasks

    def is_leaf(self, h: int) -> bool:
        return self.first_child[h] == NO_NODE

    def leaves(self) -> List[int]:
        return [h for h in range(len(self)) if self.first_child[h] == NO_NODE]

    def node(self, h: int) -> TreeNode:
        return TreeNode(
            h, self.parent[h], self.depth[h],
            None if self.agent[h] == NO_NODE else self.agent[h],
            tuple(self.children(h)), self.visits[h], self.cost_sum[h],
        )

    def path_choices(self, h: int) -> List[int]:
        """Agent choices from the root down to ``h``."""
        out = []
        while h != ROOT:
            out.append(self.agent[h])
            h = self.parent[h]
        out.reverse()
        return out

    def partial_assignment(self, h: int) -> np.ndarray:
        """Assignment row with the fixed prefix filled and -1 elsewhere."""
        row = np.full(self.n_tasks, -1, dtype=np.int64)
        for d, a in enumerate(self.path_choices(h)):
            row[self.task_order[d]] = a
        return row

    # bookkeeping

    def observe(self, costs: np.ndarray, assignments: np.ndarray) -> bool:
        """Fold priced completions into J_max and the incumbent; True on improvement."""
        improved = False
        for c, row in zip(costs, assignments):
            if not np.isfinite(c):
                continue
            c = float(c)
            if self.j_max is None or c > self.j_max:
                self.j_max = c
            if self.incumbent is None or c < self.incumbent.cost:
                self.incumbent = Incumbent(c, tuple(int(a) for a in row))
                improved = True
        return improved

    def copy_topology(self, seed=0) -> "SearchTree":
        clone = SearchTree(self.n_tasks, self.n_agents, seed, self.task_order)
        clone.parent = list(self.parent)
        clone.depth = list(self.depth)
        clone.agent = list(self.agent)
        clone.first_child = list(self.first_child)
        clone.visits = [0] * len(self)
        clone.cost_sum = [0.0] * len(self)
        return clone


def lcb_select(tree: SearchTree, s: int, gamma: float) -> int:
    """Child minimising normalised mean cost minus the exploration bonus.

    Unvisited children are taken first; exact ties are broken at random.
    """
    kids = tree.children(s)
    if not kids:
        raise ValueError(f"node {s} has no children")
    visits, cost_sum = tree.visits, tree.cost_sum
    fresh = [c for c in kids if visits[c] == 0]
    if fresh:
        return fresh[0] if len(fresh) == 1 else fresh[int(tree.rng.integers(len(fresh)))]
    log_n = math.log(visits[s])
    j_max = tree.j_max or 0.0
    best, ties = math.inf, []
    for c in kids:
        n = visits[c]
        exploit = cost_sum[c] / (n * j_max) if j_max > 0 else 0.0
        score = exploit - gamma * math.sqrt(log_n / n)
        if score < best:
            best, ties = score, [c]
        elif score == best:
            ties.append(c)
    return ties[0] if len(ties) == 1 else ties[int(tree.rng.integers(len(ties)))]


def expand(tree: SearchTree, s: int) -> List[int]:
    if not tree.is_leaf(s):
        raise ValueError(f"node {s} is already expanded")
    if tree.is_terminal(s):
        raise ValueError(f"node {s} is terminal")
    first = len(tree)
    depth = tree.depth[s] + 1
    for a in range(tree.n_agents):
        tree.parent.append(s)
        tree.depth.append(depth)
        tree.agent.append(a)
        tree.first_child.append(NO_NODE)
        tree.visits.append(0)
        tree.cost_sum.append(0.0)
    tree.first_child[s] = first
    return list(range(first, first + tree.n_agents))


def _price(tree: SearchTree, inst: Instance, pricer: Pricer, rows: np.ndarray):
    costs = np.asarray(pricer(inst, rows), dtype=float)
    improved = tree.observe(costs, rows)
    ok = np.isfinite(costs)
    tree.failures += int((~ok).sum())
    return costs, ok, improved


def rollout(tree: SearchTree, inst: Instance, s: int, r: int, pricer: Optional[Pricer] = None):
    """Price ``r`` uniformly random completions of the partial assignment at ``s``.

    Returns the finite costs and the best (cost, assignment), or None for the
    best when every completion was infeasible.
    """
    if tree.is_terminal(s):
        raise ValueError("terminal nodes are priced directly, not rolled out")
    costs, rows, _ = _rollout(tree, inst, s, r, pricer or NNHPricer(inst))
    if not costs:
        return costs, None
    i = int(np.argmin(costs))
    return costs, (costs[i], tuple(int(a) for a in rows[i]))


def _rollout(tree, inst, s, r, pricer):
    rows = np.repeat(tree.partial_assignment(s)[None, :], r, axis=0)
    free = [tree.task_order[d] for d in range(tree.depth[s], tree.n_tasks)]
    rows[:, free] = tree.rng.integers(0, tree.n_agents, size=(r, len(free)))
    costs, ok, improved = _price(tree, inst, pricer, rows)
    return [float(c) for c in costs[ok]], rows[ok], improved


def _price_terminal(tree, inst, s, pricer):
    rows = tree.partial_assignment(s)[None, :]
    costs, ok, improved = _price(tree, inst, pricer, rows)
    return [float(c) for c in costs[ok]], improved


def backpropagate(tree: SearchTree, s: int, costs: Sequence[float]) -> None:
    if not len(costs):
        return
    k, total = len(costs), float(sum(costs))
    while s != NO_NODE:
        tree.visits[s] += k
        tree.cost_sum[s] += total
        s = tree.parent[s]


def evaluate_node(tree: SearchTree, inst: Instance, s: int, r: int, pricer: Pricer) -> bool:
    """Price a node (exactly if terminal, by rollouts otherwise) and backpropagate."""
    if tree.is_terminal(s):
        costs, improved = _price_terminal(tree, inst, s, pricer)
    else:
        costs, _, improved = _rollout(tree, inst, s, r, pricer)
    backpropagate(tree, s, costs)
    return improved


def run_mcts(
    tree: SearchTree,
    inst: Instance,
    params: SearchParams,
    pricer: Optional[Pricer] = None,
    trace: Optional[ConvergenceTrace] = None,
    phase: str = "search",
    iteration_offset: int = 0,
    clock_start: Optional[int] = None,
) -> Tuple[Optional[Incumbent], ConvergenceTrace]:
    """Select, expand, roll out and backpropagate until the budget runs out.

    Selection descends from the root until it meets a leaf or an unvisited
    node. Terminal nodes are priced exactly, unvisited nodes are rolled out,
    and visited leaves are expanded first.

    Iteration and wall-clock caps both apply; whichever is hit first stops
    the loop. A trace row is appended whenever the incumbent improves.
    """
    if (tree.n_tasks, tree.n_agents) != (inst.n_tasks, inst.n_agents):
        raise ValueError("tree topology does not match the instance")
    pricer = pricer or NNHPricer(inst)
    trace = ConvergenceTrace() if trace is None else trace
    t0 = time.perf_counter_ns() if clock_start is None else clock_start
    deadline = None if params.max_ms is None else t0 + int(params.max_ms * 1e6)
    max_iters = params.max_iters
    if max_iters is None and deadline is None:
        raise ValueError("an iteration or wall-clock budget is required")
    gamma, r = params.gamma, params.rollouts
    it = 0
    while max_iters is None or it < max_iters:
        if deadline is not None and time.perf_counter_ns() >= deadline:
            break
        it += 1
        s = ROOT
        # an unvisited node is rolled out even if it has children, which
        # only happens in a tree whose topology was cloned
        while tree.first_child[s] != NO_NODE and tree.visits[s] > 0:
            s = lcb_select(tree, s, gamma)
        if not tree.is_terminal(s) and tree.visits[s] > 0:
            expand(tree, s)
            s = lcb_select(tree, s, gamma)
        if evaluate_node(tree, inst, s, r, pricer):
            trace.append(
                iteration_offset + it, time.perf_counter_ns() - t0, tree.incumbent.cost, phase
            )
    return tree.incumbent, trace


# snapshot files

def format_snapshot(tree: SearchTree) -> str:
    inc = tree.incumbent
    lines = [
        "# MCTS assignment tree",
        f"n_tasks {tree.n_tasks}",
        f"n_agents {tree.n_agents}",
        f"j_max {'none' if tree.j_max is None else repr(tree.j_max)}",
        "incumbent none" if inc is None else f"incumbent {inc.cost!r} " + " ".join(map(str, inc.assignment)),
        "task_order " + " ".join(map(str, tree.task_order)),
        "rng " + json.dumps(tree.rng.bit_generator.state, sort_keys=True, separators=(",", ":")),
        f"failures {tree.failures}",
        f"nodes {len(tree)}",
        "# id parent depth agent_choice N J",
    ]
    for h in range(len(tree)):
        lines.append(
            f"{h} {tree.parent[h]} {tree.depth[h]} {tree.agent[h]} {tree.visits[h]} {tree.cost_sum[h]!r}"
        )
    return "\n".join(lines) + "\n"


def parse_snapshot(text: str) -> SearchTree:
    header = {}
    records = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip() if not raw.startswith("rng ") else raw.strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        if key.lstrip("-").isdigit():
            records.append(line.split())
        else:
            header[key] = rest
    try:
        n_tasks, n_agents = int(header["n_tasks"]), int(header["n_agents"])
        tree = SearchTree(n_tasks, n_agents, 0, [int(t) for t in header["task_order"].split()])
        tree.rng.bit_generator.state = json.loads(header["rng"])
        tree.j_max = None if header["j_max"] == "none" else float(header["j_max"])
        inc = header["incumbent"].split()
        if inc[0] != "none":
            tree.incumbent = Incumbent(float(inc[0]), tuple(int(a) for a in inc[1:]))
        tree.failures = int(header.get("failures", 0))
        count = int(header["nodes"])
    except (KeyError, ValueError, IndexError) as exc:
        raise ValueError(f"bad snapshot header: {exc}") from None
    if len(records) != count:
        raise ValueError(f"snapshot declares {count} nodes but has {len(records)}")
    tree.parent, tree.depth, tree.agent, tree.visits, tree.cost_sum = [], [], [], [], []
    for i, rec in enumerate(records):
        if len(rec) != 6 or int(rec[0]) != i:
            raise ValueError(f"bad node record {' '.join(rec)!r}")
        tree.parent.append(int(rec[1]))
        tree.depth.append(int(rec[2]))
        tree.agent.append(int(rec[3]))
        tree.visits.append(int(rec[4]))
        tree.cost_sum.append(float(rec[5]))
    tree.first_child = [NO_NODE] * count
    for h in range(count - 1, 0, -1):
        tree.first_child[tree.parent[h]] = h
    for h in range(count):
        kids = [c for c in tree.children(h)]
        if kids and (kids[-1] >= count or any(tree.parent[c] != h for c in kids)):
            raise ValueError(f"children of node {h} are not contiguous")
    return tree


def write_snapshot(tree: SearchTree, path) -> None:
    Path(path).write_text(format_snapshot(tree))


def read_snapshot(path) -> SearchTree:
    return parse_snapshot(Path(path).read_text())
