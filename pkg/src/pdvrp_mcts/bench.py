"""Solution files and the warm-versus-cold comparison harness."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .instance import Instance
from .oracle import ExactResult
from .replan import PerturbationSpec, ReplanParams, replan
from .routing import Tour, check_tour_feasible, nnh_tour, tour_cost
from .search import Incumbent, SearchParams, SearchTree, run_mcts
from .trace import ConvergenceTrace


@dataclass(frozen=True)
class Solution:
    status: str  # ok | no_solution | infeasible
    cost: Optional[float] = None
    assignment: Tuple[int, ...] = ()
    tours: Tuple[Tuple[int, Tour], ...] = ()  # (flat agent, tour)


def solution_from_incumbent(inst: Instance, inc: Optional[Incumbent]) -> Solution:
    if inc is None:
        return Solution("no_solution")
    caps = inst.fleet.capacities()
    tours = []
    for a in range(inst.n_agents):
        tasks = [i + 1 for i, x in enumerate(inc.assignment) if x == a]
        if tasks:
            tours.append((a, nnh_tour(inst, tasks, caps[a], inst.fleet.agent_label(a))))
    return Solution("ok", inc.cost, inc.assignment, tuple(tours))


def solution_from_exact(inst: Instance, res: ExactResult) -> Solution:
    tours, it = [], iter(res.optimal_tours)
    for a in range(inst.n_agents):
        if a in res.optimal_assignment:
            tours.append((a, next(it)))
    return Solution("ok", res.optimal_cost, res.optimal_assignment, tuple(tours))


def format_solution(sol: Solution) -> str:
    lines = ["# m-PDVRP solution", f"status {sol.status}"]
    if sol.status == "ok":
        lines.append(f"cost {sol.cost!r}")
        lines.append("assignment " + " ".join(map(str, sol.assignment)))
        lines.append("# tour: agent type index cost visits...")
        for a, t in sol.tours:
            type_id, index = t.agent if t.agent is not None else (0, 0)
            lines.append(f"tour {a} {type_id} {index} {t.cost!r} " + " ".join(map(str, t.visits)))
    return "\n".join(lines) + "\n"


def parse_solution(text: str) -> Solution:
    status, cost, assignment, tours = None, None, (), []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "status":
            status = rest[0]
        elif key == "cost":
            cost = float(rest[0])
        elif key == "assignment":
            assignment = tuple(int(a) for a in rest)
        elif key == "tour":
            a, type_id, index = int(rest[0]), int(rest[1]), int(rest[2])
            tours.append((a, Tour(tuple(int(v) for v in rest[4:]), float(rest[3]), (type_id, index))))
        else:
            raise ValueError(f"unrecognised solution record {raw!r}")
    if status is None:
        raise ValueError("solution has no status line")
    return Solution(status, cost, assignment, tuple(tours))


def validate_solution(inst: Instance, sol: Solution, rtol: float = 1e-9) -> List[str]:
    """Re-check a solution: feasible tours, a task partition, and a consistent cost."""
    if sol.status != "ok":
        return []
    problems = []
    caps = inst.fleet.capacities()
    if len(sol.assignment) != inst.n_tasks:
        problems.append("assignment length differs from task count")
    total = 0.0
    for a, tour in sol.tours:
        tasks = [i + 1 for i, x in enumerate(sol.assignment) if x == a]
        for v in check_tour_feasible(tour.visits, inst, caps[a], tasks):
            problems.append(f"agent {a}, step {v.step}: {v.kind}: {v.detail}")
        c = tour_cost(tour.visits, inst.distances)
        if abs(c - tour.cost) > rtol * max(1.0, abs(c)):
            problems.append(f"agent {a}: tour cost {tour.cost} recomputes to {c}")
        total += c
    covered = {a for a, _ in sol.tours}
    if covered != set(sol.assignment):
        problems.append("tours do not match the agents used by the assignment")
    if sol.cost is None or abs(total - sol.cost) > rtol * max(1.0, abs(total)):
        problems.append(f"stated cost {sol.cost} recomputes to {total}")
    return problems


# warm versus cold comparison

@dataclass
class SeedRun:
    seed: int
    warm: ConvergenceTrace
    cold: ConvergenceTrace
    reevaluation_iterations: int


def solve_nominal(inst: Instance, params: SearchParams) -> SearchTree:
    tree = SearchTree.for_instance(inst, params.seed)
    run_mcts(tree, inst, params, phase="nominal")
    return tree


def compare_seed(
    nominal_tree: SearchTree,
    nominal_inst: Instance,
    spec: PerturbationSpec,
    seed: int,
    total_iters: int,
    rp: ReplanParams,
    sp: SearchParams,
) -> SeedRun:
    """Warm replan and cold restart on one perturbation draw at equal iteration budgets.

    Re-evaluated leaves count against the warm budget, so both methods stop
    after ``total_iters`` post-perturbation iterations.
    """
    perturbed = spec.apply(nominal_inst)
    search = replace(sp, seed=seed, max_iters=None, max_ms=None)
    # the replanner's follow-on budget is the total minus re-evaluation work
    warm = replan(nominal_tree, perturbed, rp, replace(search, max_iters=0))
    left = max(0, total_iters - warm.reevaluation_iterations)
    if left:
        run_mcts(warm.tree, perturbed, replace(search, max_iters=left, rollouts=rp.rollouts),
                 trace=warm.trace, phase="search", iteration_offset=warm.reevaluation_iterations)
    cold_tree = SearchTree.for_instance(perturbed, seed)
    _, cold = run_mcts(cold_tree, perturbed, replace(search, max_iters=total_iters, rollouts=rp.rollouts))
    return SeedRun(seed, warm.trace, cold, warm.reevaluation_iterations)


def default_checkpoints(total: int) -> List[int]:
    pts, scale = [], 1
    while scale <= total:
        for m in (1, 2, 5):
            if m * scale <= total:
                pts.append(m * scale)
        scale *= 10
    if not pts or pts[-1] != total:
        pts.append(total)
    return pts


def _quartiles(values):
    if not values:
        return None, None, None
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return float(med), float(q1), float(q3)


def aggregate(runs: Sequence[SeedRun], checkpoints: Sequence[int]) -> List[Dict[str, object]]:
    rows = []
    for cp in checkpoints:
        row: Dict[str, object] = {"checkpoint": cp}
        for method in ("warm", "cold"):
            vals = [getattr(run, method).incumbent_at(cp) for run in runs]
            have = [v for v in vals if v is not None]
            med, q1, q3 = _quartiles(have)
            row[f"{method}_median"] = med
            row[f"{method}_q1"] = q1
            row[f"{method}_q3"] = q3
            row[f"{method}_missing"] = len(vals) - len(have)
        rows.append(row)
    return rows


AGGREGATE_COLUMNS = [
    "checkpoint",
    "warm_median", "warm_q1", "warm_q3", "warm_missing",
    "cold_median", "cold_q1", "cold_q3", "cold_missing",
]


def aggregate_csv(rows: List[Dict[str, object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for row in rows:
        w.writerow(["" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c]
                    for c in AGGREGATE_COLUMNS])
    return buf.getvalue()


def first_checkpoint_after(runs: Sequence[SeedRun], checkpoints: Sequence[int]) -> Optional[int]:
    """Smallest checkpoint at which every seed's re-evaluation phase is complete."""
    need = max(run.reevaluation_iterations for run in runs)
    for cp in checkpoints:
        if cp >= need:
            return cp
    return None
