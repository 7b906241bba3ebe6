"""Command-line front end: pdvrp-mcts <command> [options]."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .instance import (
    FleetSpec,
    ParseError,
    StructureError,
    build_pd_instance,
    load_eil51,
    parse_tsplib,
    read_instance,
    validate_instance,
    write_instance,
)
from .oracle import CapExceeded, exact_solve
from .replan import (
    PerturbationSpec,
    ReplanParams,
    TopologyError,
    check_topology,
    read_perturbation,
    replan,
)
from .routing import InfeasibleError
from .search import SearchParams, SearchTree, read_snapshot, run_mcts, write_snapshot

log = logging.getLogger("pdvrp_mcts")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_INFEASIBLE = 5
EXIT_CAP = 6


class UsageError(Exception):
    pass


def _seed_list(text: str):
    try:
        return [int(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _capacity(text: str):
    agent, sep, value = text.partition("=")
    try:
        if not sep:
            raise ValueError
        return int(agent), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected agent=value, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--in", dest="inp", help="input instance (TSPLIB file for gen)")
    common.add_argument("--out-prefix", default="out", help="prefix for every output file")
    common.add_argument("--gamma", type=float, default=math.sqrt(0.5))
    common.add_argument("--rollouts", type=int, default=20)
    common.add_argument("--k", type=float, default=0.05)
    common.add_argument("--budget-iters", type=int)
    common.add_argument("--budget-ms", type=float)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--seeds", type=_seed_list)
    common.add_argument("--xi", type=float)
    common.add_argument("--capacity", type=_capacity, metavar="AGENT=VALUE")
    common.add_argument("--tree", help="tree snapshot file")
    common.add_argument("--spec", help="perturbation spec file")
    common.add_argument("--timing", action="store_true",
                        help="add the elapsed_ns column to traces (not reproducible)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pdvrp-mcts", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", parents=[common], help="TSPLIB coordinates to an instance file")
    g.add_argument("--agents", type=int, default=2)
    g.add_argument("--agent-capacity", type=float, default=10.0)
    sub.add_parser("solve", parents=[common], help="nominal MCTS solve")
    sub.add_parser("perturb", parents=[common], help="write a perturbed instance")
    sub.add_parser("replan", parents=[common], help="warm restart from a nominal tree")
    sub.add_parser("restart", parents=[common], help="cold restart on a perturbed instance")
    c = sub.add_parser("compare", parents=[common], help="warm versus cold over several seeds")
    c.add_argument("--checkpoints", type=_seed_list, help="iteration grid for the aggregate file")
    c.add_argument("--nominal-iters", type=int, help="solve the nominal tree here if --tree is absent")
    sub.add_parser("oracle", parents=[common], help="exact solution of a small instance")
    return p


def _search_params(args, required=True) -> SearchParams:
    if required and args.budget_iters is None and args.budget_ms is None:
        raise UsageError("a budget is required (--budget-iters and/or --budget-ms)")
    return SearchParams(args.gamma, args.rollouts, args.budget_iters, args.budget_ms, args.seed)


def _perturbation(args, seed=None) -> PerturbationSpec:
    given = [args.spec is not None, args.xi is not None, args.capacity is not None]
    if sum(given) != 1:
        raise UsageError("give exactly one of --spec, --xi, --capacity")
    if args.spec:
        spec = read_perturbation(args.spec)
        if seed is not None and spec.kind == "spatial":
            spec = replace(spec, seed=seed)
        return spec
    if args.xi is not None:
        return PerturbationSpec("spatial", xi=args.xi, seed=args.seed if seed is None else seed)
    agent, cap = args.capacity
    return PerturbationSpec("capacity", agent=agent, capacity=cap)


def _load_instance(args):
    if not args.inp:
        raise UsageError("--in is required")
    inst = read_instance(args.inp)
    problems = validate_instance(inst)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    return inst


def _write_outputs(args, inst, inc, trace, tree=None):
    prefix = args.out_prefix
    sol = bench.solution_from_incumbent(inst, inc)
    Path(prefix + ".solution").write_text(bench.format_solution(sol))
    trace.write_csv(prefix + ".trace.csv", timing=args.timing)
    if tree is not None:
        write_snapshot(tree, prefix + ".tree")
    if sol.status == "ok":
        print(f"cost {sol.cost!r}")
    else:
        print("no solution found")
    return sol


def cmd_gen(args):
    text = Path(args.inp).read_text() if args.inp else None
    coords = parse_tsplib(text) if text is not None else load_eil51()
    inst = build_pd_instance(coords, FleetSpec.uniform(args.agents, args.agent_capacity))
    write_instance(inst, args.out_prefix + ".inst")
    print(f"{inst.n_tasks} tasks, {inst.n_agents} agents")
    return EXIT_OK


def cmd_solve(args):
    inst = _load_instance(args)
    params = _search_params(args)
    tree = SearchTree.for_instance(inst, args.seed)
    inc, trace = run_mcts(tree, inst, params, phase="nominal")
    _write_outputs(args, inst, inc, trace, tree)
    return EXIT_OK


def cmd_perturb(args):
    inst = _load_instance(args)
    write_instance(_perturbation(args).apply(inst), args.out_prefix + ".inst")
    return EXIT_OK


def cmd_replan(args):
    if not args.tree:
        raise UsageError("replan needs --tree")
    inst = _load_instance(args)
    nominal = read_snapshot(args.tree)
    check_topology(nominal, inst)
    perturbed = _perturbation(args).apply(inst)
    params = _search_params(args, required=False)
    if params.max_iters is None and params.max_ms is None:
        params = replace(params, max_iters=0)
    rp = ReplanParams(args.k, args.rollouts, params)
    res = replan(nominal, perturbed, rp, params)
    _write_outputs(args, perturbed, res.incumbent, res.trace, res.tree)
    return EXIT_OK


def cmd_restart(args):
    inst = _load_instance(args)
    if any(x is not None for x in (args.spec, args.xi, args.capacity)):
        inst = _perturbation(args).apply(inst)
    tree = SearchTree.for_instance(inst, args.seed)
    inc, trace = run_mcts(tree, inst, _search_params(args))
    _write_outputs(args, inst, inc, trace, tree)
    return EXIT_OK


def cmd_compare(args):
    if not args.seeds:
        raise UsageError("compare needs a nonempty --seeds list")
    if args.budget_iters is None:
        raise UsageError("compare needs --budget-iters")
    inst = _load_instance(args)
    sp = _search_params(args)
    if args.tree:
        nominal = read_snapshot(args.tree)
        check_topology(nominal, inst)
    elif args.nominal_iters:
        nominal = bench.solve_nominal(inst, replace(sp, max_iters=args.nominal_iters, max_ms=None))
    else:
        raise UsageError("compare needs --tree or --nominal-iters")
    rp = ReplanParams(args.k, args.rollouts)
    runs = []
    for seed in args.seeds:
        spec = _perturbation(args, seed)
        run = bench.compare_seed(nominal, inst, spec, seed, args.budget_iters, rp, sp)
        run.warm.write_csv(f"{args.out_prefix}.seed{seed}.warm.csv", timing=args.timing)
        run.cold.write_csv(f"{args.out_prefix}.seed{seed}.cold.csv", timing=args.timing)
        runs.append(run)
        log.info("seed %d: warm %s cold %s", seed, run.warm.final_cost, run.cold.final_cost)
    checkpoints = args.checkpoints or bench.default_checkpoints(args.budget_iters)
    rows = bench.aggregate(runs, checkpoints)
    Path(args.out_prefix + ".aggregate.csv").write_text(bench.aggregate_csv(rows))
    last = rows[-1]
    print(f"final median warm {last['warm_median']!r} cold {last['cold_median']!r}")
    return EXIT_OK


def cmd_oracle(args):
    inst = _load_instance(args)
    path = Path(args.out_prefix + ".solution")
    try:
        res = exact_solve(inst)
    except InfeasibleError:
        path.write_text(bench.format_solution(bench.Solution("infeasible")))
        raise
    sol = bench.solution_from_exact(inst, res)
    path.write_text(bench.format_solution(sol))
    print(f"cost {sol.cost!r}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "perturb": cmd_perturb,
    "replan": cmd_replan,
    "restart": cmd_restart,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CapExceeded as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CAP
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (TopologyError, ParseError, StructureError, ValueError, IndexError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
