"""MCTS task assignment, greedy routing and warm-restart replanning for the
multi-commodity pickup-and-delivery vehicle routing problem."""

from .instance import (
    AgentType,
    FleetSpec,
    Instance,
    Location,
    TaskPair,
    build_pd_instance,
    euclidean_distance,
    load_eil51,
    make_instance,
    parse_tsplib,
    validate_instance,
)
from .oracle import ExactResult, exact_mpdtsp, exact_solve
from .replan import (
    PerturbationSpec,
    ReplanParams,
    apply_capacity_perturbation,
    apply_spatial_perturbation,
    clone_topology,
    rank_leaves,
    reevaluate_leaves,
    replan,
)
from .routing import PayloadState, Tour, check_tour_feasible, feasible_next, nnh_tour, tour_cost
from .search import (
    SearchParams,
    SearchTree,
    assignment_cost,
    backpropagate,
    expand,
    lcb_select,
    rollout,
    run_mcts,
)
from .trace import ConvergenceTrace

__version__ = "0.1.0"
