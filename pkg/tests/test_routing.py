import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdvrp_mcts import _kernels
from pdvrp_mcts.instance import FleetSpec, Instance, TaskPair, make_instance
from pdvrp_mcts.oracle import brute_force_mpdtsp
from pdvrp_mcts.routing import (
    InfeasibleError,
    PayloadState,
    check_tour_feasible,
    feasible_next,
    nnh_tour,
    tour_cost,
)

from conftest import TINY4_OPT, random_instance

# tiny4 node ids: P1=1, P2=2, D1=3, D2=4


def test_feasible_next_capacity_blocks_pickup(tiny4):
    payload = PayloadState(frozenset({1}), 1.0)
    assert feasible_next(tiny4, [0, 1], payload, {3, 2}, 1) == {3}


def test_feasible_next_delivery_before_pickup(tiny4):
    assert feasible_next(tiny4, [0], PayloadState(), {3}, 1) == set()


def test_feasible_next_both_pickups(tiny4):
    assert feasible_next(tiny4, [0], PayloadState(), {1, 2}, 10) == {1, 2}


def test_payload_after(tiny4):
    p = PayloadState().after(tiny4, 1).after(tiny4, 2)
    assert p == PayloadState(frozenset({1, 2}), 2.0)
    assert p.after(tiny4, 3) == PayloadState(frozenset({2}), 1.0)


def test_check_canonical_tour(tiny4):
    assert check_tour_feasible([0, 1, 3, 0], tiny4, 1) == []


def test_check_inverted_pair(tiny4):
    v = check_tour_feasible([0, 3, 1, 0], tiny4, 1)
    assert [(x.step, x.kind) for x in v] == [(1, "precedence")]


def test_check_capacity(tiny4):
    v = check_tour_feasible([0, 1, 2, 3, 4, 0], tiny4, 1)
    assert [(x.step, x.kind) for x in v] == [(2, "capacity")]


def test_check_structure(tiny4):
    kinds = {x.kind for x in check_tour_feasible([1, 3, 0], tiny4, 1)}
    assert "structure" in kinds
    missing = check_tour_feasible([0, 1, 3, 0], tiny4, 2, assigned_tasks=[1, 2])
    assert {x.kind for x in missing} == {"structure"}
    twice = check_tour_feasible([0, 1, 3, 1, 0], tiny4, 2)
    assert any("twice" in x.detail for x in twice)


def test_tour_cost_examples(tiny4):
    line = make_instance([(0, 0), (1, 0), (2, 0)], FleetSpec.uniform(1, 1))
    assert tour_cost([0, 1, 2, 0], line.distances) == 4.0
    assert tour_cost([0, 0], line.distances) == 0.0
    assert tour_cost([0, 1, 3, 2, 4, 0], tiny4.distances) == pytest.approx(TINY4_OPT, rel=1e-12)


def test_tiny4_optimum_by_enumeration(tiny4):
    # independent oracle: every precedence-feasible order of the four task nodes
    costs = []
    for perm in itertools.permutations([1, 2, 3, 4]):
        if perm.index(1) < perm.index(3) and perm.index(2) < perm.index(4):
            costs.append(tour_cost([0, *perm, 0], tiny4.distances))
    assert len(costs) == 6
    assert min(costs) == pytest.approx(5 + np.sqrt(5), rel=1e-12)


@pytest.mark.parametrize("capacity", [2, 1])
def test_nnh_tiny4_both(tiny4, capacity):
    tour = nnh_tour(tiny4, {1, 2}, capacity)
    assert tour.visits == (0, 1, 3, 2, 4, 0)
    assert tour.cost == pytest.approx(TINY4_OPT, rel=1e-12)
    assert check_tour_feasible(tour.visits, tiny4, capacity) == []


def test_nnh_single_task(tiny4):
    tour = nnh_tour(tiny4, {1}, 2)
    assert tour.visits == (0, 1, 3, 0)
    assert tour.cost == 4.0


def test_nnh_empty(tiny4):
    tour = nnh_tour(tiny4, set(), 2)
    assert tour.visits == (0, 0) and tour.cost == 0.0


def test_nnh_infeasible_capacity(tiny4):
    with pytest.raises(InfeasibleError):
        nnh_tour(tiny4, {1}, 0.5)


def test_nnh_dead_end_starts_are_skipped():
    # masses 1 and 2, capacity 2: starting with the light pickup and then
    # choosing the heavy one is impossible, so greedy must deliver first.
    base = make_instance([(0, 0), (1, 0), (5, 0), (1, 1), (5, 1)], FleetSpec.uniform(1, 2))
    inst = Instance(base.locations, (TaskPair(1, 1, 3, 1.0), TaskPair(2, 2, 4, 2.0)), base.fleet)
    tour = nnh_tour(inst, {1, 2}, 2)
    assert check_tour_feasible(tour.visits, inst, 2) == []
    with pytest.raises(InfeasibleError):
        nnh_tour(inst, {1, 2}, 1.5)


def test_nnh_tie_break_lowest_node_id():
    # P1 and P2 equidistant from the depot; with symmetric deliveries both
    # starts tie and the lower pickup id wins.
    inst = make_instance([(0, 0), (1, 0), (-1, 0), (2, 0), (-2, 0)], FleetSpec.uniform(1, 2))
    assert nnh_tour(inst, {1, 2}, 2).visits[1] == 1


def test_compiled_matches_python(tiny4):
    rng = np.random.default_rng(7)
    for _ in range(40):
        inst = random_instance(rng, int(rng.integers(1, 7)), capacity=int(rng.integers(1, 4)))
        pick, drop, mass = inst.task_arrays()
        idx = np.arange(inst.n_tasks)
        nodes, is_pick, pair, lmass = _kernels.build_local(idx, pick, drop, mass)
        a, b = np.empty(nodes.size, np.int64), np.empty(nodes.size, np.int64)
        cap = float(inst.fleet.capacities()[0])
        c1 = _kernels.nnh_local(inst.distances, nodes, is_pick, pair, lmass, cap, a)
        c2 = _kernels.nnh_local.py_func(inst.distances, nodes, is_pick, pair, lmass, cap, b)
        assert c1 == c2 and np.array_equal(a, b)


def test_nnh_fuzz_feasible_and_never_dead_ends():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        n = int(rng.integers(1, 9))
        inst = random_instance(rng, n, capacity=int(rng.integers(1, n + 1)))
        tasks = {int(t) for t in rng.choice(np.arange(1, n + 1), size=int(rng.integers(1, n + 1)), replace=False)}
        cap = inst.fleet.capacities()[0]
        tour = nnh_tour(inst, tasks, cap)
        assert check_tour_feasible(tour.visits, inst, cap, tasks) == []
        assert tour.cost == tour_cost(tour.visits, inst.distances)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_nnh_not_below_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n)
    cap = inst.fleet.capacities()[0]
    tour = nnh_tour(inst, range(1, n + 1), cap)
    assert tour.cost >= brute_force_mpdtsp(inst, range(1, n + 1), cap) * (1 - 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=2, max_size=12))
def test_tour_cost_reversal_invariant(seq):
    inst = random_instance(np.random.default_rng(len(seq)), 4)
    assert tour_cost(seq, inst.distances) == pytest.approx(tour_cost(seq[::-1], inst.distances), rel=1e-12)
