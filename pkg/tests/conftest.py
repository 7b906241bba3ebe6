import math

import numpy as np
import pytest

from pdvrp_mcts.instance import FleetSpec, make_instance

SQRT5 = math.sqrt(5.0)
TINY4_OPT = 5.0 + SQRT5

_ACCEPTANCE = []


@pytest.fixture
def tiny4():
    """depot (0,0); P1 (1,0) -> D1 (2,0); P2 (0,1) -> D2 (0,2); two agents of capacity 2."""
    return make_instance([(0, 0), (1, 0), (0, 1), (2, 0), (0, 2)], FleetSpec.uniform(2, 2))


def tiny4_with(n_agents=2, capacity=2):
    return make_instance([(0, 0), (1, 0), (0, 1), (2, 0), (0, 2)], FleetSpec.uniform(n_agents, capacity))


def random_instance(rng, n_tasks, n_agents=1, capacity=None, grid=None):
    """Random instance on the unit square, or on distinct points of a ``grid`` x ``grid`` lattice."""
    m = 2 * n_tasks + 1
    if grid is None:
        pts = rng.random((m, 2)) * 100
    else:
        cells = rng.choice(grid * grid, size=m, replace=False)
        pts = np.stack([cells % grid, cells // grid], axis=1).astype(float)
    if capacity is None:
        capacity = int(rng.integers(1, n_tasks + 1))
    return make_instance([tuple(p) for p in pts], FleetSpec.uniform(n_agents, capacity))


def record_acceptance(name, ok, detail=""):
    _ACCEPTANCE.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
