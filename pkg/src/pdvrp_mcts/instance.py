"""Problem data for the multi-commodity pickup-and-delivery VRP.

Node layout: id 0 is the depot (it also closes every tour), the remaining
ids are pickups and deliveries. Each task carries one commodity from its
pickup node to its paired delivery node.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)

DEPOT = 0


class ParseError(ValueError):
    """Raised for malformed TSPLIB or instance files."""


class StructureError(ValueError):
    """Raised when coordinates cannot be split into depot + pickup/delivery pairs."""


@dataclass(frozen=True)
class Location:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class TaskPair:
    task_id: int
    pickup_node: int
    delivery_node: int
    mass: float = 1.0


@dataclass(frozen=True)
class AgentType:
    type_id: int
    capacity: float
    count: int


@dataclass(frozen=True)
class FleetSpec:
    agent_types: Tuple[AgentType, ...]

    @classmethod
    def uniform(cls, n_agents: int, capacity: float) -> "FleetSpec":
        """One single-agent type per agent, all with the same capacity."""
        return cls(tuple(AgentType(t + 1, float(capacity), 1) for t in range(n_agents)))

    @property
    def n_agents(self) -> int:
        return sum(t.count for t in self.agent_types)

    def capacities(self) -> List[float]:
        """Capacity of each agent in flat index order (type by type)."""
        caps = []
        for t in self.agent_types:
            caps.extend([t.capacity] * t.count)
        return caps

    def agent_label(self, flat: int) -> Tuple[int, int]:
        """(type_id, index within type) for a flat agent index."""
        for t in self.agent_types:
            if flat < t.count:
                return t.type_id, flat
            flat -= t.count
        raise IndexError("agent index out of range")


def euclidean_distance(a: Location, b: Location) -> float:
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2)


def distance_matrix(locations: Sequence[Location]) -> np.ndarray:
    xy = np.array([[loc.x, loc.y] for loc in locations], dtype=float)
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
    dist.flags.writeable = False
    return dist


@dataclass(frozen=True, eq=False)
class Instance:
    """An immutable m-PDVRP instance.

    ``locations[i]`` is node ``i``; ``distances`` is indexed the same way.
    """

    locations: Tuple[Location, ...]
    tasks: Tuple[TaskPair, ...]
    fleet: FleetSpec
    distances: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.distances is None:
            object.__setattr__(self, "distances", distance_matrix(self.locations))

    @property
    def depot(self) -> Location:
        return self.locations[DEPOT]

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_agents(self) -> int:
        return self.fleet.n_agents

    def capacities(self) -> np.ndarray:
        return np.array(self.fleet.capacities(), dtype=float)

    def task_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pickup nodes, delivery nodes and masses, indexed by task position."""
        pick = np.array([t.pickup_node for t in self.tasks], dtype=np.int64)
        drop = np.array([t.delivery_node for t in self.tasks], dtype=np.int64)
        mass = np.array([t.mass for t in self.tasks], dtype=float)
        return pick, drop, mass

    def with_locations(self, locations: Sequence[Location]) -> "Instance":
        return Instance(tuple(locations), self.tasks, self.fleet)

    def with_fleet(self, fleet: FleetSpec) -> "Instance":
        return Instance(self.locations, self.tasks, fleet, self.distances)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.locations == other.locations
            and self.tasks == other.tasks
            and self.fleet == other.fleet
            and np.array_equal(self.distances, other.distances)
        )

    __hash__ = None


# TSPLIB

_TSPLIB_KNOWN = {"NAME", "TYPE", "COMMENT", "DIMENSION", "EDGE_WEIGHT_TYPE"}


def parse_tsplib(text: str) -> List[Location]:
    """Read the node coordinates of a EUC_2D TSPLIB file.

    File ids are 1-based; returned ids are 0-based in file order.
    """
    dimension = None
    weight_type = None
    coords: List[Location] = []
    in_coords = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        if in_coords:
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 'id x y', got {raw!r}")
            try:
                x, y = float(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric coordinate in {raw!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError(f"line {lineno}: non-finite coordinate in {raw!r}")
            coords.append(Location(len(coords), x, y))
            continue
        if line.startswith("NODE_COORD_SECTION"):
            in_coords = True
            continue
        if ":" not in line:
            raise ParseError(f"line {lineno}: malformed header {raw!r}")
        key, _, value = line.partition(":")
        key, value = key.strip().upper(), value.strip()
        if key == "DIMENSION":
            try:
                dimension = int(value)
            except ValueError:
                raise ParseError(f"line {lineno}: bad DIMENSION {value!r}") from None
        elif key == "EDGE_WEIGHT_TYPE":
            weight_type = value
        if key not in _TSPLIB_KNOWN:
            log.warning("ignoring TSPLIB keyword %s", key)
    if dimension is None:
        raise ParseError("missing DIMENSION header")
    if weight_type is not None and weight_type != "EUC_2D":
        raise ParseError(f"unsupported EDGE_WEIGHT_TYPE {weight_type!r}")
    if not in_coords:
        raise ParseError("missing NODE_COORD_SECTION")
    if len(coords) != dimension:
        raise ParseError(f"DIMENSION is {dimension} but {len(coords)} coordinates were given")
    return coords


def load_eil51() -> List[Location]:
    path = Path(__file__).with_name("data") / "eil51.tsp"
    return parse_tsplib(path.read_text())


def build_pd_instance(coords: Sequence[Location], fleet: FleetSpec) -> Instance:
    """Depot first, then n pickups, then n deliveries paired in order; unit masses."""
    m = len(coords)
    if m < 3 or m % 2 == 0:
        raise StructureError(f"need 2n+1 coordinates with n >= 1, got {m}")
    n = (m - 1) // 2
    locations = tuple(Location(i, float(c.x), float(c.y)) for i, c in enumerate(coords))
    tasks = tuple(TaskPair(i, i, n + i, 1.0) for i in range(1, n + 1))
    return Instance(locations, tasks, fleet)


def validate_instance(inst: Instance) -> List[str]:
    """List every structural violation; an empty list means the instance is sound."""
    problems = []
    n = inst.n_tasks
    if n < 1:
        problems.append("no tasks")
    if len(inst.locations) != 2 * n + 1:
        problems.append(f"expected {2 * n + 1} locations, got {len(inst.locations)}")
    for i, loc in enumerate(inst.locations):
        if loc.id != i:
            problems.append(f"location {i} carries id {loc.id}")
        if not (math.isfinite(loc.x) and math.isfinite(loc.y)):
            problems.append(f"non-finite coordinate, node {i}")
    seen = {}
    for t in inst.tasks:
        if not t.mass > 0:
            problems.append(f"nonpositive mass, task {t.task_id}")
        if t.pickup_node == t.delivery_node:
            problems.append(f"pickup equals delivery, task {t.task_id}")
        for node in (t.pickup_node, t.delivery_node):
            if node == DEPOT:
                problems.append(f"task {t.task_id} uses the depot")
            elif not 0 < node < len(inst.locations):
                problems.append(f"task {t.task_id} node {node} out of range")
            elif node in seen:
                problems.append(f"node {node} shared by tasks {seen[node]} and {t.task_id}")
            else:
                seen[node] = t.task_id
    ids = [t.task_id for t in inst.tasks]
    if ids != list(range(1, n + 1)):
        problems.append(f"task ids must be 1..{n} in order")
    if not inst.fleet.agent_types:
        problems.append("empty fleet")
    for a in inst.fleet.agent_types:
        if not a.capacity > 0:
            problems.append(f"nonpositive capacity, agent type {a.type_id}")
        if a.count < 1:
            problems.append(f"nonpositive count, agent type {a.type_id}")
    d = np.asarray(inst.distances)
    if d.shape != (len(inst.locations),) * 2:
        problems.append(f"distance matrix has shape {d.shape}")
    else:
        if not np.array_equal(d, d.T):
            problems.append("distance matrix not symmetric")
        if np.any(np.diag(d) != 0):
            problems.append("distance matrix has nonzero diagonal")
        if np.any(d < 0):
            problems.append("distance matrix has negative entries")
    return problems


# Instance file format

def format_instance(inst: Instance) -> str:
    lines = ["# m-PDVRP instance", f"tasks {inst.n_tasks}", "# fleet: type capacity count"]
    lines += [f"agent {a.type_id} {a.capacity!r} {a.count}" for a in inst.fleet.agent_types]
    lines.append("# coordinates: id x y")
    lines += [f"node {loc.id} {loc.x!r} {loc.y!r}" for loc in inst.locations]
    lines.append("# pairs: task pickup delivery mass")
    lines += [f"pair {t.task_id} {t.pickup_node} {t.delivery_node} {t.mass!r}" for t in inst.tasks]
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> Instance:
    n = None
    agents, nodes, pairs = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            kind = parts[0]
            if kind == "tasks" and len(parts) == 2:
                n = int(parts[1])
            elif kind == "agent" and len(parts) == 4:
                agents.append(AgentType(int(parts[1]), float(parts[2]), int(parts[3])))
            elif kind == "node" and len(parts) == 4:
                nodes.append(Location(int(parts[1]), float(parts[2]), float(parts[3])))
            elif kind == "pair" and len(parts) == 5:
                pairs.append(TaskPair(int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])))
            else:
                raise ParseError(f"line {lineno}: unrecognised record {raw!r}")
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"line {lineno}: bad number in {raw!r}") from None
    if n is None:
        raise ParseError("missing 'tasks' header")
    if len(pairs) != n:
        raise ParseError(f"header declares {n} tasks but {len(pairs)} pairs were given")
    nodes.sort(key=lambda loc: loc.id)
    return Instance(tuple(nodes), tuple(pairs), FleetSpec(tuple(agents)))


def write_instance(inst: Instance, path) -> None:
    Path(path).write_text(format_instance(inst))


def read_instance(path) -> Instance:
    return parse_instance(Path(path).read_text())


def make_instance(points: Iterable[Tuple[float, float]], fleet: FleetSpec) -> Instance:
    """Convenience: build from bare (x, y) pairs."""
    return build_pd_instance([Location(i, x, y) for i, (x, y) in enumerate(points)], fleet)
