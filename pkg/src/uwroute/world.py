"""Node deployment, random-walk mobility, geometry queries and per-node
neighbor-knowledge tables.

Coordinates: z is height above the sea floor, so depth = region_z - z.
Sinks sit on the surface (z = region_z, depth 0) and never move; sources are
sensor nodes that start on the bottom layer (z = 0).
"""

import csv
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator


@dataclass(frozen=True)
class NodePosition:
    x: float
    y: float
    z: float

    def distance_to(self, other: "NodePosition") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class RoutingKnowledge:
    """The advertised tuple <V-value, depth, residual energy>."""

    v_value: float
    depth_m: float
    residual_energy_j: float


class BoundedCache:
    """Insertion-ordered set with LRU eviction once `maxlen` is exceeded."""

    def __init__(self, maxlen: int = 1024):
        self.maxlen = maxlen
        self._items: dict = {}

    def add(self, item) -> None:
        if item in self._items:
            del self._items[item]
        self._items[item] = None
        if len(self._items) > self.maxlen:
            del self._items[next(iter(self._items))]

    def __contains__(self, item) -> bool:
        return item in self._items

    def __len__(self) -> int:
        return len(self._items)


@dataclass
class NodeState:
    """A sensor, source or sink node and everything the protocol knows at it."""

    id: int
    kind: str  # "sensor" | "source" | "sink"
    position: NodePosition
    region_z: float
    initial_energy_j: float
    residual_energy_j: float = field(default=-1.0)
    v_value: float = 0.0
    q_table: dict = field(default_factory=dict)  # neighbor id -> Q
    neighbor_knowledge: dict = field(default_factory=dict)  # id -> (RoutingKnowledge, last_heard)
    duplicate_cache: BoundedCache = field(default_factory=BoundedCache)
    forwarded_cache: BoundedCache = field(default_factory=BoundedCache)
    list_length: int = 2  # current priority-list length (suppression state)
    suppression_epoch: int = 0  # newest list-length directive applied
    pending: dict = field(default_factory=dict)  # packet key -> scheduled forward
    # energy ledger, owned by the engine
    alive: bool = True
    death_time_s: float | None = None
    tx_seconds: float = 0.0
    rx_seconds: float = 0.0
    consumed_j: float = 0.0

    def __post_init__(self):
        if self.residual_energy_j < 0:
            self.residual_energy_j = self.initial_energy_j

    @property
    def depth(self) -> float:
        return self.region_z - self.position.z

    @property
    def is_sink(self) -> bool:
        return self.kind == "sink"

    def routing_knowledge(self) -> RoutingKnowledge:
        return RoutingKnowledge(self.v_value, self.depth, self.residual_energy_j)


def deploy(config, rng: random.Random) -> list[NodeState]:
    """Place n_sensors sensors uniformly in the region box (the first
    n_sources of them as sources on the bottom layer) and n_sinks sinks on
    the surface. Deterministic for a given rng state.
    """
    lx, ly, lz = config.region_x_m, config.region_y_m, config.region_z_m
    if lx <= 0 or ly <= 0 or lz <= 0:
        raise ValueError(f"region must have positive volume, got {lx} x {ly} x {lz}")
    if config.n_sensors < 1 or config.n_sinks < 1:
        raise ValueError("need at least one sensor and one sink")
    if not 0 < config.n_sources <= config.n_sensors:
        raise ValueError(f"n_sources must be in [1, n_sensors], got {config.n_sources}")

    nodes = []
    for i in range(config.n_sensors):
        if i < config.n_sources:
            pos = NodePosition(rng.uniform(0, lx), rng.uniform(0, ly), 0.0)
            kind = "source"
        else:
            pos = NodePosition(rng.uniform(0, lx), rng.uniform(0, ly), rng.uniform(0, lz))
            kind = "sensor"
        nodes.append(NodeState(i, kind, pos, lz, config.initial_node_energy_j,
                               list_length=config.initial_list_length))
    for j in range(config.n_sinks):
        pos = NodePosition(rng.uniform(0, lx), rng.uniform(0, ly), lz)
        nodes.append(NodeState(config.n_sensors + j, "sink", pos, lz,
                               config.initial_node_energy_j,
                               list_length=config.initial_list_length))
    return nodes


def _reflect(coord: float, limit: float) -> float:
    # specular reflection into [0, limit]; loops in case of large overshoot
    while coord < 0.0 or coord > limit:
        if coord < 0.0:
            coord = -coord
        else:
            coord = 2.0 * limit - coord
    return coord


def random_direction(rng: random.Random) -> tuple[float, float, float]:
    """Uniform direction on the unit sphere."""
    while True:
        dx, dy, dz = rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1)
        norm = math.sqrt(dx * dx + dy * dy + dz * dz)
        if norm > 1e-12:
            return (dx / norm, dy / norm, dz / norm)


def random_walk_step(node: NodeState, speed_v: float, dt: float,
                     rng: random.Random, region: tuple[float, float, float]) -> NodePosition:
    """Move `node` a distance speed_v * dt in a freshly drawn random
    direction, reflecting at the region walls. Does not mutate the node.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if speed_v == 0.0:
        return node.position
    ux, uy, uz = random_direction(rng)
    step = speed_v * dt
    return NodePosition(
        _reflect(node.position.x + ux * step, region[0]),
        _reflect(node.position.y + uy * step, region[1]),
        _reflect(node.position.z + uz * step, region[2]),
    )


def neighbors_in_range(node: NodeState, all_nodes: Iterable[NodeState], r: float) -> list[int]:
    """Ids of all nodes within Euclidean distance r of `node`, excluding it."""
    if r <= 0:
        raise ValueError(f"range must be > 0, got {r}")
    px, py, pz = node.position.x, node.position.y, node.position.z
    r2 = r * r
    out = []
    for other in all_nodes:
        if other.id == node.id:
            continue
        dx = other.position.x - px
        dy = other.position.y - py
        dz = other.position.z - pz
        if dx * dx + dy * dy + dz * dz <= r2:
            out.append(other.id)
    return out


def update_neighbor_knowledge(node: NodeState, sender_id: int,
                              knowledge: RoutingKnowledge, now: float) -> None:
    """Replace the table entry for sender_id with fresh knowledge."""
    if sender_id == node.id:
        raise ValueError("a node does not record knowledge about itself")
    node.neighbor_knowledge[sender_id] = (knowledge, now)


def fresh_neighbors(node: NodeState, now: float,
                    staleness_s: float) -> Iterator[tuple[int, RoutingKnowledge]]:
    """Yield (id, knowledge) pairs not older than staleness_s, evicting
    expired entries as they are encountered.
    """
    expired = []
    for nid, (knowledge, heard) in node.neighbor_knowledge.items():
        if now - heard > staleness_s:
            expired.append(nid)
        else:
            yield nid, knowledge
    for nid in expired:
        del node.neighbor_knowledge[nid]


def dump_nodes_csv(nodes: Iterable[NodeState], path) -> None:
    """Write the deployment (id, kind, x, y, z, residual energy) as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "kind", "x_m", "y_m", "z_m", "residual_energy_j"])
        for n in nodes:
            writer.writerow([n.id, n.kind, repr(n.position.x), repr(n.position.y),
                             repr(n.position.z), repr(n.residual_energy_j)])
