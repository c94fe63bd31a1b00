"""Frozen fixture topologies for the analytical-model cross-checks.

All use h = 20 (holding step k = 0.01 s with t_max = 0.1 s) so that holding
contributes little next to propagation, and link probabilities >= 0.85 so the
delivery-weighted delay recursion stays close to the true conditional mean.
z grows toward the surface; sinks sit at the region top.
"""

import random

from uwroute.analysis import StaticTopology
from uwroute.qlfr import HoldingParams

HOLDING = HoldingParams(h=20, t_max=0.1)


def chain3() -> tuple[StaticTopology, int]:
    """source 0 -> relay 1 -> sink 2, vertical line, 120 m spacing."""
    topo = StaticTopology(
        kinds={0: "source", 1: "sensor", 2: "sink"},
        positions={0: (0.0, 0.0, 0.0), 1: (0.0, 0.0, 120.0), 2: (0.0, 0.0, 240.0)},
        candidates={0: (1,), 1: (2,)},
        link_prob={(0, 1): 0.95, (1, 2): 0.97},
        neighbors={0: (1,), 1: (0, 2), 2: (1,)},
        gen_packets={0: 100.0},
        holding=HOLDING,
        region_z_m=240.0,
    )
    return topo, 0


def diamond4() -> tuple[StaticTopology, int]:
    """source 0 with candidates [1, 2]; both relays reach sink 3."""
    topo = StaticTopology(
        kinds={0: "source", 1: "sensor", 2: "sensor", 3: "sink"},
        positions={
            0: (0.0, 0.0, 0.0),
            1: (40.0, 0.0, 110.0),
            2: (-60.0, 0.0, 100.0),
            3: (0.0, 0.0, 220.0),
        },
        candidates={0: (1, 2), 1: (3,), 2: (3,)},
        link_prob={(0, 1): 0.9, (0, 2): 0.88, (1, 3): 0.95, (2, 3): 0.92},
        neighbors={0: (1, 2), 1: (0, 2, 3), 2: (0, 1, 3), 3: (1, 2)},
        gen_packets={0: 100.0},
        holding=HOLDING,
        region_z_m=220.0,
    )
    return topo, 0


def random_dag10(seed: int = 42) -> tuple[StaticTopology, int]:
    """10 nodes in a 300 m column: one source at the bottom, one sink on top,
    8 relays at seeded random positions; up to 3 candidates per node, chosen
    among strictly-shallower nodes within 160 m, nearest-the-surface first.
    Link probabilities seeded in [0.95, 0.995].
    """
    rng = random.Random(seed)
    positions = {0: (0.0, 0.0, 0.0), 9: (20.0, -10.0, 300.0)}
    kinds = {0: "source", 9: "sink"}
    for nid in range(1, 9):
        positions[nid] = (rng.uniform(-80, 80), rng.uniform(-80, 80),
                          30.0 * nid + rng.uniform(-10, 10))
        kinds[nid] = "sensor"
    import math
    candidates = {}
    link_prob = {}
    neighbors = {}
    ids = sorted(positions)
    for nid in ids:
        neighbors[nid] = tuple(o for o in ids if o != nid
                               and math.dist(positions[nid], positions[o]) <= 160.0)
    for nid in ids:
        if kinds[nid] == "sink":
            continue
        shallower = [o for o in neighbors[nid] if positions[o][2] > positions[nid][2]]
        shallower.sort(key=lambda o: -positions[o][2])
        candidates[nid] = tuple(shallower[:3])
        for c in candidates[nid]:
            link_prob[(nid, c)] = rng.uniform(0.95, 0.995)
    topo = StaticTopology(
        kinds=kinds, positions=positions, candidates=candidates,
        link_prob=link_prob, neighbors=neighbors, gen_packets={0: 100.0},
        holding=HOLDING, region_z_m=300.0,
    )
    return topo, 0


ALL_FIXTURES = {"chain3": chain3, "diamond4": diamond4, "random_dag10": random_dag10}
