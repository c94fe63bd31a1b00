"""Q-learning arithmetic for routing decisions.

Reward = -(energy cost of sender) - (energy cost of neighbor) - (depth cost),
each cost in [0, 1], so a single-step reward lies in [-3, 0]. Q-values are
updated with the standard one-step rule and therefore stay within
[-3 / (1 - gamma), 0] for gamma < 1.
"""

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping


@dataclass(frozen=True)
class QParams:
    """gamma: discount factor in [0, 1]; alpha: learning rate in (0, 1]."""

    gamma: float = 0.8
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


def energy_cost(e_res: float, e_ini: float) -> float:
    """Residual-energy cost 1 - e_res/e_ini: 0 at full charge, 1 at empty."""
    if e_ini <= 0:
        raise ValueError(f"initial energy must be > 0, got {e_ini}")
    if not 0.0 <= e_res <= e_ini:
        raise ValueError(f"residual energy {e_res} outside [0, {e_ini}]")
    return 1.0 - e_res / e_ini


def depth_cost(depth_sender: float, depth_neighbor: float, d_max: float) -> float:
    """Depth cost 0.5 * (1 - d/d_max) with d = depth_sender - depth_neighbor.

    0 when the neighbor is exactly d_max shallower, 0.5 at equal depth,
    1 when d_max deeper.
    """
    if d_max <= 0:
        raise ValueError(f"d_max must be > 0, got {d_max}")
    d = depth_sender - depth_neighbor
    if abs(d) > d_max:
        raise ValueError(f"depth difference {d} exceeds d_max {d_max}")
    return 0.5 * (1.0 - d / d_max)


def reward(sender: "NodeState", neighbor_knowledge: "RoutingKnowledge", d_max: float) -> float:
    """One-step reward for forwarding from `sender` to the advertised
    neighbor: -c_e(sender) - c_e(neighbor) - c_d(sender, neighbor), in [-3, 0].

    The neighbor's energy cost uses its advertised residual energy against
    the sender's initial energy (all nodes start with the same budget).
    """
    ce_sender = energy_cost(sender.residual_energy_j, sender.initial_energy_j)
    ce_neighbor = energy_cost(
        min(neighbor_knowledge.residual_energy_j, sender.initial_energy_j),
        sender.initial_energy_j,
    )
    cd = depth_cost(sender.depth, neighbor_knowledge.depth_m, d_max)
    return -ce_sender - ce_neighbor - cd


def q_update(q_old: float, r: float, v_next: float, params: QParams) -> float:
    """One-step Q update: alpha * (r + gamma * v_next) + (1 - alpha) * q_old."""
    return params.alpha * (r + params.gamma * v_next) + (1.0 - params.alpha) * q_old


def v_value(q_table: Mapping[int, float]) -> float:
    """State value: max over the Q-table entries, 0 for an empty table.

    Zero is the optimistic initial value; rewards are never positive, so an
    untried state cannot look worse than a tried one.
    """
    if not q_table:
        return 0.0
    return max(q_table.values())


def q_bounds(params: QParams) -> tuple[float, float]:
    """Valid Q-value interval [-3/(1-gamma), 0] (gamma < 1), else (-inf, 0]."""
    if params.gamma >= 1.0:
        return (float("-inf"), 0.0)
    return (-3.0 / (1.0 - params.gamma), 0.0)


def dump_q_tables_csv(nodes: Iterable, path) -> None:
    """Write every (node, neighbor, Q) triple as CSV for convergence plots."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "neighbor", "q_value"])
        for node in nodes:
            for neighbor, q in node.q_table.items():
                writer.writerow([node.id, neighbor, repr(q)])
