"""Closed-form recursive performance model on a frozen topology snapshot.

Given fixed positions, per-node ordered candidate lists and per-link delivery
probabilities, computes the expected delivery probability to any sink, the
expected end-to-end delay, per-node traffic and energy, and the network
lifetime. It assumes the candidates of a packet coordinate perfectly: the
highest-priority candidate whose link succeeded forwards, everyone else stays
silent. Used as an independent oracle against Monte-Carlo simulation of the
same snapshot.

The delay recursion weights each hop by the probability that the hop's
forwarder is elected, which does not condition on eventual delivery; both the
raw (delivery-weighted) value and the normalized value raw / P(delivery) are
exposed, the latter being comparable to a simulator's mean delay of delivered
packets.
"""

import json
import math
from dataclasses import dataclass

from . import channel as chan
from .qlfr import HoldingParams, holding_time


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class StaticTopology:
    kinds: dict  # id -> "sensor" | "source" | "sink"
    positions: dict  # id -> (x, y, z); z increases toward the surface
    candidates: dict  # id -> ordered tuple of candidate ids (empty for sinks)
    link_prob: dict  # (sender, candidate) -> delivery probability
    neighbors: dict  # id -> tuple of geometric neighbor ids (overhearing)
    gen_packets: dict  # source id -> packets generated over the horizon
    holding: HoldingParams
    sound_speed_mps: float = 1500.0
    tx_power_w: float = 2.0
    rx_power_w: float = 0.5
    seconds_per_packet: float = 0.0512
    region_z_m: float = 500.0

    def __post_init__(self):
        for sender, cands in self.candidates.items():
            if len(set(cands)) != len(cands):
                raise TopologyError(f"duplicate candidate in list of node {sender}")
            for c in cands:
                if (sender, c) not in self.link_prob:
                    raise TopologyError(f"missing link probability for {(sender, c)}")
                p = self.link_prob[(sender, c)]
                if not 0.0 <= p <= 1.0:
                    raise TopologyError(f"link probability {p} for {(sender, c)} not in [0, 1]")

    def depth(self, node: int) -> float:
        return self.region_z_m - self.positions[node][2]

    def distance(self, a: int, b: int) -> float:
        return math.dist(self.positions[a], self.positions[b])

    def is_sink(self, node: int) -> bool:
        return self.kinds[node] == "sink"

    def senders_of(self, node: int) -> list[tuple[int, int]]:
        """(sender, 1-indexed priority of `node` in sender's list) pairs."""
        out = []
        for sender, cands in self.candidates.items():
            if node in cands:
                out.append((sender, cands.index(node) + 1))
        return out


def candidate_forward_prob(p_list, j: int) -> float:
    """Probability that the j-th candidate (1-indexed) forwards: its own link
    succeeds and every higher-priority link failed."""
    if j < 1 or j > len(p_list):
        raise ValueError(f"candidate index {j} outside 1..{len(p_list)}")
    prob = p_list[j - 1]
    for k in range(j - 1):
        prob *= 1.0 - p_list[k]
    return prob


def one_hop_delivery_prob(p_list) -> float:
    """Probability at least one candidate receives: 1 - prod(1 - p)."""
    miss = 1.0
    for p in p_list:
        miss *= 1.0 - p
    return 1.0 - miss


def _link_p_vector(topo: StaticTopology, sender: int) -> list[float]:
    return [topo.link_prob[(sender, c)] for c in topo.candidates[sender]]


def forward_prob(topo: StaticTopology, sender: int, candidate: int) -> float:
    """P(sender's transmission is forwarded by this particular candidate)."""
    cands = topo.candidates[sender]
    return candidate_forward_prob(_link_p_vector(topo, sender), cands.index(candidate) + 1)


def delivery_prob_to_sink(topo: StaticTopology, node: int, _memo=None, _stack=None) -> float:
    """Recursive delivery probability from `node` to any sink; 1 at sinks,
    0 in a void. Raises TopologyError on a candidate cycle."""
    if _memo is None:
        _memo, _stack = {}, set()
    if topo.is_sink(node):
        return 1.0
    if node in _memo:
        return _memo[node]
    if node in _stack:
        raise TopologyError(f"candidate graph contains a cycle through node {node}")
    _stack.add(node)
    total = 0.0
    for cand in topo.candidates.get(node, ()):
        total += forward_prob(topo, node, cand) * delivery_prob_to_sink(topo, cand, _memo, _stack)
    _stack.discard(node)
    _memo[node] = total
    return total


def outgoing_traffic(topo: StaticTopology) -> dict:
    """Expected packets transmitted per node: own generation plus the inbound
    share of every sender's traffic. Sinks absorb and never transmit."""
    order = sorted(topo.candidates, key=lambda n: topo.depth(n), reverse=True)
    traffic = {nid: float(topo.gen_packets.get(nid, 0.0)) for nid in topo.kinds}
    for sender in order:
        if topo.is_sink(sender):
            continue
        for cand in topo.candidates[sender]:
            if topo.depth(cand) >= topo.depth(sender):
                raise TopologyError(
                    f"candidate {cand} of node {sender} is not strictly shallower")
            if not topo.is_sink(cand):
                traffic[cand] += forward_prob(topo, sender, cand) * traffic[sender]
    for sink in topo.kinds:
        if topo.is_sink(sink):
            traffic[sink] = 0.0
    return traffic


def expected_holding_time(topo: StaticTopology, node: int, traffic: dict | None = None) -> float:
    """Expected holding time before `node` transmits one packet.

    Per inbound sender the expectation is tau(priority) * P(forwarded by
    node); with several senders the terms are averaged with weights
    proportional to each sender's traffic (uniform when no sender carries
    traffic), so the result stays a proper expectation.
    """
    senders = topo.senders_of(node)
    if not senders:
        return 0.0
    if traffic is None:
        traffic = outgoing_traffic(topo)
    weights = [traffic[s] for s, _ in senders]
    total_w = sum(weights)
    if total_w <= 0.0:
        weights = [1.0] * len(senders)
        total_w = float(len(senders))
    expected = 0.0
    for (sender, position), w in zip(senders, weights):
        tau = holding_time(position, topo.holding)
        expected += (w / total_w) * tau * forward_prob(topo, sender, node)
    return expected


def hop_delay(topo: StaticTopology, sender: int, candidate: int,
              traffic: dict | None = None) -> float:
    """One-hop latency: the sender's expected holding time plus propagation."""
    return (expected_holding_time(topo, sender, traffic)
            + topo.distance(sender, candidate) / topo.sound_speed_mps)


def expected_delay_to_sink(topo: StaticTopology, node: int,
                           conditional: bool = False) -> float:
    """Recursive end-to-end delay from `node` to a sink; 0 at sinks.

    conditional=False returns the raw delivery-weighted recursion;
    conditional=True divides by the delivery probability, giving the value
    comparable to a simulated mean over delivered packets (NaN in a void).
    """
    traffic = outgoing_traffic(topo)
    memo: dict = {}
    stack: set = set()

    def raw(n: int) -> float:
        if topo.is_sink(n):
            return 0.0
        if n in memo:
            return memo[n]
        if n in stack:
            raise TopologyError(f"candidate graph contains a cycle through node {n}")
        stack.add(n)
        total = 0.0
        for cand in topo.candidates.get(n, ()):
            total += (hop_delay(topo, n, cand, traffic) + raw(cand)) * forward_prob(topo, n, cand)
        stack.discard(n)
        memo[n] = total
        return total

    value = raw(node)
    if not conditional:
        return value
    p = delivery_prob_to_sink(topo, node)
    return value / p if p > 0.0 else float("nan")


def node_energy(topo: StaticTopology, node: int, traffic: dict | None = None) -> float:
    """Expected energy burnt at `node`: own transmissions plus overhearing
    every geometric neighbor's traffic. Sinks are surface-powered: 0."""
    if topo.is_sink(node):
        return 0.0
    if traffic is None:
        traffic = outgoing_traffic(topo)
    spp = topo.seconds_per_packet
    energy = traffic[node] * spp * topo.tx_power_w
    for nb in topo.neighbors.get(node, ()):
        energy += traffic[nb] * spp * topo.rx_power_w
    return energy


def network_lifetime(topo: StaticTopology, run_time_s: float, initial_energy_j: float) -> float:
    """Minimum over sensor nodes of initial energy divided by drain rate;
    infinity when nothing consumed any energy."""
    traffic = outgoing_traffic(topo)
    lifetimes = []
    for nid in topo.kinds:
        if topo.is_sink(nid):
            continue
        e = node_energy(topo, nid, traffic)
        if e > 0.0:
            lifetimes.append(initial_energy_j * run_time_s / e)
    return min(lifetimes) if lifetimes else float("inf")


def load_snapshot(source) -> StaticTopology:
    """Build a StaticTopology from an engine snapshot (dict or JSON path).
    Link probabilities are recomputed from positions and the recorded channel
    parameters; neighbor sets from positions and the transmission range."""
    if isinstance(source, dict):
        snap = source
    else:
        with open(source) as fh:
            snap = json.load(fh)
    params = snap["params"]
    cp = chan.ChannelParams(**params["channel"])
    entries = snap["nodes"]
    kinds = {e["id"]: e["kind"] for e in entries}
    positions = {e["id"]: (e["x"], e["y"], e["z"]) for e in entries}
    candidates = {e["id"]: tuple(e["candidates"]) for e in entries if e["kind"] != "sink"}
    gen = {e["id"]: e["generated"] for e in entries if e.get("generated", 0) > 0}
    r = params["tx_range_m"]
    neighbors: dict = {}
    link_prob: dict = {}
    ids = sorted(kinds)
    for i in ids:
        nb = []
        for j in ids:
            if i != j and math.dist(positions[i], positions[j]) <= r:
                nb.append(j)
        neighbors[i] = tuple(nb)
    for sender, cands in candidates.items():
        for c in cands:
            link_prob[(sender, c)] = chan.packet_delivery_prob(
                math.dist(positions[sender], positions[c]), cp)
    region_z = max((p[2] for p in positions.values()), default=0.0)
    return StaticTopology(
        kinds=kinds, positions=positions, candidates=candidates,
        link_prob=link_prob, neighbors=neighbors, gen_packets=gen,
        holding=HoldingParams(params["holding_h"],
                              r / params["sound_speed_mps"]),
        sound_speed_mps=params["sound_speed_mps"],
        tx_power_w=params["tx_power_w"], rx_power_w=params["rx_power_w"],
        seconds_per_packet=params["seconds_per_packet"],
        region_z_m=region_z,
    )


def per_node_report(topo: StaticTopology, run_time_s: float,
                    initial_energy_j: float) -> list[dict]:
    """One record per node: delivery probability, conditional delay, traffic,
    energy and projected lifetime."""
    traffic = outgoing_traffic(topo)
    rows = []
    for nid in sorted(topo.kinds):
        energy = node_energy(topo, nid, traffic)
        rows.append({
            "id": nid,
            "kind": topo.kinds[nid],
            "delivery_prob": delivery_prob_to_sink(topo, nid),
            "delay_to_sink_s": expected_delay_to_sink(topo, nid, conditional=True),
            "traffic_packets": traffic[nid],
            "energy_j": energy,
            "lifetime_s": (initial_energy_j * run_time_s / energy
                           if energy > 0 else float("inf")),
        })
    return rows
