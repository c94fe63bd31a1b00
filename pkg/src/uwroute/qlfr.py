"""Q-learning anypath routing: priority lists, holding times, duplicate and
overhear suppression, and the adaptive multipath suppression scheme.

A sender ranks its strictly-shallower fresh neighbors by the one-step target
r + gamma * V(neighbor) computed from advertised knowledge, embeds the top
`list_length` of them as a priority list, and updates its own stored Q toward
that target when it transmits. Receivers schedule their forward after a
holding time proportional to their list position; overhearing any copy of a
held packet cancels the pending forward.
"""

from dataclasses import dataclass, replace

from . import qcore
from .qcore import QParams
from .world import NodeState, RoutingKnowledge, update_neighbor_knowledge, fresh_neighbors


@dataclass(frozen=True)
class PacketHeader:
    source_id: int
    seq: int
    v_value: float
    depth_m: float
    residual_energy_j: float
    sender_id: int
    list_length: int
    priority_list: tuple = ()
    total_generated: int = 0
    suppression_directive: int = 0
    suppression_epoch: int = 0  # makes a directive one-shot per node
    is_hello: bool = False

    @property
    def key(self) -> tuple[int, int]:
        return (self.source_id, self.seq)

    def sender_knowledge(self) -> RoutingKnowledge:
        return RoutingKnowledge(self.v_value, self.depth_m, self.residual_energy_j)


@dataclass(frozen=True)
class HoldingParams:
    """h: priority-step divisor; t_max: maximal one-hop propagation delay."""

    h: int
    t_max: float

    def __post_init__(self):
        if self.h < 1:
            raise ValueError(f"h must be a positive integer, got {self.h}")
        if self.t_max <= 0:
            raise ValueError(f"t_max must be > 0, got {self.t_max}")

    @property
    def k(self) -> float:
        """Holding-time step between adjacent priorities, 2 t_max / h."""
        return 2.0 * self.t_max / self.h

    @property
    def b(self) -> float:
        return -self.k


def holding_time(n: int, params: HoldingParams) -> float:
    """Holding time of the n-th candidate (1-indexed): k * (n - 1)."""
    if n < 1:
        raise ValueError(f"priority index must be >= 1, got {n}")
    return params.k * (n - 1)


@dataclass
class SuppressionState:
    """Sink-side view of the adaptive priority-list length."""

    current_list_length: int = 2
    pdr_threshold: float = 0.9
    observed_pdr: float = 1.0
    max_list_length: int = 4


def suppression_adjust(state: SuppressionState, delivered: int, total_generated: int) -> int:
    """Recompute the observed delivery ratio and shrink or grow the list
    length by one step: above threshold trades redundancy for energy, below
    threshold trades energy for reliability. Returns the new length.
    """
    if total_generated <= 0:
        raise ValueError("total_generated must be > 0")
    state.observed_pdr = delivered / total_generated
    if state.observed_pdr > state.pdr_threshold:
        state.current_list_length = max(1, state.current_list_length - 1)
    elif state.observed_pdr < state.pdr_threshold:
        state.current_list_length = min(state.max_list_length, state.current_list_length + 1)
    return state.current_list_length


# --- receive-side actions -------------------------------------------------

@dataclass(frozen=True)
class Drop:
    reason: str  # "not-candidate" | "already-forwarded" | "duplicate" | "suppressed"


@dataclass(frozen=True)
class Schedule:
    tau: float
    position: int


@dataclass(frozen=True)
class Ignore:
    reason: str  # "hello" | "self"


@dataclass(frozen=True)
class Deliver:
    pass


@dataclass
class PendingForward:
    pkt: PacketHeader
    position: int
    token: int


def candidate_score(sender: NodeState, kn: RoutingKnowledge, d_max: float,
                    qparams: QParams) -> float:
    """Ranking value r + gamma * V for one advertised neighbor.

    Advertised depths can drift out of the geometric one-hop window under
    mobility and staleness; the depth difference is clamped to +-d_max so the
    cost stays defined.
    """
    depth = min(max(kn.depth_m, sender.depth - d_max), sender.depth + d_max)
    r = qcore.reward(sender, replace(kn, depth_m=depth), d_max)
    return r + qparams.gamma * kn.v_value


def build_priority_list(sender: NodeState, d_max: float, list_length: int,
                        qparams: QParams, now: float, staleness_s: float) -> list[int]:
    """Ordered forwarding candidates: fresh neighbors strictly shallower than
    the sender, sorted by descending score (ties to the lower id), truncated
    to list_length. Empty result means a void region.
    """
    scored = []
    for nid, kn in fresh_neighbors(sender, now, staleness_s):
        if kn.depth_m < sender.depth:
            scored.append((-candidate_score(sender, kn, d_max, qparams), nid))
    scored.sort()
    return [nid for _, nid in scored[:list_length]]


def on_overhear_during_hold(node: NodeState, pkt_key: tuple[int, int]) -> bool:
    """Cancel a pending forward for pkt_key, if any. A cancelled packet goes
    into the duplicate cache so later copies are not rescheduled.
    """
    if pkt_key in node.pending:
        del node.pending[pkt_key]
        node.duplicate_cache.add(pkt_key)
        return True
    return False


class QlfrProtocol:
    """Per-run protocol logic; all node state lives on the NodeState objects."""

    uses_hello = True

    def __init__(self, qparams: QParams, holding: HoldingParams, d_max: float,
                 staleness_s: float, max_list_length: int):
        self.qparams = qparams
        self.holding = holding
        self.d_max = d_max
        self.staleness_s = staleness_s
        self.max_list_length = max_list_length
        self._q_lo, self._q_hi = qcore.q_bounds(qparams)
        self._next_token = 0

    def hello_header(self, node: NodeState) -> PacketHeader:
        return PacketHeader(
            source_id=node.id, seq=-1, v_value=node.v_value, depth_m=node.depth,
            residual_energy_j=node.residual_energy_j, sender_id=node.id,
            list_length=0, priority_list=(), is_hello=True,
        )

    def on_receive(self, node: NodeState, pkt: PacketHeader, now: float):
        """Algorithm-1 receive path. Neighbor knowledge is refreshed for every
        heard packet, designated forwarder or not.
        """
        if pkt.sender_id == node.id:
            return Ignore("self")
        update_neighbor_knowledge(node, pkt.sender_id, pkt.sender_knowledge(), now)
        if pkt.is_hello:
            return Ignore("hello")
        if node.is_sink:
            return Deliver()
        key = pkt.key
        if on_overhear_during_hold(node, key):
            return Drop("suppressed")
        if key in node.forwarded_cache:
            return Drop("already-forwarded")
        if key in node.duplicate_cache:
            return Drop("duplicate")
        if node.id not in pkt.priority_list:
            return Drop("not-candidate")
        position = pkt.priority_list.index(node.id) + 1
        tau = holding_time(position, self.holding)
        self._next_token += 1
        node.pending[key] = PendingForward(pkt, position, self._next_token)
        self._apply_directive(node, pkt.suppression_directive, pkt.suppression_epoch)
        return Schedule(tau, position)

    def _apply_directive(self, node: NodeState, directive: int, epoch: int) -> None:
        if directive and epoch > node.suppression_epoch:
            node.suppression_epoch = epoch
            node.list_length = min(self.max_list_length,
                                   max(1, node.list_length + directive))

    def on_hold_expire(self, node: NodeState, pkt_key: tuple[int, int], token: int,
                       now: float) -> tuple[str, PacketHeader | None]:
        """Fire a pending forward: rebuild the priority list from current
        knowledge, update Q toward the chosen first candidate, rewrite the
        header. Returns ("send", header), ("void", None) or ("stale", None).
        """
        pending = node.pending.get(pkt_key)
        if pending is None or pending.token != token:
            return ("stale", None)
        del node.pending[pkt_key]
        header = self.make_data_header(
            node, source_id=pkt_key[0], seq=pkt_key[1],
            total_generated=pending.pkt.total_generated,
            directive=pending.pkt.suppression_directive,
            epoch=pending.pkt.suppression_epoch, now=now,
        )
        if header is None:
            node.duplicate_cache.add(pkt_key)
            return ("void", None)
        node.forwarded_cache.add(pkt_key)
        return ("send", header)

    def originate(self, source: NodeState, seq: int, total_generated: int,
                  directive: int, epoch: int, now: float) -> PacketHeader | None:
        self._apply_directive(source, directive, epoch)
        header = self.make_data_header(source, source.id, seq, total_generated,
                                       directive, epoch, now)
        if header is not None:
            source.forwarded_cache.add((source.id, seq))
        return header

    def make_data_header(self, node: NodeState, source_id: int, seq: int,
                         total_generated: int, directive: int, epoch: int,
                         now: float) -> PacketHeader | None:
        """Build the outgoing header, or None when no candidate exists."""
        candidates = build_priority_list(node, self.d_max, node.list_length,
                                         self.qparams, now, self.staleness_s)
        if not candidates:
            return None
        self._learn(node, candidates[0])
        return PacketHeader(
            source_id=source_id, seq=seq, v_value=node.v_value, depth_m=node.depth,
            residual_energy_j=node.residual_energy_j, sender_id=node.id,
            list_length=len(candidates), priority_list=tuple(candidates),
            total_generated=total_generated, suppression_directive=directive,
            suppression_epoch=epoch,
        )

    def _learn(self, node: NodeState, chosen_id: int) -> None:
        """One-step Q update for the transmitting node toward its first
        candidate's advertised value."""
        kn, _ = node.neighbor_knowledge[chosen_id]
        depth = min(max(kn.depth_m, node.depth - self.d_max), node.depth + self.d_max)
        r = qcore.reward(node, replace(kn, depth_m=depth), self.d_max)
        q_new = qcore.q_update(node.q_table.get(chosen_id, 0.0), r, kn.v_value, self.qparams)
        if not self._q_lo - 1e-9 <= q_new <= self._q_hi + 1e-9:
            raise RuntimeError(f"Q-value {q_new} outside [{self._q_lo}, {self._q_hi}]")
        node.q_table[chosen_id] = q_new
        node.v_value = qcore.v_value(node.q_table)
