"""Deterministic discrete-event simulation kernel.

One binary heap of (time, insertion-seq, kind, payload) events drives
everything: packet arrivals, hold expiries, mobility and hello ticks, source
generation and suppression reviews. Identical (config, seed) pairs replay the
identical event sequence. Losses come solely from per-link Bernoulli draws
against the channel's packet delivery probability; there is no MAC model.

Energy accounting: a transmit costs tx_power * M/mu, a reception costs
rx_power * M/mu and is charged to every in-range sensor per arriving data
packet, corrupt or not (the carrier is occupied either way). An operation a
node cannot fully pay for kills it instead; dead nodes neither send nor
receive. Sinks are surface-powered and outside the energy model. Hello
broadcasts are treated as free, so the data-only analytical energy model
stays comparable.
"""

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush
from random import Random

from . import channel as chan
from .config import ScenarioConfig
from .dbr import DbrProtocol
from .qcore import QParams
from .qlfr import (Deliver, Drop, HoldingParams, PacketHeader, QlfrProtocol,
                   Schedule, SuppressionState, build_priority_list, suppression_adjust)
from .world import NodeState, deploy, neighbors_in_range, random_walk_step

ARRIVAL, HOLD_EXPIRE, MOBILITY, HELLO, SOURCE_GEN, SUPPRESSION_REVIEW = range(6)

_HELLO_BOOTSTRAP_S = 1.0


class EngineError(RuntimeError):
    pass


@dataclass
class MetricsRecord:
    generated: int
    delivered: int
    pdr: float
    mean_e2e_delay_s: float
    total_energy_j: float
    network_lifetime_s: float
    per_node_energy_j: dict
    suppressed_forwards: int
    void_drops: int
    corrupt_packets: int
    tx_seconds: float
    rx_seconds: float
    metadata: dict = field(default_factory=dict)

    CSV_COLUMNS = (
        "protocol", "seed", "n_sensors", "mobility_speed_mps", "holding_k_s",
        "generated", "delivered", "pdr", "mean_e2e_delay_s", "total_energy_j",
        "network_lifetime_s", "suppressed_forwards", "void_drops",
        "corrupt_packets", "tx_seconds", "rx_seconds", "energy_per_bit",
    )

    def to_csv_row(self) -> list[str]:
        md = self.metadata
        values = [
            md.get("protocol"), md.get("seed"), md.get("n_sensors"),
            md.get("mobility_speed_mps"), md.get("holding_k_s"),
            self.generated, self.delivered, self.pdr, self.mean_e2e_delay_s,
            self.total_energy_j, self.network_lifetime_s,
            self.suppressed_forwards, self.void_drops, self.corrupt_packets,
            self.tx_seconds, self.rx_seconds, md.get("energy_per_bit"),
        ]
        return [repr(v) if isinstance(v, float) else str(v) for v in values]


def resolve_channel(config: ScenarioConfig) -> chan.ChannelParams:
    """Concrete channel parameters, calibrating e_b when not pinned."""
    if config.energy_per_bit is not None:
        return config.channel_params(config.energy_per_bit)
    base = config.channel_params(1.0)
    return chan.calibrate_energy_per_bit(
        base, config.calibration_distance_m, config.calibration_pdr)


class Simulation:
    def __init__(self, config: ScenarioConfig, nodes: list[NodeState] | None = None,
                 trace=None):
        config.validate()
        self.config = config
        self.channel = resolve_channel(config)
        self.trace = trace
        self.rng = Random(config.seed)
        self.nodes = nodes if nodes is not None else deploy(config, self.rng)
        self.nodes.sort(key=lambda n: n.id)
        self.by_id = {n.id: n for n in self.nodes}
        self.sources = [n for n in self.nodes if n.kind == "source"]
        self.holding = HoldingParams(config.effective_holding_h(), config.t_max_s)
        if config.protocol == "qlfr":
            self.protocol = QlfrProtocol(
                QParams(config.gamma, config.alpha), self.holding,
                d_max=config.d_max_m, staleness_s=config.staleness_s,
                max_list_length=config.max_list_length)
        else:
            self.protocol = DbrProtocol(config.t_max_s, config.tx_range_m)
        self.suppression = SuppressionState(
            current_list_length=config.initial_list_length,
            pdr_threshold=config.pdr_threshold,
            max_list_length=config.max_list_length)

        self.now = 0.0
        self._queue: list = []
        self._seq = 0
        self._spp = self.channel.serialization_s  # seconds on air per packet
        self._tx_cost = config.tx_power_w * self._spp
        self._rx_cost = config.rx_power_w * self._spp
        # cached link-budget constants for the hot per-arrival path
        self._a_linear = 10.0 ** (chan.thorpe_absorption_db_per_km(self.channel.frequency_khz) / 10.0)
        self._ebn0 = self.channel.energy_per_bit / self.channel.noise_density_N0

        self.generated = 0
        self.packet_gen_time: dict = {}
        self.delivered_at: dict = {}
        self.source_seq: dict = {n.id: 0 for n in self.sources}
        self.sink_observed_totals: dict = {}
        self.pending_directive: dict = {}
        self._directive_epoch = 0
        self._reviewed_delivered = 0
        self._reviewed_total = 0
        self.suppressed_forwards = 0
        self.void_drops = 0
        self.corrupt_packets = 0
        self.first_death_s: float | None = None

    # --- event plumbing ---

    def schedule(self, t: float, kind: int, payload) -> None:
        if t < self.now - 1e-9:
            raise EngineError(f"event scheduled in the past: {t} < {self.now}")
        self._seq += 1
        heappush(self._queue, (t, self._seq, kind, payload))

    def _emit(self, event: str, **fields) -> None:
        if self.trace is not None:
            self.trace({"t": self.now, "event": event, **fields})

    # --- physics ---

    def link_delivery_prob(self, distance_m: float) -> float:
        a = (self.channel.atten_const_A0 * distance_m**self.channel.spreading_kappa
             * self._a_linear ** (distance_m / 1000.0))
        snr = self._ebn0 / a
        ber = 0.5 * (1.0 - math.sqrt(snr / (1.0 + snr)))
        return (1.0 - ber) ** self.channel.packet_bits_M

    # --- energy ---

    def _die(self, node: NodeState) -> None:
        node.alive = False
        node.death_time_s = self.now
        if self.first_death_s is None:
            self.first_death_s = self.now
        self._emit("death", node=node.id)

    def _charge_tx(self, node: NodeState) -> bool:
        if node.residual_energy_j < self._tx_cost:
            self._die(node)
            return False
        node.residual_energy_j -= self._tx_cost
        node.tx_seconds += self._spp
        node.consumed_j += self._tx_cost
        return True

    def receive_energy_accounting(self, node: NodeState) -> bool:
        """Charge one packet reception; kills the node when it cannot pay."""
        if node.is_sink:
            return True
        if node.residual_energy_j < self._rx_cost:
            self._die(node)
            return False
        node.residual_energy_j -= self._rx_cost
        node.rx_seconds += self._spp
        node.consumed_j += self._rx_cost
        return True

    # --- transmission pipeline ---

    def transmit(self, sender: NodeState, pkt: PacketHeader) -> None:
        """Broadcast: one arrival per in-range living node, each independently
        marked delivered or corrupt by a Bernoulli draw on the link."""
        if not pkt.is_hello:
            if not self._charge_tx(sender):
                return
        self._emit("tx", node=sender.id, key=None if pkt.is_hello else pkt.key,
                   hello=pkt.is_hello, plist=list(pkt.priority_list))
        sx, sy, sz = sender.position.x, sender.position.y, sender.position.z
        r2 = self.config.tx_range_m**2
        ser = self._spp if self.config.serialization_delay else 0.0
        v0 = self.config.sound_speed_mps
        for other in self.nodes:
            if other.id == sender.id or not other.alive:
                continue
            dx = other.position.x - sx
            dy = other.position.y - sy
            dz = other.position.z - sz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 > r2:
                continue
            dist = math.sqrt(d2)
            ok = self.rng.random() < self.link_delivery_prob(dist)
            self.schedule(self.now + dist / v0 + ser, ARRIVAL, (other.id, pkt, ok))

    def _handle_arrival(self, node_id: int, pkt: PacketHeader, ok: bool) -> None:
        node = self.by_id[node_id]
        if not node.alive:
            return
        if pkt.is_hello:
            if ok:
                self.protocol.on_receive(node, pkt, self.now)
            return
        if not self.receive_energy_accounting(node):
            return
        if not ok:
            self.corrupt_packets += 1
            return
        action = self.protocol.on_receive(node, pkt, self.now)
        if isinstance(action, Deliver):
            self._record_delivery(node, pkt)
        elif isinstance(action, Schedule):
            token = node.pending[pkt.key].token
            self._emit("schedule", node=node.id, key=pkt.key, tau=action.tau,
                       position=action.position)
            self.schedule(self.now + action.tau, HOLD_EXPIRE, (node.id, pkt.key, token))
        elif isinstance(action, Drop):
            if action.reason == "suppressed":
                self.suppressed_forwards += 1
                self._emit("cancel", node=node.id, key=pkt.key)
            else:
                self._emit("drop", node=node.id, key=pkt.key, reason=action.reason)

    def _record_delivery(self, sink: NodeState, pkt: PacketHeader) -> None:
        sink.duplicate_cache.add(pkt.key)
        src = pkt.source_id
        self.sink_observed_totals[src] = max(self.sink_observed_totals.get(src, 0),
                                             pkt.total_generated)
        if pkt.key not in self.delivered_at:
            self.delivered_at[pkt.key] = self.now
            gen_time = self.packet_gen_time.get(pkt.key, self.now)
            self._emit("deliver", node=sink.id, key=pkt.key, delay=self.now - gen_time)

    def _handle_hold_expire(self, node_id: int, key, token: int) -> None:
        node = self.by_id[node_id]
        if not node.alive:
            return
        status, header = self.protocol.on_hold_expire(node, key, token, self.now)
        if status == "send":
            self._emit("forward", node=node.id, key=key)
            self.transmit(node, header)
        elif status == "void":
            self.void_drops += 1
            self._emit("void", node=node.id, key=key)

    def _handle_source_gen(self, source_id: int) -> None:
        node = self.by_id[source_id]
        if not node.alive:
            return
        self.schedule(self.now + self.config.source_interval_s, SOURCE_GEN, source_id)
        seq = self.source_seq[source_id]
        self.source_seq[source_id] = seq + 1
        self.generated += 1
        key = (source_id, seq)
        self.packet_gen_time[key] = self.now
        self._emit("gen", node=source_id, key=key)
        directive, epoch = self.pending_directive.pop(source_id, (0, 0))
        header = self.protocol.originate(node, seq, self.source_seq[source_id],
                                         directive, epoch, self.now)
        if header is None:
            self.void_drops += 1
            self._emit("void", node=source_id, key=key)
        else:
            self.transmit(node, header)

    def _handle_mobility(self) -> None:
        self.schedule(self.now + self.config.mobility_tick_s, MOBILITY, None)
        region = self.config.region
        speed = self.config.mobility_speed_mps
        dt = self.config.mobility_tick_s
        for node in self.nodes:
            if node.is_sink or not node.alive:
                continue
            node.position = random_walk_step(node, speed, dt, self.rng, region)

    def _handle_hello(self, node_id: int) -> None:
        node = self.by_id[node_id]
        if not node.alive:
            return
        self.schedule(self.now + self.config.hello_interval_s, HELLO, node_id)
        self.transmit(node, self.protocol.hello_header(node))

    def _handle_suppression_review(self) -> None:
        """Compare the delivery ratio observed at the sinks over the last
        review window against the threshold and push a one-step list-length
        directive to the sources. The window uses only what sinks can see:
        unique packets received and the generation counters carried in
        received headers."""
        self.schedule(self.now + self.config.suppression_interval_s,
                      SUPPRESSION_REVIEW, None)
        total = sum(self.sink_observed_totals.values())
        window_total = total - self._reviewed_total
        window_delivered = len(self.delivered_at) - self._reviewed_delivered
        if window_total <= 0:
            return
        self._reviewed_total = total
        self._reviewed_delivered = len(self.delivered_at)
        old = self.suppression.current_list_length
        new = suppression_adjust(self.suppression, window_delivered, window_total)
        if new != old:
            self._directive_epoch += 1
            for src in self.source_seq:
                self.pending_directive[src] = (new - old, self._directive_epoch)
            self._emit("list-length", value=new, pdr=self.suppression.observed_pdr)

    # --- run loop ---

    def run(self) -> MetricsRecord:
        cfg = self.config
        if self.protocol.uses_hello:
            for node in self.nodes:
                self.schedule(self.rng.uniform(0.0, _HELLO_BOOTSTRAP_S), HELLO, node.id)
        if cfg.mobility_speed_mps > 0:
            self.schedule(cfg.mobility_tick_s, MOBILITY, None)
        for node in self.sources:
            self.schedule(cfg.source_interval_s, SOURCE_GEN, node.id)
        if cfg.protocol == "qlfr":
            self.schedule(cfg.suppression_interval_s, SUPPRESSION_REVIEW, None)

        handlers = {
            ARRIVAL: lambda p: self._handle_arrival(*p),
            HOLD_EXPIRE: lambda p: self._handle_hold_expire(*p),
            MOBILITY: lambda p: self._handle_mobility(),
            HELLO: self._handle_hello,
            SOURCE_GEN: self._handle_source_gen,
            SUPPRESSION_REVIEW: lambda p: self._handle_suppression_review(),
        }
        queue = self._queue
        limit = cfg.max_sim_time_s
        while queue:
            t, _, kind, payload = queue[0]
            if t > limit:
                break
            heappop(queue)
            self.now = t
            handlers[kind](payload)
        return self._finalize()

    # --- results ---

    def _finalize(self) -> MetricsRecord:
        cfg = self.config
        if self.generated == 0:
            raise EngineError("no packets were generated; cannot compute a delivery ratio")
        delays = [self.delivered_at[k] - self.packet_gen_time[k] for k in self.delivered_at]
        sensors = [n for n in self.nodes if not n.is_sink]
        lifetime = self.first_death_s
        if lifetime is None:
            lifetime = extrapolated_lifetime(sensors, cfg.max_sim_time_s)
        return MetricsRecord(
            generated=self.generated,
            delivered=len(self.delivered_at),
            pdr=len(self.delivered_at) / self.generated,
            mean_e2e_delay_s=sum(delays) / len(delays) if delays else float("nan"),
            total_energy_j=sum(n.consumed_j for n in sensors),
            network_lifetime_s=lifetime,
            per_node_energy_j={n.id: n.consumed_j for n in self.nodes},
            suppressed_forwards=self.suppressed_forwards,
            void_drops=self.void_drops,
            corrupt_packets=self.corrupt_packets,
            tx_seconds=sum(n.tx_seconds for n in sensors),
            rx_seconds=sum(n.rx_seconds for n in sensors),
            metadata={
                "protocol": cfg.protocol,
                "seed": cfg.seed,
                "n_sensors": cfg.n_sensors,
                "mobility_speed_mps": cfg.mobility_speed_mps,
                "holding_k_s": self.holding.k,
                "holding_h": self.holding.h,
                "energy_per_bit": self.channel.energy_per_bit,
                "sim_time_s": cfg.max_sim_time_s,
            },
        )

    def audit_energy(self) -> tuple[float, float]:
        """(sum of per-node consumed energy, power * seconds recomputation)."""
        sensors = [n for n in self.nodes if not n.is_sink]
        lhs = sum(n.consumed_j for n in sensors)
        rhs = (self.config.tx_power_w * sum(n.tx_seconds for n in sensors)
               + self.config.rx_power_w * sum(n.rx_seconds for n in sensors))
        return lhs, rhs

    def snapshot_topology(self) -> dict:
        """Freeze positions, candidate lists and traffic for the analytical
        model. Candidates are re-filtered against true depths and current
        positions so the exported candidate graph is a depth-ordered DAG.
        """
        cfg = self.config
        entries = []
        for node in self.nodes:
            entry = {
                "id": node.id, "kind": node.kind,
                "x": node.position.x, "y": node.position.y, "z": node.position.z,
                "residual_energy_j": node.residual_energy_j,
                "generated": self.source_seq.get(node.id, 0),
                "candidates": [],
            }
            if not node.is_sink and node.alive and cfg.protocol == "qlfr":
                in_range = set(neighbors_in_range(node, self.nodes, cfg.tx_range_m))
                ranked = build_priority_list(
                    node, cfg.d_max_m, node.list_length, QParams(cfg.gamma, cfg.alpha),
                    self.now, cfg.staleness_s)
                entry["candidates"] = [
                    nid for nid in ranked
                    if nid in in_range and self.by_id[nid].alive
                    and self.by_id[nid].depth < node.depth
                ]
            entries.append(entry)
        return {
            "params": {
                "tx_range_m": cfg.tx_range_m,
                "sound_speed_mps": cfg.sound_speed_mps,
                "holding_h": self.holding.h,
                "tx_power_w": cfg.tx_power_w,
                "rx_power_w": cfg.rx_power_w,
                "seconds_per_packet": self._spp,
                "initial_node_energy_j": cfg.initial_node_energy_j,
                "channel": {
                    "frequency_khz": self.channel.frequency_khz,
                    "spreading_kappa": self.channel.spreading_kappa,
                    "atten_const_A0": self.channel.atten_const_A0,
                    "energy_per_bit": self.channel.energy_per_bit,
                    "noise_density_N0": self.channel.noise_density_N0,
                    "packet_bits_M": self.channel.packet_bits_M,
                    "bit_rate_mu": self.channel.bit_rate_mu,
                },
            },
            "run": {"duration_s": cfg.max_sim_time_s, "now_s": self.now},
            "nodes": entries,
        }


def extrapolated_lifetime(sensors: list[NodeState], run_time_s: float) -> float:
    """Projected time to first sensor death from average drain rates."""
    lifetimes = [n.initial_energy_j * run_time_s / n.consumed_j
                 for n in sensors if n.consumed_j > 0]
    return min(lifetimes) if lifetimes else float("inf")


def run(config: ScenarioConfig, trace=None) -> MetricsRecord:
    """Validate, simulate, and summarize one scenario."""
    return Simulation(config, trace=trace).run()
