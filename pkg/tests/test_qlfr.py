"""Protocol state-machine tests: priority lists, holding times, receive and
hold-expiry paths, overhear suppression, and the adaptive list length."""

from fractions import Fraction

import pytest

from uwroute.qcore import QParams
from uwroute.qlfr import (Deliver, Drop, HoldingParams, Ignore, PacketHeader,
                          QlfrProtocol, Schedule, SuppressionState,
                          build_priority_list, candidate_score, holding_time,
                          on_overhear_during_hold, suppression_adjust)
from uwroute.world import NodePosition, NodeState, RoutingKnowledge

QP = QParams(gamma=0.8, alpha=0.5)
D_MAX = 150.0
STALE = 20.0


def make_node(node_id=0, depth=100.0, region_z=300.0, kind="sensor", e_res=None):
    node = NodeState(node_id, kind, NodePosition(0.0, 0.0, region_z - depth),
                     region_z, 100.0)
    if e_res is not None:
        node.residual_energy_j = e_res
    return node


def protocol(h=4, t_max=0.1, max_list=4):
    return QlfrProtocol(QP, HoldingParams(h, t_max), d_max=D_MAX,
                        staleness_s=STALE, max_list_length=max_list)


def data_header(sender: NodeState, plist, source_id=9, seq=0, total=1, directive=0,
                epoch=0):
    return PacketHeader(source_id=source_id, seq=seq, v_value=sender.v_value,
                        depth_m=sender.depth, residual_energy_j=sender.residual_energy_j,
                        sender_id=sender.id, list_length=len(plist),
                        priority_list=tuple(plist), total_generated=total,
                        suppression_directive=directive, suppression_epoch=epoch)


class TestHoldingTime:
    def test_head_waits_nothing(self):
        assert holding_time(1, HoldingParams(4, 0.1)) == 0.0

    def test_table_values(self):
        # R = 150 m, v0 = 1500 m/s: t_max = 0.1 s; h = 4 gives k = 0.05 s
        params = HoldingParams(4, 150.0 / 1500.0)
        assert params.k == pytest.approx(0.05)
        assert params.b == pytest.approx(-0.05)
        assert holding_time(3, params) == pytest.approx(0.1)

    def test_h_one(self):
        params = HoldingParams(1, 0.1)
        assert params.k == pytest.approx(0.2)
        assert holding_time(2, params) == pytest.approx(0.2)

    def test_strictly_increasing_with_constant_step(self):
        params = HoldingParams(5, 0.1)
        taus = [holding_time(n, params) for n in range(1, 12)]
        steps = [b - a for a, b in zip(taus, taus[1:])]
        assert all(s == pytest.approx(params.k) for s in steps)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            holding_time(0, HoldingParams(4, 0.1))

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            HoldingParams(0, 0.1)
        with pytest.raises(ValueError):
            HoldingParams(4, 0.0)


class TestSuppressionSoundness:
    def test_exhaustive_worst_case_grid(self):
        """Worst-case receive offset and propagation (both t_max): a candidate
        h or more positions behind can never fire before it hears the earlier
        forward. Exact rational arithmetic, zero tolerance."""
        t_max = Fraction(1, 10)
        violations = []
        for n2 in range(2, 21):
            for n1 in range(1, n2):
                for h in range(1, n2 - n1 + 1):
                    k = 2 * t_max / h
                    lhs = t_max + k * (n1 - 1) + t_max  # t1 + tau(n1) + t_prop, t2 = 0
                    rhs = k * (n2 - 1)
                    if lhs > rhs:
                        violations.append((n1, n2, h))
        assert violations == []

    def test_float_matches_rational(self):
        params = HoldingParams(7, 0.1)
        for n in range(1, 25):
            exact = Fraction(2, 1) * Fraction(1, 10) / 7 * (n - 1)
            assert holding_time(n, params) == pytest.approx(float(exact), abs=1e-12)


class TestPriorityList:
    def test_sorts_by_score_descending(self):
        sender = make_node(depth=100.0)
        # advertised V values chosen so scores are exactly -1 (A) and -0.5 (B)
        sender.neighbor_knowledge = {
            1: (RoutingKnowledge(-5.0 / 6.0, 50.0, 100.0), 0.0),  # A
            2: (RoutingKnowledge(-1.0 / 6.0, 60.0, 100.0), 0.0),  # B
        }
        assert candidate_score(sender, sender.neighbor_knowledge[1][0], D_MAX, QP) == pytest.approx(-1.0)
        assert candidate_score(sender, sender.neighbor_knowledge[2][0], D_MAX, QP) == pytest.approx(-0.5)
        assert build_priority_list(sender, D_MAX, 2, QP, now=1.0, staleness_s=STALE) == [2, 1]

    def test_filters_deeper_neighbors(self):
        sender = make_node(depth=100.0)
        sender.neighbor_knowledge = {
            1: (RoutingKnowledge(0.0, 150.0, 100.0), 0.0),
            2: (RoutingKnowledge(0.0, 100.0, 100.0), 0.0),  # equal depth is not progress
        }
        assert build_priority_list(sender, D_MAX, 2, QP, now=0.0, staleness_s=STALE) == []

    def test_truncates_to_length_with_sort_oracle(self):
        sender = make_node(depth=140.0)
        knowledge = {}
        for nid, depth in enumerate((10.0, 80.0, 40.0, 120.0, 60.0), start=1):
            knowledge[nid] = (RoutingKnowledge(0.0, depth, 100.0), 0.0)
        sender.neighbor_knowledge = dict(knowledge)
        got = build_priority_list(sender, D_MAX, 3, QP, now=0.0, staleness_s=STALE)
        scores = {nid: candidate_score(sender, kn, D_MAX, QP)
                  for nid, (kn, _) in knowledge.items()}
        oracle = sorted(scores, key=lambda nid: (-scores[nid], nid))[:3]
        assert got == oracle
        assert len(got) == 3

    def test_stale_entries_excluded(self):
        sender = make_node(depth=100.0)
        sender.neighbor_knowledge = {
            1: (RoutingKnowledge(0.0, 50.0, 100.0), 0.0),
            2: (RoutingKnowledge(0.0, 40.0, 100.0), 30.0),
        }
        got = build_priority_list(sender, D_MAX, 2, QP, now=25.0, staleness_s=STALE)
        assert got == [2]

    def test_id_tiebreak(self):
        sender = make_node(depth=100.0)
        sender.neighbor_knowledge = {
            7: (RoutingKnowledge(0.0, 50.0, 100.0), 0.0),
            3: (RoutingKnowledge(0.0, 50.0, 100.0), 0.0),
        }
        assert build_priority_list(sender, D_MAX, 2, QP, now=0.0, staleness_s=STALE) == [3, 7]

    def test_argmax_invariance_under_constant_shift(self):
        sender = make_node(depth=120.0)
        base = {1: (-0.9, 30.0), 2: (-0.1, 90.0), 3: (-0.4, 60.0)}
        for shift in (0.0, -1.0, -5.0):
            sender.neighbor_knowledge = {
                nid: (RoutingKnowledge(v + shift, d, 100.0), 0.0)
                for nid, (v, d) in base.items()
            }
            got = build_priority_list(sender, D_MAX, 3, QP, now=0.0, staleness_s=STALE)
            assert got == [2, 3, 1]

    def test_clamps_out_of_window_depths(self):
        # stale advertised depth beyond d_max must not raise
        sender = make_node(depth=280.0)
        sender.neighbor_knowledge = {1: (RoutingKnowledge(0.0, 10.0, 100.0), 0.0)}
        got = build_priority_list(sender, D_MAX, 1, QP, now=0.0, staleness_s=STALE)
        assert got == [1]


class TestOnReceive:
    def test_non_candidate_drops_but_learns(self):
        proto = protocol()
        node = make_node(node_id=5, depth=50.0)
        sender = make_node(node_id=1, depth=100.0)
        pkt = data_header(sender, plist=[8, 9])
        action = proto.on_receive(node, pkt, now=3.0)
        assert action == Drop("not-candidate")
        assert node.neighbor_knowledge[1][0].depth_m == 100.0

    def test_head_schedules_immediately(self):
        proto = protocol()
        node = make_node(node_id=5, depth=50.0)
        pkt = data_header(make_node(node_id=1, depth=100.0), plist=[5, 8])
        action = proto.on_receive(node, pkt, now=3.0)
        assert action == Schedule(0.0, 1)
        assert pkt.key in node.pending

    def test_second_priority_waits_k(self):
        proto = protocol(h=4, t_max=0.1)
        node = make_node(node_id=8, depth=50.0)
        pkt = data_header(make_node(node_id=1, depth=100.0), plist=[5, 8])
        action = proto.on_receive(node, pkt, now=3.0)
        assert action == Schedule(pytest.approx(0.05), 2)

    def test_already_forwarded_drops(self):
        proto = protocol()
        node = make_node(node_id=5, depth=50.0)
        node.forwarded_cache.add((9, 0))
        pkt = data_header(make_node(node_id=1, depth=100.0), plist=[5])
        assert proto.on_receive(node, pkt, now=3.0) == Drop("already-forwarded")

    def test_sink_delivers(self):
        proto = protocol()
        sink = make_node(node_id=4, depth=0.0, kind="sink")
        pkt = data_header(make_node(node_id=1, depth=100.0), plist=[4])
        assert proto.on_receive(sink, pkt, now=3.0) == Deliver()

    def test_hello_updates_table_only(self):
        proto = protocol()
        node = make_node(node_id=5, depth=50.0)
        hello = proto.hello_header(make_node(node_id=2, depth=90.0))
        assert proto.on_receive(node, hello, now=1.0) == Ignore("hello")
        assert 2 in node.neighbor_knowledge
        assert not node.pending

    def test_duplicate_while_scheduled_cancels(self):
        proto = protocol()
        node = make_node(node_id=5, depth=50.0)
        pkt = data_header(make_node(node_id=1, depth=100.0), plist=[5, 8])
        proto.on_receive(node, pkt, now=3.0)
        copy = data_header(make_node(node_id=8, depth=70.0), plist=[5])
        assert proto.on_receive(node, copy, now=3.02) == Drop("suppressed")
        assert pkt.key not in node.pending
        # a third copy is a plain duplicate now
        assert proto.on_receive(node, copy, now=3.05) == Drop("duplicate")


class TestOverhear:
    def test_cancel_pending(self):
        node = make_node(node_id=5)
        node.pending[(9, 0)] = object()
        assert on_overhear_during_hold(node, (9, 0)) is True
        assert (9, 0) not in node.pending
        assert (9, 0) in node.duplicate_cache

    def test_keep_on_key_mismatch(self):
        node = make_node(node_id=5)
        node.pending[(9, 0)] = object()
        assert on_overhear_during_hold(node, (9, 1)) is False
        assert (9, 0) in node.pending

    def test_no_effect_after_expiry(self):
        node = make_node(node_id=5)
        assert on_overhear_during_hold(node, (9, 0)) is False


class TestHoldExpire:
    def setup_relay(self):
        proto = protocol()
        relay = make_node(node_id=5, depth=100.0, e_res=80.0)
        relay.neighbor_knowledge = {
            2: (RoutingKnowledge(-0.2, 40.0, 90.0), 2.9),
            3: (RoutingKnowledge(-0.9, 60.0, 50.0), 2.9),
        }
        pkt = data_header(make_node(node_id=1, depth=180.0), plist=[5], seq=7, total=12)
        assert proto.on_receive(relay, pkt, now=3.0) == Schedule(0.0, 1)
        token = relay.pending[pkt.key].token
        return proto, relay, pkt, token

    def test_header_rewritten_and_learning_fired(self):
        proto, relay, pkt, token = self.setup_relay()
        status, header = proto.on_hold_expire(relay, pkt.key, token, now=3.0)
        assert status == "send"
        assert header.sender_id == 5
        assert header.depth_m == pytest.approx(100.0)
        assert header.residual_energy_j == pytest.approx(80.0)
        assert header.source_id == 9 and header.seq == 7
        assert header.total_generated == 12
        assert header.priority_list == (2, 3)
        assert header.list_length == 2
        # Q updated toward the first candidate's one-step target
        assert 2 in relay.q_table and relay.q_table[2] < 0.0
        assert header.v_value == pytest.approx(relay.v_value)
        assert pkt.key in relay.forwarded_cache

    def test_second_expiry_is_stale(self):
        proto, relay, pkt, token = self.setup_relay()
        proto.on_hold_expire(relay, pkt.key, token, now=3.0)
        assert proto.on_hold_expire(relay, pkt.key, token, now=3.0) == ("stale", None)

    def test_void_drop(self):
        proto = protocol()
        relay = make_node(node_id=5, depth=100.0)
        pkt = data_header(make_node(node_id=1, depth=180.0), plist=[5])
        proto.on_receive(relay, pkt, now=3.0)
        token = relay.pending[pkt.key].token
        relay.neighbor_knowledge.clear()
        assert proto.on_hold_expire(relay, pkt.key, token, now=3.0) == ("void", None)
        assert pkt.key not in relay.forwarded_cache
        assert pkt.key in relay.duplicate_cache

    def test_never_forwards_same_key_twice(self):
        proto, relay, pkt, token = self.setup_relay()
        proto.on_hold_expire(relay, pkt.key, token, now=3.0)
        # the same packet arriving again is refused outright
        again = data_header(make_node(node_id=2, depth=160.0), plist=[5], seq=7)
        assert proto.on_receive(relay, again, now=3.5) == Drop("already-forwarded")


class TestSuppressionAdjust:
    def test_shrinks_above_threshold(self):
        state = SuppressionState(current_list_length=3, pdr_threshold=0.9)
        assert suppression_adjust(state, delivered=95, total_generated=100) == 2
        assert state.observed_pdr == pytest.approx(0.95)

    def test_grows_below_threshold(self):
        state = SuppressionState(current_list_length=2, pdr_threshold=0.9)
        assert suppression_adjust(state, delivered=80, total_generated=100) == 3

    def test_boundary_leaves_unchanged(self):
        state = SuppressionState(current_list_length=2, pdr_threshold=0.9)
        assert suppression_adjust(state, delivered=90, total_generated=100) == 2

    def test_floor_and_cap(self):
        state = SuppressionState(current_list_length=1, pdr_threshold=0.5, max_list_length=4)
        assert suppression_adjust(state, 100, 100) == 1
        state = SuppressionState(current_list_length=4, pdr_threshold=0.5, max_list_length=4)
        assert suppression_adjust(state, 0, 100) == 4

    def test_rejects_zero_total(self):
        with pytest.raises(ValueError):
            suppression_adjust(SuppressionState(), 1, 0)


class TestDirective:
    def test_directive_applied_once_per_epoch(self):
        proto = protocol()
        node = make_node(node_id=5, depth=50.0)
        node.list_length = 2
        pkt = data_header(make_node(node_id=1, depth=100.0), plist=[5], directive=1, epoch=1)
        proto.on_receive(node, pkt, now=1.0)
        assert node.list_length == 3
        other = data_header(make_node(node_id=2, depth=90.0), plist=[5], seq=1,
                            directive=1, epoch=1)
        proto.on_receive(node, other, now=1.1)
        assert node.list_length == 3  # same epoch, no re-application

    def test_directive_rides_forwarded_header(self):
        proto = protocol()
        relay = make_node(node_id=5, depth=100.0)
        relay.neighbor_knowledge = {2: (RoutingKnowledge(0.0, 40.0, 100.0), 0.9)}
        pkt = data_header(make_node(node_id=1, depth=180.0), plist=[5], directive=-1, epoch=2)
        proto.on_receive(relay, pkt, now=1.0)
        token = relay.pending[pkt.key].token
        status, header = proto.on_hold_expire(relay, pkt.key, token, now=1.0)
        assert status == "send"
        assert header.suppression_directive == -1
        assert header.suppression_epoch == 2
