from collections import Counter

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from trifactor.adversary import AdversaryKind, AdversaryProfile
from trifactor.network import BASELINE, TRIPLE_FACTOR, Flow, Network
from trifactor.packet import Kind, Packet
from trifactor.routing import (AodvRouter, NoAdmissibleRoute, RouteCacheEntry, SeenCache,
                               select_route)
from trifactor.simkernel import MobilityModel

from conftest import line_positions, make_net, make_spec


class Tap:
    """Record every frame a network puts on the air."""

    def __init__(self, net):
        self.net = net
        self.frames = []
        inner = net.transmit

        def transmit(nid, to, pkt):
            self.frames.append((net.now, nid, to, pkt))
            return inner(nid, to, pkt)

        net.transmit = transmit

    def of(self, kind):
        return [f for f in self.frames if f[3].kind == kind]


def test_line_rrep_hop_count(line4):
    net = line4
    seen = []
    inner = net.receive
    net.world.receive = lambda rx, pkt, prom: (seen.append((rx, pkt)), inner(rx, pkt, prom))
    net.nodes[0].router.originate_data(3, 32)
    net.kernel.run_until(1.0)
    # C forwards the RREQ with hop_count 2; D counts 3 on receipt
    d_rreq = [p for rx, p in seen if rx == 3 and p.kind == Kind.RREQ and p.prev_hop == 2]
    assert d_rreq[0].hop_count == 2
    entry = net.nodes[0].router.table[3]
    assert (entry.next_hop, entry.hop_count) == (1, 3)
    assert net.metrics.delivered == 1


def test_no_route_broadcasts_rreq_and_buffers(line4):
    tap = Tap(line4)
    r = line4.nodes[0].router
    pkt = r.originate_data(3, 32)
    assert list(r.buffer) == [pkt]
    assert [(nid, to) for _, nid, to, _ in tap.of(Kind.RREQ)] == [(0, -1)]
    assert tap.of(Kind.DATA) == []


def test_route_present_sends_immediately(line4):
    r = line4.nodes[0].router
    r.originate_data(3, 32)
    line4.kernel.run_until(1.0)
    tap = Tap(line4)
    r.originate_data(3, 32)
    assert [(nid, to) for _, nid, to, _ in tap.frames] == [(0, 1)]
    assert not r.buffer


@pytest.mark.parametrize("protocol", ["AODV", "DSR"])
def test_duplicate_rreq_dropped(protocol):
    net = make_net(line_positions(4), protocol=protocol, mode=BASELINE)
    rreq = Packet(Kind.RREQ, 0, 3, 0, 99, seq_or_id=1,
                  source_route=(0,) if protocol == "DSR" else None)
    tap = Tap(net)
    b = net.nodes[1].router
    b.handle_rreq(rreq)
    b.handle_rreq(rreq)
    assert len(tap.of(Kind.RREQ)) == 1


@pytest.mark.parametrize("protocol", ["AODV", "DSR"])
def test_rreq_from_blacklisted_prev_hop_rejected(protocol):
    net = make_net(line_positions(4), protocol=protocol)
    b = net.nodes[1]
    for _ in range(3):
        b.trust.observe_misbehavior(0)
    assert b.trust.is_blacklisted(0)
    before = net.metrics.path_rejections
    tap = Tap(net)
    b.router.handle_rreq(Packet(Kind.RREQ, 0, 3, 0, 99, seq_or_id=1,
                                source_route=(0,) if protocol == "DSR" else None))
    assert tap.frames == []
    assert net.metrics.path_rejections == before + 1
    # the veto does not poison duplicate suppression for honest copies
    assert (0, 1) not in b.router.seen


def test_rreq_avoid_list_rejected():
    net = make_net(line_positions(4))
    tap = Tap(net)
    net.nodes[2].router.handle_rreq(Packet(Kind.RREQ, 0, 3, 1, 99, seq_or_id=1, avoid=(1,)))
    assert tap.frames == []
    assert net.metrics.path_rejections == 1


def test_update_route_rules(line4):
    r = line4.nodes[0].router
    assert r.update_route(3, 1, 4, 5)
    assert r.update_route(3, 1, 2, 5)          # same seq, fewer hops
    assert r.table[3].hop_count == 2
    assert not r.update_route(3, 1, 3, 5)      # same seq, more hops
    assert r.update_route(3, 1, 6, 7)          # fresher wins regardless of hops
    assert not r.update_route(3, 1, 1, 5)      # stale
    assert r.table[3].dest_seq == 7
    r.table[3].valid = False
    assert not r.update_route(3, 1, 1, 6)      # invalidated entries keep their seq
    assert r.update_route(3, 1, 9, 7)


@given(st.lists(st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(1, 8),
                          st.integers(0, 10), st.booleans()), max_size=40))
@settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_dest_seq_never_decreases(ops):
    net = make_net(line_positions(4), mode=BASELINE)
    r = net.nodes[0].router
    last = {}
    for dest, nh, hops, seq, invalidate in ops:
        r.update_route(dest, nh, hops, seq)
        if invalidate:
            r.purge_node(nh)
        for d, e in r.table.items():
            assert e.dest_seq >= last.get(d, -1)
            last[d] = e.dest_seq


def test_select_route_examples():
    a, b, c, d, e = range(5)
    assert select_route([RouteCacheEntry((a, b, c, d)), RouteCacheEntry((a, e, d))]).path == (a, e, d)
    only = RouteCacheEntry((a, c, d))
    assert select_route([only]) is only
    assert select_route([RouteCacheEntry((a, c, d)), RouteCacheEntry((a, b, d))]).path == (a, b, d)
    with pytest.raises(NoAdmissibleRoute):
        select_route([])


def test_seen_cache_is_bounded_lru():
    s = SeenCache(3)
    for k in range(5):
        s.add(k)
    assert len(s) == 3 and 0 not in s and 4 in s


def test_buffer_overflow_drops_oldest():
    net = make_net([(0.0, 0.0), (500.0, 0.0), (1000.0, 0.0)], mode=BASELINE)
    r = net.nodes[0].router
    pkts = [r.originate_data(2, 8) for _ in range(65)]
    assert len(r.buffer) == 64
    assert r.buffer[0] is pkts[1]
    assert net.metrics.dropped["no_route"] == 1
    assert not net.metrics.is_live(pkts[0].uid)


def test_discovery_gives_up_after_retries():
    net = make_net([(0.0, 0.0), (500.0, 0.0)], mode=BASELINE, duration=10.0)
    tap = Tap(net)
    net.nodes[0].router.originate_data(1, 8)
    net.kernel.run_until(10.0)
    assert [t for t, *_ in tap.of(Kind.RREQ)] == [0.0, 1.0, 2.0, 3.0]
    assert net.metrics.dropped["no_route"] == 1
    assert not net.nodes[0].router.buffer


def test_expired_next_hop_sends_rerr_and_purges(line4):
    r0 = line4.nodes[0].router
    r0.originate_data(3, 8)
    line4.kernel.run_until(1.0)
    b = line4.nodes[1].router
    b.table[3].expires_at = line4.now - 0.1
    tap = Tap(line4)
    data = Packet(Kind.DATA, 0, 3, 0, 500, payload=b"x", created_at=line4.now)
    line4.metrics.record(line4.now, "originated", 500, 0, 3)
    b.handle_data(data)
    rerr = tap.of(Kind.RERR)
    assert [(nid, to) for _, nid, to, _ in rerr] == [(1, 0)]
    assert 3 in rerr[0][3].unreachable and rerr[0][3].cause_uid == 500
    assert not b.table[3].valid
    assert line4.metrics.dropped["no_route"] == 1


def test_rerr_invalidates_routes_through_link(line4):
    r0 = line4.nodes[0].router
    r0.originate_data(3, 8)
    line4.kernel.run_until(1.0)
    r0.update_route(2, 1, 2, 1)
    r0.update_route(9, 5, 1, 1)
    assert r0.table[3].valid and r0.table[2].valid
    rerr = Packet(Kind.RERR, 1, 0, 1, 900, unreachable=(2, 3))
    r0.handle_rerr(rerr)
    assert not r0.table[3].valid and not r0.table[2].valid
    assert r0.table[9].valid


def test_rerr_for_unknown_link_is_noop(line4):
    r0 = line4.nodes[0].router
    r0.originate_data(3, 8)
    line4.kernel.run_until(1.0)
    snapshot = {d: (e.next_hop, e.valid) for d, e in r0.table.items()}
    tap = Tap(line4)
    r0.handle_rerr(Packet(Kind.RERR, 2, 0, 2, 900, unreachable=(7,)))
    assert {d: (e.next_hop, e.valid) for d, e in r0.table.items()} == snapshot
    assert tap.frames == []


def test_rerr_at_origin_with_buffered_data_rediscovers(line4):
    r0 = line4.nodes[0].router
    r0.originate_data(3, 8)
    line4.kernel.run_until(1.0)
    r0.table[3].valid = False
    r0._buffer(Packet(Kind.DATA, 0, 3, 0, 777, payload=b"x", created_at=line4.now))
    t0 = line4.now
    tap = Tap(line4)
    r0.handle_rerr(Packet(Kind.RERR, 1, 0, 1, 901, unreachable=(3,)))
    line4.kernel.run_until(t0 + 1.5)
    rreqs = [t for t, nid, _, _ in tap.of(Kind.RREQ) if nid == 0]
    assert rreqs == [pytest.approx(t0 + 1.0)]


def test_dsr_rerr_removes_cached_link():
    net = make_net(line_positions(4), protocol="DSR", mode=BASELINE)
    r0 = net.nodes[0].router
    r0.add_path((0, 1, 2, 3))
    r0.add_path((0, 1))
    r0.handle_rerr(Packet(Kind.RERR, 1, 0, 1, 5, source_route=(1, 0), unreachable=(2,)))
    assert list(r0.cache) == [(0, 1)]
    with pytest.raises(ValueError):
        r0.add_path((0, 1, 0))


def test_dsr_prefix_candidates_and_lru():
    net = make_net(line_positions(4), protocol="DSR", mode=BASELINE)
    r0 = net.nodes[0].router
    r0.add_path((0, 1, 2, 3))
    assert r0.route_for(2) == (0, 1, 2)
    assert r0.route_for(3) == (0, 1, 2, 3)
    for k in range(70):
        r0.add_path((0, 10 + k))
    assert len(r0.cache) == 64


@pytest.mark.parametrize("protocol", ["AODV", "DSR"])
def test_honest_chain_delivers(protocol):
    spec = make_spec(line_positions(5), protocol=protocol, mode=BASELINE, duration=20.0,
                     traffic=[Flow(0, 4, 1.0, 0.5, 64, 20)])
    net = Network(spec, 1)
    result = net.run()
    assert result.report.delivered == result.report.originated == 20


class Audit(Network):
    """Network that checks routing invariants on every transmission."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.rreq_tx = Counter()
        self.violations = []

    def transmit(self, nid, to, pkt):
        if pkt.kind == Kind.RREQ:
            self.rreq_tx[(pkt.origin, pkt.seq_or_id)] += 1
        if pkt.source_route is not None and len(set(pkt.source_route)) != len(pkt.source_route):
            self.violations.append(("loop", pkt))
        if pkt.kind == Kind.DATA:
            trust = self.nodes[nid].trust
            if trust is not None:
                if trust.is_blacklisted(to):
                    self.violations.append(("blacklisted next hop", nid, to))
                if pkt.source_route is not None and pkt.origin == nid:
                    if any(trust.is_blacklisted(n) for n in pkt.source_route[1:]):
                        self.violations.append(("blacklisted path", nid, pkt.source_route))
        return super().transmit(nid, to, pkt)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), protocol=st.sampled_from(["AODV", "DSR"]),
       mode=st.sampled_from([BASELINE, TRIPLE_FACTOR]), n=st.integers(4, 10))
def test_routing_invariants_random_topologies(seed, protocol, mode, n):
    spec = make_spec([(0.0, 0.0)] * n, protocol=protocol, mode=mode, rng=200.0, duration=40.0,
                     traffic=[Flow(0, n - 1, 1.0, 0.5, 64, 60), Flow(1, n - 2, 1.3, 0.7, 64, 40)],
                     adversaries=[AdversaryProfile(2, AdversaryKind.GRAYHOLE, drop_prob=0.7)])
    spec.positions = None
    spec.arena = (500.0, 500.0)
    spec.mobility = MobilityModel(1.0, 10.0, 1.0)
    net = Audit(spec, seed)
    report = net.run().report
    assert net.violations == []
    assert max(net.rreq_tx.values(), default=0) <= n
    assert report.delivered <= report.originated
