"""One simulation run: nodes, radio, routing, security layer and metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from . import crypto
from .adversary import AdversaryProfile, Interceptor, Verdict, schedule_repentance
from .metrics import MetricsRecorder, MetricsReport
from .packet import ALL_NODES, Kind, Packet
from .routing import AodvRouter, DsrRouter, Router, RoutingParams
from .simkernel import (BROADCAST, EventKind, Kernel, MobilityModel, RadioModel,
                        Streams, TxOutcome, World)
from .trust import ReputationReport, State, TrustParams, TrustTable, WarnMessage

log = logging.getLogger(__name__)

BASELINE = "Baseline"
TRIPLE_FACTOR = "TripleFactor"
PROTOCOLS = {"AODV": AodvRouter, "DSR": DsrRouter}


@dataclass
class Flow:
    src: int
    dst: int
    start_at: float
    interval: float
    payload_bytes: int
    count: int


@dataclass
class RunSpec:
    """Everything a single run depends on besides the seed."""

    node_count: int
    duration: float
    protocol: str = "AODV"
    security_mode: str = TRIPLE_FACTOR
    arena: tuple[float, float] = (1000.0, 1000.0)
    positions: Optional[list[tuple[float, float]]] = None
    radio: RadioModel = field(default_factory=RadioModel)
    mobility: MobilityModel = field(default_factory=MobilityModel)
    trust: TrustParams = field(default_factory=TrustParams)
    routing: RoutingParams = field(default_factory=RoutingParams)
    traffic: list[Flow] = field(default_factory=list)
    adversaries: list[AdversaryProfile] = field(default_factory=list)


@dataclass
class RunResult:
    seed: int
    protocol: str
    security_mode: str
    report: MetricsReport
    metrics_log: list
    trust_log: list
    trace_hash: str
    trace: Optional[list] = None


class TrustHook:
    def __init__(self, trust: TrustTable, net: "Network"):
        self.trust = trust
        self.net = net

    def admissible(self, node: int) -> bool:
        return self.trust.admissible(node)

    def on_path_rejection(self) -> None:
        self.net.record("path_rejection", self.trust.owner)

    def avoid_list(self) -> tuple[int, ...]:
        return self.trust.blacklist()


class Node:
    def __init__(self, nid: int):
        self.id = nid
        self.router: Optional[Router] = None
        self.trust: Optional[TrustTable] = None
        self.interceptor: Optional[Interceptor] = None
        # (uid, watched node) -> timeout event
        self.expect: dict[tuple[int, int], object] = {}


class Network:
    def __init__(self, spec: RunSpec, seed: int, trace: bool = False):
        if spec.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {spec.protocol!r}")
        if spec.security_mode not in (BASELINE, TRIPLE_FACTOR):
            raise ValueError(f"unknown security mode {spec.security_mode!r}")
        self.spec = spec
        self.seed = seed
        self.secure = spec.security_mode == TRIPLE_FACTOR
        self.kernel = Kernel(trace=trace)
        self.streams = Streams(seed)
        self.keys = crypto.KeyRing.from_seed(seed)
        self.metrics = MetricsRecorder()
        self.trust_log: list = []
        self.world = World(self.kernel, self.streams, spec.radio, spec.mobility, spec.arena)
        self.world.receive = self.receive
        # only the watchdog consumes overheard frames
        self.world.overhearing = self.secure
        self._uid = 0
        self.nodes: dict[int, Node] = {}
        for nid in range(spec.node_count):
            pos = spec.positions[nid] if spec.positions else None
            self.world.add_node(nid, pos)
            self.nodes[nid] = self._make_node(nid)
        for prof in spec.adversaries:
            icpt = Interceptor(prof, self.streams[f"adversary/{prof.node}"])
            self.nodes[prof.node].interceptor = icpt
            schedule_repentance(icpt, self.kernel)

    def _make_node(self, nid: int) -> Node:
        node = Node(nid)
        hooks = None
        if self.secure:
            node.trust = TrustTable(
                nid, self.spec.trust, self.kernel,
                on_warn=lambda accused, rating, n=node: self._send_warn(n, accused, rating),
                on_transition=lambda s, old, new, n=node: self._on_transition(n, s, old, new),
                log=self.trust_log)
            hooks = TrustHook(node.trust, self)
        node.router = PROTOCOLS[self.spec.protocol](nid, self, self.spec.routing, hooks)
        return node

    # services used by routers

    @property
    def now(self) -> float:
        return self.kernel.clock

    def new_uid(self) -> int:
        self._uid += 1
        return self._uid

    def record(self, name: str, *args) -> bool:
        return self.metrics.record(self.kernel.clock, name, *args)

    def drop(self, uid: int, cause: str) -> None:
        self.record("dropped", uid, cause)

    def deliver(self, nid: int, pkt: Packet) -> None:
        self.record("delivered", pkt.uid, self.now - pkt.created_at, 8 * pkt.payload_len)

    def honest(self, nid: int) -> bool:
        icpt = self.nodes[nid].interceptor
        return icpt is None or not icpt.active(self.now)

    def intercept(self, nid: int, pkt: Packet) -> Optional[Packet]:
        icpt = self.nodes[nid].interceptor
        if icpt is None:
            return pkt
        verdict = icpt.intercept_forward(pkt, self.now)
        if verdict is Verdict.DROP:
            self.drop(pkt.uid, "adversary")
            return None
        if verdict is Verdict.TAMPER:
            return icpt.tamper(pkt)
        return pkt

    def transmit(self, nid: int, to: int, pkt: Packet) -> TxOutcome:
        icpt = self.nodes[nid].interceptor
        if icpt is not None and icpt.forges_tags(self.now):
            pkt = crypto.sign(self.keys.outsider_key, pkt)
        elif pkt.origin == nid:
            pkt = crypto.sign(self.keys.network_key, pkt)
        if pkt.is_control:
            self.record("control_tx", int(pkt.kind))
        return self.world.transmit_frame(nid, to, pkt)

    def watch(self, nid: int, next_hop: int, pkt: Packet) -> None:
        node = self.nodes[nid]
        if node.trust is None:
            return
        key = (pkt.uid, next_hop)
        node.expect[key] = self.kernel.after(self.spec.trust.watchdog_timeout, EventKind.TIMER,
                                             self._watch_timeout, (nid, key))

    def _watch_timeout(self, ev) -> None:
        nid, key = ev.payload
        node = self.nodes[nid]
        if node.expect.get(key) is ev:
            del node.expect[key]
            node.trust.observe_misbehavior(key[1], "NoForward")

    # receive path

    def receive(self, nid: int, pkt: Packet, promiscuous: bool) -> None:
        node = self.nodes[nid]
        if node.trust is not None:
            self._overhear(node, pkt)
        if promiscuous:
            return
        if node.trust is not None and not crypto.verify_packet(self.keys.network_key, pkt):
            self.record("mac_failure", nid, pkt.prev_hop)
            crypto.attribute_failure(node.trust, pkt)
            if pkt.kind == Kind.DATA:
                self.drop(pkt.uid, "adversary")
            return
        if pkt.kind == Kind.REPORT:
            for subject, rating in pkt.entries:
                node.trust.receive_report(ReputationReport(pkt.origin, subject, rating,
                                                           pkt.created_at))
        elif pkt.kind == Kind.WARN:
            (accused, rating), = pkt.entries
            node.trust.receive_warn(WarnMessage(pkt.origin, accused, rating, pkt.created_at))
        else:
            node.router.handle(pkt)

    def _overhear(self, node: Node, pkt: Packet) -> None:
        """Watchdog: settle an expectation on the transmitter of ``pkt``."""
        if not node.expect:
            return
        if pkt.kind == Kind.DATA:
            ev = node.expect.pop((pkt.uid, pkt.prev_hop), None)
            if ev is None:
                return
            ev.cancel()
            if crypto.verify_packet(self.keys.network_key, pkt):
                node.trust.observe_forward(pkt.prev_hop)
            else:
                node.trust.observe_misbehavior(pkt.prev_hop, "MacFailure")
        elif pkt.kind == Kind.RERR and pkt.cause_uid >= 0:
            # the watched node explained the drop
            ev = node.expect.pop((pkt.cause_uid, pkt.prev_hop), None)
            if ev is not None:
                ev.cancel()

    # trust side effects

    def _on_transition(self, node: Node, subject: int, old: State, new: State) -> None:
        if new is State.BLACKLISTED:
            self.record("blacklist", node.id, subject, self.honest(subject))
            node.router.purge_node(subject)

    def _send_warn(self, node: Node, accused: int, rating: float) -> None:
        pkt = Packet(Kind.WARN, node.id, ALL_NODES, node.id, self.new_uid(),
                     created_at=self.now, entries=((accused, rating),))
        self.transmit(node.id, BROADCAST, pkt)

    def _report_round(self, ev) -> None:
        node = self.nodes[ev.payload]
        node.trust.report_round()
        entries = tuple(node.trust.report_entries())
        if entries:
            pkt = Packet(Kind.REPORT, node.id, ALL_NODES, node.id, self.new_uid(),
                         created_at=self.now, entries=entries)
            self.transmit(node.id, BROADCAST, pkt)
        self.kernel.after(self.spec.trust.report_interval, EventKind.REPORT_ROUND,
                          self._report_round, ev.payload)

    # traffic

    def _app_send(self, ev) -> None:
        flow, k = ev.payload
        self.nodes[flow.src].router.originate_data(flow.dst, flow.payload_bytes)
        if k + 1 < flow.count:
            self.kernel.after(flow.interval, EventKind.APP_SEND, self._app_send, (flow, k + 1))

    def run(self) -> RunResult:
        spec = self.spec
        self.world.start_mobility()
        for flow in spec.traffic:
            if flow.count > 0:
                self.kernel.at(flow.start_at, EventKind.APP_SEND, self._app_send, (flow, 0))
        if self.secure:
            n = len(self.nodes)
            for nid in self.nodes:
                # stagger rounds so neighbours do not report in lockstep
                first = spec.trust.report_interval * (1.0 + nid / (2.0 * n))
                self.kernel.at(first, EventKind.REPORT_ROUND, self._report_round, nid)
        self.kernel.run_until(spec.duration)
        report = self.metrics.finalize(spec.duration)
        log.debug("run seed=%s %s/%s pdr=%.3f", self.seed, spec.protocol,
                  spec.security_mode, report.pdr)
        return RunResult(self.seed, spec.protocol, spec.security_mode, report,
                         self.metrics.log, self.trust_log, self.kernel.trace_hash(),
                         self.kernel.trace)


def simulate(spec: RunSpec, seed: int, trace: bool = False) -> RunResult:
    return Network(spec, seed, trace=trace).run()
