"""Reactive routing: AODV (next-hop tables) and DSR (source routes).

Only the destination answers an RREQ. The trust layer plugs in through a
hook object with ``admissible(node)``, ``on_path_rejection()`` and
``avoid_list()``; :class:`AdmitAll` is the baseline hook.

Routers talk to the rest of the simulation through ``net``, which provides
``now``, ``kernel``, ``new_uid()``, ``transmit(node, to, packet)``,
``watch(node, next_hop, packet)``, ``intercept(node, packet)``,
``deliver(node, packet)``, ``drop(uid, cause)`` and ``record(name, *args)``.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Iterable, Optional

from .packet import Kind, Packet
from .simkernel import BROADCAST, EventKind, TxOutcome


class NoAdmissibleRoute(LookupError):
    pass


@dataclass
class RoutingParams:
    active_route_lifetime: float = 10.0
    rreq_retry_wait: float = 1.0
    max_rreq_retries: int = 3
    buffer_capacity: int = 64
    rreq_seen_capacity: int = 256
    cache_capacity: int = 64


@dataclass
class RouteEntry:
    dest: int
    next_hop: int
    hop_count: int
    dest_seq: int
    expires_at: float
    valid: bool = True

    def usable(self, now: float) -> bool:
        return self.valid and now < self.expires_at


@dataclass(frozen=True)
class RouteCacheEntry:
    path: tuple[int, ...]
    learned_at: float = 0.0


class AdmitAll:
    def admissible(self, node: int) -> bool:
        return True

    def on_path_rejection(self) -> None:
        pass

    def avoid_list(self) -> tuple[int, ...]:
        return ()


class SeenCache:
    """Bounded LRU of (origin, rreq_id) pairs."""

    def __init__(self, capacity: int = 256):
        self.capacity = capacity
        self._d: OrderedDict = OrderedDict()

    def __contains__(self, key) -> bool:
        return key in self._d

    def add(self, key) -> None:
        self._d[key] = None
        self._d.move_to_end(key)
        while len(self._d) > self.capacity:
            self._d.popitem(last=False)

    def __len__(self) -> int:
        return len(self._d)


def select_route(candidates: Iterable[RouteCacheEntry]) -> RouteCacheEntry:
    """Fewest hops wins; ties go to the lexicographically smallest path."""
    best = None
    for c in candidates:
        if best is None or (len(c.path), c.path) < (len(best.path), best.path):
            best = c
    if best is None:
        raise NoAdmissibleRoute("no admissible candidate route")
    return best


@dataclass
class _Discovery:
    retries: int = 0
    timer: object = None


class Router:
    protocol = "?"

    def __init__(self, node: int, net, params: Optional[RoutingParams] = None, hooks=None):
        self.node = node
        self.net = net
        self.params = params or RoutingParams()
        self.hooks = hooks or AdmitAll()
        self.buffer: deque[Packet] = deque()
        self.seen = SeenCache(self.params.rreq_seen_capacity)
        self.discovering: dict[int, _Discovery] = {}
        self.rreq_ids = 0

    # trust veto

    def _admit(self, node: int) -> bool:
        if self.hooks.admissible(node):
            return True
        self.hooks.on_path_rejection()
        return False

    # origination and buffering

    def originate_data(self, dest: int, payload_len: int) -> Packet:
        if dest == self.node:
            raise ValueError("source and destination must differ")
        now = self.net.now
        pkt = Packet(Kind.DATA, self.node, dest, self.node, self.net.new_uid(),
                     payload=bytes(payload_len), created_at=now)
        self.net.record("originated", pkt.uid, self.node, dest)
        self.send_or_buffer(pkt)
        return pkt

    def send_or_buffer(self, pkt: Packet) -> None:
        if not self.try_send(pkt):
            self._buffer(pkt)
            if pkt.target not in self.discovering:
                self.start_discovery(pkt.target)

    def _buffer(self, pkt: Packet) -> None:
        self.buffer.append(pkt)
        while len(self.buffer) > self.params.buffer_capacity:
            old = self.buffer.popleft()
            self.net.drop(old.uid, "no_route")

    def buffered_for(self, dest: int) -> list[Packet]:
        return [p for p in self.buffer if p.target == dest]

    def flush(self, dest: int) -> None:
        waiting = self.buffered_for(dest)
        if not waiting:
            return
        self.buffer = deque(p for p in self.buffer if p.target != dest)
        for i, pkt in enumerate(waiting):
            if not self.try_send(pkt):
                # route vanished mid-flush: requeue the rest and rediscover
                for rest in waiting[i:]:
                    self._buffer(rest)
                if dest not in self.discovering:
                    self.start_discovery(dest)
                return

    # discovery

    def start_discovery(self, dest: int) -> None:
        self.net.record("discovery", self.node, dest)
        d = _Discovery()
        self.discovering[dest] = d
        self._send_rreq(dest)
        d.timer = self.net.kernel.after(self.params.rreq_retry_wait, EventKind.TIMER,
                                        self._on_rreq_timeout, dest)

    def _on_rreq_timeout(self, ev) -> None:
        dest = ev.payload
        d = self.discovering.get(dest)
        if d is None or d.timer is not ev:
            return
        if d.retries >= self.params.max_rreq_retries:
            del self.discovering[dest]
            for pkt in self.buffered_for(dest):
                self.net.drop(pkt.uid, "no_route")
            self.buffer = deque(p for p in self.buffer if p.target != dest)
            return
        d.retries += 1
        self._send_rreq(dest)
        d.timer = self.net.kernel.after(self.params.rreq_retry_wait, EventKind.TIMER,
                                        self._on_rreq_timeout, dest)

    def discovery_done(self, dest: int) -> None:
        d = self.discovering.pop(dest, None)
        if d is not None:
            d.timer.cancel()
            self.net.record("discovery_ok", self.node, dest)
        self.flush(dest)

    def _schedule_rediscovery(self, dest: int) -> None:
        if dest in self.discovering or not self.buffered_for(dest):
            return

        def _go(_ev):
            if dest not in self.discovering and self.buffered_for(dest):
                if self.try_send_buffered(dest):
                    return
                self.start_discovery(dest)

        self.net.kernel.after(self.params.rreq_retry_wait, EventKind.TIMER, _go)

    def try_send_buffered(self, dest: int) -> bool:
        if self.next_hop_for(dest) is None:
            return False
        self.flush(dest)
        return True

    def _new_rreq(self, dest: int, rreq_id: int, route=None) -> Packet:
        self.seen.add((self.node, rreq_id))
        return Packet(Kind.RREQ, self.node, dest, self.node, self.net.new_uid(),
                      seq_or_id=rreq_id, source_route=route, created_at=self.net.now,
                      avoid=self.hooks.avoid_list())

    # receive path

    def handle(self, pkt: Packet) -> None:
        kind = pkt.kind
        if kind == Kind.DATA:
            self.handle_data(pkt)
        elif kind == Kind.RREQ:
            self.handle_rreq(pkt)
        elif kind == Kind.RREP:
            self.handle_rrep(pkt)
        elif kind == Kind.RERR:
            self.handle_rerr(pkt)

    def handle_rreq(self, rreq: Packet) -> None:
        if rreq.prev_hop in rreq.avoid:
            self.hooks.on_path_rejection()
            return
        if not self._admit(rreq.prev_hop):
            return
        key = (rreq.origin, rreq.seq_or_id)
        if key in self.seen:
            return
        self.seen.add(key)
        self._on_rreq(rreq.evolve(hop_count=rreq.hop_count + 1))

    def handle_data(self, data: Packet) -> None:
        if data.target == self.node:
            self.net.deliver(self.node, data)
            return
        data = self.net.intercept(self.node, data)
        if data is None:
            return
        nh = self.next_hop_for_forward(data)
        if nh is None:
            self.net.drop(data.uid, "no_route")
            self.send_rerr(data, self._unreachable_without_route(data))
            return
        self.forward(data, nh)

    def forward(self, data: Packet, next_hop: int) -> None:
        """Transmit DATA one hop, with the admissibility check at send time."""
        if not self._admit(next_hop):
            self.on_next_hop_rejected(data, next_hop)
            return
        out = self.net.transmit(self.node, next_hop,
                                data.evolve(prev_hop=self.node, hop_count=data.hop_count + 1))
        if out is TxOutcome.DELIVERED:
            if next_hop != data.target:
                self.net.watch(self.node, next_hop, data)
        elif out is TxOutcome.LOST:
            self.net.drop(data.uid, "loss")
        else:
            self.link_broken(data, next_hop)

    def on_next_hop_rejected(self, data: Packet, next_hop: int) -> None:
        self.purge_node(next_hop)
        self._break(data, next_hop)

    def link_broken(self, data: Packet, next_hop: int) -> None:
        self.purge_link(next_hop)
        self._break(data, next_hop)

    def _break(self, data: Packet, next_hop: int) -> None:
        if data.origin == self.node:
            self.send_or_buffer(data)
        else:
            self.net.drop(data.uid, "no_route")
            self.send_rerr(data, self._unreachable_via(next_hop, data))

    # protocol-specific

    def try_send(self, pkt: Packet) -> bool:
        raise NotImplementedError

    def next_hop_for(self, dest: int) -> Optional[int]:
        raise NotImplementedError

    def next_hop_for_forward(self, data: Packet) -> Optional[int]:
        raise NotImplementedError

    def _send_rreq(self, dest: int) -> None:
        raise NotImplementedError

    def _on_rreq(self, rreq: Packet) -> None:
        raise NotImplementedError

    def handle_rrep(self, rrep: Packet) -> None:
        raise NotImplementedError

    def handle_rerr(self, rerr: Packet) -> None:
        raise NotImplementedError

    def send_rerr(self, data: Packet, unreachable: tuple[int, ...]) -> None:
        raise NotImplementedError

    def purge_node(self, node: int) -> None:
        raise NotImplementedError

    def purge_link(self, next_hop: int) -> None:
        raise NotImplementedError

    def _unreachable_via(self, next_hop: int, data: Packet) -> tuple[int, ...]:
        return (next_hop,)

    def _unreachable_without_route(self, data: Packet) -> tuple[int, ...]:
        return (data.target,)


class AodvRouter(Router):
    protocol = "AODV"

    def __init__(self, node, net, params=None, hooks=None):
        super().__init__(node, net, params, hooks)
        self.table: dict[int, RouteEntry] = {}
        self.own_seq = 0

    def update_route(self, dest: int, next_hop: int, hop_count: int, dest_seq: int) -> bool:
        """Install or refresh a route; fresher sequence, or same sequence with
        fewer hops, wins. Invalid entries keep their sequence number."""
        now = self.net.now
        e = self.table.get(dest)
        expires = now + self.params.active_route_lifetime
        if e is not None:
            if dest_seq < e.dest_seq:
                return False
            if dest_seq == e.dest_seq and e.usable(now) and hop_count >= e.hop_count:
                if e.next_hop == next_hop and hop_count == e.hop_count:
                    e.expires_at = max(e.expires_at, expires)
                return False
        self.table[dest] = RouteEntry(dest, next_hop, hop_count, dest_seq, expires)
        return True

    def _usable_entry(self, dest: int) -> Optional[RouteEntry]:
        e = self.table.get(dest)
        if e is None or not e.usable(self.net.now):
            return None
        return e

    def next_hop_for(self, dest: int) -> Optional[int]:
        e = self._usable_entry(dest)
        if e is None:
            return None
        if not self._admit(e.next_hop):
            self.purge_node(e.next_hop)
            return None
        return e.next_hop

    def _refresh(self, dest: int) -> None:
        e = self._usable_entry(dest)
        if e is not None:
            e.expires_at = max(e.expires_at, self.net.now + self.params.active_route_lifetime)

    def try_send(self, pkt: Packet) -> bool:
        nh = self.next_hop_for(pkt.target)
        if nh is None:
            return False
        self._refresh(pkt.target)
        self.forward(pkt, nh)
        return True

    def next_hop_for_forward(self, data: Packet) -> Optional[int]:
        e = self.table.get(data.target)
        if e is not None and e.valid and not e.usable(self.net.now):
            e.valid = False
        nh = self.next_hop_for(data.target)
        if nh is not None:
            self._refresh(data.target)
            self._refresh(data.origin)
        return nh

    def _send_rreq(self, dest: int) -> None:
        self.own_seq += 1
        self.net.transmit(self.node, BROADCAST, self._new_rreq(dest, self.own_seq))

    def _on_rreq(self, rreq: Packet) -> None:
        self.update_route(rreq.origin, rreq.prev_hop, rreq.hop_count, rreq.seq_or_id)
        if rreq.target == self.node:
            self.own_seq += 1
            rrep = Packet(Kind.RREP, self.node, rreq.origin, self.node, self.net.new_uid(),
                          seq_or_id=self.own_seq, created_at=self.net.now)
            self._send_toward(rrep, rreq.origin)
            return
        self.net.transmit(self.node, BROADCAST, rreq.evolve(prev_hop=self.node))

    def _send_toward(self, pkt: Packet, dest: int) -> bool:
        e = self._usable_entry(dest)
        if e is None:
            return False
        out = self.net.transmit(self.node, e.next_hop, pkt.evolve(prev_hop=self.node))
        if out is TxOutcome.OUT_OF_RANGE:
            self.purge_link(e.next_hop)
            return False
        return True

    def handle_rrep(self, rrep: Packet) -> None:
        rrep = rrep.evolve(hop_count=rrep.hop_count + 1)
        if rrep.target == self.node:
            if not self._admit(rrep.prev_hop):
                return
            self.update_route(rrep.origin, rrep.prev_hop, rrep.hop_count, rrep.seq_or_id)
            if self._usable_entry(rrep.origin) is not None:
                self.discovery_done(rrep.origin)
            return
        self.update_route(rrep.origin, rrep.prev_hop, rrep.hop_count, rrep.seq_or_id)
        # an unusable reverse route drops the RREP; discovery will retry
        self._send_toward(rrep, rrep.target)

    def send_rerr(self, data: Packet, unreachable: tuple[int, ...]) -> None:
        rerr = Packet(Kind.RERR, self.node, data.origin, self.node, self.net.new_uid(),
                      created_at=self.net.now, unreachable=unreachable, cause_uid=data.uid)
        # first hop goes straight back upstream, which is also the watchdog
        # waiting on this node
        self.net.transmit(self.node, data.prev_hop, rerr)

    def handle_rerr(self, rerr: Packet) -> None:
        hit = False
        for dest in rerr.unreachable:
            e = self.table.get(dest)
            if e is not None and e.valid and e.next_hop == rerr.prev_hop:
                e.valid = False
                hit = True
        if rerr.target == self.node:
            for dest in rerr.unreachable:
                self._schedule_rediscovery(dest)
        elif hit:
            self._send_toward(rerr, rerr.target)

    def purge_node(self, node: int) -> None:
        for e in self.table.values():
            if e.next_hop == node:
                e.valid = False

    def purge_link(self, next_hop: int) -> None:
        self.purge_node(next_hop)

    def _unreachable_via(self, next_hop: int, data: Packet) -> tuple[int, ...]:
        lost = {e.dest for e in self.table.values() if e.next_hop == next_hop}
        lost.update((next_hop, data.target))
        return tuple(sorted(lost))


class DsrRouter(Router):
    protocol = "DSR"

    def __init__(self, node, net, params=None, hooks=None):
        super().__init__(node, net, params, hooks)
        self.cache: OrderedDict[tuple[int, ...], float] = OrderedDict()

    def add_path(self, path: tuple[int, ...]) -> None:
        if len(path) < 2 or len(set(path)) != len(path) or path[0] != self.node:
            raise ValueError(f"invalid source route {path}")
        self.cache[path] = self.net.now
        self.cache.move_to_end(path)
        while len(self.cache) > self.params.cache_capacity:
            self.cache.popitem(last=False)

    def candidates(self, dest: int) -> list[RouteCacheEntry]:
        out = {}
        for path, learned in self.cache.items():
            if dest in path:
                prefix = path[:path.index(dest) + 1]
                if prefix not in out:
                    out[prefix] = RouteCacheEntry(prefix, learned)
        return list(out.values())

    def route_for(self, dest: int) -> Optional[tuple[int, ...]]:
        admissible = []
        for c in self.candidates(dest):
            if all(self._admit(n) for n in c.path[1:]):
                admissible.append(c)
        if not admissible:
            return None
        best = select_route(admissible)
        for path in list(self.cache):
            if path[:len(best.path)] == best.path:
                self.cache.move_to_end(path)
                break
        return best.path

    def next_hop_for(self, dest: int) -> Optional[int]:
        path = self.route_for(dest)
        return None if path is None else path[1]

    def try_send(self, pkt: Packet) -> bool:
        path = self.route_for(pkt.target)
        if path is None:
            return False
        self.forward(pkt.evolve(source_route=path), path[1])
        return True

    def next_hop_for_forward(self, data: Packet) -> Optional[int]:
        path = data.source_route
        i = path.index(self.node)
        return path[i + 1]

    def _send_rreq(self, dest: int) -> None:
        self.rreq_ids += 1
        self.net.transmit(self.node, BROADCAST, self._new_rreq(dest, self.rreq_ids, (self.node,)))

    def _on_rreq(self, rreq: Packet) -> None:
        if self.node in rreq.source_route:
            return
        route = rreq.source_route + (self.node,)
        if rreq.target == self.node:
            rrep = Packet(Kind.RREP, self.node, rreq.origin, self.node, self.net.new_uid(),
                          seq_or_id=rreq.seq_or_id, source_route=route,
                          created_at=self.net.now)
            self.net.transmit(self.node, route[-2], rrep)
            return
        self.net.transmit(self.node, BROADCAST,
                          rreq.evolve(prev_hop=self.node, source_route=route))

    def handle_rrep(self, rrep: Packet) -> None:
        path = rrep.source_route
        i = path.index(self.node)
        if i == 0:
            if all(self._admit(n) for n in path[1:]):
                self.add_path(path)
                self.discovery_done(path[-1])
            return
        out = self.net.transmit(self.node, path[i - 1],
                                rrep.evolve(prev_hop=self.node, hop_count=rrep.hop_count + 1))
        if out is TxOutcome.OUT_OF_RANGE:
            self.purge_link(path[i - 1])

    def send_rerr(self, data: Packet, unreachable: tuple[int, ...]) -> None:
        path = data.source_route
        i = path.index(self.node)
        back = tuple(reversed(path[:i + 1]))
        rerr = Packet(Kind.RERR, self.node, data.origin, self.node, self.net.new_uid(),
                      source_route=back, created_at=self.net.now,
                      unreachable=unreachable, cause_uid=data.uid)
        self.net.transmit(self.node, back[1], rerr)

    def handle_rerr(self, rerr: Packet) -> None:
        self.remove_link(rerr.origin, rerr.unreachable[0])
        if rerr.target == self.node:
            self._schedule_rediscovery_all()
            return
        back = rerr.source_route
        i = back.index(self.node)
        self.net.transmit(self.node, back[i + 1], rerr.evolve(prev_hop=self.node))

    def _schedule_rediscovery_all(self) -> None:
        for dest in sorted({p.target for p in self.buffer}):
            self._schedule_rediscovery(dest)

    def remove_link(self, a: int, b: int) -> None:
        for path in list(self.cache):
            for x, y in zip(path, path[1:]):
                if (x, y) == (a, b) or (x, y) == (b, a):
                    del self.cache[path]
                    break

    def purge_node(self, node: int) -> None:
        for path in list(self.cache):
            if node in path[1:]:
                del self.cache[path]

    def purge_link(self, next_hop: int) -> None:
        self.remove_link(self.node, next_hop)
