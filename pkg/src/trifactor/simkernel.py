"""Deterministic discrete-event kernel: clock, event queue, seeded streams,
random-waypoint mobility and a unit-disk radio."""

from __future__ import annotations

import enum
import hashlib
import heapq
import math
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

BROADCAST = -1


class SchedulingInPast(ValueError):
    pass


class UnknownNode(KeyError):
    pass


class EventKind(enum.Enum):
    FRAME_ARRIVAL = "FrameArrival"
    PROMISCUOUS_COPY = "PromiscuousCopy"
    TIMER = "Timer"
    MOBILITY_STEP = "MobilityStep"
    APP_SEND = "AppSend"
    REPORT_ROUND = "ReportRound"
    PROBATION_END = "ProbationEnd"


@dataclass(eq=False)
class Event:
    """A scheduled action. Doubles as the handle used for cancellation."""

    fire_at: float
    kind: EventKind
    action: Optional[Callable[["Event"], None]] = None
    payload: object = None
    seq: int = -1
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


def derive_seed(master: int, stream: str) -> int:
    digest = hashlib.sha256(f"{master}/{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Streams:
    """Independent per-concern RNG streams derived from one master seed.

    Drawing from one stream never perturbs another, so e.g. adding traffic
    does not change mobility traces.
    """

    def __init__(self, master_seed: int):
        self.master_seed = master_seed
        self._streams: dict[str, random.Random] = {}

    def __getitem__(self, name: str) -> random.Random:
        rng = self._streams.get(name)
        if rng is None:
            rng = random.Random(derive_seed(self.master_seed, name))
            self._streams[name] = rng
        return rng


_KIND_BYTES = {k: k.value.encode() for k in EventKind}


class Kernel:
    def __init__(self, trace: bool = False):
        self.clock = 0.0
        self._queue: list[tuple[float, int, Event]] = []
        self._seq = 0
        self._hash = hashlib.sha256()
        self.trace: Optional[list[tuple[float, int, str]]] = [] if trace else None
        self.fired = 0

    def schedule(self, event: Event) -> Event:
        if event.fire_at < self.clock:
            raise SchedulingInPast(
                f"fire_at={event.fire_at} is before clock={self.clock}")
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (event.fire_at, event.seq, event))
        return event

    def at(self, fire_at: float, kind: EventKind, action, payload=None) -> Event:
        return self.schedule(Event(fire_at, kind, action, payload))

    def after(self, delay: float, kind: EventKind, action, payload=None) -> Event:
        return self.schedule(Event(self.clock + delay, kind, action, payload))

    def pending(self) -> int:
        return sum(1 for _, _, e in self._queue if not e.cancelled)

    def run_until(self, end: float) -> float:
        if end < self.clock:
            raise SchedulingInPast(f"end={end} is before clock={self.clock}")
        queue = self._queue
        update = self._hash.update
        while queue and queue[0][0] <= end:
            fire_at, seq, ev = heapq.heappop(queue)
            if ev.cancelled:
                continue
            self.clock = fire_at
            self.fired += 1
            update(struct.pack(">dq", fire_at, seq))
            update(_KIND_BYTES[ev.kind])
            if self.trace is not None:
                self.trace.append((ev.fire_at, ev.seq, ev.kind.value))
            if ev.action is not None:
                ev.action(ev)
        self.clock = end
        return end

    def trace_hash(self) -> str:
        return self._hash.hexdigest()


@dataclass(frozen=True)
class RadioModel:
    range: float = 250.0
    frame_loss_prob: float = 0.0
    per_hop_latency: float = 0.002

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("radio range must be > 0")
        if not 0.0 <= self.frame_loss_prob <= 1.0:
            raise ValueError("frame_loss_prob must be in [0, 1]")
        if not self.per_hop_latency > 0:
            raise ValueError("per_hop_latency must be > 0")


@dataclass(frozen=True)
class MobilityModel:
    speed_min: float = 0.0
    speed_max: float = 0.0
    pause_time: float = 0.0
    step_interval: float = 1.0

    @property
    def static(self) -> bool:
        return self.speed_max <= 0.0


@dataclass
class NodeKinematics:
    node: int
    position: tuple[float, float]
    waypoint: tuple[float, float]
    speed: float = 0.0
    pause_until: float = 0.0


class TxOutcome(enum.Enum):
    DELIVERED = "delivered"
    LOST = "lost"
    OUT_OF_RANGE = "out_of_range"


@dataclass
class World:
    """Node geometry, mobility and the radio channel, driven by a Kernel.

    ``receive(node, packet, promiscuous)`` is called on frame arrival; it is
    wired up by the network assembly.
    """

    kernel: Kernel
    streams: Streams
    radio: RadioModel
    mobility: MobilityModel
    arena: tuple[float, float]
    nodes: dict[int, NodeKinematics] = field(default_factory=dict)
    receive: Optional[Callable[[int, object, bool], None]] = None
    # deliver PromiscuousCopy events to non-addressed neighbours
    overhearing: bool = True
    frames_transmitted: int = 0
    receptions_attempted: int = 0
    receptions_scheduled: int = 0
    receptions_lost: int = 0

    def add_node(self, node: int, position: Optional[tuple[float, float]] = None):
        rng = self.streams["mobility"]
        w, h = self.arena
        if position is None:
            position = (rng.uniform(0, w), rng.uniform(0, h))
        x, y = position
        if not (0 <= x <= w and 0 <= y <= h):
            raise ValueError(f"node {node} placed outside arena at {position}")
        kin = NodeKinematics(node, (float(x), float(y)), (float(x), float(y)))
        if not self.mobility.static:
            kin.waypoint = (rng.uniform(0, w), rng.uniform(0, h))
            kin.speed = rng.uniform(self.mobility.speed_min, self.mobility.speed_max)
        self.nodes[node] = kin

    def start_mobility(self):
        if self.mobility.static:
            return
        for node in sorted(self.nodes):
            self.kernel.after(self.mobility.step_interval, EventKind.MOBILITY_STEP,
                              self._on_mobility, node)

    def _on_mobility(self, ev: Event):
        self.mobility_step(ev.payload)
        self.kernel.after(self.mobility.step_interval, EventKind.MOBILITY_STEP,
                          self._on_mobility, ev.payload)

    def mobility_step(self, node: int) -> None:
        kin = self.nodes[node]
        now = self.kernel.clock
        if now < kin.pause_until:
            return
        (x, y), (wx, wy) = kin.position, kin.waypoint
        dist = math.hypot(wx - x, wy - y)
        step = kin.speed * self.mobility.step_interval
        if step < dist:
            f = step / dist
            kin.position = (x + (wx - x) * f, y + (wy - y) * f)
            return
        kin.position = (wx, wy)
        if kin.speed <= 0.0:
            return
        rng = self.streams["mobility"]
        w, h = self.arena
        kin.pause_until = now + self.mobility.pause_time
        kin.waypoint = (rng.uniform(0, w), rng.uniform(0, h))
        kin.speed = rng.uniform(self.mobility.speed_min, self.mobility.speed_max)

    def distance(self, a: int, b: int) -> float:
        (ax, ay), (bx, by) = self.nodes[a].position, self.nodes[b].position
        return math.hypot(ax - bx, ay - by)

    def neighbors_of(self, node: int) -> list[int]:
        """Sorted ids of every other node within radio range (inclusive)."""
        if node not in self.nodes:
            raise UnknownNode(node)
        x, y = self.nodes[node].position
        r2 = self.radio.range * self.radio.range
        out = []
        for other, kin in self.nodes.items():
            if other == node:
                continue
            dx = kin.position[0] - x
            dy = kin.position[1] - y
            if dx * dx + dy * dy <= r2:
                out.append(other)
        out.sort()
        return out

    def in_range(self, a: int, b: int) -> bool:
        return self.distance(a, b) <= self.radio.range

    def transmit_frame(self, sender: int, to: int, packet) -> TxOutcome:
        """Put one frame on the air.

        Every intended receiver in range gets an independent loss trial and a
        FrameArrival. With ``overhearing`` on, the other neighbours are drawn
        too and get a PromiscuousCopy. For unicast the returned
        outcome stands in for link-layer acknowledgement.
        """
        if sender not in self.nodes:
            raise UnknownNode(sender)
        if to != BROADCAST and to not in self.nodes:
            raise UnknownNode(to)
        self.frames_transmitted += 1
        loss = self.radio.frame_loss_prob
        rng = self.streams["loss"]
        latency = self.radio.per_hop_latency
        outcome = TxOutcome.OUT_OF_RANGE
        for rx in self.neighbors_of(sender):
            intended = to == BROADCAST or rx == to
            if not intended and not self.overhearing:
                continue
            self.receptions_attempted += 1
            if loss > 0.0 and rng.random() < loss:
                self.receptions_lost += 1
                if rx == to:
                    outcome = TxOutcome.LOST
                continue
            self.receptions_scheduled += 1
            if rx == to:
                outcome = TxOutcome.DELIVERED
            kind = EventKind.FRAME_ARRIVAL if intended else EventKind.PROMISCUOUS_COPY
            self.kernel.after(latency, kind, self._arrive, (rx, packet, not intended))
        return outcome

    def _arrive(self, ev: Event):
        rx, packet, promiscuous = ev.payload
        if self.receive is not None:
            self.receive(rx, packet, promiscuous)
