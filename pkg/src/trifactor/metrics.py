"""Per-run counters folded from an append-only event log.

NRO (normalized routing overhead) is control transmissions per delivered
data packet; throughput counts payload bits only.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from typing import Union

DROP_CAUSES = ("adversary", "loss", "no_route")


@dataclass
class MetricsReport:
    originated: int = 0
    delivered: int = 0
    pdr: float = 0.0
    throughput: float = 0.0
    control_packets: int = 0
    nro: Union[float, str] = 0.0
    path_rejections: int = 0
    false_accusations: int = 0
    blacklist_events: int = 0
    mean_delay: float = 0.0
    dropped_by_adversary: int = 0
    dropped_by_loss: int = 0
    dropped_no_route: int = 0
    still_buffered: int = 0
    route_discoveries: int = 0
    discovery_successes: int = 0
    mac_failures: int = 0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def values(self) -> tuple:
        return astuple(self)


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class MetricsRecorder:
    """Live counters plus the log they were folded from.

    Every DATA uid reaches at most one terminal state (delivered or one of
    the drop causes); later terminal records for the same uid are ignored
    and not logged.
    """

    def __init__(self):
        self.log: list[tuple] = []
        self.originated = 0
        self.delivered = 0
        self.delivered_bits = 0
        self.total_delay = 0.0
        self.control_packets = 0
        self.path_rejections = 0
        self.false_accusations = 0
        self.blacklist_events = 0
        self.route_discoveries = 0
        self.discovery_successes = 0
        self.mac_failures = 0
        self.dropped = dict.fromkeys(DROP_CAUSES, 0)
        self._live: set[int] = set()

    def record(self, time: float, name: str, *args) -> bool:
        entry = (time, name) + args
        if not self._apply(entry):
            return False
        self.log.append(entry)
        return True

    def _apply(self, entry: tuple) -> bool:
        name = entry[1]
        if name == "originated":
            self.originated += 1
            self._live.add(entry[2])
        elif name == "delivered":
            uid, delay, bits = entry[2:5]
            if uid not in self._live:
                return False
            self._live.discard(uid)
            self.delivered += 1
            self.total_delay += delay
            self.delivered_bits += bits
        elif name == "dropped":
            uid, cause = entry[2:4]
            if uid not in self._live:
                return False
            self._live.discard(uid)
            self.dropped[cause] += 1
        elif name == "control_tx":
            self.control_packets += 1
        elif name == "path_rejection":
            self.path_rejections += 1
        elif name == "blacklist":
            self.blacklist_events += 1
            if entry[4]:
                self.false_accusations += 1
        elif name == "discovery":
            self.route_discoveries += 1
        elif name == "discovery_ok":
            self.discovery_successes += 1
        elif name == "mac_failure":
            self.mac_failures += 1
        else:
            raise ValueError(f"unknown metrics event {name!r}")
        return True

    def is_live(self, uid: int) -> bool:
        return uid in self._live

    def finalize(self, duration: float) -> MetricsReport:
        delivered = self.delivered
        if delivered:
            nro: Union[float, str] = self.control_packets / delivered
            mean_delay = self.total_delay / delivered
        else:
            nro, mean_delay = "inf", 0.0
        return MetricsReport(
            originated=self.originated,
            delivered=delivered,
            pdr=delivered / self.originated if self.originated else 0.0,
            throughput=self.delivered_bits / duration if delivered else 0.0,
            control_packets=self.control_packets,
            nro=nro,
            path_rejections=self.path_rejections,
            false_accusations=self.false_accusations,
            blacklist_events=self.blacklist_events,
            mean_delay=mean_delay,
            dropped_by_adversary=self.dropped["adversary"],
            dropped_by_loss=self.dropped["loss"],
            dropped_no_route=self.dropped["no_route"],
            still_buffered=len(self._live),
            route_discoveries=self.route_discoveries,
            discovery_successes=self.discovery_successes,
            mac_failures=self.mac_failures,
        )

    @classmethod
    def replay(cls, log: list[tuple]) -> "MetricsRecorder":
        rec = cls()
        for entry in log:
            rec.record(*entry)
        return rec


def windowed_pdr(log: list[tuple], start: float, end: float = float("inf")) -> float:
    """Delivery ratio of packets originated in ``[start, end)``.

    Returns nan when no packet was originated in the window.
    """
    born = {e[2] for e in log if e[1] == "originated" and start <= e[0] < end}
    if not born:
        return float("nan")
    got = sum(1 for e in log if e[1] == "delivered" and e[2] in born)
    return got / len(born)
