"""Misbehaviour interceptors consulted before a node forwards DATA."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Optional

from .packet import Kind, Packet
from .simkernel import EventKind


class AdversaryKind(enum.Enum):
    BLACKHOLE = "Blackhole"
    GRAYHOLE = "Grayhole"
    TAMPERER = "Tamperer"
    OUTSIDER = "Outsider"


class Verdict(enum.Enum):
    FORWARD = "Forward"
    DROP = "Drop"
    TAMPER = "Tamper"


@dataclass(frozen=True)
class AdversaryProfile:
    node: int
    kind: AdversaryKind
    drop_prob: float = 1.0
    tamper_prob: float = 1.0
    onset_at: float = 0.0
    repent_at: Optional[float] = None

    def __post_init__(self):
        for name in ("drop_prob", "tamper_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.onset_at < 0:
            raise ValueError("onset_at must be nonnegative")
        if self.repent_at is not None and not self.onset_at < self.repent_at:
            raise ValueError("onset_at must be < repent_at")

    def active(self, now: float) -> bool:
        if now < self.onset_at:
            return False
        return self.repent_at is None or now < self.repent_at


class Interceptor:
    """Per-node adversary state.

    ``repented`` is flipped by the repentance timer and is permanent; the
    active-window test is applied as well so the interceptor is correct
    even when driven without a kernel.
    """

    def __init__(self, profile: AdversaryProfile, rng: random.Random):
        self.profile = profile
        self.rng = rng
        self.repented = False

    def active(self, now: float) -> bool:
        return not self.repented and self.profile.active(now)

    def intercept_forward(self, packet: Packet, now: float) -> Verdict:
        if packet.kind != Kind.DATA or not self.active(now):
            return Verdict.FORWARD
        kind = self.profile.kind
        if kind is AdversaryKind.BLACKHOLE:
            return Verdict.DROP
        if kind is AdversaryKind.GRAYHOLE:
            return Verdict.DROP if self.rng.random() < self.profile.drop_prob else Verdict.FORWARD
        if kind is AdversaryKind.TAMPERER:
            return Verdict.TAMPER if self.rng.random() < self.profile.tamper_prob else Verdict.FORWARD
        return Verdict.FORWARD

    def tamper(self, packet: Packet) -> Packet:
        """Flip one payload bit and keep the now-stale tag."""
        payload = bytearray(packet.payload or b"\x00")
        bit = self.rng.randrange(len(payload) * 8)
        payload[bit // 8] ^= 1 << (bit % 8)
        return packet.evolve(payload=bytes(payload))

    def forges_tags(self, now: float) -> bool:
        return self.profile.kind is AdversaryKind.OUTSIDER and self.active(now)


def intercept_forward(profile: AdversaryProfile, packet: Packet, now: float,
                      rng: random.Random) -> Verdict:
    return Interceptor(profile, rng).intercept_forward(packet, now)


def schedule_repentance(interceptor: Interceptor, kernel) -> None:
    at = interceptor.profile.repent_at
    if at is None:
        return

    def _repent(_ev):
        interceptor.repented = True

    kernel.at(at, EventKind.TIMER, _repent)
