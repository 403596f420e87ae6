"""In-memory packet schema shared by routing, trust and crypto."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class Kind(enum.IntEnum):
    DATA = 0
    RREQ = 1
    RREP = 2
    RERR = 3
    REPORT = 4
    WARN = 5


# target id for one-hop broadcasts (REPORT, WARN)
ALL_NODES = 0xFFFFFFFF

# fields left out of the MAC; changing only these keeps a cached encoding
_BASE_UNCOVERED = frozenset({"prev_hop", "hop_count", "mac_tag"})
_UNCOVERED = {k: _BASE_UNCOVERED for k in Kind}
_UNCOVERED[Kind.RREQ] = _BASE_UNCOVERED | {"source_route"}

CONTROL_KINDS = frozenset({Kind.RREQ, Kind.RREP, Kind.RERR, Kind.REPORT, Kind.WARN})


@dataclass(frozen=True)
class Packet:
    """One logical packet. Forwarding produces modified copies via ``evolve``.

    Field use by kind:

    * DATA   origin -> target; ``source_route`` set under DSR.
    * RREQ   ``seq_or_id`` is the request id (also the originator's sequence
      number under AODV); ``avoid`` lists nodes the originator has blacklisted.
    * RREP   ``origin`` is the replying destination, ``target`` the requester;
      ``seq_or_id`` is the destination sequence number.
    * RERR   ``origin`` detected the break towards ``unreachable[0]``;
      ``target`` is the data originator; ``cause_uid`` names the dropped DATA.
    * REPORT ``entries`` holds (subject, direct rating) pairs.
    * WARN   ``entries`` holds one (accused, evidence rating) pair.
    """

    kind: Kind
    origin: int
    target: int
    prev_hop: int
    uid: int
    seq_or_id: int = 0
    hop_count: int = 0
    source_route: Optional[tuple[int, ...]] = None
    payload: bytes = b""
    created_at: float = 0.0
    avoid: tuple[int, ...] = ()
    unreachable: tuple[int, ...] = ()
    cause_uid: int = -1
    entries: tuple[tuple[int, float], ...] = ()
    mac_tag: bytes = b""

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def is_control(self) -> bool:
        return self.kind in CONTROL_KINDS

    def evolve(self, **changes) -> "Packet":
        # hot path: dataclasses.replace re-runs __init__ and is ~20x slower
        new = object.__new__(Packet)
        d = new.__dict__
        d.update(self.__dict__)
        d.update(changes)
        if "_encoded" in d and not changes.keys() <= _UNCOVERED[self.kind]:
            del d["_encoded"]
        return new
