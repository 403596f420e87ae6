"""Per-packet HMAC tags over a canonical byte encoding.

Layout of the canonical encoding (all integers big-endian)::

    u8   format version (1)
    u8   kind
    u32  origin
    u32  target
    u64  uid
    u64  seq_or_id
    f64  created_at
    u8   source route present (0/1); if 1: u16 length, then u32 per node
    u16  avoid length, u32 per node
    u16  unreachable length, u32 per node
    i64  cause_uid
    u16  entries length, then (u32 subject, f64 rating) per entry
    u32  payload length, then the payload bytes

``prev_hop`` and ``hop_count`` change at every hop and are not covered.
The source route of an RREQ grows as it floods, so it is not covered either;
for every other kind it is.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass

from .packet import Kind, Packet

TAG_LEN = 16
FORMAT_VERSION = 1


@dataclass(frozen=True)
class KeyRing:
    network_key: bytes
    outsider_key: bytes

    @classmethod
    def from_seed(cls, seed: int) -> "KeyRing":
        net = hashlib.sha256(f"network-key/{seed}".encode()).digest()
        out = hashlib.sha256(f"outsider-key/{seed}".encode()).digest()
        return cls(net, out)


def _ids(values) -> bytes:
    return struct.pack(f">H{len(values)}I", len(values), *values)


def encode(packet: Packet) -> bytes:
    cached = packet.__dict__.get("_encoded")
    if cached is not None:
        return cached
    data = _encode(packet)
    packet.__dict__["_encoded"] = data
    return data


def _encode(packet: Packet) -> bytes:
    parts = [struct.pack(">BBIIQQd", FORMAT_VERSION, int(packet.kind), packet.origin,
                         packet.target, packet.uid, packet.seq_or_id, packet.created_at)]
    if packet.source_route is None or packet.kind == Kind.RREQ:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + _ids(packet.source_route))
    parts.append(_ids(packet.avoid))
    parts.append(_ids(packet.unreachable))
    parts.append(struct.pack(">qH", packet.cause_uid, len(packet.entries)))
    for subject, rating in packet.entries:
        parts.append(struct.pack(">Id", subject, rating))
    parts.append(struct.pack(">I", len(packet.payload)))
    parts.append(packet.payload)
    return b"".join(parts)


def mac(key: bytes, message: bytes) -> bytes:
    return hmac.digest(key, message, "sha256")[:TAG_LEN]


def tag_packet(key: bytes, packet: Packet) -> bytes:
    return mac(key, encode(packet))


def sign(key: bytes, packet: Packet) -> Packet:
    return packet.evolve(mac_tag=tag_packet(key, packet))


def verify_packet(key: bytes, packet: Packet) -> bool:
    if len(packet.mac_tag) != TAG_LEN:
        return False
    return hmac.compare_digest(tag_packet(key, packet), packet.mac_tag)


def attribute_failure(trust, packet: Packet) -> int:
    """Blame the previous hop for a packet that failed verification.

    The previous hop either tampered or relayed a forgery; telling the two
    apart is not possible from one observation. Returns the accused node.
    """
    trust.observe_misbehavior(packet.prev_hop, "MacFailure")
    return packet.prev_hop
