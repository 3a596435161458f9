"""Functional NDN data-plane logic, independent of timing.

Names are tuples of byte strings ordered from the root. The per-packet
decision procedures (content-store lookup, pending-interest bookkeeping,
longest-prefix forwarding, nack generation, dispatch hashing) are pure
table operations; the timed forwarder model wraps them in components.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Optional

Name = tuple  # tuple[bytes, ...]

INTEREST = "I"
DATA = "D"
NACK = "N"

NACK_DUPLICATE = "Duplicate"
NACK_NO_ROUTE = "NoRoute"

#: Fixed dispatch-hash key; hashing only needs determinism, not secrecy.
SIPHASH_KEY = bytes(16)

NDT_SIZE = 65536


def name_from_str(text: str) -> Name:
    """'/A/B/C' -> (b'A', b'B', b'C')."""
    parts = [p for p in text.split("/") if p]
    if not parts:
        raise ValueError("a name needs at least one component")
    return tuple(p.encode() for p in parts)


def name_to_str(name: Name) -> str:
    return "/" + "/".join(c.decode("utf-8", "replace") for c in name)


def is_prefix(prefix: Name, name: Name) -> bool:
    return len(prefix) <= len(name) and name[: len(prefix)] == prefix


# ---------------------------------------------------------------------------
# Packets
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class Packet:
    """Interest/Data/Nack with the fields the forwarder model observes.

    `token` is the one-byte forwarding-thread id carried by Data and Nack;
    `answers` and `created_at` echo the originating Interest so traces can
    attribute every outcome to the Interest that caused it.
    """

    id: int
    kind: str
    name: Name
    nonce: Optional[int] = None
    token: Optional[int] = None
    payload_len: int = 0
    created_at: int = 0
    nack_reason: Optional[str] = None
    answers: Optional[int] = None


# ---------------------------------------------------------------------------
# SipHash-2-4
# ---------------------------------------------------------------------------

_MASK = 0xFFFFFFFFFFFFFFFF


def siphash24(key: bytes, data: bytes) -> int:
    """Reference 64-bit SipHash-2-4."""
    if len(key) != 16:
        raise ValueError("siphash key must be 16 bytes")
    k0 = int.from_bytes(key[:8], "little")
    k1 = int.from_bytes(key[8:], "little")
    v0 = k0 ^ 0x736F6D6570736575
    v1 = k1 ^ 0x646F72616E646F6D
    v2 = k0 ^ 0x6C7967656E657261
    v3 = k1 ^ 0x7465646279746573

    def rounds(v0, v1, v2, v3, n):
        for _ in range(n):
            v0 = (v0 + v1) & _MASK
            v1 = ((v1 << 13) | (v1 >> 51)) & _MASK
            v1 ^= v0
            v0 = ((v0 << 32) | (v0 >> 32)) & _MASK
            v2 = (v2 + v3) & _MASK
            v3 = ((v3 << 16) | (v3 >> 48)) & _MASK
            v3 ^= v2
            v0 = (v0 + v3) & _MASK
            v3 = ((v3 << 21) | (v3 >> 43)) & _MASK
            v3 ^= v0
            v2 = (v2 + v1) & _MASK
            v1 = ((v1 << 17) | (v1 >> 47)) & _MASK
            v1 ^= v2
            v2 = ((v2 << 32) | (v2 >> 32)) & _MASK
        return v0, v1, v2, v3

    full = len(data) - (len(data) % 8)
    for i in range(0, full, 8):
        m = int.from_bytes(data[i:i + 8], "little")
        v3 ^= m
        v0, v1, v2, v3 = rounds(v0, v1, v2, v3, 2)
        v0 ^= m
    m = (len(data) & 0xFF) << 56
    for i, byte in enumerate(data[full:]):
        m |= byte << (8 * i)
    v3 ^= m
    v0, v1, v2, v3 = rounds(v0, v1, v2, v3, 2)
    v0 ^= m
    v2 ^= 0xFF
    v0, v1, v2, v3 = rounds(v0, v1, v2, v3, 4)
    return (v0 ^ v1 ^ v2 ^ v3) & _MASK


def _dispatch_key(name: Name) -> bytes:
    """Length-prefixed concatenation of the first two name components."""
    out = bytearray()
    for comp in name[:2]:
        out += len(comp).to_bytes(4, "little")
        out += comp
    return bytes(out)


# ---------------------------------------------------------------------------
# Dispatch table
# ---------------------------------------------------------------------------


class Ndt:
    """65536-slot table mapping a 16-bit name-hash slice to a thread index."""

    __slots__ = ("slots", "n_threads")

    def __init__(self, n_threads: int, slots: Optional[list[int]] = None):
        if n_threads < 1:
            raise ValueError("need at least one forwarding thread")
        if slots is None:
            slots = [i % n_threads for i in range(NDT_SIZE)]
        if len(slots) != NDT_SIZE:
            raise ValueError(f"ndt must have {NDT_SIZE} slots")
        if any(s < 0 or s >= n_threads for s in slots):
            raise ValueError("ndt slot out of thread range")
        self.slots = slots
        self.n_threads = n_threads


def dispatch_interest(ndt: Ndt, name: Name) -> int:
    """Thread index for an Interest: NDT slot at the low 16 hash bits."""
    h = siphash24(SIPHASH_KEY, _dispatch_key(name))
    return ndt.slots[h & 0xFFFF]


def dispatch_data(packet: Packet, n_threads: int) -> Optional[int]:
    """Thread index carried by a Data/Nack token; None if out of range."""
    if packet.kind not in (DATA, NACK):
        raise ValueError("dispatch_data expects a Data or Nack packet")
    token = packet.token
    if token is None or token < 0 or token >= n_threads:
        return None
    return token


# ---------------------------------------------------------------------------
# FIB
# ---------------------------------------------------------------------------


class Fib:
    """Prefix table with longest-prefix-match lookup."""

    __slots__ = ("entries",)

    def __init__(self):
        self.entries: dict[Name, int] = {}

    def add(self, prefix: Name, face: int):
        self.entries[tuple(prefix)] = face

    def lookup(self, name: Name) -> Optional[int]:
        for ln in range(len(name), 0, -1):
            face = self.entries.get(name[:ln])
            if face is not None:
                return face
        return None


def fib_lookup(fib: Fib, name: Name) -> Optional[int]:
    return fib.lookup(name)


# ---------------------------------------------------------------------------
# PIT + CS composite table
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class PitEntry:
    name: Name
    nonces: set
    faces: list
    expiry: int


@dataclass(slots=True)
class CsEntry:
    name: Name
    payload_len: int
    inserted_at: int


class Pcct:
    """PIT and CS maps behind one interface, with audit counters."""

    def __init__(self, pit_capacity: int = 2 ** 16, cs_capacity: int = 2 ** 16,
                 pit_lifetime: int = 4_000_000):
        self.pit: dict[Name, PitEntry] = {}
        self.cs: OrderedDict[Name, CsEntry] = OrderedDict()
        self.pit_capacity = pit_capacity
        self.cs_capacity = cs_capacity
        self.pit_lifetime = pit_lifetime
        self.pit_inserts = 0
        self.pit_deletes = 0
        self.pit_expirations = 0
        self.cs_hits = 0
        self.cs_inserts = 0
        self.cs_evictions = 0

    def _live_pit(self, name: Name, now: int) -> Optional[PitEntry]:
        entry = self.pit.get(name)
        if entry is None:
            return None
        if entry.expiry <= now:
            del self.pit[name]
            self.pit_expirations += 1
            return None
        return entry

    def cs_insert(self, name: Name, payload_len: int, now: int):
        if name in self.cs:
            del self.cs[name]  # newest wins, moves to tail
        elif len(self.cs) >= self.cs_capacity:
            self.cs.popitem(last=False)
            self.cs_evictions += 1
        self.cs[name] = CsEntry(name, payload_len, now)
        self.cs_inserts += 1


# ---------------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ReplyData:
    """CS hit: answer downstream with the cached Data."""

    face: int
    name: Name
    payload_len: int


@dataclass(frozen=True, slots=True)
class ReplyNack:
    reason: str
    face: int


@dataclass(frozen=True, slots=True)
class Forward:
    face: int


@dataclass(frozen=True, slots=True)
class SendDownstream:
    faces: tuple


@dataclass(frozen=True, slots=True)
class Drop:
    reason: str


def process_interest(pcct: Pcct, fib: Fib, interest: Packet, in_face: int,
                     now: int):
    """Decide what the forwarder does with one Interest.

    Order: content-store hit, duplicate-nonce nack, no-route nack, then
    PIT insert/extend plus forward to the FIB next hop.
    """
    if interest.kind != INTEREST:
        raise ValueError("process_interest expects an Interest")
    name = interest.name
    cached = pcct.cs.get(name)
    if cached is not None:
        pcct.cs_hits += 1
        return ReplyData(in_face, name, cached.payload_len)
    entry = pcct._live_pit(name, now)
    if entry is not None and interest.nonce in entry.nonces:
        return ReplyNack(NACK_DUPLICATE, in_face)
    face = fib.lookup(name)
    if face is None:
        return ReplyNack(NACK_NO_ROUTE, in_face)
    if entry is None:
        pcct.pit[name] = PitEntry(name, {interest.nonce}, [in_face],
                                  now + pcct.pit_lifetime)
        pcct.pit_inserts += 1
    else:
        entry.nonces.add(interest.nonce)
        if in_face not in entry.faces:
            entry.faces.append(in_face)
        entry.expiry = now + pcct.pit_lifetime
    return Forward(face)


def process_data(pcct: Pcct, data: Packet, now: int):
    """Decide what the forwarder does with one Data.

    A PIT match sends the Data downstream, deletes the entry and caches a
    copy; unsolicited Data is discarded.
    """
    if data.kind != DATA:
        raise ValueError("process_data expects a Data")
    entry = pcct._live_pit(data.name, now)
    if entry is None:
        return Drop("unsolicited")
    faces = tuple(entry.faces)
    del pcct.pit[data.name]
    pcct.pit_deletes += 1
    pcct.cs_insert(data.name, data.payload_len, now)
    return SendDownstream(faces)
