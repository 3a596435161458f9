"""Shared test helpers: a list-scanning oracle for the protocol tables."""

from __future__ import annotations

import numpy as np

from ndnsmc.protocol import (DATA, INTEREST, NACK_DUPLICATE, NACK_NO_ROUTE,
                             Drop, Forward, Packet, ReplyData, ReplyNack,
                             SendDownstream, is_prefix)


class NaiveForwarder:
    """Deliberately dumb re-implementation of the per-packet decisions.

    Everything is a linear scan over plain lists; used as the independent
    oracle for the hash-table implementation.
    """

    def __init__(self, pit_lifetime=4_000_000):
        self.cs = []   # (name, payload_len)
        self.pit = []  # [name, set(nonces), [faces], expiry]
        self.fib = []  # (prefix, face)
        self.pit_lifetime = pit_lifetime

    def add_route(self, prefix, face):
        self.fib.append((tuple(prefix), face))

    def _live_entry(self, name, now):
        for entry in self.pit:
            if entry[0] == name and entry[3] > now:
                return entry
        return None

    def interest(self, pkt: Packet, in_face: int, now: int):
        for name, payload in self.cs:
            if name == pkt.name:
                return ReplyData(in_face, name, payload)
        entry = self._live_entry(pkt.name, now)
        if entry is not None and pkt.nonce in entry[1]:
            return ReplyNack(NACK_DUPLICATE, in_face)
        best = None
        for prefix, face in self.fib:
            if is_prefix(prefix, pkt.name):
                if best is None or len(prefix) > len(best[0]):
                    best = (prefix, face)
        if best is None:
            return ReplyNack(NACK_NO_ROUTE, in_face)
        if entry is None:
            self.pit.append([pkt.name, {pkt.nonce}, [in_face],
                             now + self.pit_lifetime])
        else:
            entry[1].add(pkt.nonce)
            if in_face not in entry[2]:
                entry[2].append(in_face)
            entry[3] = now + self.pit_lifetime
        return Forward(best[1])

    def data(self, pkt: Packet, now: int):
        entry = self._live_entry(pkt.name, now)
        if entry is None:
            return Drop("unsolicited")
        faces = tuple(entry[2])
        self.pit = [e for e in self.pit if e[0] != pkt.name]
        self.cs = [(n, p) for n, p in self.cs if n != pkt.name]
        self.cs.append((pkt.name, pkt.payload_len))
        return SendDownstream(faces)


def random_protocol_scenario(rng: np.random.Generator, max_ops: int = 50,
                             n_names: int = 4):
    """A random op sequence: (kind, packet, face, now) tuples plus routes.

    Names are drawn from a small pool and nonces from a tiny pool so
    duplicate-nonce and CS-hit paths occur; a random subset of prefixes is
    routable so NoRoute occurs too.
    """
    pool = [(b"a",), (b"a", b"b"), (b"c",), (b"c", b"d", b"e")][:n_names]
    routes = []
    for prefix in ((b"a",), (b"c", b"d")):
        if rng.random() < 0.7:
            routes.append((prefix, int(rng.integers(1, 4))))
    ops = []
    now = 0
    pkt_id = 0
    for _ in range(int(rng.integers(1, max_ops + 1))):
        now += int(rng.integers(0, 2000))
        name = pool[int(rng.integers(len(pool)))]
        if rng.random() < 0.6:
            pkt = Packet(id=pkt_id, kind=INTEREST, name=name,
                         nonce=int(rng.integers(0, 4)), created_at=now)
            ops.append(("interest", pkt, int(rng.integers(0, 3)), now))
        else:
            pkt = Packet(id=pkt_id, kind=DATA, name=name,
                         payload_len=int(rng.integers(0, 1500)),
                         token=0, created_at=now)
            ops.append(("data", pkt, 0, now))
        pkt_id += 1
    return routes, ops
