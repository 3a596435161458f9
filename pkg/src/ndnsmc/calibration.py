"""Calibration profiles: factor combinations -> latency distributions.

A profile resolves each of four distribution roles:

  fwd_interest    forwarding-thread service time for an Interest
  fwd_data        forwarding-thread service time for a Data
  input_interest  input-thread dispatch time (client-side face)
  input_data      input-thread dispatch time (server-side face)

keyed by (name-length class, NUMA placement, forwarding-thread count). The
shipped synthetic profile is built from documented parameters chosen to
preserve the qualitative structure measured on real hardware: crossing a
NUMA boundary costs extra latency, longer names slow Interest forwarding
but not Data forwarding, payload length is latency-neutral, and per-packet
latency creeps up slightly as threads contend for a shared cache.

File schema (JSON): {"schema": "ndnsmc-calibration-v1", "entries": [
  {"role": ..., "name_len": int | "*", "placement": "P1".."P4" | "*",
   "threads": int | "*", "dist": {"family": ..., ...}}, ...]}
Lookup prefers exact keys and falls back to wildcard fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .distributions import Distribution, dirac, lognormal_from_mean

PLACEMENTS = ("P1", "P2", "P3", "P4")

ROLES = ("fwd_interest", "fwd_data", "input_interest", "input_data")

#: Name-length classes (component counts) the profile is keyed by.
NAME_LEN_CLASSES = (3, 7, 13)

#: Placements where the Interest path crosses a NUMA boundary between the
#: client-side face and the forwarding threads, and likewise for Data.
INTEREST_CROSS = {"P1": 0, "P2": 0, "P3": 1, "P4": 1}
DATA_CROSS = {"P1": 0, "P2": 1, "P3": 0, "P4": 1}

# Synthetic profile parameters (ns).
FWD_INTEREST_BASE = {3: 1400.0, 7: 1600.0, 13: 1900.0}
FWD_DATA_BASE = 1000.0
FWD_CROSS_PENALTY = 800.0
THREAD_CONTENTION = 0.02  # fractional latency increase per extra thread
INPUT_BASE = 50.0
INPUT_CROSS_PENALTY = 30.0
FWD_SIGMA_LOG = 0.25
INPUT_SIGMA_LOG = 0.20

SCHEMA = "ndnsmc-calibration-v1"


class CalibrationError(KeyError):
    pass


def name_len_class(name_length: int) -> int:
    """Map an arbitrary component count to the nearest profile class."""
    if name_length <= 5:
        return 3
    if name_length <= 9:
        return 7
    return 13


def thread_factor(n_threads: int) -> float:
    return 1.0 + THREAD_CONTENTION * (n_threads - 1)


@dataclass(frozen=True)
class CalibrationProfile:
    """Immutable mapping from (role, factors) to a Distribution."""

    entries: dict

    def lookup(self, role: str, name_length: int, placement: str,
               n_threads: int) -> Distribution:
        cls = name_len_class(name_length)
        keys = (
            (role, cls, placement, n_threads),
            (role, cls, placement, None),
            (role, None, placement, n_threads),
            (role, None, placement, None),
            (role, cls, None, None),
            (role, None, None, None),
        )
        for key in keys:
            dist = self.entries.get(key)
            if dist is not None:
                return dist
        raise CalibrationError(
            f"no calibration for role={role} name_len={name_length} "
            f"placement={placement} threads={n_threads}")

    def covers(self, name_length: int, placement: str, n_threads: int) -> bool:
        try:
            for role in ROLES:
                self.lookup(role, name_length, placement, n_threads)
        except CalibrationError:
            return False
        return True

    # -- serialization -----------------------------------------------------

    def to_json(self, path):
        entries = []
        for (role, cls, placement, threads), dist in sorted(
                self.entries.items(),
                key=lambda kv: (kv[0][0], kv[0][1] or 0, kv[0][2] or "",
                                kv[0][3] or 0)):
            entries.append({
                "role": role,
                "name_len": cls if cls is not None else "*",
                "placement": placement if placement is not None else "*",
                "threads": threads if threads is not None else "*",
                "dist": dist.to_dict(),
            })
        payload = {"schema": SCHEMA, "entries": entries}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    @staticmethod
    def from_json(path) -> "CalibrationProfile":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("schema") != SCHEMA:
            raise ValueError(f"unsupported calibration schema: "
                             f"{payload.get('schema')!r}")
        entries = {}
        for item in payload["entries"]:
            key = (
                item["role"],
                None if item["name_len"] == "*" else int(item["name_len"]),
                None if item["placement"] == "*" else item["placement"],
                None if item["threads"] == "*" else int(item["threads"]),
            )
            entries[key] = Distribution.from_dict(item["dist"])
        return CalibrationProfile(entries)


def synthetic_profile() -> CalibrationProfile:
    """The shipped calibration: lognormal laws from the documented formula."""
    entries = {}
    for placement in PLACEMENTS:
        for cls in NAME_LEN_CLASSES:
            for n in range(1, 9):
                tf = thread_factor(n)
                mean_i = (FWD_INTEREST_BASE[cls]
                          + FWD_CROSS_PENALTY * INTEREST_CROSS[placement]) * tf
                mean_d = (FWD_DATA_BASE
                          + FWD_CROSS_PENALTY * DATA_CROSS[placement]) * tf
                entries[("fwd_interest", cls, placement, n)] = \
                    lognormal_from_mean(mean_i, FWD_SIGMA_LOG)
                entries[("fwd_data", cls, placement, n)] = \
                    lognormal_from_mean(mean_d, FWD_SIGMA_LOG)
        entries[("input_interest", None, placement, None)] = \
            lognormal_from_mean(
                INPUT_BASE + INPUT_CROSS_PENALTY * INTEREST_CROSS[placement],
                INPUT_SIGMA_LOG)
        entries[("input_data", None, placement, None)] = \
            lognormal_from_mean(
                INPUT_BASE + INPUT_CROSS_PENALTY * DATA_CROSS[placement],
                INPUT_SIGMA_LOG)
    return CalibrationProfile(entries)


def dirac_profile(f_interest: float, f_data: float,
                  f_input: float = 0.0) -> CalibrationProfile:
    """Deterministic profile: every cell gets the same point latencies."""
    return CalibrationProfile({
        ("fwd_interest", None, None, None): dirac(f_interest),
        ("fwd_data", None, None, None): dirac(f_data),
        ("input_interest", None, None, None): dirac(f_input),
        ("input_data", None, None, None): dirac(f_input),
    })
