"""Calibrated stochastic model of the forwarder data plane.

Topology (one consumer, one producer, a forwarder with two input threads,
n forwarding threads each behind one bounded FIFO queue, two output
threads):

  Interest: consumer -> in0 -> queue_k -> fwd_k -> out1 -> producer
  Data:     producer -> in1 -> queue_k (by token) -> fwd_k -> out0 -> consumer

The input threads dispatch by name hash (Interests) or carried token
(Data); queues drop on overflow; forwarding threads run the protocol
tables and dwell for calibrated per-packet latencies; output threads are
single-slot relays with no sampled latency. Every Interest's fate
(satisfied / nacked / dropped / in flight) is tracked in a per-trace
ledger so packet conservation can be asserted exactly at the horizon.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import protocol
from .calibration import PLACEMENTS, CalibrationError, CalibrationProfile
from .kernel import (All, ClockEq, ClockLess, ComponentSpec, Interaction,
                     Model, Pred, Runtime, VarEq)
from .protocol import (DATA, INTEREST, NACK, Fib, Ndt, Packet, Pcct,
                       dispatch_data, dispatch_interest)

MALFORMED = -1

# Ledger statuses; an Interest moves from IN_FLIGHT to exactly one outcome.
IN_FLIGHT = "flight"
SATISFIED = "sat"
NACKED = "nack"
DROPPED = "drop"


class AccountingError(RuntimeError):
    pass


@dataclass
class FactorConfig:
    """One cell of the design space."""

    n_forwarding_threads: int = 1
    name_length: int = 3
    payload_len: int = 0
    send_interval: int = 700
    queue_capacity: int = 4096
    numa_placement: str = "P1"
    n_name_prefixes: int = 255
    horizon: int = 10_000_000
    warmup: Optional[int] = None  # default: 10% of horizon
    cooldown: Optional[int] = None  # default: 5% of horizon
    pit_lifetime: int = 4_000_000

    def __post_init__(self):
        if self.warmup is None:
            self.warmup = self.horizon // 10
        if self.cooldown is None:
            self.cooldown = self.horizon // 20

    def validate(self) -> "FactorConfig":
        if not 1 <= self.n_forwarding_threads <= 255:
            raise ValueError("n_forwarding_threads must be in [1, 255] "
                             "(thread index must fit the one-byte token)")
        if self.name_length < 2:
            raise ValueError("name_length must be >= 2 (prefix + sequence)")
        if self.payload_len < 0:
            raise ValueError("payload_len must be >= 0")
        if self.send_interval < 1:
            raise ValueError("send_interval must be >= 1 tick")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.numa_placement not in PLACEMENTS:
            raise ValueError(f"numa_placement must be one of {PLACEMENTS}")
        if self.n_name_prefixes < 1:
            raise ValueError("n_name_prefixes must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.warmup < 0 or self.cooldown < 0:
            raise ValueError("warmup and cooldown must be >= 0")
        if self.warmup + self.cooldown >= self.horizon:
            raise ValueError("warmup + cooldown must leave a counting window")
        if self.pit_lifetime < 1:
            raise ValueError("pit_lifetime must be >= 1")
        return self

    def factors(self) -> dict:
        return {
            "n_forwarding_threads": self.n_forwarding_threads,
            "name_length": self.name_length,
            "payload_len": self.payload_len,
            "send_interval": self.send_interval,
            "queue_capacity": self.queue_capacity,
            "numa_placement": self.numa_placement,
        }


@dataclass
class Counters:
    """Per-trace outcome tallies.

    interests_sent etc. cover Interests issued in [warmup, horizon); the
    ratio_* pair covers the narrower [warmup, horizon - cooldown) window
    used for the satisfaction rate, so Interests still legitimately in
    flight at the horizon do not skew it.
    """

    interests_sent: int = 0
    data_received: int = 0
    nacks_received: int = 0
    dropped: int = 0
    in_flight: int = 0
    ratio_sent: int = 0
    ratio_satisfied: int = 0
    queue_drops: dict = field(default_factory=dict)
    max_queue_occupancy: dict = field(default_factory=dict)
    malformed: int = 0
    total_sent: int = 0

    @property
    def drops_total(self) -> int:
        return sum(self.queue_drops.values())


def satisfaction_rate(counters: Counters) -> float:
    """Satisfied fraction of post-warm-up (and pre-cool-down) Interests."""
    if counters.ratio_sent <= 0:
        raise AccountingError("no Interests sent inside the counting window")
    return counters.ratio_satisfied / counters.ratio_sent


# ---------------------------------------------------------------------------
# Ledger helpers (trace-local audit of every Interest's fate)
# ---------------------------------------------------------------------------


def _ledger(scratch) -> dict:
    led = scratch.get("ledger")
    if led is None:
        led = scratch["ledger"] = {}
    return led


def _new_id(scratch) -> int:
    nid = scratch.get("next_id", 0)
    scratch["next_id"] = nid + 1
    return nid


def _mark(scratch, interest_id, status):
    led = scratch.get("ledger")
    entry = led.get(interest_id) if led is not None else None
    if entry is None:
        return
    if entry[0] != IN_FLIGHT:
        raise AccountingError(
            f"interest {interest_id} classified twice: "
            f"{entry[0]} then {status}")
    entry[0] = status


def _interest_of(pkt: Packet):
    return pkt.id if pkt.kind == INTEREST else pkt.answers


# ---------------------------------------------------------------------------
# Component builders
# ---------------------------------------------------------------------------


def _consumer_spec(cfg: FactorConfig) -> ComponentSpec:
    spec = ComponentSpec(
        "consumer", initial="s0",
        init=lambda: {"t": 0, "delta": cfg.send_interval, "seq": 0,
                      "sent": 0, "sat": 0, "nack": 0},
        counters=("sent", "sat", "nack"))
    spec.tick("s0", ClockLess("delta"))
    spec.port("s0", "send_I", guard=ClockEq("delta"))
    spec.port("s0", "recv")
    return spec


def _make_interest(vars, ctx, cfg: FactorConfig) -> Packet:
    seq = vars["seq"]
    vars["seq"] = seq + 1
    prefix = b"p%03d" % (seq % cfg.n_name_prefixes)
    name = [prefix, b"%08d" % seq]
    name.extend(b"x%d" % i for i in range(cfg.name_length - 2))
    pkt = Packet(
        id=_new_id(ctx.scratch), kind=INTEREST, name=tuple(name),
        nonce=int(ctx.rng.integers(0, 2 ** 32)),
        payload_len=cfg.payload_len, created_at=ctx.now)
    _ledger(ctx.scratch)[pkt.id] = [IN_FLIGHT, ctx.now, None, None]
    vars["sent"] += 1
    return pkt


def _input_spec(which: int, cfg: FactorConfig, ndt: Ndt, dist) -> ComponentSpec:
    """Input thread `which` (0 = client-side face, 1 = server-side face)."""
    n = cfg.n_forwarding_threads

    def classify(vars, ctx):
        pkt = vars["pkt"]
        if pkt.kind == INTEREST:
            vars["target"] = dispatch_interest(ndt, pkt.name)
        else:
            target = dispatch_data(pkt, n)
            vars["target"] = MALFORMED if target is None else target
        vars["t"] = 0

    def drop_malformed(vars, ctx):
        pkt = vars["pkt"]
        vars["pkt"] = None
        vars["malformed"] += 1
        _mark(ctx.scratch, _interest_of(pkt), DROPPED)
        ctx.emit("malformed_drop", pkt.id)

    spec = ComponentSpec(
        f"in{which}", initial="idle",
        init=lambda: {"t": 0, "fp": 0, "pkt": None, "target": 0,
                      "malformed": 0},
        counters=("malformed",))
    spec.port("idle", "recv", to="got")
    spec.internal("got", to="wait", action=classify, delay=(dist, "fp"))
    spec.tick("wait", ClockLess("fp"))
    for k in range(n):
        spec.port("wait", f"to_fwd{k}", to="idle",
                  guard=All(ClockEq("fp"), VarEq("target", k)))
    spec.internal("wait", to="idle",
                  guard=All(ClockEq("fp"), VarEq("target", MALFORMED)),
                  action=drop_malformed)
    return spec


def _queue_spec(k: int, cfg: FactorConfig) -> ComponentSpec:
    spec = ComponentSpec(
        f"q{k}", initial="q",
        init=lambda: {"items": deque(), "capacity": cfg.queue_capacity,
                      "drops": 0, "max_occ": 0},
        counters=("drops", "max_occ"))
    spec.port("q", "enq")
    spec.port("q", "deq",
              guard=Pred(lambda v: len(v["items"]) > 0, clock_free=True))
    return spec


def _fwd_spec(k: int, cfg: FactorConfig, fib: Fib, f_i, f_d) -> ComponentSpec:
    def handle_interest(vars, ctx):
        pkt: Packet = vars["pkt"]
        pcct: Pcct = vars["pcct"]
        entry = ctx.scratch["ledger"].get(pkt.id)
        if entry is not None:
            entry[2] = k
        pkt.token = k
        decision = protocol.process_interest(pcct, fib, pkt, 0, ctx.now)
        if isinstance(decision, protocol.Forward):
            vars["route"] = "up"
            vars["out"] = pkt
        elif isinstance(decision, protocol.ReplyNack):
            vars["route"] = "down"
            vars["out"] = Packet(
                id=_new_id(ctx.scratch), kind=NACK, name=pkt.name,
                token=k, created_at=pkt.created_at,
                nack_reason=decision.reason, answers=pkt.id)
        else:  # ReplyData: cached copy answers downstream
            vars["route"] = "down"
            vars["out"] = Packet(
                id=_new_id(ctx.scratch), kind=DATA, name=pkt.name,
                token=k, payload_len=decision.payload_len,
                created_at=pkt.created_at, answers=pkt.id)
        vars["pkt"] = None
        vars["t"] = 0
        ctx.emit("fwd_interest", pkt.id)

    def handle_data(vars, ctx):
        pkt: Packet = vars["pkt"]
        vars["pkt"] = None
        vars["t"] = 0
        iid = _interest_of(pkt)
        entry = ctx.scratch["ledger"].get(iid)
        if entry is not None:
            entry[3] = k
        if pkt.kind == DATA:
            pcct: Pcct = vars["pcct"]
            decision = protocol.process_data(pcct, pkt, ctx.now)
            if isinstance(decision, protocol.SendDownstream):
                vars["route"] = "down"
                vars["out"] = pkt
            else:  # unsolicited or expired entry
                vars["route"] = "none"
                vars["out"] = None
                _mark(ctx.scratch, iid, DROPPED)
                ctx.emit("pit_miss_drop", pkt.id)
        else:  # Nack arriving at a forwarding thread: not modeled further
            vars["route"] = "none"
            vars["out"] = None
            _mark(ctx.scratch, iid, DROPPED)
        ctx.emit("fwd_data", pkt.id)

    spec = ComponentSpec(
        f"fwd{k}", initial="idle",
        init=lambda: {"t": 0, "fI": 0, "fD": 0, "pkt": None, "out": None,
                      "route": "none",
                      "pcct": Pcct(pit_lifetime=cfg.pit_lifetime)})
    spec.port("idle", "fetch", to="classify")
    spec.internal("classify", to="wait_i",
                  guard=Pred(lambda v: v["pkt"].kind == INTEREST,
                             clock_free=True),
                  action=handle_interest, delay=(f_i, "fI"))
    spec.internal("classify", to="wait_d",
                  guard=Pred(lambda v: v["pkt"].kind != INTEREST,
                             clock_free=True),
                  action=handle_data, delay=(f_d, "fD"))
    spec.tick("wait_i", ClockLess("fI"))
    spec.port("wait_i", "fw_up", to="idle",
              guard=All(ClockEq("fI"), VarEq("route", "up")))
    spec.port("wait_i", "fw_down", to="idle",
              guard=All(ClockEq("fI"), VarEq("route", "down")))
    spec.tick("wait_d", ClockLess("fD"))
    spec.port("wait_d", "fw_down", to="idle",
              guard=All(ClockEq("fD"), VarEq("route", "down")))
    spec.internal("wait_d", to="idle",
                  guard=All(ClockEq("fD"), VarEq("route", "none")))
    return spec


def _output_spec(which: int) -> ComponentSpec:
    spec = ComponentSpec(
        f"out{which}", initial="empty", init=lambda: {"slot": None})
    spec.port("empty", "recv_pkt", to="full")
    spec.port("full", "send_pkt", to="empty")
    return spec


def _producer_spec(cfg: FactorConfig) -> ComponentSpec:
    def gen_data(vars, ctx):
        interest: Packet = vars["pkt"]
        vars["pkt"] = None
        vars["out"] = Packet(
            id=_new_id(ctx.scratch), kind=DATA, name=interest.name,
            token=interest.token, payload_len=cfg.payload_len,
            created_at=interest.created_at, answers=interest.id)
        vars["replied"] += 1
        ctx.emit("gen_data", vars["out"].id)

    spec = ComponentSpec(
        "producer", initial="idle",
        init=lambda: {"pkt": None, "out": None, "replied": 0},
        counters=("replied",))
    spec.port("idle", "recv_I", to="gen")
    spec.internal("gen", to="reply", action=gen_data)
    spec.port("reply", "send_D", to="idle")
    return spec


# ---------------------------------------------------------------------------
# Transfers
# ---------------------------------------------------------------------------


def _send_interest_transfer(cfg: FactorConfig):
    def transfer(ctx, consumer_vars, input_vars):
        pkt = _make_interest(consumer_vars, ctx, cfg)
        input_vars["pkt"] = pkt
        consumer_vars["t"] = 0
        ctx.emit("send_I", pkt.id)
    return transfer


def _enqueue_transfer(ctx, input_vars, queue_vars):
    pkt = input_vars["pkt"]
    input_vars["pkt"] = None
    items = queue_vars["items"]
    if len(items) >= queue_vars["capacity"]:
        queue_vars["drops"] += 1
        _mark(ctx.scratch, _interest_of(pkt), DROPPED)
        ctx.emit("queue_drop", pkt.id)
    else:
        items.append(pkt)
        occ = len(items)
        if occ > queue_vars["max_occ"]:
            queue_vars["max_occ"] = occ


def _fetch_transfer(ctx, queue_vars, fwd_vars):
    fwd_vars["pkt"] = queue_vars["items"].popleft()


def _emit_transfer(ctx, fwd_vars, out_vars):
    out_vars["slot"] = fwd_vars["out"]
    fwd_vars["out"] = None


def _to_producer_transfer(ctx, out_vars, producer_vars):
    producer_vars["pkt"] = out_vars["slot"]
    out_vars["slot"] = None


def _to_input_transfer(ctx, producer_vars, input_vars):
    input_vars["pkt"] = producer_vars["out"]
    producer_vars["out"] = None


def _to_consumer_transfer(ctx, out_vars, consumer_vars):
    pkt: Packet = out_vars["slot"]
    out_vars["slot"] = None
    if pkt.kind == DATA:
        consumer_vars["sat"] += 1
        _mark(ctx.scratch, _interest_of(pkt), SATISFIED)
        ctx.emit("recv_D", pkt.id)
    else:
        consumer_vars["nack"] += 1
        _mark(ctx.scratch, _interest_of(pkt), NACKED)
        ctx.emit("recv_N", pkt.id)


# ---------------------------------------------------------------------------
# Model assembly
# ---------------------------------------------------------------------------


def build_model(cfg: FactorConfig, cal: CalibrationProfile,
                ndt: Optional[Ndt] = None) -> Model:
    """Assemble the runnable component system for one factor combination."""
    cfg.validate()
    n = cfg.n_forwarding_threads
    if not cal.covers(cfg.name_length, cfg.numa_placement, n):
        raise CalibrationError(
            f"calibration does not cover name_length={cfg.name_length} "
            f"placement={cfg.numa_placement} threads={n}")
    f_i = cal.lookup("fwd_interest", cfg.name_length, cfg.numa_placement, n)
    f_d = cal.lookup("fwd_data", cfg.name_length, cfg.numa_placement, n)
    fp_i = cal.lookup("input_interest", cfg.name_length, cfg.numa_placement, n)
    fp_d = cal.lookup("input_data", cfg.name_length, cfg.numa_placement, n)

    if ndt is None:
        ndt = Ndt(n)
    elif ndt.n_threads != n:
        raise ValueError("ndt thread count does not match the configuration")

    fib = Fib()
    for j in range(cfg.n_name_prefixes):
        fib.add((b"p%03d" % j,), 1)

    components = [
        _consumer_spec(cfg),
        _producer_spec(cfg),
        _input_spec(0, cfg, ndt, fp_i),
        _input_spec(1, cfg, ndt, fp_d),
        _output_spec(0),
        _output_spec(1),
    ]
    components.extend(_fwd_spec(k, cfg, fib, f_i, f_d) for k in range(n))
    components.extend(_queue_spec(k, cfg) for k in range(n))

    # Priority order: queue fetches first so a forwarding thread frees a
    # slot before the Data it just emitted re-enters its queue within the
    # same quiescence round; Data enqueues come after everything they
    # causally depend on.
    interactions: list[Interaction] = []
    for k in range(n):
        interactions.append(Interaction(
            f"fetch{k}", ((f"q{k}", "deq"), (f"fwd{k}", "fetch")),
            _fetch_transfer))
    interactions.append(Interaction(
        "send_interest", (("consumer", "send_I"), ("in0", "recv")),
        _send_interest_transfer(cfg)))
    for k in range(n):
        interactions.append(Interaction(
            f"dispatch0_{k}", (("in0", f"to_fwd{k}"), (f"q{k}", "enq")),
            _enqueue_transfer))
    for k in range(n):
        interactions.append(Interaction(
            f"emit_up{k}", ((f"fwd{k}", "fw_up"), ("out1", "recv_pkt")),
            _emit_transfer))
    for k in range(n):
        interactions.append(Interaction(
            f"emit_down{k}", ((f"fwd{k}", "fw_down"), ("out0", "recv_pkt")),
            _emit_transfer))
    interactions.append(Interaction(
        "deliver_to_producer", (("out1", "send_pkt"), ("producer", "recv_I")),
        _to_producer_transfer))
    interactions.append(Interaction(
        "producer_reply", (("producer", "send_D"), ("in1", "recv")),
        _to_input_transfer))
    for k in range(n):
        interactions.append(Interaction(
            f"dispatch1_{k}", (("in1", f"to_fwd{k}"), (f"q{k}", "enq")),
            _enqueue_transfer))
    interactions.append(Interaction(
        "deliver_to_consumer", (("out0", "send_pkt"), ("consumer", "recv")),
        _to_consumer_transfer))

    return Model(components, interactions)


# ---------------------------------------------------------------------------
# Running one cell and collecting counters
# ---------------------------------------------------------------------------


def collect_counters(rt: Runtime, cfg: FactorConfig) -> Counters:
    """Assemble per-trace Counters from the ledger and component state."""
    ledger = rt.scratch.get("ledger", {})
    lo, hi = cfg.warmup, cfg.horizon
    ratio_hi = cfg.horizon - cfg.cooldown
    c = Counters()
    c.total_sent = len(ledger)
    tallies = {IN_FLIGHT: 0, SATISFIED: 0, NACKED: 0, DROPPED: 0}
    for status, created, _ith, _dth in ledger.values():
        if lo <= created < hi:
            tallies[status] += 1
            if created < ratio_hi:
                c.ratio_sent += 1
                if status == SATISFIED:
                    c.ratio_satisfied += 1
    c.interests_sent = sum(tallies.values())
    c.data_received = tallies[SATISFIED]
    c.nacks_received = tallies[NACKED]
    c.dropped = tallies[DROPPED]
    c.in_flight = tallies[IN_FLIGHT]
    for comp in rt.comps:
        if comp.id.startswith("q"):
            c.queue_drops[comp.id] = comp.vars["drops"]
            c.max_queue_occupancy[comp.id] = comp.vars["max_occ"]
        elif comp.id.startswith("in"):
            c.malformed += comp.vars["malformed"]
    return c


def run_cell(cfg: FactorConfig, cal: CalibrationProfile, seed: int,
             record_events: bool = False, fast: bool = True):
    """Build and run one trace; returns (Counters, Runtime)."""
    model = build_model(cfg, cal)
    rt = Runtime(model, seed, record_events=record_events)
    rt.run(cfg.horizon, fast=fast)
    return collect_counters(rt, cfg), rt


def check_conservation(counters: Counters):
    """Exact partition of counted Interests into the four outcomes."""
    total = (counters.data_received + counters.nacks_received
             + counters.dropped + counters.in_flight)
    if total != counters.interests_sent:
        raise AccountingError(
            f"conservation violated: sent={counters.interests_sent} "
            f"!= sat={counters.data_received} + nack={counters.nacks_received}"
            f" + dropped={counters.dropped} + in_flight={counters.in_flight}")
