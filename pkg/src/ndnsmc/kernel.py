"""Discrete-tick execution kernel for stochastic component systems.

Components are transition systems with variables, an integer clock, and
three transition kinds: internal (spontaneous), port (fired through a
multi-party interaction), and tick (the synchronous time step). One global
round = fire interactions/internals to quiescence, then advance time by one
tick for every component whose declared tick transition is enabled;
components without an enabled tick stutter (their clock freezes while they
wait). A trace over horizon H is the sequence Q T Q T ... T Q, i.e. H
rounds plus a closing quiescence so effects of the last tick settle.

Guards over the clock use a small structured algebra (ClockLess, ClockEq,
ClockGe) so the runtime can jump over stretches of ticks in which no guard
can change; arbitrary predicate guards are allowed but force single-tick
stepping for the owning component.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

INF = math.inf

#: Marker ports for non-interaction transitions.
INTERNAL = "<internal>"
TICK = "<tick>"


class ModelError(Exception):
    """Malformed component / interaction structure."""


class LivelockError(Exception):
    """Quiescence did not terminate within the firing bound of one round."""


# ---------------------------------------------------------------------------
# Guards
# ---------------------------------------------------------------------------


def _resolve(bound, vars):
    return bound if type(bound) is int else vars[bound]


class Guard:
    """Base guard; subclasses implement eval and the jump-hint queries.

    ticks_until_true: for a currently-false guard, number of pure clock
    ticks after which it may first become true (INF if never).
    ticks_while_true: for a currently-true guard, number of consecutive
    clock ticks that keep it true (INF if unbounded).
    """

    clock_sensitive = True

    def eval(self, vars) -> bool:
        raise NotImplementedError

    def ticks_until_true(self, vars):
        return 1

    def ticks_while_true(self, vars):
        return 1


class ClockLess(Guard):
    """clock < bound, with bound an int constant or a variable name."""

    __slots__ = ("bound", "clock")

    def __init__(self, bound, clock: str = "t"):
        self.bound = bound
        self.clock = clock

    def eval(self, vars):
        return vars[self.clock] < _resolve(self.bound, vars)

    def ticks_until_true(self, vars):
        return INF  # clock only grows

    def ticks_while_true(self, vars):
        return _resolve(self.bound, vars) - vars[self.clock]

    def __repr__(self):
        return f"ClockLess({self.bound!r})"


class ClockEq(Guard):
    """clock == bound."""

    __slots__ = ("bound", "clock")

    def __init__(self, bound, clock: str = "t"):
        self.bound = bound
        self.clock = clock

    def eval(self, vars):
        return vars[self.clock] == _resolve(self.bound, vars)

    def ticks_until_true(self, vars):
        d = _resolve(self.bound, vars) - vars[self.clock]
        return d if d > 0 else INF

    def ticks_while_true(self, vars):
        return 0

    def __repr__(self):
        return f"ClockEq({self.bound!r})"


class ClockGe(Guard):
    """clock >= bound."""

    __slots__ = ("bound", "clock")

    def __init__(self, bound, clock: str = "t"):
        self.bound = bound
        self.clock = clock

    def eval(self, vars):
        return vars[self.clock] >= _resolve(self.bound, vars)

    def ticks_until_true(self, vars):
        d = _resolve(self.bound, vars) - vars[self.clock]
        return d if d > 0 else INF

    def ticks_while_true(self, vars):
        return INF

    def __repr__(self):
        return f"ClockGe({self.bound!r})"


class VarEq(Guard):
    """vars[name] == value; time-invariant."""

    __slots__ = ("name", "value")
    clock_sensitive = False

    def __init__(self, name: str, value):
        self.name = name
        self.value = value

    def eval(self, vars):
        return vars[self.name] == self.value

    def ticks_until_true(self, vars):
        return INF

    def ticks_while_true(self, vars):
        return INF

    def __repr__(self):
        return f"VarEq({self.name!r}, {self.value!r})"


class Pred(Guard):
    """Arbitrary predicate over the variable dict.

    clock_free=True asserts the predicate never reads the clock, keeping
    the owning component jumpable; the default is conservative.
    """

    __slots__ = ("fn", "clock_sensitive")

    def __init__(self, fn: Callable[[dict], bool], clock_free: bool = False):
        self.fn = fn
        self.clock_sensitive = not clock_free

    def eval(self, vars):
        return self.fn(vars)

    def ticks_until_true(self, vars):
        return INF if not self.clock_sensitive else 1

    def ticks_while_true(self, vars):
        return INF if not self.clock_sensitive else 1


class All(Guard):
    """Conjunction of guards."""

    __slots__ = ("parts", "clock_sensitive")

    def __init__(self, *parts: Guard):
        self.parts = parts
        self.clock_sensitive = any(p.clock_sensitive for p in parts)

    def eval(self, vars):
        return all(p.eval(vars) for p in self.parts)

    def ticks_until_true(self, vars):
        # Non-clock parts are frozen during a jump: if any is false the
        # conjunction stays false forever (within the jump window).
        worst = 0
        for p in self.parts:
            if p.eval(vars):
                continue
            if not p.clock_sensitive:
                return INF
            u = p.ticks_until_true(vars)
            if u is INF:
                return INF
            worst = max(worst, u)
        return worst if worst > 0 else INF

    def ticks_while_true(self, vars):
        return min(p.ticks_while_true(vars) for p in self.parts)

    def __repr__(self):
        return f"All{self.parts!r}"


def _guard_ok(guard, vars) -> bool:
    return guard is None or guard.eval(vars)


# ---------------------------------------------------------------------------
# Transitions and component specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    """One edge of a component automaton.

    port is a port name, INTERNAL, or TICK. delay, when present, is a
    (distribution, variable) pair: the distribution is sampled at firing
    time (rounded half-to-even to integer ticks) and stored into the named
    variable before the action runs, so guards of subsequent tick
    transitions can read it.
    """

    src: str
    dst: str
    port: str = INTERNAL
    guard: Optional[Guard] = None
    action: Optional[Callable[[dict, "Ctx"], None]] = None
    delay: Optional[tuple] = None  # (Distribution, var name)


class ComponentSpec:
    """Static description of one component; instantiated fresh per trace."""

    def __init__(
        self,
        comp_id: str,
        initial: str,
        init: Callable[[], dict],
        clock: str = "t",
        counters: tuple[str, ...] = (),
    ):
        self.id = comp_id
        self.initial = initial
        self.init = init
        self.clock = clock
        self.counters = tuple(counters)
        self.transitions: list[Transition] = []

    # -- builder helpers ---------------------------------------------------

    def tick(self, loc: str, guard: Optional[Guard] = None):
        """Declare the tick self-loop of a location (clock += 1)."""
        self.transitions.append(Transition(loc, loc, TICK, guard))
        return self

    def port(self, loc: str, port: str, to: Optional[str] = None,
             guard: Optional[Guard] = None, action=None, delay=None):
        self.transitions.append(
            Transition(loc, to if to is not None else loc, port, guard, action, delay))
        return self

    def internal(self, loc: str, to: str, guard: Optional[Guard] = None,
                 action=None, delay=None):
        self.transitions.append(
            Transition(loc, to, INTERNAL, guard, action, delay))
        return self

    # -- compilation -------------------------------------------------------

    def compile(self) -> dict[str, "_Loc"]:
        locs: dict[str, _Loc] = {}

        def loc(name):
            if name not in locs:
                locs[name] = _Loc(name)
            return locs[name]

        for tr in self.transitions:
            loc(tr.dst)
            l = loc(tr.src)
            if tr.port == TICK:
                if l.tick is not None:
                    raise ModelError(
                        f"{self.id}/{tr.src}: more than one tick transition")
                if tr.src != tr.dst:
                    raise ModelError(
                        f"{self.id}/{tr.src}: tick transitions must be self-loops")
                if tr.guard is not None and not isinstance(tr.guard, ClockLess):
                    raise ModelError(
                        f"{self.id}/{tr.src}: tick guard must be None or ClockLess")
                l.tick = tr
            elif tr.port == INTERNAL:
                l.internals.append(tr)
            else:
                if tr.port in l.ports:
                    raise ModelError(
                        f"{self.id}/{tr.src}: duplicate port {tr.port!r}")
                l.ports[tr.port] = tr
        if self.initial not in locs:
            raise ModelError(f"{self.id}: initial location {self.initial!r} unknown")
        for l in locs.values():
            l.finish()
        return locs


class _Loc:
    """Compiled location: transition lookup tables plus jump metadata."""

    __slots__ = ("name", "tick", "internals", "ports",
                 "clock_watch", "opaque")

    def __init__(self, name):
        self.name = name
        self.tick: Optional[Transition] = None
        self.internals: list[Transition] = []
        self.ports: dict[str, Transition] = {}

    def finish(self):
        # Transitions whose guard enabledness can change under pure clock
        # advance; consulted when computing jump hints.
        watch = []
        opaque = False
        for tr in list(self.internals) + list(self.ports.values()):
            g = tr.guard
            if g is None or not g.clock_sensitive:
                continue
            if isinstance(g, Pred) or (isinstance(g, All) and any(
                    isinstance(p, Pred) and p.clock_sensitive for p in g.parts)):
                opaque = True
            watch.append(tr)
        tg = self.tick.guard if self.tick is not None else None
        if tg is not None and isinstance(tg, Pred):
            opaque = True
        self.clock_watch = tuple(watch)
        self.opaque = opaque


@dataclass(frozen=True)
class Interaction:
    """Multi-party synchronization: one port per participating component.

    Fires atomically when every participant's port transition is enabled.
    transfer(ctx, *vars) runs after the participants' transition actions;
    it receives the participants' variable dicts in declaration order and
    the context of the first participant (whose RNG stream it may use).
    """

    name: str
    participants: tuple[tuple[str, str], ...]
    transfer: Optional[Callable] = None


@dataclass
class Model:
    """Immutable system description: components plus ordered interactions.

    The interaction list order is the priority order: in every quiescence
    pass the lowest-index enabled interaction fires first, and the scan
    restarts after each firing.
    """

    components: list[ComponentSpec]
    interactions: list[Interaction]
    livelock_bound: int = 10 ** 6

    def validate(self):
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate component ids")
        known = set(ids)
        for inter in self.interactions:
            for cid, port in inter.participants:
                if cid not in known:
                    raise ModelError(
                        f"interaction {inter.name!r}: unknown component {cid!r}")
        return self


# ---------------------------------------------------------------------------
# Runtime
# ---------------------------------------------------------------------------


Event = tuple  # (tick, kind, component id, packet id or None)


@dataclass
class Trace:
    """Observable outcome of one run: events plus final counter snapshot."""

    seed: int
    horizon: int
    events: list[Event]
    counters: dict[str, dict[str, Any]]
    ticks_seen: dict[str, int] = field(default_factory=dict)


class Ctx:
    """Per-component execution context handed to actions and transfers."""

    __slots__ = ("rng", "comp_id", "_rt")

    def __init__(self, rng, comp_id, rt):
        self.rng = rng
        self.comp_id = comp_id
        self._rt = rt

    @property
    def now(self) -> int:
        return self._rt.now

    @property
    def scratch(self) -> dict:
        return self._rt.scratch

    def emit(self, kind: str, pkt_id=None):
        if self._rt.record_events:
            self._rt.events.append((self._rt.now, kind, self.comp_id, pkt_id))


def _component_key(comp_id: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(comp_id.encode(), digest_size=8).digest(), "little")


class _RtComp:
    __slots__ = ("spec", "id", "vars", "loc", "locs", "rng", "ctx",
                 "ticks_seen", "clock", "index")

    def __init__(self, spec: ComponentSpec, index: int, seed: int, rt):
        self.spec = spec
        self.id = spec.id
        self.index = index
        self.locs = spec.compile()
        self.loc = self.locs[spec.initial]
        self.vars = spec.init()
        self.vars.setdefault(spec.clock, 0)
        self.clock = spec.clock
        ss = np.random.SeedSequence(
            [seed & (2 ** 64 - 1), _component_key(spec.id)])
        self.rng = np.random.Generator(np.random.PCG64(ss))
        self.ctx = Ctx(self.rng, spec.id, rt)
        self.ticks_seen = 0


class Runtime:
    """Mutable execution state of one trace.

    Single-threaded; the Model is never mutated, so one Model can back any
    number of Runtimes (sequentially or across processes).
    """

    def __init__(self, model: Model, seed: int, record_events: bool = True):
        model.validate()
        self.model = model
        self.seed = seed
        self.now = 0
        self.scratch: dict[str, Any] = {}
        self.events: list[Event] = []
        self.record_events = record_events
        self.comps: list[_RtComp] = [
            _RtComp(spec, i, seed, self) for i, spec in enumerate(model.components)]
        self.by_id = {c.id: c for c in self.comps}
        # interaction index -> resolved participants
        self._parts: list[list[tuple[_RtComp, str]]] = []
        self._comp_inters: dict[str, list[int]] = {c.id: [] for c in self.comps}
        for idx, inter in enumerate(model.interactions):
            resolved = [(self.by_id[cid], port) for cid, port in inter.participants]
            self._parts.append(resolved)
            for cid, _ in inter.participants:
                self._comp_inters[cid].append(idx)
        self._watch: set[int] = set(range(len(model.interactions)))
        self._touched: set[str] = {c.id for c in self.comps}
        self._quiesced = False

    # -- low-level firing --------------------------------------------------

    def _fire_transition(self, comp: _RtComp, tr: Transition):
        if tr.delay is not None:
            dist, var = tr.delay
            comp.vars[var] = int(round(dist.sample(comp.rng)))
        if tr.action is not None:
            tr.action(comp.vars, comp.ctx)
        if tr.dst != tr.src:
            comp.loc = comp.locs[tr.dst]

    def _run_internals(self, comp: _RtComp, budget: list) -> bool:
        fired = False
        while True:
            for tr in comp.loc.internals:
                if _guard_ok(tr.guard, comp.vars):
                    self._fire_transition(comp, tr)
                    fired = True
                    budget[0] -= 1
                    if budget[0] <= 0:
                        raise LivelockError(
                            f"firing bound exceeded at tick {self.now} "
                            f"(last internal: {comp.id}/{tr.src}->{tr.dst})")
                    break
            else:
                return fired

    def _enabled_tr(self, comp: _RtComp, port: str) -> Optional[Transition]:
        tr = comp.loc.ports.get(port)
        if tr is not None and _guard_ok(tr.guard, comp.vars):
            return tr
        return None

    def _interaction_enabled(self, idx: int) -> bool:
        for comp, port in self._parts[idx]:
            if self._enabled_tr(comp, port) is None:
                return False
        return True

    def quiesce(self):
        """Fire internals and interactions until nothing is enabled."""
        budget = [self.model.livelock_bound]
        watch = self._watch
        for cid in sorted(self._touched):
            comp = self.by_id[cid]
            self._run_internals(comp, budget)
            watch.update(self._comp_inters[cid])
        self._touched.clear()
        inters = self.model.interactions
        while True:
            fired_idx = -1
            for idx in sorted(watch):
                if self._interaction_enabled(idx):
                    fired_idx = idx
                    break
                watch.discard(idx)
            if fired_idx < 0:
                break
            parts = self._parts[fired_idx]
            trs = [self._enabled_tr(c, p) for c, p in parts]
            for (comp, _), tr in zip(parts, trs):
                self._fire_transition(comp, tr)
            transfer = inters[fired_idx].transfer
            if transfer is not None:
                transfer(parts[0][0].ctx, *[c.vars for c, _ in parts])
            budget[0] -= 1
            if budget[0] <= 0:
                raise LivelockError(
                    f"firing bound exceeded at tick {self.now} "
                    f"(last interaction: {inters[fired_idx].name})")
            for comp, _ in sorted(parts, key=lambda cp: cp[0].id):
                self._run_internals(comp, budget)
                watch.update(self._comp_inters[comp.id])
        self._quiesced = True

    # -- time --------------------------------------------------------------

    def _hint(self, comp: _RtComp):
        """Ticks this component can take before any of its guards may flip.

        Returns (can_tick, hint). can_tick is False when the declared tick
        transition is absent or disabled (the component stutters).
        """
        loc = comp.loc
        tr = loc.tick
        if tr is None:
            return False, INF
        vars = comp.vars
        g = tr.guard
        if g is None:
            h = INF
        else:
            if not g.eval(vars):
                return False, INF
            h = g.ticks_while_true(vars)
        if loc.opaque:
            return True, 1
        for other in loc.clock_watch:
            og = other.guard
            if og.eval(vars):
                w = og.ticks_while_true(vars)
                if w < h:
                    h = w
            else:
                u = og.ticks_until_true(vars)
                if 0 < u < h:
                    h = u
        return True, max(1, h)

    def _tick_batch(self, dt: int, ticking: list[_RtComp]):
        for comp in ticking:
            comp.vars[comp.clock] += dt
            self._touched.add(comp.id)
        for comp in self.comps:
            comp.ticks_seen += dt
        self.now += dt
        self._quiesced = False

    def step(self):
        """One global round: quiescence, then one synchronous tick."""
        if not self._quiesced:
            self.quiesce()
        ticking = [c for c in self.comps if self._hint(c)[0]]
        self._tick_batch(1, ticking)
        return self

    def run(self, horizon: int, fast: bool = True):
        """Run rounds until the tick counter reaches `horizon`, then close
        with a final quiescence so the last tick's effects settle."""
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        while self.now < horizon:
            if not self._quiesced:
                self.quiesce()
            dt = INF
            ticking = []
            for comp in self.comps:
                can, h = self._hint(comp)
                if can:
                    ticking.append(comp)
                    if h < dt:
                        dt = h
            dt = min(dt, horizon - self.now)
            if not fast:
                dt = 1
            self._tick_batch(int(dt), ticking)
        if not self._quiesced:
            self.quiesce()
        return self

    # -- results -----------------------------------------------------------

    def trace(self) -> Trace:
        counters = {
            c.id: {k: c.vars.get(k) for k in c.spec.counters}
            for c in self.comps if c.spec.counters
        }
        ticks = {c.id: c.ticks_seen for c in self.comps}
        return Trace(self.seed, self.now, self.events, counters, ticks)


def step(runtime: Runtime) -> Runtime:
    """Execute one global round on the runtime (in place)."""
    return runtime.step()


def run_trace(model: Model, horizon: int, seed: int,
              record_events: bool = True, fast: bool = True) -> Trace:
    """Run a fresh instance of the model for `horizon` ticks.

    Pure in (model description, horizon, seed): the model is instantiated
    from scratch, each component draws from an RNG stream derived from
    (seed, component id), and the returned trace is bit-identical across
    calls with equal arguments.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    rt = Runtime(model, seed, record_events=record_events)
    if horizon > 0:
        rt.run(horizon, fast=fast)
    return rt.trace()


def derive_seed(master_seed: int, index: int) -> int:
    """Stable per-index seed derivation (order-independent aggregation)."""
    digest = hashlib.blake2b(
        f"{master_seed}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")
