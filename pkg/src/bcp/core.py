"""Broadcast consensus protocols: configurations, the broadcast step relation,
the uniform random scheduler and consensus semantics.

States are arbitrary hashable values.  Protocols with global states use
:class:`GState` pairs, and their transitions carry a response over *local*
states only; the global component of every agent follows the broadcaster's
successor.  Any state without an explicit transition is silent.
"""
from __future__ import annotations

import enum
import math
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Union

import numpy as np

State = Any
MIXED = "mixed"
RNG_ALGORITHM = "numpy.PCG64"


class ProtocolError(ValueError):
    pass


class UnknownSymbol(ProtocolError):
    pass


class EmptyPopulation(ProtocolError):
    pass


class StateNotPresent(ProtocolError):
    pass


@dataclass(frozen=True, slots=True)
class GState:
    """A state factored as (local, global)."""

    local: Any
    glob: Any

    def __repr__(self) -> str:
        return label(self)


def label(x: Any) -> str:
    """Canonical text label of a state or state component."""
    if isinstance(x, str):
        return x
    if isinstance(x, GState):
        return f"{label(x.local)}@{label(x.glob)}"
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, tuple):
        return "(" + ",".join(label(y) for y in x) + ")"
    if x is None:
        return "-"
    return str(x)


Response = Union[Mapping, Callable[[Any], Any]]


@dataclass(frozen=True)
class Transition:
    """delta(q) = (successor, response).

    ``response`` is a sparse mapping (identity where absent) or a callable.
    For protocols with global states it acts on local states.
    """

    successor: State
    response: Response = field(default_factory=dict)

    def local_response(self, s: Any) -> Any:
        r = self.response
        if callable(r):
            return r(s)
        return r.get(s, s)

    def respond(self, s: State) -> State:
        """Image of another agent's state under this broadcast."""
        if isinstance(s, GState) and isinstance(self.successor, GState):
            return GState(self.local_response(s.local), self.successor.glob)
        return self.local_response(s)

    def response_items(self) -> list[tuple[Any, Any]]:
        """Explicit non-identity response entries (mapping responses only)."""
        if callable(self.response):
            raise TypeError("response is a function; it has no finite listing")
        return [(a, b) for a, b in self.response.items() if a != b]

    def is_silent(self, source: State) -> bool:
        if self.successor != source:
            return False
        if callable(self.response):
            return False
        return all(a == b for a, b in self.response.items())


class Protocol:
    """A broadcast protocol (BP), or a BCP when inputs/accepting are given.

    Either pass an explicit ``transitions`` mapping over declared ``states``,
    or a ``rule`` computing ``delta(q)`` on demand (for generated protocols
    whose state space is only enumerated by closure).
    """

    def __init__(
        self,
        states: Iterable[State] | None = None,
        transitions: Mapping[State, Transition] | None = None,
        inputs: Mapping[str, State] | None = None,
        accepting: Iterable[State] | Callable[[State], bool] | None = None,
        globals_: Iterable[Any] | None = None,
        *,
        rule: Callable[[State], Transition | None] | None = None,
        factored: bool | None = None,
        name: str = "",
    ) -> None:
        if transitions is not None and rule is not None:
            raise ProtocolError("give either transitions or rule, not both")
        self.name = name
        self._states = tuple(states) if states is not None else None
        self._transitions = dict(transitions or {})
        self._rule = rule
        self._cache: dict[State, Transition] = {}
        self.inputs = dict(inputs or {})
        if callable(accepting):
            self._accepting_fn = accepting
            self._accepting = None
        else:
            self._accepting = frozenset(accepting or ())
            self._accepting_fn = self._accepting.__contains__
        self.globals = tuple(globals_) if globals_ is not None else None
        self.factored = factored if factored is not None else self.globals is not None
        self._validate()

    # -- construction checks -------------------------------------------------
    def _validate(self) -> None:
        if self._states is None:
            if self.factored and self.inputs:
                self._check_input_global()
            return
        declared = set(self._states)
        if len(declared) != len(self._states):
            raise ProtocolError("duplicate state in state list")
        if not declared:
            raise ProtocolError("state set must be non-empty")
        for q, t in self._transitions.items():
            if q not in declared:
                raise ProtocolError(f"transition source {label(q)} not declared")
            if t.successor not in declared:
                raise ProtocolError(f"successor {label(t.successor)} not declared")
            if not callable(t.response):
                for a, b in t.response.items():
                    if self.factored:
                        continue
                    if a not in declared or b not in declared:
                        raise ProtocolError(f"response {label(a)}->{label(b)} uses undeclared state")
        for sym, q in self.inputs.items():
            if q not in declared:
                raise ProtocolError(f"input {sym} maps to undeclared state {label(q)}")
        if self._accepting is not None and not self._accepting <= declared:
            raise ProtocolError("accepting set contains undeclared states")
        if self.factored:
            for q in declared:
                if not isinstance(q, GState):
                    raise ProtocolError(f"state {label(q)} is not factored as local@global")
            if self.globals is not None:
                gs = set(self.globals)
                for q in declared:
                    if q.glob not in gs:
                        raise ProtocolError(f"state {label(q)} has undeclared global")
            self._check_input_global()
            locals_by_global: dict[Any, set] = {}
            for q in declared:
                locals_by_global.setdefault(q.glob, set()).add(q.local)
            for q, t in self._transitions.items():
                if callable(t.response):
                    continue
                target = locals_by_global.get(t.successor.glob, set())
                for s in locals_by_global.get(q.glob, ()):
                    if t.local_response(s) not in target:
                        raise ProtocolError(
                            f"response of {label(q)} leaves the global state space at {label(s)}"
                        )

    def _check_input_global(self) -> None:
        gl = {q.glob for q in self.inputs.values()}
        if len(gl) > 1:
            raise ProtocolError("input states must share one global state")

    # -- semantics -----------------------------------------------------------
    @property
    def input_alphabet(self) -> tuple[str, ...]:
        return tuple(self.inputs)

    def delta(self, q: State) -> Transition:
        t = self._cache.get(q)
        if t is None:
            if self._rule is not None:
                t = self._rule(q)
            else:
                t = self._transitions.get(q)
            if t is None:
                t = Transition(q, {})
            self._cache[q] = t
        return t

    def explicit_transitions(self) -> dict[State, Transition]:
        """Non-silent transitions over the (enumerated) state set."""
        if self._rule is None and self._states is not None:
            return {q: t for q, t in self._transitions.items() if not t.is_silent(q)}
        return {q: self.delta(q) for q in self.states if not self.delta(q).is_silent(q)}

    def is_accepting(self, q: State) -> bool:
        return bool(self._accepting_fn(q))

    @property
    def accepting(self) -> frozenset:
        if self._accepting is not None:
            return self._accepting
        return frozenset(q for q in self.states if self._accepting_fn(q))

    @property
    def states(self) -> tuple:
        if self._states is None:
            self._states = tuple(state_closure(self))
        return self._states

    def __repr__(self) -> str:
        return f"Protocol({self.name or '?'}, inputs={list(self.inputs)})"


def state_closure(p: Protocol, seeds: Iterable[State] | None = None, limit: int = 2_000_000) -> list:
    """Smallest state set containing ``seeds`` (default: input states) closed
    under successors and responses.  Responses are only applied to states
    sharing the broadcaster's global component."""
    seeds = list(seeds if seeds is not None else p.inputs.values())
    if not seeds:
        raise ProtocolError("closure needs seed states")
    order: list = []
    seen: set = set()
    by_global: dict[Any, list] = {}
    work = list(seeds)

    def key(q):
        return q.glob if isinstance(q, GState) else None

    def add(q):
        if q not in seen:
            seen.add(q)
            order.append(q)
            by_global.setdefault(key(q), []).append(q)
            work.append(q)
            if len(seen) > limit:
                raise ProtocolError("state closure exceeds limit")

    for q in seeds:
        if q not in seen:
            seen.add(q)
            order.append(q)
            by_global.setdefault(key(q), []).append(q)
    # pairs (broadcaster, other) are rechecked whenever either side is new
    done_pairs: set = set()
    changed = True
    while changed:
        changed = False
        for q in list(order):
            t = p.delta(q)
            if t.successor not in seen:
                add(t.successor)
                changed = True
            peers = by_global.get(key(q), [])
            for s in list(peers):
                if (q, s) in done_pairs:
                    continue
                done_pairs.add((q, s))
                r = t.respond(s)
                if r not in seen:
                    add(r)
                    changed = True
    return order


class Configuration(Mapping):
    """Immutable multiset of states; equality and hashing ignore zero entries."""

    __slots__ = ("_counts", "_size", "_hash")

    def __init__(self, counts: Mapping[State, int] | Iterable[State] = ()) -> None:
        if isinstance(counts, Mapping):
            items = {q: int(c) for q, c in counts.items() if c}
        else:
            items = {}
            for q in counts:
                items[q] = items.get(q, 0) + 1
        for q, c in items.items():
            if c < 0:
                raise ValueError(f"negative multiplicity for {label(q)}")
        self._counts = items
        self._size = sum(items.values())
        self._hash = None

    def __getitem__(self, q: State) -> int:
        return self._counts.get(q, 0)

    def __iter__(self) -> Iterator[State]:
        return iter(self._counts)

    def __len__(self) -> int:
        return len(self._counts)

    def __contains__(self, q: object) -> bool:
        return q in self._counts

    @property
    def size(self) -> int:
        return self._size

    def support(self) -> frozenset:
        return frozenset(self._counts)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._counts.items()))
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Configuration):
            return self._counts == other._counts
        if isinstance(other, Mapping):
            return self._counts == {q: c for q, c in other.items() if c}
        return NotImplemented

    def __add__(self, other: Mapping) -> "Configuration":
        out = dict(self._counts)
        for q, c in other.items():
            out[q] = out.get(q, 0) + c
        return Configuration(out)

    def __sub__(self, other: Mapping) -> "Configuration":
        out = dict(self._counts)
        for q, c in other.items():
            out[q] = out.get(q, 0) - c
            if out[q] < 0:
                raise ValueError("multiset subtraction below zero")
        return Configuration(out)

    def map(self, f: Callable[[State], State]) -> "Configuration":
        out: dict = {}
        for q, c in self._counts.items():
            r = f(q)
            out[r] = out.get(r, 0) + c
        return Configuration(out)

    def __repr__(self) -> str:
        body = ", ".join(
            f"{c}*{label(q)}" if c > 1 else label(q)
            for q, c in sorted(self._counts.items(), key=lambda kv: label(kv[0]))
        )
        return f"<{body}>"


def init_config(spec: Protocol, inputs: Mapping[str, int]) -> Configuration:
    counts: dict = {}
    for sym, c in inputs.items():
        if sym not in spec.inputs:
            raise UnknownSymbol(f"unknown input symbol {sym!r}")
        if c < 0:
            raise ValueError(f"negative count for {sym!r}")
        if c:
            q = spec.inputs[sym]
            counts[q] = counts.get(q, 0) + c
    cfg = Configuration(counts)
    if cfg.size < 1:
        raise EmptyPopulation("population must contain at least one agent")
    return cfg


def apply_broadcast(spec: Protocol, config: Configuration, q: State) -> Configuration:
    return apply_transition(config, q, spec.delta(q))


def apply_transition(config: Configuration, q: State, t: Transition) -> Configuration:
    """f(C - q) + r for the broadcast t = (r, f) sent by an agent in q."""
    if config[q] < 1:
        raise StateNotPresent(f"no agent in state {label(q)}")
    out: dict = {}
    for s, c in config.items():
        if s == q:
            c -= 1
        if c:
            r = t.respond(s)
            out[r] = out.get(r, 0) + c
    out[t.successor] = out.get(t.successor, 0) + 1
    return Configuration(out)


def make_rng(seed: int | np.random.SeedSequence | None = None) -> np.random.Generator:
    """Seedable 64-bit PCG generator."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent streams for parallel trials."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def sample_step(spec: Protocol, config: Configuration, rng: np.random.Generator) -> tuple[State, Configuration]:
    n = config.size
    if n == 0:
        raise EmptyPopulation("cannot step an empty configuration")
    u = int(rng.integers(n))
    for q, c in config.items():
        if u < c:
            return q, apply_broadcast(spec, config, q)
        u -= c
    raise AssertionError("unreachable")


def is_consensus(spec: Protocol, config: Configuration):
    """1 for a 1-consensus, 0 for a 0-consensus, else MIXED."""
    flags = {spec.is_accepting(q) for q in config}
    if flags == {True}:
        return 1
    if flags == {False}:
        return 0
    return MIXED


def enabled_nonsilent(spec: Protocol, config: Configuration) -> set:
    return {q for q in config if not spec.delta(q).is_silent(q)}


def is_fixed_point(spec: Protocol, config: Configuration) -> bool:
    """True when no broadcast changes the configuration."""
    return all(apply_broadcast(spec, config, q) == config for q in config)


# ---------------------------------------------------------------------------
# Fast simulation engine


class Engine:
    """Interns states to integers and caches transitions and responses.

    Shared by the simulator and by the reachability search; it is bound to one
    protocol and holds no per-execution state.
    """

    def __init__(self, spec: Protocol) -> None:
        self.spec = spec
        self.ids: dict[State, int] = {}
        self.states: list[State] = []
        self.succ: list[int] = []
        self.rcache: list[dict[int, int]] = []
        self.trans: list[Transition | None] = []
        self.acc: list[bool] = []
        self._active_cache: dict[frozenset, tuple] = {}

    def sid(self, q: State) -> int:
        i = self.ids.get(q)
        if i is None:
            i = len(self.states)
            self.ids[q] = i
            self.states.append(q)
            self.succ.append(-1)
            self.rcache.append({})
            self.trans.append(None)
            self.acc.append(self.spec.is_accepting(q))
        return i

    def _compile(self, q: int) -> None:
        t = self.spec.delta(self.states[q])
        self.trans[q] = t
        self.succ[q] = self.sid(t.successor)

    def successor(self, q: int) -> int:
        s = self.succ[q]
        if s < 0:
            self._compile(q)
            s = self.succ[q]
        return s

    def respond(self, q: int, s: int) -> int:
        cache = self.rcache[q]
        r = cache.get(s)
        if r is None:
            if self.trans[q] is None:
                self._compile(q)
            r = self.sid(self.trans[q].respond(self.states[s]))
            cache[s] = r
        return r

    def apply(self, counts: dict[int, int], q: int) -> dict[int, int]:
        out: dict[int, int] = {}
        respond = self.respond
        for s, c in counts.items():
            if s == q:
                c -= 1
            if c:
                r = respond(q, s)
                out[r] = out.get(r, 0) + c
        r = self.successor(q)
        out[r] = out.get(r, 0) + 1
        return out

    def active(self, counts: dict[int, int]) -> tuple:
        """States whose broadcast changes this configuration."""
        key = frozenset((s, c if c < 2 else 2) for s, c in counts.items())
        hit = self._active_cache.get(key)
        if hit is not None:
            return hit
        respond = self.respond
        act = []
        for q, cq in counts.items():
            if self.successor(q) != q:
                act.append(q)
                continue
            for s in counts:
                if s == q and cq < 2:
                    continue
                if respond(q, s) != s:
                    act.append(q)
                    break
        hit = tuple(act)
        if len(self._active_cache) > 200_000:
            self._active_cache.clear()
        self._active_cache[key] = hit
        return hit

    def consensus(self, counts: dict[int, int]):
        acc = self.acc
        first = None
        for s in counts:
            a = acc[s]
            if first is None:
                first = a
            elif a != first:
                return MIXED
        return 1 if first else 0

    def encode(self, config: Configuration) -> dict[int, int]:
        return {self.sid(q): c for q, c in config.items()}

    def decode(self, counts: dict[int, int]) -> Configuration:
        st = self.states
        return Configuration({st[s]: c for s, c in counts.items()})


class UniformStream:
    """Buffered uniform(0,1) draws from a numpy generator."""

    def __init__(self, rng: np.random.Generator, block: int = 4096) -> None:
        self.rng = rng
        self.block = block
        self._buf = rng.random(block)
        self._i = 0

    def __call__(self) -> float:
        if self._i >= self.block:
            self._buf = self.rng.random(self.block)
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return float(u)


class Stop(enum.Enum):
    QUIESCENCE = "quiescence"
    EXACT_STABLE = "exact_stable"
    FIXED_STEPS = "fixed_steps"


@dataclass
class Trace:
    """One sampled execution.

    Silent picks are elided: ``events`` holds (step index, broadcaster,
    resulting configuration) for configuration-changing steps only, while
    ``step_count`` counts every scheduler step.
    """

    initial: Configuration
    final: Configuration
    step_count: int
    truncated: bool
    stopped_by: str
    effective_steps: int = 0
    events: list[tuple[int, State, Configuration]] | None = None
    consensus_changes: list[tuple[int, Any]] = field(default_factory=list)

    @property
    def last_consensus_change(self) -> int:
        return self.consensus_changes[-1][0] if self.consensus_changes else 0

    def outcome(self, spec: Protocol):
        return is_consensus(spec, self.final)


def run_execution(
    spec: Protocol,
    inputs: Mapping[str, int] | Configuration,
    rng: np.random.Generator,
    stop: Stop = Stop.QUIESCENCE,
    max_steps: int = 10**7,
    *,
    until: Callable[[Configuration], bool] | None = None,
    observer: Callable[[int, State, Configuration], None] | None = None,
    record: bool = False,
    engine: Engine | None = None,
    stable_budget: int = 10**6,
) -> Trace:
    """Sample the random execution from ``inputs`` until the stop policy fires.

    Runs of silent picks are skipped in one geometric draw, which leaves the
    law of the step-indexed trajectory unchanged.  ``until`` is an extra stop
    predicate checked after every configuration change.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    if isinstance(inputs, Configuration):
        initial = inputs
        if initial.size < 1:
            raise EmptyPopulation("population must contain at least one agent")
    else:
        initial = init_config(spec, inputs)
    eng = engine or Engine(spec)
    n = initial.size
    counts = eng.encode(initial)
    uni = UniformStream(rng)
    log = math.log
    steps = 0
    effective = 0
    events: list | None = [] if record else None
    cons = eng.consensus(counts)
    changes: list[tuple[int, Any]] = [(0, cons)]
    stable_memo: dict = {}
    decide = None
    if stop is Stop.EXACT_STABLE:
        from .analysis import decide_stable as decide

    def stable_now(cfg_counts) -> bool:
        key = frozenset(cfg_counts.items())
        v = stable_memo.get(key)
        if v is None:
            v = decide(spec, eng.decode(cfg_counts), budget=stable_budget, engine=eng)
            stable_memo[key] = v
        return v

    def done(cfg_counts) -> str | None:
        if until is not None and until(eng.decode(cfg_counts)):
            return "until"
        if stop is Stop.EXACT_STABLE and stable_now(cfg_counts):
            return "stable"
        return None

    reason = done(counts)
    while reason is None:
        act = eng.active(counts)
        if not act:
            if stop is Stop.QUIESCENCE:
                reason = "quiescent"
                break
            steps = max_steps
            reason = "max_steps"
            break
        w = 0
        for q in act:
            w += counts[q]
        if w == n:
            skip = 1
        else:
            u = uni()
            skip = 1 + int(log(1.0 - u) / math.log1p(-w / n)) if u > 0 else 1
        if steps + skip > max_steps:
            steps = max_steps
            reason = "max_steps"
            break
        steps += skip
        x = uni() * w
        pick = act[-1]
        for q in act:
            x -= counts[q]
            if x < 0:
                pick = q
                break
        counts = eng.apply(counts, pick)
        effective += 1
        c = eng.consensus(counts)
        if c != cons:
            cons = c
            changes.append((steps, c))
        if record or observer is not None:
            cfg = eng.decode(counts)
            if record:
                events.append((steps, eng.states[pick], cfg))
            if observer is not None:
                observer(steps, eng.states[pick], cfg)
        reason = done(counts)
    return Trace(
        initial=initial,
        final=eng.decode(counts),
        step_count=steps,
        truncated=reason == "max_steps" and stop is not Stop.FIXED_STEPS,
        stopped_by=reason,
        effective_steps=effective,
        events=events,
        consensus_changes=changes,
    )
