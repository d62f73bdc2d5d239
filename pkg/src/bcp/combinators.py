"""Protocol-to-protocol constructions: parallel composition, a synthetic coin
for two-way nondeterministic broadcasts, k-way choice by a rejection tree,
and rendezvous transitions simulated by broadcasts."""
from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Configuration,
    GState,
    Protocol,
    ProtocolError,
    State,
    Transition,
    apply_transition,
)

TYPES = ("?", "+", "-", "0", "1")
COIN = ("*", "0", "1")
INERT = "inert"


# ---------------------------------------------------------------------------
# parallel composition


def output_by_global(p: Protocol) -> dict | None:
    """Map global -> output when acceptance depends on the global state only."""
    if not p.factored:
        return None
    out: dict = {}
    for q in p.states:
        v = p.is_accepting(q)
        if out.setdefault(q.glob, v) != v:
            return None
    return out


def with_symbols(p: Protocol, symbols) -> Protocol:
    """Extend the input alphabet; new symbols map to an inert agent that never
    broadcasts and follows the global state."""
    missing = [s for s in symbols if s not in p.inputs]
    if not missing:
        return p
    outputs = output_by_global(p)
    if outputs is None:
        raise ProtocolError(
            f"cannot add symbols {missing} to {p.name or 'protocol'}: output is not a function of the global state"
        )
    g0 = next(iter(p.inputs.values())).glob if p.inputs else next(iter(outputs))
    inert = [GState(INERT, g) for g in outputs]
    acc = set(p.accepting) | {q for q in inert if outputs[q.glob]}
    inputs = dict(p.inputs)
    for s in missing:
        inputs[s] = GState(INERT, g0)

    def rule(q):
        if q.local == INERT:
            return None
        t = p.delta(q)
        if t.is_silent(q):
            return None
        return Transition(t.successor, lambda s, t=t: s if s == INERT else t.local_response(s))

    return Protocol(
        list(p.states) + inert,
        None,
        inputs,
        acc,
        p.globals if p.globals is not None else list(outputs),
        rule=rule,
        factored=True,
        name=p.name,
    )


def parallel_compose(p1: Protocol, p2: Protocol, combine_output: Callable[[bool, bool], bool], name: str = "") -> Protocol:
    """Run p1 and p2 side by side on the same input.

    Product states are GState((s1, s2), (g1, g2)) when both factors have
    global states, and plain pairs (q1, q2) otherwise.
    """
    symbols = list(dict.fromkeys(list(p1.inputs) + list(p2.inputs)))
    p1 = with_symbols(p1, symbols)
    p2 = with_symbols(p2, symbols)
    both = p1.factored and p2.factored

    if both:
        def pair(a: GState, b: GState) -> GState:
            return GState((a.local, b.local), (a.glob, b.glob))

        def split(q: GState):
            return GState(q.local[0], q.glob[0]), GState(q.local[1], q.glob[1])

        def rule(q):
            a, b = split(q)
            t1, t2 = p1.delta(a), p2.delta(b)
            if t1.is_silent(a) and t2.is_silent(b):
                return None
            return Transition(
                pair(t1.successor, t2.successor),
                lambda s, t1=t1, t2=t2: (t1.local_response(s[0]), t2.local_response(s[1])),
            )
    else:
        def pair(a, b):
            return (a, b)

        def split(q):
            return q

        def rule(q):
            a, b = q
            t1, t2 = p1.delta(a), p2.delta(b)
            if t1.is_silent(a) and t2.is_silent(b):
                return None
            return Transition(
                pair(t1.successor, t2.successor),
                lambda s, t1=t1, t2=t2: (t1.respond(s[0]), t2.respond(s[1])),
            )

    inputs = {x: pair(p1.inputs[x], p2.inputs[x]) for x in symbols}

    def accepting(q) -> bool:
        a, b = split(q)
        return bool(combine_output(p1.is_accepting(a), p2.is_accepting(b)))

    states = None
    globals_ = None
    if p1._states is not None and p2._states is not None:
        if both:
            s1 = {}
            for a in p1.states:
                s1.setdefault(a.glob, []).append(a)
            s2 = {}
            for b in p2.states:
                s2.setdefault(b.glob, []).append(b)
            states = [pair(a, b) for g1 in s1 for g2 in s2 for a in s1[g1] for b in s2[g2]]
            globals_ = [(g1, g2) for g1 in s1 for g2 in s2]
        else:
            states = [pair(a, b) for a in p1.states for b in p2.states]
    return Protocol(
        states,
        None,
        inputs,
        accepting,
        globals_,
        rule=rule,
        factored=both,
        name=name or f"({p1.name}|{p2.name})",
    )


def project(q: State, i: int) -> State:
    """Component i of a product state."""
    if isinstance(q, GState):
        return GState(q.local[i], q.glob[i])
    return q[i]


def project_config(c: Configuration, i: int) -> Configuration:
    return c.map(lambda q: project(q, i))


def complement(p: Protocol, name: str = "") -> Protocol:
    """Same protocol, accepting set complemented."""
    return Protocol(
        p._states,
        None,
        p.inputs,
        lambda q: not p.is_accepting(q),
        p.globals,
        rule=p.delta,
        factored=p.factored,
        name=name or f"not({p.name})",
    )


# ---------------------------------------------------------------------------
# nondeterministic broadcasts


@dataclass
class NondetSpec:
    """A protocol whose agents pick delta_0 (``base``) or delta_1 (``alt``)
    uniformly at random when broadcasting."""

    base: Protocol
    alt: Mapping[State, Transition] | Callable[[State], Transition | None]
    name: str = ""

    def delta(self, which: int, q: State) -> Transition:
        if which == 0:
            return self.base.delta(q)
        t = self.alt(q) if callable(self.alt) else self.alt.get(q)
        return t if t is not None else Transition(q, {})


def sample_nondet_step(nd: NondetSpec, config: Configuration, rng: np.random.Generator):
    """Pick an agent uniformly, then one of its two broadcasts uniformly."""
    u = int(rng.integers(config.size))
    for q, c in config.items():
        if u < c:
            which = int(rng.integers(2))
            return q, which, apply_transition(config, q, nd.delta(which, q))
        u -= c
    raise AssertionError("unreachable")


def with_coin(nd: NondetSpec, name: str = "") -> Protocol:
    """Deterministic BCP simulating ``nd`` with a synthetic coin.

    States are GState((q, type), coin).  Matched agents of types 0 and 1 flip
    the shared coin; the next broadcaster then executes delta_coin.
    """

    def seek_resp(s):
        r, ty = s
        return (r, "-") if ty == "?" else s

    def find_resp(s):
        r, ty = s
        if ty == "-":
            return (r, "?")
        if ty == "+":
            return (r, "0")
        return s

    cache: dict = {}

    def exec_resp(t: Transition):
        key = id(t)
        f = cache.get(key)
        if f is None:
            def f(s, t=t):
                return (t.respond(s[0]), s[1])
            cache[key] = (f, t)
            return f
        return f[0]

    def rule(st: GState):
        (q, ty), coin = st.local, st.glob
        if coin == "*":
            if ty == "?":
                return Transition(GState((q, "+"), "*"), seek_resp)
            if ty == "-":
                return Transition(GState((q, "1"), "*"), find_resp)
            if ty in ("0", "1"):
                return Transition(GState((q, ty), ty), {})
            return None
        t = nd.delta(0 if coin == "0" else 1, q)
        return Transition(GState((t.successor, ty), "*"), exec_resp(t))

    base = nd.base
    inputs = {x: GState((q, "?"), "*") for x, q in base.inputs.items()}
    states = None
    if base._states is not None:
        states = [GState((q, ty), c) for c in COIN for q in base.states for ty in TYPES]
    return Protocol(
        states,
        None,
        inputs,
        lambda st: base.is_accepting(st.local[0]),
        list(COIN) if states is not None else None,
        rule=rule,
        factored=True,
        name=name or f"coin({nd.name or base.name})",
    )


def coin_base_state(st: GState) -> State:
    return st.local[0]


def coin_type(st: GState) -> str:
    return st.local[1]


def type_counts(c: Configuration) -> dict[str, int]:
    out = dict.fromkeys(TYPES, 0)
    for st, k in c.items():
        out[st.local[1]] += k
    return out


def nondet_tree(base: Protocol, choices: Callable[[State], list[Transition]], name: str = "") -> NondetSpec:
    """k-way uniform choice from binary choices by rejection sampling.

    States become (q, path); an agent extends its pending path by one bit per
    broadcast.  A complete path indexes ``choices(q)`` (left-complete tree);
    an index past the end is rejected and the path restarts.  A response that
    changes an agent's base state clears its pending path.
    """

    def depth(q) -> int:
        m = len(choices(q))
        if m < 1:
            raise ProtocolError("every state needs at least one choice")
        return max(0, math.ceil(math.log2(m)))

    def make(bit: int):
        def rule(st):
            q, path = st
            opts = choices(q)
            path = path + (bit,)
            d = depth(q)
            if len(path) < d:
                return Transition((q, path), {})
            idx = int("".join(map(str, path[:d])), 2) if d else 0
            if idx >= len(opts):
                return Transition((q, ()), {})
            t = opts[idx]

            def resp(s, t=t):
                r = t.respond(s[0])
                return (r, s[1]) if r == s[0] else (r, ())

            return Transition((t.successor, ()), resp)

        return rule

    r0, r1 = make(0), make(1)
    p0 = Protocol(
        None,
        None,
        {x: (q, ()) for x, q in base.inputs.items()},
        lambda st: base.is_accepting(st[0]),
        rule=r0,
        factored=False,
        name=name or f"tree({base.name})",
    )
    return NondetSpec(p0, r1, name=p0.name)


# ---------------------------------------------------------------------------
# rendezvous


@dataclass
class RendezvousSpec:
    base: Protocol
    rendezvous: Mapping[tuple[State, State], tuple[State, State]] = field(default_factory=dict)

    def R(self, q, r):
        return self.rendezvous.get((q, r), (q, r))


def active(q) -> tuple:
    return ("~", q)


def answering(r, q) -> tuple:
    return ("r", r, q)


def with_rendezvous(spec: RendezvousSpec, name: str = "") -> NondetSpec:
    """Every base state gets two broadcasts: its own (delta_0) and an
    activation (delta_1); any other agent then answers and completes the
    rendezvous in one broadcast."""
    base = spec.base

    def is_base(s) -> bool:
        return not (isinstance(s, tuple) and s and s[0] in ("~", "r") and len(s) in (2, 3))

    def d0(q):
        if is_base(q):
            t = base.delta(q)
            return Transition(t.successor, lambda s, t=t: t.respond(s) if is_base(s) else s)
        return d1(q)

    def d1(q):
        if is_base(q):
            return Transition(active(q), lambda s, q=q: answering(s, q) if is_base(s) else s)
        if q[0] == "~":
            return None
        _, r, init = q
        s_, t_ = spec.R(init, r)

        def resp(x, init=init, t_=t_):
            if x == active(init):
                return t_
            if isinstance(x, tuple) and len(x) == 3 and x[0] == "r" and x[2] == init:
                return x[1]
            return x

        return Transition(s_, resp)

    def accepting(q) -> bool:
        if is_base(q):
            return base.is_accepting(q)
        return base.is_accepting(q[1])

    p0 = Protocol(None, None, base.inputs, accepting, rule=d0, factored=False, name=name or f"rdv({base.name})")
    return NondetSpec(p0, d1, name=p0.name)


def pp_successors(rendezvous: Mapping, config: Configuration) -> set[Configuration]:
    """Configurations one population-protocol interaction away."""
    out = set()
    for q1 in config:
        for q2 in config:
            if q1 == q2 and config[q1] < 2:
                continue
            r1, r2 = rendezvous.get((q1, q2), (q1, q2))
            out.add(config - Configuration([q1, q2]) + Configuration([r1, r2]))
    return out


def pp_step(rendezvous: Mapping, config: Configuration, rng: np.random.Generator) -> Configuration:
    """Ordered pick of two distinct agents, then apply the rendezvous map."""
    agents = [q for q, c in config.items() for _ in range(c)]
    i, j = rng.choice(len(agents), size=2, replace=False)
    q1, q2 = agents[i], agents[j]
    r1, r2 = rendezvous.get((q1, q2), (q1, q2))
    return config - Configuration([q1, q2]) + Configuration([r1, r2])
