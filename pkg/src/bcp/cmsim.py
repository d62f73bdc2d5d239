"""Broadcast protocols that execute counter-machine steps: the step protocol,
epidemic clocks, the clock-guarded step protocol and the compiler from
counter machines to consensus protocols with restarts."""
from __future__ import annotations

from collections.abc import Sequence
from fractions import Fraction

import numpy as np

from .combinators import NondetSpec, nondet_tree, with_coin
from .core import Configuration, GState, Protocol, Transition
from .machines.models import CMDS, DONE0, DONE1, ArityMismatch, CounterMachine, cm_step

HALF = Fraction(1, 2)
STAR = "*"
BOT = "bot"
HIGH = "high"
RET = (DONE0, DONE1)
STEP_LOCALS = (0, HALF, 1, 2, STAR)
STEP_GLOBALS = CMDS + RET + (HIGH,)

# ---------------------------------------------------------------------------
# one counter-machine step


def _step_table() -> dict:
    t = {}
    for b in (0, 1):
        t[GState(b, "mul2")] = Transition(GState(2 * b, DONE0), {1: 2})
        t[GState(b, "divmod2")] = Transition(GState(Fraction(b, 2) if b else 0, DONE0), {1: HALF})
        t[GState(b, "inc")] = Transition(GState(b, HIGH), {})
    t[GState(0, HIGH)] = Transition(GState(1, DONE0), {})
    t[GState(2, DONE0)] = Transition(GState(1, HIGH), {})
    t[GState(HALF, DONE0)] = Transition(GState(0, DONE1), {})
    t[GState(HALF, DONE1)] = Transition(GState(1, DONE0), {})
    t[GState(1, "iszero")] = Transition(GState(1, DONE1), {})
    t[GState(0, "iszero")] = Transition(GState(0, DONE0), {1: STAR})
    t[GState(STAR, DONE0)] = Transition(GState(1, DONE1), {STAR: 1})
    return t


BETA_SOURCES = frozenset(
    [GState(0, HIGH), GState(2, DONE0), GState(HALF, DONE0), GState(HALF, DONE1), GState(STAR, DONE0)]
)


def step_bp() -> Protocol:
    """Executes one command on a counter spread over the population.

    Each agent contributes 0, 1/2, 1, 2 or * (= 1, pending iszero) to the
    counter; the global holds the command, then a completion status, or
    ``high`` while an increment is carried.
    """
    states = [GState(s, g) for g in STEP_GLOBALS for s in STEP_LOCALS]
    return Protocol(states, _step_table(), None, None, STEP_GLOBALS, name="step")


def phi(j, x: int, n: int, hardened: bool = False) -> Configuration:
    """x agents holding 1 and n - x holding 0, all under global j."""
    if not 0 <= x <= n:
        raise ValueError(f"need 0 <= x <= n, got x={x}, n={n}")
    if hardened:
        one, zero = GState((1, CLOCK0), (j, 1)), GState((0, CLOCK0), (j, 1))
    else:
        one, zero = GState(1, j), GState(0, j)
    return Configuration({one: x, zero: n - x})


def _p1(q: GState) -> tuple:
    """(step local, step global) of a plain or clock-guarded step state."""
    if isinstance(q.local, tuple):
        g = q.glob[0]
        return q.local[0], (g[:-1] if isinstance(g, str) and g.endswith(RENAMED) else g)
    return q.local, q.glob


def potential(c: Configuration) -> int:
    """2 * #agents in {1/2, 2, *} + [global = high]."""
    total = 0
    glob = None
    for q, k in c.items():
        s, glob = _p1(q)
        if s in (HALF, 2, STAR):
            total += 2 * k
    return total + (1 if glob == HIGH else 0)


def counter_value(c: Configuration, cmd: str) -> Fraction:
    """Counter represented by ``c`` while executing ``cmd``; * counts as 1,
    ``high`` adds one and, for divmod2, done1 holds the dropped half."""
    total = Fraction(0)
    glob = None
    for q, k in c.items():
        s, glob = _p1(q)
        if s == STAR:
            s = 1
        if s == BOT:
            s = 0
        total += Fraction(s) * k
    if glob == HIGH:
        total += 1
    if cmd == "divmod2" and glob == DONE1:
        total += HALF
    return total


def is_final(c: Configuration) -> bool:
    return all(q.local in (0, 1) and q.glob in RET for q in c) if c else False


def decode_final(c: Configuration) -> tuple[str, int]:
    g = next(iter(c)).glob
    return g, c[GState(1, g)]


# ---------------------------------------------------------------------------
# clocks

CLOCK0, CLOCK1 = "0", "1"
CLOCK_STATES = (CLOCK0, CLOCK1, "c1", "c2", "c3", "c1+", "c2+")


def clock_bp() -> Protocol:
    """Leader c1 waits for the epidemic c3 to reach it."""
    t = {
        CLOCK0: Transition("c1+", {CLOCK0: "c2+"}),
        "c2+": Transition("c3", {"c2+": "c2", "c1+": "c1"}),
        "c3": Transition("c3", {"c2": "c2+", "c1": "c1+"}),
        "c1+": Transition(CLOCK1, {"c2+": CLOCK1, "c3": CLOCK1}),
    }
    return Protocol(CLOCK_STATES, t, {"x": CLOCK0}, [CLOCK1], name="clock")


def default_phases(k: int) -> int:
    return 28 * k * k


def chained_clock_bp(k: int = 1, phases: int | None = None) -> Protocol:
    """``phases`` clocks in sequence (default 28 k^2); the global counts the
    phase, and a finished sub-clock restarts everyone in the next phase."""
    if k < 1:
        raise ValueError("k must be at least 1")
    L = phases if phases is not None else default_phases(k)
    if L < 1:
        raise ValueError("need at least one phase")
    base = clock_bp()
    t = {}
    for i in range(1, L + 1):
        for q in CLOCK_STATES:
            bt = base.delta(q)
            if not bt.is_silent(q):
                t[GState(q, i)] = Transition(GState(bt.successor, i), dict(bt.response))
        if i < L:
            t[GState(CLOCK1, i)] = Transition(GState(CLOCK0, i + 1), {CLOCK1: CLOCK0})
    states = [GState(q, i) for i in range(1, L + 1) for q in CLOCK_STATES]
    return Protocol(
        states,
        t,
        {"x": GState(CLOCK0, 1)},
        [GState(CLOCK1, L)],
        list(range(1, L + 1)),
        name=f"chained_clock({L})",
    )


def clock_time_observer(final_state, n: int):
    """Observer recording the first step at which some agent is in
    ``final_state`` and whether all agents were there at that moment."""
    rec = {"first": None, "all": None}

    def obs(step, q, cfg):
        if rec["first"] is None and cfg[final_state] > 0:
            rec["first"] = step
            rec["all"] = cfg[final_state] == n

    return rec, obs


# ---------------------------------------------------------------------------
# clock-guarded step

RENAMED = "~"


def _rename(g):
    return g + RENAMED if g in RET or g == HIGH else g


def _unrename(g):
    return g[:-1] if isinstance(g, str) and g.endswith(RENAMED) else g


def hardened_step_bp(k: int = 2, phases: int | None = None) -> Protocol:
    """Step protocol running next to a chained clock.

    States are GState((s, clock), (g, phase)); the step protocol's own
    statuses are renamed (done0~, done1~, high~).  When the clock has run out
    and the step protocol reports a status, one broadcast publishes the true
    status; agents not holding 0 or 1, or whose clock has not finished,
    become ``bot`` (failure).
    """
    p1 = step_bp()
    p2 = chained_clock_bp(k, phases)
    L = p2.globals[-1]

    def rule(q: GState):
        (s, c), (g, ph) = q.local, q.glob
        if g in RET:
            return None
        g1 = _unrename(g)
        if c == CLOCK1 and ph == L and g1 in RET:
            succ = s if s in (0, 1) else BOT

            def resp(x):
                a, b = x
                return (a, CLOCK0) if b == CLOCK1 and a in (0, 1) else (BOT, CLOCK0)

            return Transition(GState((succ, CLOCK0), (g1, 1)), resp)
        if s == BOT:
            t1 = Transition(GState(BOT, g1), {})
        else:
            t1 = p1.delta(GState(s, g1))
        t2 = p2.delta(GState(c, ph))
        if t1.is_silent(GState(s, g1)) and t2.is_silent(GState(c, ph)):
            return None
        return Transition(
            GState((t1.successor.local, t2.successor.local), (_rename(t1.successor.glob), t2.successor.glob)),
            lambda x, t1=t1, t2=t2: (t1.local_response(x[0]), t2.local_response(x[1])),
        )

    locals_ = [(s, c) for s in STEP_LOCALS + (BOT,) for c in CLOCK_STATES]
    globals_ = [(g, ph) for g in CMDS + tuple(_rename(g) for g in RET + (HIGH,)) for ph in range(1, L + 1)]
    globals_ += [(g, 1) for g in RET]
    states = [GState(s, g) for g in globals_ for s in locals_]
    return Protocol(states, None, None, None, globals_, rule=rule, factored=True, name=f"hardened({L})")


def is_failing(c: Configuration) -> bool:
    return any(_p1(q)[0] == BOT for q in c)


def hardened_outcome(c: Configuration):
    """("final", status, value), ("failing",) or None while running."""
    if is_failing(c):
        return ("failing",)
    g = next(iter(c)).glob[0]
    if g in RET and all(q.local[0] in (0, 1) for q in c):
        return ("final", g, sum(k for q, k in c.items() if q.local[0] == 1))
    return None


# ---------------------------------------------------------------------------
# counter machine -> consensus protocol

INIT = "init"
ZERO = (0, CLOCK0)
ONE = (1, CLOCK0)


def counter_local(i: int) -> tuple:
    return ("c", i)


def _has_bot(loc) -> bool:
    return any(isinstance(x, tuple) and x and x[0] == BOT for x in loc[1:])


class CMProtocol:
    """Result of :func:`cm_to_bcp`: the compiled protocol plus accessors for
    the bundled state layout."""

    def __init__(self, protocol: Protocol, nondet: NondetSpec, cm: CounterMachine, slots: int, arity: int):
        self.protocol = protocol
        self.nondet = nondet
        self.cm = cm
        self.slots = slots
        self.arity = arity

    @staticmethod
    def bundle(q) -> GState:
        """The bundled agent inside a coin/tree wrapped state."""
        return q.local[0][0]

    def cm_state(self, c: Configuration):
        return self.bundle(next(iter(c))).glob[1]

    def halted(self, c: Configuration):
        """0/1 once the simulated machine sits in a halting state with no
        failure pending, else None."""
        g = self.bundle(next(iter(c))).glob
        if g[0] != INIT or g[1] not in (0, 1):
            return None
        for q in c:
            if _has_bot(self.bundle(q).local):
                return None
        return g[1]

    def bundles(self, c: Configuration) -> Configuration:
        """``c`` with coin types, coin and pending choice paths dropped."""
        return Configuration([self.bundle(q) for q, k in c.items() for _ in range(k)])

    def counters(self, c: Configuration) -> list[int]:
        out = [0] * (self.cm.k + 1)
        for q, k in c.items():
            for s in self.bundle(q).local[1:]:
                if isinstance(s, tuple) and s and s[0] == "c":
                    out[s[1]] += k
        return out[1:]

    def initial(self, x: Sequence[int]) -> Configuration:
        inputs = {f"x{i}": v for i, v in enumerate(x, 1) if v}
        from .core import init_config

        return init_config(self.protocol, inputs)


def cm_to_bcp(cm: CounterMachine, k: int = 2, phases: int | None = None, arity: int | None = None) -> CMProtocol:
    """Consensus protocol deciding what ``cm`` decides on input counts.

    Every agent carries ``cm.k + 1`` simulated agents (slots) plus the local
    state it started in; all share the global (phase, cm_state, choice).
    Per broadcast, an agent picks one slot uniformly (binary tree with
    rejection) and runs that slot's transition; while the global is ``init``
    it instead picks T1 or T2.  A slot in ``bot`` resets everybody.
    """
    arity = cm.k if arity is None else arity
    if not 1 <= arity <= cm.k:
        raise ArityMismatch(f"arity {arity} does not fit {cm.k} counters")
    L = cm.k + 1
    hp = hardened_step_bp(k, phases)

    def g_of(b: GState):
        return b.glob

    def init_t(b: GState, which: int) -> Transition:
        _, s, _ = b.glob
        i, cmd, _, _ = cm.trans(which, s)
        src = counter_local(i)

        def resp(loc, src=src):
            return (loc[0],) + tuple(ONE if x == src else x for x in loc[1:])

        g2 = ((cmd, 1), s, which)
        return Transition(GState(resp(b.local), g2), resp)

    def finish_t(b: GState) -> Transition:
        (status, _), s, which = b.glob
        i, _, s0, s1 = cm.trans(which, s)
        dst = counter_local(i)

        def resp(loc, dst=dst):
            return (loc[0],) + tuple(dst if x == ONE else x for x in loc[1:])

        nxt = s1 if status == DONE1 else s0
        return Transition(GState(resp(b.local), (INIT, nxt, None)), resp)

    def slot_t(b: GState, m: int) -> Transition:
        hg, s, which = b.glob
        loc = b.local
        mine = loc[m]
        if not isinstance(mine, tuple) or len(mine) != 2 or mine[0] == "c":
            return Transition(b, {})
        t = hp.delta(GState(mine, hg))

        def f(x, t=t):
            if isinstance(x, tuple) and len(x) == 2 and x[0] != "c":
                return t.local_response(x)
            return x

        def resp(l2, f=f):
            return (l2[0],) + tuple(f(x) for x in l2[1:])

        new = list(resp(loc))
        new[m] = t.successor.local
        return Transition(GState(tuple(new), (t.successor.glob, s, which)), resp)

    def reset_t(b: GState) -> Transition:
        def resp(loc):
            return (loc[0], loc[0]) + (ZERO,) * (L - 1)

        return Transition(GState(resp(b.local), (INIT, INIT, None)), resp)

    def choices(b: GState) -> list[Transition]:
        loc = b.local
        if _has_bot(loc):
            return [reset_t(b)]
        phase, s, _ = b.glob
        if phase == INIT:
            if s in (0, 1):
                return [Transition(b, {})]
            return [init_t(b, 0), init_t(b, 1)]
        if phase[0] in RET:
            return [finish_t(b)]
        return [slot_t(b, m) for m in range(1, L + 1)]

    g0 = (INIT, INIT, None)
    base_inputs = {f"x{i}": GState((counter_local(i), counter_local(i)) + (ZERO,) * (L - 1), g0) for i in range(1, arity + 1)}
    base = Protocol(
        None,
        None,
        base_inputs,
        lambda b: b.glob[1] == 1,
        rule=lambda b: None,
        factored=True,
        name=f"cm({cm.name})",
    )
    nd = nondet_tree(base, choices)
    proto = with_coin(nd, name=f"bcp({cm.name})")
    from .machines.formats import format_cm

    nph = phases if phases is not None else default_phases(k)
    proto.source = f"[generator] cm_to_bcp k={k} phases={nph} arity={arity}\n" + "".join(
        f"| {line}\n" for line in format_cm(cm).splitlines()
    )
    return CMProtocol(proto, nd, cm, L, arity)


def cm_from_generator(params: dict, body: str) -> CMProtocol:
    """Rebuild a compiled protocol from its ``[generator]`` record."""
    from .machines.formats import parse_cm

    known = {"k", "phases", "arity"}
    extra = set(params) - known
    if extra:
        raise ValueError(f"unknown parameter(s) {sorted(extra)}")
    try:
        ints = {key: int(v) for key, v in params.items()}
    except ValueError as e:
        raise ValueError(f"parameters must be integers: {e}") from None
    return cm_to_bcp(parse_cm(body), ints.get("k", 2), ints.get("phases"), ints.get("arity"))


def inject_bot(cmp: CMProtocol, c: Configuration, rng: np.random.Generator) -> Configuration:
    """Turn one uniformly chosen agent's first non-counter slot into ``bot``
    (or its first slot if every slot holds a counter)."""
    agents = [q for q, k in c.items() for _ in range(k)]
    q = agents[int(rng.integers(len(agents)))]
    (tree, ty), coin = q.local, q.glob
    b, path = tree
    loc = list(b.local)
    m = next((i for i in range(1, len(loc)) if not (isinstance(loc[i], tuple) and loc[i][0] == "c")), 1)
    loc[m] = (BOT, CLOCK0)
    q2 = GState(((GState(tuple(loc), b.glob), path), ty), coin)
    return c - Configuration([q]) + Configuration([q2])


def cm_reference(cm: CounterMachine, x: Sequence[int]) -> int:
    """Decision of a deterministic counter machine by direct execution."""
    counters = [0] * (cm.k + 1)
    for i, v in enumerate(x, 1):
        counters[i] = v
    s = cm.init
    for _ in range(10**7):
        if s in (0, 1):
            return s
        i, cmd, s0, s1 = cm.trans(0, s)
        status, counters[i] = cm_step(cmd, counters[i])
        s = s1 if status == DONE1 else s0
    raise RuntimeError("counter machine did not halt")
