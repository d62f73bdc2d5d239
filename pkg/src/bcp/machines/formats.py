"""Text formats for the three machine models.

Each file starts with a header naming the model, followed by sections::

    [cm] power_of_two
    [counters] 1
    [init] init
    [T1]
    init : 1 iszero -> 0 d
    d : 1 divmod2 -> d last
    last : 1 iszero -> 1 0

    [rtm] parity
    [tapes] 2
    [alphabet] 0 1 _
    [start] q0
    [accept] acc
    [reject] rej
    [delta1]
    q0 0 _ -> skip _ 1 0          (two tapes: q a w -> q' w' d_read d_work)

    [sm] name
    [stacks] 2
    [start] s  [accept] a  [reject] r
    [delta1]
    s : push 1 0 -> t
    t : pop 2 -> u v w

``[T2]``/``[delta2]`` are optional and default to the first table.  Labels
are whitespace-free; the halting counter-machine states are the integers 0
and 1, and tables generated by compiler passes are written out by
enumerating the states reachable from the start state.
"""
from __future__ import annotations

import re
from collections import deque

from ..core import ProtocolError, label
from .models import CMDS, RTM, CounterMachine, MachineError, StackMachine


class MachineParseError(ProtocolError):
    def __init__(self, msg: str, line: int, col: int = 1) -> None:
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


def _sections(text: str, allowed: tuple[str, ...]) -> tuple[str, str, dict]:
    kind = name = None
    secs: dict[str, list[tuple[int, str]]] = {}
    cur = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = re.match(r"\s*\[(\w+)\]\s*(.*)$", line)
        if m:
            sec, rest = m.group(1), m.group(2).strip()
            if kind is None:
                if sec not in ("cm", "rtm", "sm"):
                    raise MachineParseError(f"expected [cm], [rtm] or [sm], got [{sec}]", ln, line.index("[") + 1)
                kind, name = sec, rest
                continue
            if sec not in allowed:
                raise MachineParseError(f"unknown section [{sec}]", ln, line.index("[") + 1)
            if sec in secs:
                raise MachineParseError(f"duplicate section [{sec}]", ln)
            secs[sec] = [(ln, rest)] if rest else []
            cur = sec
            continue
        if cur is None:
            raise MachineParseError("content before first section", ln)
        secs[cur].append((ln, line))
    if kind is None:
        raise MachineParseError("empty machine file", 1)
    return kind, name or "", secs


def _single(secs: dict, key: str, default=None) -> str:
    rows = secs.get(key)
    if not rows:
        if default is not None:
            return default
        raise MachineParseError(f"missing section [{key}]", 1)
    toks = " ".join(r for _, r in rows).split()
    if len(toks) != 1:
        raise MachineParseError(f"[{key}] takes one value", rows[0][0])
    return toks[0]


def _int(tok: str, ln: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise MachineParseError(f"{what} must be an integer, got {tok!r}", ln) from None


def detect_kind(text: str) -> str:
    return _sections(text, ("counters", "init", "T1", "T2", "tapes", "alphabet", "start", "accept", "reject", "delta1", "delta2", "stacks"))[0]


# ---------------------------------------------------------------------------
# counter machines


def _cm_state(tok: str):
    return int(tok) if tok in ("0", "1") else tok


def parse_cm(text: str) -> CounterMachine:
    kind, name, secs = _sections(text, ("counters", "init", "T1", "T2"))
    if kind != "cm":
        raise MachineParseError(f"expected a [cm] file, got [{kind}]", 1)
    k = _int(_single(secs, "counters"), secs["counters"][0][0] if secs.get("counters") else 1, "counters")
    if k < 1:
        raise MachineParseError("need at least one counter", 1)
    init = _cm_state(_single(secs, "init", "init"))

    def table(sec):
        t = {}
        for ln, row in secs.get(sec, []):
            m = re.fullmatch(r"\s*(\S+)\s*:\s*(\S+)\s+(\S+)\s*->\s*(\S+)\s+(\S+)\s*", row)
            if not m:
                raise MachineParseError("expected 's : i cmd -> s0 s1'", ln)
            s = _cm_state(m.group(1))
            i = _int(m.group(2), ln, "counter index")
            if not 1 <= i <= k:
                raise MachineParseError(f"counter {i} out of range 1..{k}", ln, m.start(2) + 1)
            if m.group(3) not in CMDS:
                raise MachineParseError(f"unknown command {m.group(3)!r}", ln, m.start(3) + 1)
            if s in t:
                raise MachineParseError(f"second row for state {m.group(1)}", ln)
            t[s] = (i, m.group(3), _cm_state(m.group(4)), _cm_state(m.group(5)))
        return t

    if "T1" not in secs:
        raise MachineParseError("missing section [T1]", 1)
    t1 = table("T1")
    t2 = table("T2") if "T2" in secs else t1
    return CounterMachine(k, t1, t2, init=init, name=name)


def _cm_rows(cm: CounterMachine, which: int, states: list) -> list[str]:
    rows = []
    for s in states:
        if s in (0, 1):
            continue
        i, cmd, s0, s1 = cm.trans(which, s)
        rows.append(f"{label(s)} : {i} {cmd} -> {label(s0)} {label(s1)}")
    return rows


def format_cm(cm: CounterMachine) -> str:
    states = cm.reachable_states()
    out = [f"[cm] {cm.name}".rstrip(), f"[counters] {cm.k}", f"[init] {label(cm.init)}", "[T1]"]
    r1 = _cm_rows(cm, 0, states)
    out += r1
    r2 = _cm_rows(cm, 1, states)
    if r2 != r1:
        out.append("[T2]")
        out += r2
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# stack machines


def parse_sm(text: str) -> StackMachine:
    kind, name, secs = _sections(text, ("stacks", "start", "accept", "reject", "delta1", "delta2"))
    if kind != "sm":
        raise MachineParseError(f"expected an [sm] file, got [{kind}]", 1)
    l = _int(_single(secs, "stacks"), 1, "stacks")

    def table(sec):
        t = {}
        for ln, row in secs.get(sec, []):
            m = re.fullmatch(r"\s*(\S+)\s*:\s*push\s+(\S+)\s+([01])\s*->\s*(\S+)\s*", row)
            if m:
                op = ("push", _int(m.group(2), ln, "stack"), int(m.group(3)), m.group(4))
            else:
                m = re.fullmatch(r"\s*(\S+)\s*:\s*pop\s+(\S+)\s*->\s*(\S+)\s+(\S+)\s+(\S+)\s*", row)
                if not m:
                    raise MachineParseError("expected 'q : push k b -> r' or 'q : pop k -> r0 r1 re'", ln)
                op = ("pop", _int(m.group(2), ln, "stack"), m.group(3), m.group(4), m.group(5))
            if not 1 <= op[1] <= l:
                raise MachineParseError(f"stack {op[1]} out of range 1..{l}", ln)
            if m.group(1) in t:
                raise MachineParseError(f"second row for state {m.group(1)}", ln)
            t[m.group(1)] = op
        return t

    if "delta1" not in secs:
        raise MachineParseError("missing section [delta1]", 1)
    d1 = table("delta1")
    d2 = table("delta2") if "delta2" in secs else d1
    return StackMachine(l, _single(secs, "start"), _single(secs, "accept"), _single(secs, "reject"), d1, d2, name=name)


def _sm_states(sm: StackMachine) -> list:
    order, seen, todo = [], {sm.start}, deque([sm.start])
    while todo:
        q = todo.popleft()
        order.append(q)
        if sm.halted(q):
            continue
        for w in (0, 1):
            op = sm.op(w, q)
            for r in (op[3:] if op[0] == "push" else op[2:]):
                if r not in seen:
                    seen.add(r)
                    todo.append(r)
    return order


def _sm_row(q, op) -> str:
    if op[0] == "push":
        return f"{label(q)} : push {op[1]} {op[2]} -> {label(op[3])}"
    return f"{label(q)} : pop {op[1]} -> {label(op[2])} {label(op[3])} {label(op[4])}"


def format_sm(sm: StackMachine) -> str:
    states = [q for q in _sm_states(sm) if not sm.halted(q)]
    out = [f"[sm] {sm.name}".rstrip(), f"[stacks] {sm.l}", f"[start] {label(sm.start)}",
           f"[accept] {label(sm.accept)}", f"[reject] {label(sm.reject)}", "[delta1]"]
    r1 = [_sm_row(q, sm.op(0, q)) for q in states]
    r2 = [_sm_row(q, sm.op(1, q)) for q in states]
    out += r1
    if r2 != r1:
        out += ["[delta2]"] + r2
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Turing machines


def parse_rtm(text: str) -> RTM:
    kind, name, secs = _sections(text, ("tapes", "alphabet", "start", "accept", "reject", "delta1", "delta2"))
    if kind != "rtm":
        raise MachineParseError(f"expected an [rtm] file, got [{kind}]", 1)
    tapes = _int(_single(secs, "tapes", "1"), 1, "tapes")
    if tapes not in (1, 2):
        raise MachineParseError("tapes must be 1 or 2", 1)
    alphabet = tuple(" ".join(r for _, r in secs.get("alphabet", [])).split()) or ("0", "1", "_")
    sym = set(alphabet)

    def table(sec):
        t = {}
        width = 3 if tapes == 2 else 2
        outw = 4 if tapes == 2 else 3
        for ln, row in secs.get(sec, []):
            if "->" not in row:
                raise MachineParseError("expected 'key -> value'", ln)
            lhs, rhs = row.split("->", 1)
            key, val = lhs.split(), rhs.split()
            if len(key) != width or len(val) != outw:
                raise MachineParseError(f"expected {width} key fields and {outw} result fields", ln)
            for a in key[1:] + [val[1]]:
                if a not in sym:
                    raise MachineParseError(f"symbol {a!r} not in alphabet", ln, row.find(a) + 1)
            moves = [_int(d, ln, "move") for d in val[2:]]
            if any(d not in (-1, 0, 1) for d in moves):
                raise MachineParseError("moves must be -1, 0 or 1", ln)
            k = tuple(key)
            if k in t:
                raise MachineParseError(f"second row for {' '.join(key)}", ln)
            t[k] = (val[0], val[1], *moves)
        return t

    if "delta1" not in secs:
        raise MachineParseError("missing section [delta1]", 1)
    d1 = table("delta1")
    d2 = table("delta2") if "delta2" in secs else d1
    start, acc, rej = _single(secs, "start"), _single(secs, "accept"), _single(secs, "reject")
    states = {start, acc, rej} | {k[0] for k in d1} | {k[0] for k in d2} | {v[0] for v in d1.values()} | {v[0] for v in d2.values()}
    return RTM(tuple(sorted(states)), start, acc, rej, d1, d2, two_tape=tapes == 2, alphabet=alphabet, name=name)


def _rtm_rows(m: RTM, which: int) -> list[tuple]:
    """(key, value) rows reachable from the start state, skipping entries that
    are missing (and therefore reject)."""
    table = m.delta1 if which == 0 or m.delta2 is None else m.delta2
    lookup = table if callable(table) else table.get
    rows = []
    seen = {m.start}
    todo = deque([m.start])
    keys2 = [(a, w) for a in m.alphabet for w in m.alphabet] if m.two_tape else [(a,) for a in m.alphabet]
    other = m.delta2 if which == 0 else m.delta1
    other_lookup = None if other is None else (other if callable(other) else other.get)
    while todo:
        q = todo.popleft()
        if m.halted(q):
            continue
        for rest in keys2:
            key = (q, *rest)
            for lk, keep in ((lookup, True), (other_lookup, False)):
                if lk is None:
                    continue
                v = lk(key)
                if v is None:
                    continue
                if keep:
                    rows.append((key, v))
                if v[0] not in seen:
                    seen.add(v[0])
                    todo.append(v[0])
    return rows


def _rtm_line(key, val) -> str:
    return " ".join(label(x) for x in key) + " -> " + " ".join(label(x) for x in val)


def format_rtm(m: RTM) -> str:
    for a in m.alphabet:
        if re.search(r"\s", label(a)):
            raise MachineError(f"symbol {label(a)!r} contains whitespace")
    out = [f"[rtm] {m.name}".rstrip(), f"[tapes] {2 if m.two_tape else 1}",
           "[alphabet] " + " ".join(label(a) for a in m.alphabet),
           f"[start] {label(m.start)}", f"[accept] {label(m.accept)}", f"[reject] {label(m.reject)}", "[delta1]"]
    r1 = [_rtm_line(k, v) for k, v in _rtm_rows(m, 0)]
    r2 = [_rtm_line(k, v) for k, v in _rtm_rows(m, 1)]
    out += r1
    if r2 != r1:
        out += ["[delta2]"] + r2
    return "\n".join(out) + "\n"


def parse_machine(text: str):
    kind = _sections(text, ("counters", "init", "T1", "T2", "tapes", "alphabet", "start", "accept", "reject", "delta1", "delta2", "stacks"))[0]
    return {"cm": parse_cm, "rtm": parse_rtm, "sm": parse_sm}[kind](text)


def format_machine(m) -> str:
    if isinstance(m, CounterMachine):
        return format_cm(m)
    if isinstance(m, StackMachine):
        return format_sm(m)
    if isinstance(m, RTM):
        return format_rtm(m)
    raise TypeError(f"not a machine: {type(m).__name__}")
