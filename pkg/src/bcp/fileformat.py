"""Line-oriented protocol files.

    # comment
    [protocol] majority            (optional name line)
    [states]
    x@0 x@1 y@0 y@1 d@0 d@1
    [globals]                      (optional; states are then local@global)
    0 1
    [inputs]
    x -> x@0
    y -> y@0
    [accepting]
    x@1 y@1 d@1
    [transitions]
    x@0 -> d@1 ;
    y@1 -> d@0 ; a->b, c->d

Section bodies may span several lines.  Response entries are separated by a
comma followed by whitespace; labels contain no whitespace.  With globals
declared, responses map local labels.  Two further sections, ``[transitions2]``
and ``[rendezvous]`` (``q r -> s t``), carry nondeterministic and rendezvous
extensions.

Protocols too large to enumerate are stored by the call that generates them:
a ``[generator]`` header line ``name key=value ...`` followed by body lines
prefixed with ``|`` (for the counter-machine compiler, the machine file).
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .core import GState, Protocol, ProtocolError, Transition, label

SECTIONS = ("protocol", "generator", "states", "globals", "inputs", "accepting", "transitions", "transitions2", "rendezvous")


class ParseError(ProtocolError):
    def __init__(self, msg: str, line: int, col: int = 1) -> None:
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


@dataclass
class ParsedFile:
    protocol: Protocol
    transitions2: dict | None = None
    rendezvous: dict | None = None
    generated: object = None  # the generator's result object, if any


def split_factored(lbl: str) -> GState:
    """Split ``local@global`` at the last top-level '@'."""
    depth = 0
    cut = -1
    for i, ch in enumerate(lbl):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "@" and depth == 0:
            cut = i
    if cut < 0:
        raise ValueError(f"state {lbl!r} is not of the form local@global")
    return GState(lbl[:cut], lbl[cut + 1 :])


_ITEM_SEP = re.compile(r",\s+")


def _tokens(lines: list[tuple[int, str]]):
    for lineno, text in lines:
        for m in re.finditer(r"\S+", text):
            yield lineno, m.start() + 1, m.group()


def parse_protocol(text: str) -> ParsedFile:
    sections: dict[str, list[tuple[int, str]]] = {}
    name = ""
    current = None
    body: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if current == "generator" and raw.startswith("|"):
            body.append(raw[2:] if raw.startswith("| ") else raw[1:])
            continue
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = re.match(r"\s*\[(\w+)\]\s*(.*)$", line)
        if m:
            sec = m.group(1)
            if sec not in SECTIONS:
                raise ParseError(f"unknown section [{sec}]", lineno, line.index("[") + 1)
            if sec in sections:
                raise ParseError(f"duplicate section [{sec}]", lineno)
            current = sec
            sections[sec] = []
            rest = m.group(2)
            if sec == "protocol":
                name = rest.strip()
            elif rest.strip():
                sections[sec].append((lineno, " " * (len(line) - len(rest)) + rest))
            continue
        if current is None:
            raise ParseError("content before first section header", lineno)
        sections[current].append((lineno, line))

    if "generator" in sections:
        return _generated(sections, body, name)

    for required in ("states", "transitions"):
        if required not in sections:
            raise ParseError(f"missing section [{required}]", len(text.splitlines()) or 1)

    factored = "globals" in sections
    globals_ = [tok for _, _, tok in _tokens(sections.get("globals", []))]

    def state(tok: str, ln: int, col: int):
        if factored:
            try:
                return split_factored(tok)
            except ValueError as e:
                raise ParseError(str(e), ln, col) from None
        return tok

    states = []
    for ln, col, tok in _tokens(sections["states"]):
        states.append(state(tok, ln, col))
    declared = set(states)

    def known(q, ln, col):
        if q not in declared:
            raise ParseError(f"undeclared state {label(q)}", ln, col)
        return q

    inputs = {}
    for ln, text_ in sections.get("inputs", []):
        for m in re.finditer(r"(\S+)\s*->\s*(\S+)", text_):
            inputs[m.group(1)] = known(state(m.group(2), ln, m.start(2) + 1), ln, m.start(2) + 1)
        if not re.fullmatch(r"(\s*\S+\s*->\s*\S+\s*,?)*\s*", text_):
            raise ParseError("expected 'symbol -> state'", ln)

    accepting = [known(state(tok, ln, col), ln, col) for ln, col, tok in _tokens(sections.get("accepting", []))]

    def parse_rows(sec: str) -> dict:
        rows = {}
        for ln, text_ in sections.get(sec, []):
            m = re.match(r"\s*(\S+)\s*->\s*(\S+)\s*;(.*)$", text_)
            if not m:
                raise ParseError("expected 'q -> r ; s1->t1, s2->t2'", ln, 1)
            q = known(state(m.group(1), ln, m.start(1) + 1), ln, m.start(1) + 1)
            r = known(state(m.group(2), ln, m.start(2) + 1), ln, m.start(2) + 1)
            resp = {}
            body = m.group(3).strip()
            offset = m.start(3) + 1
            if body:
                for item in _ITEM_SEP.split(body):
                    item = item.rstrip(",")
                    mm = re.fullmatch(r"(\S+?)->(\S+)", item)
                    if not mm:
                        raise ParseError(f"bad response entry {item!r}", ln, offset + text_[offset - 1 :].find(item))
                    a, b = mm.group(1), mm.group(2)
                    if not factored:
                        a = known(a, ln, offset)
                        b = known(b, ln, offset)
                    resp[a] = b
            if q in rows:
                raise ParseError(f"second transition for {label(q)}", ln, 1)
            rows[q] = Transition(r, resp)
        return rows

    transitions = parse_rows("transitions")
    try:
        p = Protocol(states, transitions, inputs, accepting, globals_ if factored else None, name=name)
    except ProtocolError as e:
        if isinstance(e, ParseError):
            raise
        raise ParseError(str(e), sections["transitions"][0][0] if sections["transitions"] else 1) from None
    out = ParsedFile(p)
    if "transitions2" in sections:
        out.transitions2 = parse_rows("transitions2")
    if "rendezvous" in sections:
        rv = {}
        for ln, text_ in sections["rendezvous"]:
            m = re.fullmatch(r"\s*(\S+)\s+(\S+)\s*->\s*(\S+)\s+(\S+)\s*", text_)
            if not m:
                raise ParseError("expected 'q r -> s t'", ln)
            qs = [known(state(m.group(i), ln, m.start(i) + 1), ln, m.start(i) + 1) for i in range(1, 5)]
            rv[(qs[0], qs[1])] = (qs[2], qs[3])
        out.rendezvous = rv
    return out


def _generated(sections: dict, body: list[str], name: str) -> ParsedFile:
    rows = sections["generator"]
    if not rows:
        raise ParseError("[generator] needs a generator name", 1)
    ln = rows[0][0]
    toks = " ".join(r for _, r in rows).split()
    params = {}
    for tok in toks[1:]:
        if "=" not in tok:
            raise ParseError(f"expected key=value, got {tok!r}", ln)
        key, val = tok.split("=", 1)
        params[key] = val
    if toks[0] != "cm_to_bcp":
        raise ParseError(f"unknown generator {toks[0]!r}", ln)
    from .cmsim import cm_from_generator
    from .machines.formats import MachineParseError

    try:
        cmp = cm_from_generator(params, "\n".join(body) + "\n")
    except (MachineParseError, ValueError) as e:
        raise ParseError(f"generator body: {e}", ln) from None
    if name and name != cmp.protocol.name:
        cmp.protocol.name = name
    return ParsedFile(cmp.protocol, generated=cmp)


def _wrap(tokens: list[str], width: int = 100) -> list[str]:
    lines, cur = [], ""
    for t in tokens:
        if cur and len(cur) + 1 + len(t) > width:
            lines.append(cur)
            cur = t
        else:
            cur = f"{cur} {t}" if cur else t
    if cur:
        lines.append(cur)
    return lines


def _row(q, t: Transition, factored: bool) -> str:
    if factored:
        items = [(a, b) for a, b in t.response_items()] if not callable(t.response) else []
        if callable(t.response):
            raise TypeError("cannot print a function response")
    else:
        items = t.response_items()
    items.sort(key=lambda ab: label(ab[0]))
    body = ", ".join(f"{label(a)}->{label(b)}" for a, b in items)
    return f"{label(q)} -> {label(t.successor)} ;" + (f" {body}" if body else "")


def format_protocol(p: Protocol, transitions2: dict | None = None, rendezvous: dict | None = None) -> str:
    """Print ``p``; generated protocols are enumerated first, with function
    responses tabulated over each global's local states."""
    source = getattr(p, "source", None)
    if source is not None:
        return (f"[protocol] {p.name}\n" if p.name else "") + source
    states = list(p.states)
    factored = p.factored
    out = []
    if p.name:
        out.append(f"[protocol] {p.name}")
    out.append("[states]")
    out += _wrap([label(q) for q in states])
    if factored:
        gl = list(p.globals) if p.globals is not None else sorted({q.glob for q in states}, key=label)
        seen = set()
        gl = [g for g in gl if not (g in seen or seen.add(g))]
        out.append("[globals]")
        out += _wrap([label(g) for g in gl])
    if p.inputs:
        out.append("[inputs]")
        out += [f"{sym} -> {label(q)}" for sym, q in p.inputs.items()]
    out.append("[accepting]")
    out += _wrap([label(q) for q in states if p.is_accepting(q)])
    out.append("[transitions]")
    out += [_row(q, t, factored) for q, t in _tabulated(p, states, p.delta)]
    if transitions2 is not None:
        out.append("[transitions2]")
        out += [_row(q, t, factored) for q, t in _tabulated(p, states, lambda q: transitions2.get(q) or Transition(q, {}))]
    if rendezvous is not None:
        out.append("[rendezvous]")
        for (a, b), (c, d) in rendezvous.items():
            out.append(f"{label(a)} {label(b)} -> {label(c)} {label(d)}")
    return "\n".join(out) + "\n"


def _tabulated(p: Protocol, states: list, delta):
    """Yield (q, transition) with mapping responses restricted to the states
    a response can actually meet."""
    factored = p.factored
    if factored:
        locals_of: dict = {}
        for s in states:
            locals_of.setdefault(s.glob, []).append(s.local)
    for q in states:
        t = delta(q)
        if t.is_silent(q):
            continue
        if callable(t.response) or factored:
            pool = locals_of.get(q.glob, []) if factored else states
            resp = {}
            for s in pool:
                r = t.local_response(s)
                if r != s:
                    resp[s] = r
            t = Transition(t.successor, resp)
            if t.is_silent(q):
                continue
        yield q, t
