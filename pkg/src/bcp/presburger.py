"""Broadcast protocols for Presburger predicates: majority, linear
inequalities, linear congruences and their Boolean combinations.

Formula text uses s-expressions::

    formula := (< term term) | (<= term term) | (> term term) | (>= term term)
             | (= term term) | (mod term MODULUS RESIDUE)
             | (and formula+) | (or formula+) | (not formula) | true | false
    term    := INT | VAR | (+ term*) | (- term) | (- term term+) | (* INT term) | (* term INT)
"""
from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass, field

from .combinators import complement, parallel_compose
from .core import GState, Protocol, ProtocolError, Transition


class CoefficientZero(ProtocolError):
    pass


class BadModulus(ProtocolError):
    pass


class FormulaSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int, text: str = "") -> None:
        super().__init__(f"position {pos}: {msg}")
        self.pos = pos
        self.text = text


ZERO = 0  # local state of an agent whose contribution is spent


def majority_protocol() -> Protocol:
    """x > y.  Locals x, y, d (the spent marker); global = current opinion."""
    states = [GState(s, g) for g in (0, 1) for s in ("x", "y", "d")]
    transitions = {
        GState("x", 0): Transition(GState("d", 1), {}),
        GState("y", 1): Transition(GState("d", 0), {}),
    }
    return Protocol(
        states,
        transitions,
        {"x": GState("x", 0), "y": GState("y", 0)},
        [q for q in states if q.glob == 1],
        [0, 1],
        name="majority",
    )


# ---------------------------------------------------------------------------
# atoms


@dataclass(frozen=True)
class LinearInequality:
    """sum(coeffs[v] * v) < c.  ``inert`` lists variables with coefficient 0."""

    coeffs: tuple[tuple[str, int], ...]
    c: int
    inert: tuple[str, ...] = ()

    @classmethod
    def of(cls, coeffs: Mapping[str, int], c: int) -> "LinearInequality":
        return cls(tuple(coeffs.items()), int(c))

    @property
    def A(self) -> int:
        return max([abs(a) for _, a in self.coeffs] + [abs(self.c), 1])

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.coeffs) + self.inert

    def normalize(self) -> "LinearInequality":
        merged: dict[str, int] = {}
        for v, a in self.coeffs:
            merged[v] = merged.get(v, 0) + a
        live = tuple((v, a) for v, a in merged.items() if a != 0)
        dead = tuple(dict.fromkeys([v for v, a in merged.items() if a == 0] + list(self.inert)))
        return LinearInequality(live, self.c, dead)

    def value(self, x: Mapping[str, int]) -> int:
        return sum(a * x.get(v, 0) for v, a in self.coeffs)

    def holds(self, x: Mapping[str, int]) -> bool:
        return self.value(x) < self.c


@dataclass(frozen=True)
class LinearCongruence:
    """sum(coeffs[v] * v) = c (mod l)."""

    coeffs: tuple[tuple[str, int], ...]
    c: int
    l: int
    inert: tuple[str, ...] = ()

    @classmethod
    def of(cls, coeffs: Mapping[str, int], c: int, l: int) -> "LinearCongruence":
        return cls(tuple(coeffs.items()), int(c), int(l))

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.coeffs) + self.inert

    def normalize(self) -> "LinearCongruence":
        if self.l < 2:
            raise BadModulus(f"modulus must be at least 2, got {self.l}")
        merged: dict[str, int] = {}
        for v, a in self.coeffs:
            merged[v] = (merged.get(v, 0) + a) % self.l
        live = tuple((v, a) for v, a in merged.items() if a != 0)
        dead = tuple(dict.fromkeys([v for v, a in merged.items() if a == 0] + list(self.inert)))
        return LinearCongruence(live, self.c % self.l, self.l, dead)

    def value(self, x: Mapping[str, int]) -> int:
        return sum(a * x.get(v, 0) for v, a in self.coeffs)

    def holds(self, x: Mapping[str, int]) -> bool:
        if self.l < 2:
            raise BadModulus(f"modulus must be at least 2, got {self.l}")
        return (self.value(x) - self.c) % self.l == 0


def inequality_protocol(ineq: LinearInequality) -> Protocol:
    """Each agent adds its coefficient to a global counter in [-2A, 2A] once.

    Locals are the distinct coefficients plus 0 for spent agents, so
    variables sharing a coefficient share an input state.
    """
    for v, a in ineq.coeffs:
        if a == 0:
            raise CoefficientZero(f"coefficient of {v} is zero; normalize first")
    if not ineq.coeffs and not ineq.inert:
        raise ProtocolError("inequality has no variables")
    A = ineq.A
    values = range(-2 * A, 2 * A + 1)
    locals_ = [ZERO] + sorted({a for _, a in ineq.coeffs})
    states = [GState(s, v) for v in values for s in locals_]
    transitions = {}
    for a in locals_[1:]:
        for v in values:
            if -2 * A <= v + a <= 2 * A:
                transitions[GState(a, v)] = Transition(GState(ZERO, v + a), {})
    inputs = {v: GState(a, 0) for v, a in ineq.coeffs}
    inputs.update({v: GState(ZERO, 0) for v in ineq.inert})
    return Protocol(
        states,
        transitions,
        inputs,
        [q for q in states if q.glob < ineq.c],
        list(values),
        name=f"ineq({_atom_text(ineq)})",
    )


def modulo_protocol(cong: LinearCongruence) -> Protocol:
    """As :func:`inequality_protocol` with the counter in Z_l."""
    if cong.l < 2:
        raise BadModulus(f"modulus must be at least 2, got {cong.l}")
    for v, a in cong.coeffs:
        if a % cong.l == 0:
            raise CoefficientZero(f"coefficient of {v} is zero mod {cong.l}; normalize first")
    if not cong.coeffs and not cong.inert:
        raise ProtocolError("congruence has no variables")
    l = cong.l
    locals_ = [ZERO] + sorted({a % l for _, a in cong.coeffs})
    states = [GState(s, v) for v in range(l) for s in locals_]
    transitions = {
        GState(a, v): Transition(GState(ZERO, (v + a) % l), {}) for a in locals_[1:] for v in range(l)
    }
    inputs = {v: GState(a % l, 0) for v, a in cong.coeffs}
    inputs.update({v: GState(ZERO, 0) for v in cong.inert})
    return Protocol(
        states,
        transitions,
        inputs,
        [q for q in states if q.glob == cong.c % l],
        list(range(l)),
        name=f"mod({_atom_text(cong)})",
    )


def inequality_sum(config, ineq: LinearInequality | LinearCongruence) -> int:
    """Counter plus outstanding contributions; constant along executions."""
    total = 0
    glob = None
    for q, k in config.items():
        total += q.local * k
        glob = q.glob
    return total + glob


# ---------------------------------------------------------------------------
# formulas


class Formula:
    def __and__(self, other: "Formula") -> "Formula":
        return And((self, other))

    def __or__(self, other: "Formula") -> "Formula":
        return Or((self, other))

    def __invert__(self) -> "Formula":
        return Not(self)


@dataclass(frozen=True)
class Atom(Formula):
    atom: LinearInequality | LinearCongruence


@dataclass(frozen=True)
class Const(Formula):
    value: bool


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    args: tuple[Formula, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class Or(Formula):
    args: tuple[Formula, ...] = field(default_factory=tuple)


def variables(f: Formula) -> list[str]:
    out: dict[str, None] = {}

    def walk(g):
        if isinstance(g, Atom):
            out.update(dict.fromkeys(g.atom.variables))
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (And, Or)):
            for h in g.args:
                walk(h)

    walk(f)
    return list(out)


def eval_formula(f: Formula, x: Mapping[str, int]) -> bool:
    if isinstance(f, Atom):
        return f.atom.holds(x)
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Not):
        return not eval_formula(f.arg, x)
    if isinstance(f, And):
        return all(eval_formula(g, x) for g in f.args)
    if isinstance(f, Or):
        return any(eval_formula(g, x) for g in f.args)
    raise TypeError(f"not a formula: {f!r}")


def atom_protocol(atom: LinearInequality | LinearCongruence) -> Protocol:
    atom = atom.normalize()
    if isinstance(atom, LinearInequality):
        return inequality_protocol(atom)
    return modulo_protocol(atom)


def compile_formula(f: Formula, symbols: list[str] | None = None) -> Protocol:
    """Product of the atom protocols; Boolean structure lives in the
    accepting set only.  ``symbols`` adds extra input variables."""
    p = _compile(f)
    if symbols:
        from .combinators import with_symbols

        p = with_symbols(p, symbols)
    return p


def _compile(f: Formula) -> Protocol:
    if isinstance(f, Atom):
        return atom_protocol(f.atom)
    if isinstance(f, Const):
        return Protocol(
            [GState(ZERO, 0)],
            {},
            {},
            [GState(ZERO, 0)] if f.value else [],
            [0],
            name=str(f.value).lower(),
        )
    if isinstance(f, Not):
        return complement(_compile(f.arg))
    if isinstance(f, (And, Or)):
        if not f.args:
            return _compile(Const(isinstance(f, And)))
        op = (lambda a, b: a and b) if isinstance(f, And) else (lambda a, b: a or b)
        ps = [_compile(g) for g in f.args]
        acc = ps[0]
        for p in ps[1:]:
            acc = parallel_compose(acc, p, op)
        return acc
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# text syntax

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


def _lex(text: str) -> list[tuple[str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        tok = m.group(1) or m.group(2) or m.group(3)
        if tok is None:
            break
        toks.append((tok, m.start(m.lastindex)))
        pos = m.end()
    return toks


def _read(toks, i: int, text: str):
    """Tokens to nested lists of (token, pos); returns (node, next index)."""
    if i >= len(toks):
        raise FormulaSyntaxError("unexpected end of input", len(text), text)
    tok, pos = toks[i]
    if tok == ")":
        raise FormulaSyntaxError("unexpected ')'", pos, text)
    if tok != "(":
        return (tok, pos), i + 1
    items = []
    i += 1
    while True:
        if i >= len(toks):
            raise FormulaSyntaxError("missing ')'", len(text), text)
        if toks[i][0] == ")":
            return (items, pos), i + 1
        node, i = _read(toks, i, text)
        items.append(node)


_INT = re.compile(r"[+-]?\d+")
_VAR = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _term(node, text) -> tuple[dict[str, int], int]:
    """Linear term as (coefficients, constant)."""
    val, pos = node
    if isinstance(val, str):
        if _INT.fullmatch(val):
            return {}, int(val)
        if _VAR.fullmatch(val) and val not in ("and", "or", "not", "mod", "true", "false"):
            return {val: 1}, 0
        raise FormulaSyntaxError(f"bad term {val!r}", pos, text)
    if not val:
        raise FormulaSyntaxError("empty term", pos, text)
    head, hpos = val[0]
    args = val[1:]
    if head == "+":
        return _sum([_term(a, text) for a in args])
    if head == "-":
        if not args:
            raise FormulaSyntaxError("'-' needs an argument", hpos, text)
        parts = [_term(a, text) for a in args]
        if len(parts) == 1:
            return _scale(parts[0], -1)
        return _sum([parts[0]] + [_scale(p, -1) for p in parts[1:]])
    if head == "*":
        if len(args) != 2:
            raise FormulaSyntaxError("'*' takes two arguments", hpos, text)
        a, b = (_term(x, text) for x in args)
        if not a[0]:
            return _scale(b, a[1])
        if not b[0]:
            return _scale(a, b[1])
        raise FormulaSyntaxError("non-linear product", hpos, text)
    raise FormulaSyntaxError(f"unknown term operator {head!r}", hpos, text)


def _sum(parts):
    coeffs: dict[str, int] = {}
    const = 0
    for c, k in parts:
        for v, a in c.items():
            coeffs[v] = coeffs.get(v, 0) + a
        const += k
    return coeffs, const


def _scale(part, s):
    c, k = part
    return {v: a * s for v, a in c.items()}, k * s


def _int(node, text, what: str) -> int:
    val, pos = node
    if not isinstance(val, str) or not _INT.fullmatch(val):
        raise FormulaSyntaxError(f"{what} must be an integer literal", pos, text)
    return int(val)


def _lt(lhs, rhs, slack=0) -> LinearInequality:
    """lhs < rhs + slack as sum < c."""
    coeffs, k = _sum([lhs, _scale(rhs, -1)])
    return LinearInequality(tuple(coeffs.items()), -k + slack)


def _formula(node, text) -> Formula:
    val, pos = node
    if isinstance(val, str):
        if val == "true":
            return Const(True)
        if val == "false":
            return Const(False)
        raise FormulaSyntaxError(f"expected a formula, got {val!r}", pos, text)
    if not val:
        raise FormulaSyntaxError("empty formula", pos, text)
    head, hpos = val[0]
    args = val[1:]
    if head in ("and", "or"):
        if not args:
            raise FormulaSyntaxError(f"'{head}' needs arguments", hpos, text)
        sub = tuple(_formula(a, text) for a in args)
        return And(sub) if head == "and" else Or(sub)
    if head == "not":
        if len(args) != 1:
            raise FormulaSyntaxError("'not' takes one argument", hpos, text)
        return Not(_formula(args[0], text))
    if head in ("<", "<=", ">", ">=", "="):
        if len(args) != 2:
            raise FormulaSyntaxError(f"'{head}' takes two terms", hpos, text)
        a, b = (_term(x, text) for x in args)
        if head == "<":
            return Atom(_lt(a, b))
        if head == "<=":
            return Atom(_lt(a, b, 1))
        if head == ">":
            return Atom(_lt(b, a))
        if head == ">=":
            return Atom(_lt(b, a, 1))
        return And((Atom(_lt(a, b, 1)), Atom(_lt(b, a, 1))))
    if head == "mod":
        if len(args) != 3:
            raise FormulaSyntaxError("'mod' takes a term, a modulus and a residue", hpos, text)
        coeffs, k = _term(args[0], text)
        l = _int(args[1], text, "modulus")
        if l < 2:
            raise FormulaSyntaxError("modulus must be at least 2", args[1][1], text)
        c = _int(args[2], text, "residue")
        return Atom(LinearCongruence(tuple(coeffs.items()), (c - k) % l, l))
    if isinstance(head, str):
        raise FormulaSyntaxError(f"unknown operator {head!r}", hpos, text)
    raise FormulaSyntaxError("expected an operator", hpos, text)


def parse_formula(text: str) -> Formula:
    toks = _lex(text)
    rest = text.strip()
    if not toks:
        raise FormulaSyntaxError("empty input", 0, text)
    # anything the lexer could not consume is a syntax error
    if sum(len(t) for t, _ in toks) != len(re.sub(r"\s+", "", rest)):
        raise FormulaSyntaxError("unreadable input", 0, text)
    node, i = _read(toks, 0, text)
    if i != len(toks):
        raise FormulaSyntaxError("trailing input", toks[i][1], text)
    return _formula(node, text)


def _lin_text(coeffs) -> str:
    terms = []
    for v, a in coeffs:
        terms.append(v if a == 1 else f"(* {a} {v})")
    if not terms:
        return "0"
    return terms[0] if len(terms) == 1 else "(+ " + " ".join(terms) + ")"


def _atom_text(atom) -> str:
    coeffs = list(atom.coeffs) + [(v, 0) for v in atom.inert]
    if isinstance(atom, LinearInequality):
        return f"(< {_lin_text(coeffs)} {atom.c})"
    return f"(mod {_lin_text(coeffs)} {atom.l} {atom.c})"


def format_formula(f: Formula) -> str:
    if isinstance(f, Atom):
        return _atom_text(f.atom)
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Not):
        return f"(not {format_formula(f.arg)})"
    if isinstance(f, (And, Or)):
        op = "and" if isinstance(f, And) else "or"
        return f"({op} " + " ".join(format_formula(g) for g in f.args) + ")"
    raise TypeError(f"not a formula: {f!r}")
