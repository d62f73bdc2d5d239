"""Randomised Turing machines, stack machines and multiplicative counter
machines, with their one-step semantics."""
from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

BLANK = "_"
CMDS = ("mul2", "inc", "divmod2", "iszero")
DONE0, DONE1 = "done0", "done1"


class MachineError(ValueError):
    pass


class CounterOverflow(MachineError):
    pass


class SpaceBoundViolation(MachineError):
    pass


class ArityMismatch(MachineError):
    pass


def _lookup(table, key):
    if callable(table):
        return table(key)
    return table.get(key)


# ---------------------------------------------------------------------------
# Turing machines


@dataclass
class RTM:
    """Randomised TM with transition tables ``delta1``/``delta2``.

    Single-tape keys are (q, a) -> (q', b, d).  Two-tape (read/work) keys are
    (q, a_read, a_work) -> (q', b_work, d_read, d_work).  A missing entry
    sends the machine to ``reject`` without moving.  Tables may also be
    functions of the key.
    """

    states: tuple
    start: Any
    accept: Any
    reject: Any
    delta1: Mapping | Callable
    delta2: Mapping | Callable | None = None
    two_tape: bool = False
    alphabet: tuple = ("0", "1", BLANK)
    name: str = ""

    def halted(self, q) -> bool:
        return q == self.accept or q == self.reject

    def step(self, which: int, key: tuple) -> tuple:
        q = key[0]
        if self.halted(q):
            return (q, key[-1], 0, 0) if self.two_tape else (q, key[1], 0)
        table = self.delta1 if which == 0 or self.delta2 is None else self.delta2
        out = _lookup(table, key)
        if out is None:
            return (self.reject, key[-1], 0, 0) if self.two_tape else (self.reject, key[1], 0)
        return out


def parity_rtm() -> RTM:
    """Two-tape scanner deciding "x is odd" on unary input; deterministic."""
    d = {
        ("q0", "0", BLANK): ("skip", BLANK, 1, 0),
        ("skip", BLANK, BLANK): ("even", BLANK, 1, 0),
        ("even", "1", BLANK): ("odd", BLANK, 1, 0),
        ("even", BLANK, BLANK): ("rej", BLANK, 0, 0),
        ("odd", "1", BLANK): ("even", BLANK, 1, 0),
        ("odd", BLANK, BLANK): ("acc", BLANK, 0, 0),
    }
    return RTM(("q0", "skip", "even", "odd", "acc", "rej"), "q0", "acc", "rej", d, d, two_tape=True, name="parity")


def unary_tape(x) -> dict[int, str]:
    """Cells 1..n hold _1^x1_..._1^xk_; everything else reads '0'."""
    tape = {}
    pos = 1
    tape[pos] = BLANK
    for v in x:
        for _ in range(v):
            pos += 1
            tape[pos] = "1"
        pos += 1
        tape[pos] = BLANK
    return tape


def binary_digits(v: int) -> str:
    return format(v, "b")


def binary_tape(x) -> dict[int, str]:
    tape = {}
    pos = 1
    tape[pos] = BLANK
    for v in x:
        for ch in binary_digits(v):
            pos += 1
            tape[pos] = ch
        pos += 1
        tape[pos] = BLANK
    return tape


# ---------------------------------------------------------------------------
# stack machines


@dataclass
class StackMachine:
    """``l`` binary stacks, numbered from 1.

    Transitions are ("push", k, bit, q') or ("pop", k, q_on0, q_on1, q_empty).
    """

    l: int
    start: Any
    accept: Any
    reject: Any
    delta1: Mapping | Callable
    delta2: Mapping | Callable | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def halted(self, q) -> bool:
        return q == self.accept or q == self.reject

    def op(self, which: int, q) -> tuple:
        if self.halted(q):
            return ("pop", 1, q, q, q)
        table = self.delta1 if which == 0 or self.delta2 is None else self.delta2
        out = _lookup(table, q)
        if out is None:
            raise MachineError(f"stack machine has no transition for {q!r}")
        return out


# ---------------------------------------------------------------------------
# counter machines


def cm_step(cmd: str, x: int) -> tuple[str, int]:
    """The step-execution function of a single counter command."""
    if x < 0:
        raise ValueError("counter values are non-negative")
    if cmd == "mul2":
        return DONE0, 2 * x
    if cmd == "inc":
        return DONE0, x + 1
    if cmd == "divmod2":
        return (DONE1 if x & 1 else DONE0), x >> 1
    if cmd == "iszero":
        return (DONE1 if x > 0 else DONE0), x
    raise ValueError(f"unknown command {cmd!r}")


@dataclass
class CounterMachine:
    """k counters (numbered from 1); T maps a state to (i, cmd, s0, s1).

    States 0 and 1 halt and behave as (1, iszero, s, s).
    """

    k: int
    T1: Mapping | Callable
    T2: Mapping | Callable | None = None
    init: Any = "init"
    name: str = ""
    meta: dict = field(default_factory=dict)

    def trans(self, which: int, s) -> tuple:
        if s == 0 or s == 1:
            return (1, "iszero", s, s)
        table = self.T1 if which == 0 or self.T2 is None else self.T2
        out = _lookup(table, s)
        if out is None:
            raise MachineError(f"counter machine has no transition for {s!r}")
        return out

    @property
    def deterministic(self) -> bool:
        return self.T2 is None or self.T2 is self.T1

    def reachable_states(self, limit: int = 1_000_000) -> list:
        order = [self.init]
        seen = {self.init}
        i = 0
        while i < len(order):
            s = order[i]
            i += 1
            for which in (0, 1):
                _, _, s0, s1 = self.trans(which, s)
                for t in (s0, s1):
                    if t not in seen:
                        seen.add(t)
                        order.append(t)
                        if len(order) > limit:
                            raise MachineError("too many reachable states")
        for h in (0, 1):
            if h not in seen:
                order.append(h)
        return order


def power_of_two_cm() -> CounterMachine:
    """Accepts iff counter 1 is a power of two (1, 2, 4, ...)."""
    T = {
        "init": (1, "iszero", 0, "d"),
        "d": (1, "divmod2", "d", "last"),
        "last": (1, "iszero", 1, 0),
    }
    return CounterMachine(1, T, T, name="power_of_two")


def halting_cm(result: int = 1) -> CounterMachine:
    T = {"init": (1, "iszero", result, result)}
    return CounterMachine(1, T, T, name=f"halt{result}")
