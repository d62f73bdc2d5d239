"""Interpreters for the three machine models.  Each step draws one fair coin
choosing between the two transition functions."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .models import (
    BLANK,
    RTM,
    CounterMachine,
    CounterOverflow,
    SpaceBoundViolation,
    StackMachine,
    binary_tape,
    cm_step,
    unary_tape,
)

TIMEOUT = "timeout"


class Coins:
    """Buffered fair bits."""

    def __init__(self, rng: np.random.Generator | None, block: int = 8192) -> None:
        self.rng = rng
        self.block = block
        self._buf = None
        self._i = block

    def __call__(self) -> int:
        if self.rng is None:
            return 0
        if self._i >= self.block:
            self._buf = self.rng.integers(0, 2, size=self.block, dtype=np.int8)
            self._i = 0
        b = int(self._buf[self._i])
        self._i += 1
        return b


@dataclass
class MachineResult:
    result: object  # 1, 0 or TIMEOUT
    steps: int
    max_value: int = 0  # largest counter / stack length / |head| seen
    final: object = None
    stats: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------


def rtm_run(
    m: RTM,
    x: Sequence[int],
    encoding: str = "unary",
    rng: np.random.Generator | None = None,
    max_steps: int = 10**6,
    space_bound: int | None = None,
) -> MachineResult:
    """Run ``m`` on the encoded input; ``max_value`` is the largest head
    distance from cell 0 (both heads for two-tape machines)."""
    if encoding == "unary":
        tape = unary_tape(x)
    elif encoding == "binary":
        tape = binary_tape(x)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    coin = Coins(rng)
    q = m.start
    i = 0
    j = 0
    work: dict[int, str] = {}
    far = 0
    steps = 0
    while not m.halted(q):
        if steps >= max_steps:
            return MachineResult(TIMEOUT, steps, far, (q, i, j))
        which = coin()
        if m.two_tape:
            a = tape.get(i, "0")
            w = work.get(j, BLANK)
            q, b, di, dj = m.step(which, (q, a, w))
            work[j] = b
            i += di
            j += dj
        else:
            a = tape.get(i, "0")
            q, b, d = m.step(which, (q, a))
            tape[i] = b
            i += d
        steps += 1
        far = max(far, abs(i), abs(j))
        if space_bound is not None and far > space_bound:
            raise SpaceBoundViolation(f"head reached distance {far} > {space_bound}")
    return MachineResult(1 if q == m.accept else 0, steps, far, (q, i, j))


def run_stack_machine(
    sm: StackMachine,
    stacks: Sequence[str],
    rng: np.random.Generator | None = None,
    max_steps: int = 10**7,
    bound: int | None = None,
    state=None,
) -> MachineResult:
    """Stacks are strings written top first; index 0 is the top."""
    if len(stacks) > sm.l:
        raise ValueError(f"{len(stacks)} stacks given, machine has {sm.l}")
    # internal lists keep the top at the end
    st = [list(reversed(s)) for s in stacks] + [[] for _ in range(sm.l - len(stacks))]
    longest = max((len(s) for s in st), default=0)
    coin = Coins(rng)
    q = sm.start if state is None else state
    steps = 0
    while not sm.halted(q):
        if steps >= max_steps:
            return MachineResult(TIMEOUT, steps, longest, q)
        op = sm.op(coin(), q)
        s = st[op[1] - 1]
        if op[0] == "push":
            s.append(str(op[2]))
            q = op[3]
            if len(s) > longest:
                longest = len(s)
                if bound is not None and longest > bound:
                    raise SpaceBoundViolation(f"stack {op[1]} reached length {longest} > {bound}")
        else:
            if not s:
                q = op[4]
            else:
                q = op[2] if s.pop() == "0" else op[3]
        steps += 1
    final = ["".join(reversed(s)) for s in st]
    return MachineResult(1 if q == sm.accept else 0, steps, longest, final)


def run_cm(
    cm: CounterMachine,
    x: Sequence[int],
    rng: np.random.Generator | None = None,
    max_steps: int = 10**7,
    bound: int | None = None,
) -> MachineResult:
    """Run from (init, x, 0, ..., 0) until state 0 or 1.  ``bound`` raises
    :class:`CounterOverflow` when a counter exceeds it."""
    if len(x) > cm.k:
        raise ValueError(f"{len(x)} inputs for {cm.k} counters")
    counters = [0] * (cm.k + 1)
    for i, v in enumerate(x, 1):
        counters[i] = int(v)
    peak = max(counters)
    coin = Coins(rng)
    s = cm.init
    steps = 0
    while s != 0 and s != 1:
        if steps >= max_steps:
            return MachineResult(TIMEOUT, steps, peak, (s, tuple(counters[1:])))
        i, cmd, s0, s1 = cm.trans(coin(), s)
        status, v = cm_step(cmd, counters[i])
        counters[i] = v
        if v > peak:
            peak = v
            if bound is not None and v > bound:
                raise CounterOverflow(f"counter {i} reached {v} > {bound} in state {s!r}")
        s = s1 if status == "done1" else s0
        steps += 1
    return MachineResult(s, steps, peak, (s, tuple(counters[1:])))
