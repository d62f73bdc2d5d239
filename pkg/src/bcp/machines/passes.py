"""Reduction passes: two-tape unary RTM -> single-tape binary RTM -> stack
machine (two tape halves, then a round-robin split into short stacks) ->
counter machine."""
from __future__ import annotations

from itertools import product

from .models import BLANK, RTM, CounterMachine, MachineError, StackMachine, binary_digits

# ---------------------------------------------------------------------------
# unary two-tape -> binary single tape
#
# The single tape holds one tuple (d, p, w, h, e) per cell from cell 1 on:
#   d, p  bits of two binary counters, most significant bit in cell 1 and
#         least significant bit just left of the end cell.  p is the read
#         head position of the simulated machine, d = x + 2 - p.
#   w, h  the simulated work tape (cell j+1 holds work cell j) and its head.
#   e     marks the cell right of the counters.
# Each simulated step is one sweep right (collecting the read and work
# symbols) and one sweep left (updating counters and the work track).

ERR = "err"
ACC, REJ = "ACC", "REJ"


def _cells(work_alphabet) -> list[tuple]:
    return [(d, p, w, h, e) for d, p, w, h, e in product((0, 1), (0, 1), work_alphabet, (0, 1), (0, 1))]


def unary_to_binary_tm(m: RTM) -> RTM:
    """Single-tape machine on binary input deciding what ``m`` decides.

    ``m`` must be a two-tape machine with one unary input whose read head
    stays in [0, x + 2] and whose work head stays at or right of 0; a
    violation sends the new machine to its reject state.
    """
    if not m.two_tape:
        raise MachineError("unary_to_binary_tm expects a two-tape machine")
    work_alpha = tuple(dict.fromkeys((BLANK,) + tuple(a for a in m.alphabet)))
    alphabet = ("0", "1", BLANK) + tuple(_cells(work_alpha))
    plain = {"0", "1", BLANK}

    def rd_symbol(pc, plast, dz):
        if pc == 0:
            return "0"
        if pc == 1 and plast == 1:
            return BLANK
        if dz:
            return BLANK
        return "1"

    def make(which: int):
        def delta(key):
            q, a = key
            tag = q[0]
            if tag == "I0":
                return ("I1",), a, 1
            if tag == "I1":
                if a != BLANK:
                    return REJ, a, 0
                return ("I2",), (0, 0, BLANK, 1, 0), 1
            if tag == "I2":
                if a in ("0", "1"):
                    return ("I2",), (int(a), 0, BLANK, 0, 0), 1
                if a == BLANK:
                    return ("IA", 0, 0), (0, 0, BLANK, 0, 1), -1
                return REJ, a, 0
            if tag == "IA":
                _, first, c = q
                if a in plain:
                    if c:
                        return REJ, a, 0
                    return ("R", m.start, 0, 0, 1, None, None), a, 1
                d, p, w, h, e = a
                if first == 0:
                    # least significant bit: +2 leaves it and carries one
                    return ("IA", 1, 1), a, -1
                return ("IA", 1, d & c), (d ^ c, p, w, h, e), -1
            if tag == "R":
                _, sq, pc, plast, dz, rs, ws = q
                if a in plain:
                    if rs is None or ws is None:
                        return REJ, a, 0
                    q2, b, dr, dw = m.step(which, (sq, rs, ws))
                    if q2 == m.accept:
                        return ACC, a, 0
                    if q2 == m.reject:
                        return REJ, a, 0
                    carry = 1 if dr else 0
                    return ("W", q2, b, dr, dw, carry, carry, 0, 0), a, -1
                d, p, w, h, e = a
                if h:
                    ws = w
                if rs is None:
                    if e:
                        rs = rd_symbol(pc, plast, dz)
                    else:
                        pc = min(pc + p, 2)
                        plast = p
                        dz = dz and d == 0
                return ("R", sq, pc, plast, dz, rs, ws), a, 1
            if tag == "W":
                _, sq, b, dr, dw, cp, cd, arith, pend = q
                if a in plain:
                    # back at cell 0
                    if cp or cd or pend:
                        return REJ, a, 0
                    return ("R", sq, 0, 0, 1, None, None), a, 1
                d, p, w, h, e = a
                nh = 1 if pend else h
                pend = 0
                if arith:
                    if dr == 1:
                        p, cp = p ^ cp, p & cp
                        d, cd = d ^ cd, (1 - d) & cd
                    elif dr == -1:
                        p, cp = p ^ cp, (1 - p) & cp
                        d, cd = d ^ cd, d & cd
                move = -1
                if h:
                    w = b
                    if dw == -1:
                        nh, pend = 0, 1
                    elif dw == 1:
                        nh = 0
                        move = 1
                if e:
                    arith = 1
                nxt = ("W", sq, b, dr, dw, cp, cd, arith, pend)
                if move == 1:
                    return ("Mk", nxt), (d, p, w, nh, e), 1
                return nxt, (d, p, w, nh, e), -1
            if tag == "Mk":
                if a in plain:
                    return ("Bk", q[1]), (0, 0, BLANK, 1, 0), -1
                d, p, w, h, e = a
                return ("Bk", q[1]), (d, p, w, 1, e), -1
            if tag == "Bk":
                return q[1], a, -1
            return REJ, a, 0

        return delta

    return RTM(
        states=(),
        start=("I0",),
        accept=ACC,
        reject=REJ,
        delta1=make(0),
        delta2=make(1),
        two_tape=False,
        alphabet=alphabet,
        name=f"bin({m.name})",
    )


# ---------------------------------------------------------------------------
# single tape -> stack machine


def symbol_codes(alphabet) -> dict:
    """Fixed-width codes, top bit first; symbol i gets binary(i + 1), so the
    all-zero word is unused.  For (0, 1, _) this is 01, 10, 11."""
    width = len(alphabet).bit_length()
    return {a: format(i + 1, f"0{width}b") for i, a in enumerate(alphabet)}


def tape_stacks(m: RTM, x) -> tuple[str, str]:
    """(left, right) stack contents for the binary-encoded input, head at 0."""
    codes = symbol_codes(m.alphabet)
    cells = ["0", BLANK]
    for v in x:
        cells += list(binary_digits(v)) + [BLANK]
    return "", "".join(codes[a] for a in cells)


def tm_to_two_stacks(m: RTM) -> StackMachine:
    """Stack 1 holds the tape left of the head (nearest cell on top), stack 2
    the head cell and everything right of it.  An empty stack reads as the
    default symbol '0'."""
    if m.two_tape:
        raise MachineError("tm_to_stack expects a single-tape machine")
    codes = symbol_codes(m.alphabet)
    decode = {v: k for k, v in codes.items()}
    width = len(next(iter(codes.values())))
    L, R = 1, 2

    def after_bits(tag, q, bits):
        if len(bits) == width:
            a = decode.get(bits)
            if a is None:
                return REJ
            if tag == "rd":
                return ("ap", q, a)
            return push_plan(R, codes[a], ("rd", q, ""))
        return (tag, q, bits)

    def push_plan(k, code, nxt):
        # push the bottom bit first so that code[0] ends on top
        return ("pu", k, code[::-1], nxt)

    def plan(which, q, a):
        q2, b, d = m.step(which, (q, a))
        if q2 == m.accept:
            return ACC
        if q2 == m.reject:
            return REJ
        if d == 1:
            return push_plan(L, codes[b], ("rd", q2, ""))
        if d == 0:
            return push_plan(R, codes[b], ("rd", q2, ""))
        return push_plan(R, codes[b], ("rl", q2, ""))

    def op_of(state, which):
        if state in (ACC, REJ):
            return ("pop", 1, state, state, state)
        tag = state[0]
        if tag in ("rd", "rl"):
            _, q, bits = state
            k = R if tag == "rd" else L
            empty = ("ap", q, "0") if tag == "rd" else push_plan(R, codes["0"], ("rd", q, ""))
            if bits:
                empty = REJ
            return ("pop", k, after_bits(tag, q, bits + "0"), after_bits(tag, q, bits + "1"), empty)
        if tag == "pu":
            _, k, rest, nxt = state
            follow = ("pu", k, rest[1:], nxt) if len(rest) > 1 else nxt
            return ("push", k, int(rest[0]), follow)
        if tag == "ap":
            _, q, a = state
            target = plan(which, q, a)
            if target in (ACC, REJ):
                return ("pop", 1, target, target, target)
            return op_of(target, which)
        raise MachineError(f"unknown stack machine state {state!r}")

    return StackMachine(
        l=2,
        start=("rd", m.start, ""),
        accept=ACC,
        reject=REJ,
        delta1=lambda q: op_of(q, 0),
        delta2=lambda q: op_of(q, 1),
        name=f"stack({m.name})",
        meta={"codes": codes, "width": width, "input_stack": R},
    )


def split_stacks(sm: StackMachine, c: int) -> StackMachine:
    """Replace every stack by ``c`` auxiliary stacks used round-robin.

    States become (q, rounds); rounds[k] names the auxiliary stack holding
    the top of logical stack k.  Popping advances it by one, pushing moves it
    back by one, so element m from the top lives in auxiliary stack
    rounds[k] + m - 1 (cyclically).
    """
    if c < 1:
        raise ValueError("c must be positive")

    def aux(k, i):
        return (k - 1) * c + i

    def wrap(q, r):
        return q if sm.halted(q) else (q, r)

    def make(which):
        def delta(state):
            q, r = state
            op = sm.op(which, q)
            k = op[1]
            i = r[k - 1]
            if op[0] == "push":
                i2 = c if i == 1 else i - 1
                r2 = r[: k - 1] + (i2,) + r[k:]
                return ("push", aux(k, i2), op[2], wrap(op[3], r2))
            i2 = 1 if i == c else i + 1
            r2 = r[: k - 1] + (i2,) + r[k:]
            return ("pop", aux(k, i), wrap(op[2], r2), wrap(op[3], r2), wrap(op[4], r))

        return delta

    meta = dict(sm.meta)
    meta.update(c=c, logical=sm.l, logical_start=sm.start)
    return StackMachine(
        l=sm.l * c,
        start=(sm.start, (1,) * sm.l),
        accept=sm.accept,
        reject=sm.reject,
        delta1=make(0),
        delta2=make(1),
        name=f"split{c}({sm.name})",
        meta=meta,
    )


def multistack(logical: list[str], c: int) -> list[str]:
    """Distribute each logical stack (top first) round-robin over c stacks."""
    out = []
    for s in logical:
        group = ["" for _ in range(c)]
        for m, ch in enumerate(s):
            group[m % c] += ch
        out += group
    return out


def tm_to_stack(m: RTM, c: int = 1) -> StackMachine:
    return split_stacks(tm_to_two_stacks(m), c)


def stack_input(sm: StackMachine, m: RTM, x) -> list[str]:
    """Multi-stack encoded initial stacks of ``sm`` for input ``x``."""
    left, right = tape_stacks(m, x)
    return multistack([left, right], sm.meta.get("c", 1))


# ---------------------------------------------------------------------------
# stack machine -> counter machine


def stack_counters(s: str) -> tuple[int, int]:
    """(sum w_j 2^j, sum 2^j) for a stack written top first."""
    x = sum(int(b) << j for j, b in enumerate(s))
    return x, (1 << len(s)) - 1


def stack_to_cm(sm: StackMachine) -> CounterMachine:
    """Stack a (from 1) lives in counters 2a (symbols) and 2a+1 (ones);
    counter 1 holds the input.

    If ``sm`` came from :func:`tm_to_stack`, the machine starts with a loop
    that takes counter 1 apart with divmod2/iszero and pushes the coded
    binary tape onto the input stack group, bottom first.  The round counter
    of that group ends wherever the pushes leave it; the split machine is
    entered with that round value.
    """

    def cx(a):
        return 2 * a

    def cx1(a):
        return 2 * a + 1

    def sstate(q):
        if q == sm.accept:
            return 1
        if q == sm.reject:
            return 0
        return ("s", q)

    def micro(op, idx, nxt_of=sstate):
        """Transition of micro step ``idx`` of a stack operation."""
        if op[0] == "push":
            _, a, b, q2 = op
            steps = [(cx(a), "mul2"), (cx1(a), "mul2"), (cx1(a), "inc")] + ([(cx(a), "inc")] if b else [])
            i, cmd = steps[idx]
            nxt = nxt_of(q2) if idx + 1 == len(steps) else ("m", op, idx + 1)
            return (i, cmd, nxt, nxt)
        _, a, q0, q1, qe = op
        if idx == 0:
            return (cx1(a), "iszero", nxt_of(qe), ("m", op, 1))
        if idx == 1:
            return (cx1(a), "divmod2", ("m", op, 2), ("m", op, 2))
        return (cx(a), "divmod2", nxt_of(q0), nxt_of(q1))

    meta = sm.meta
    loader = "c" in meta and "codes" in meta
    if loader:
        c = meta["c"]
        codes = meta["codes"]
        kin = meta["input_stack"]
        nlog = meta["logical"]
        start_logical = meta["logical_start"]
        # bits in push order (bottom first) for one coded symbol
        seqs = {name: codes[sym][::-1] for name, sym in (("end", BLANK), ("b0", "0"), ("b1", "1"))}
        seqs["pre"] = codes[BLANK][::-1] + codes["0"][::-1]

        def after_seq(name, i):
            if name == "end":
                return ("Ibit", i)
            if name in ("b0", "b1"):
                return ("Ichk", i)
            rounds = tuple(i if k == kin else 1 for k in range(1, nlog + 1))
            return sstate((start_logical, rounds))

    def T(which, s):
        if s == "init":
            if loader:
                return (1, "iszero", ("Ip", "end", 0, 0, 1), ("Ip", "end", 0, 0, 1))
            return (1, "iszero", sstate(sm.start), sstate(sm.start))
        tag = s[0]
        if tag == "s":
            op = sm.op(which, s[1])
            return micro(op, 0)
        if tag == "m":
            return micro(s[1], s[2])
        if tag == "Ip":
            _, name, pos, mi, i = s
            bits = seqs[name]
            i2 = c if i == 1 else i - 1
            a = (kin - 1) * c + i2
            b = int(bits[pos])
            steps = [(cx(a), "mul2"), (cx1(a), "mul2"), (cx1(a), "inc")] + ([(cx(a), "inc")] if b else [])
            j, cmd = steps[mi]
            if mi + 1 < len(steps):
                nxt = ("Ip", name, pos, mi + 1, i)
            elif pos + 1 < len(bits):
                nxt = ("Ip", name, pos + 1, 0, i2)
            else:
                nxt = after_seq(name, i2)
            return (j, cmd, nxt, nxt)
        if tag == "Ibit":
            i = s[1]
            return (1, "divmod2", ("Ip", "b0", 0, 0, i), ("Ip", "b1", 0, 0, i))
        if tag == "Ichk":
            i = s[1]
            return (1, "iszero", ("Ip", "pre", 0, 0, i), ("Ibit", i))
        raise MachineError(f"unknown counter machine state {s!r}")

    return CounterMachine(
        k=2 * sm.l + 1,
        T1=lambda s: T(0, s),
        T2=lambda s: T(1, s),
        name=f"cm({sm.name})",
        meta={"stacks": sm.l},
    )


def compile_tm_to_cm(m: RTM, c: int = 64) -> CounterMachine:
    """Chain the passes; two-tape machines go through the binary pass first."""
    m1 = unary_to_binary_tm(m) if m.two_tape else m
    return stack_to_cm(tm_to_stack(m1, c))
