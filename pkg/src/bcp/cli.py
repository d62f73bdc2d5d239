"""Command-line front end: ``bcp simulate|compile|measure|check``.

Exit codes: 0 ok, 1 counterexample, 2 file or parse error, 3 runtime error,
4 timeout, 5 search budget exceeded.
"""
from __future__ import annotations

import argparse
import datetime
import itertools
import json
import math
import os
import secrets
import sys
from collections.abc import Sequence

import numpy as np

from . import __version__
from .analysis import BudgetExceeded, DegenerateInput, fit_nlogn, measure_time, model_check, reachable, stats_to_csv
from .core import (
    MIXED,
    Configuration,
    Protocol,
    ProtocolError,
    Stop,
    init_config,
    label,
    make_rng,
    run_execution,
)
from .fileformat import ParseError, format_protocol, parse_protocol
from .machines.formats import MachineParseError, format_machine, parse_machine
from .machines.models import RTM, CounterMachine, MachineError
from .presburger import FormulaSyntaxError, compile_formula, eval_formula, format_formula, parse_formula, variables

EXIT_OK, EXIT_COUNTEREXAMPLE, EXIT_PARSE, EXIT_RUNTIME, EXIT_TIMEOUT, EXIT_BUDGET = range(6)
BUILTINS = ("majority", "clock", "stepbp")


class CliError(Exception):
    def __init__(self, msg: str, code: int) -> None:
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------------------
# loading


class Loaded:
    """A protocol plus what the commands need to run it sensibly."""

    def __init__(self, protocol: Protocol, source: str, generated=None, formula=None) -> None:
        self.protocol = protocol
        self.source = source
        self.generated = generated
        self.formula = formula

    @property
    def until(self):
        g = self.generated
        if g is None:
            return None
        return lambda c: g.halted(c) is not None


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise CliError(f"{path}: {e.strerror}", EXIT_PARSE) from None


def load_protocol(ref: str) -> Loaded:
    if ref in BUILTINS and not os.path.exists(ref):
        from .cmsim import clock_bp, step_bp
        from .presburger import majority_protocol

        return Loaded({"majority": majority_protocol, "clock": clock_bp, "stepbp": step_bp}[ref](), ref)
    try:
        pf = parse_protocol(_read(ref))
    except ParseError as e:
        raise CliError(f"{ref}: {e}", EXIT_PARSE) from None
    formula = None
    try:
        formula = parse_formula(pf.protocol.name) if pf.protocol.name.startswith("(") else None
    except FormulaSyntaxError:
        formula = None
    return Loaded(pf.protocol, ref, pf.generated, formula)


def parse_inputs(text: str) -> dict[str, int]:
    """``x=3,y=2`` -> {"x": 3, "y": 2}."""
    out: dict[str, int] = {}
    if not text.strip():
        return out
    for col, item in _items(text):
        if "=" not in item:
            raise CliError(f"--input column {col}: expected symbol=count, got {item!r}", EXIT_PARSE)
        k, v = item.split("=", 1)
        try:
            n = int(v)
        except ValueError:
            raise CliError(f"--input column {col}: count {v!r} is not an integer", EXIT_PARSE) from None
        if n < 0:
            raise CliError(f"--input column {col}: negative count", EXIT_PARSE)
        out[k.strip()] = n
    return out


def _items(text: str):
    col = 1
    for item in text.split(","):
        yield col, item.strip()
        col += len(item) + 1


def parse_int_list(text: str, what: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"{what}: expected comma-separated integers, got {text!r}", EXIT_PARSE) from None
    if not vals:
        raise CliError(f"{what}: empty list", EXIT_PARSE)
    return vals


def resolve_seed(seed: int | None) -> int:
    return seed if seed is not None else secrets.randbits(63)


def split_counts(n: int, weights: dict[str, float]) -> dict[str, int]:
    """Largest-remainder split of n agents by weight; ties go to the first
    symbol listed."""
    total = sum(weights.values())
    if total <= 0:
        raise CliError("--split weights must have a positive sum", EXIT_PARSE)
    raw = {k: n * w / total for k, w in weights.items()}
    out = {k: int(math.floor(v)) for k, v in raw.items()}
    rest = n - sum(out.values())
    order = sorted(raw, key=lambda k: (-(raw[k] - out[k]), list(raw).index(k)))
    for k in order[:rest]:
        out[k] += 1
    return out


# ---------------------------------------------------------------------------
# simulate


def _outcome_text(v) -> str:
    return "mixed" if v is MIXED else str(int(v))


def cmd_simulate(a: argparse.Namespace) -> int:
    ld = load_protocol(a.protocol)
    inputs = parse_inputs(a.input)
    seed = resolve_seed(a.seed)
    spec = ld.protocol
    until = ld.until
    stop = Stop(a.stop) if until is None else Stop.FIXED_STEPS
    try:
        start = init_config(spec, inputs)
        tr = run_execution(spec, start, make_rng(seed), stop, a.max_steps, until=until, record=a.trace is not None)
    except ProtocolError as e:
        raise CliError(str(e), EXIT_RUNTIME) from None
    if ld.generated is not None:
        h = ld.generated.halted(tr.final)
        outcome = "timeout" if h is None else str(h)
    else:
        outcome = _outcome_text(tr.outcome(spec))
    changes = tr.consensus_changes
    digest = " ".join(f"{i}:{_outcome_text(v)}" for i, v in changes[:8])
    if len(changes) > 8:
        digest += f" ... ({len(changes)} changes)"
    print(f"protocol: {spec.name or a.protocol}")
    print(f"seed: {seed}")
    print(f"n: {start.size}")
    print(f"steps: {tr.step_count}")
    print(f"effective_steps: {tr.effective_steps}")
    print(f"stopped_by: {tr.stopped_by}")
    print(f"outcome: {outcome}")
    print(f"consensus_history: {digest}")
    if a.trace:
        with open(a.trace, "w", encoding="utf-8") as fh:
            fh.write(f"# seed: {seed}\n# input: {a.input}\n")
            for step, q, _ in tr.events or []:
                fh.write(f"{step} {label(q)}\n")
    timed_out = tr.stopped_by == "max_steps" and (until is not None or stop is not Stop.FIXED_STEPS)
    return EXIT_TIMEOUT if timed_out else EXIT_OK


# ---------------------------------------------------------------------------
# compile


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_compile(a: argparse.Namespace) -> int:
    from .cmsim import cm_to_bcp
    from .machines.passes import compile_tm_to_cm, tm_to_stack, unary_to_binary_tm

    sources = [s for s in (a.formula, a.rtm, a.cm) if s is not None]
    if len(sources) != 1:
        raise CliError("give exactly one of --formula, --rtm, --cm", EXIT_PARSE)
    stage = "parse"
    try:
        if a.formula is not None:
            f = parse_formula(a.formula)
            stage = "formula->bcp"
            syms = a.symbols.split(",") if a.symbols else None
            p = compile_formula(f, syms)
            p.name = format_formula(f)
            _write(a.output, format_protocol(p))
            return EXIT_OK
        m = parse_machine(_read(a.rtm if a.rtm is not None else a.cm))
        if a.rtm is not None and not isinstance(m, RTM):
            raise CliError(f"{a.rtm}: not an [rtm] file", EXIT_PARSE)
        if a.cm is not None and not isinstance(m, CounterMachine):
            raise CliError(f"{a.cm}: not a [cm] file", EXIT_PARSE)
        emit = a.emit or ("bcp" if a.cm is not None else "cm")
        if isinstance(m, RTM):
            if emit == "binary":
                stage = "rtm->binary"
                out = unary_to_binary_tm(m) if m.two_tape else m
                _write(a.output, format_machine(out))
                return EXIT_OK
            if emit == "sm":
                stage = "rtm->sm"
                m1 = unary_to_binary_tm(m) if m.two_tape else m
                _write(a.output, format_machine(tm_to_stack(m1, a.space)))
                return EXIT_OK
            stage = "rtm->cm"
            cm = compile_tm_to_cm(m, a.space)
            if emit == "cm":
                _write(a.output, format_machine(cm))
                return EXIT_OK
        else:
            cm = m
            if emit != "bcp":
                raise CliError(f"a counter machine can only be compiled to bcp, not {emit}", EXIT_PARSE)
        stage = "cm->bcp"
        cp = cm_to_bcp(cm, a.k, a.phases)
        _write(a.output, format_protocol(cp.protocol))
        return EXIT_OK
    except (FormulaSyntaxError, MachineParseError) as e:
        raise CliError(str(e), EXIT_PARSE) from None
    except (MachineError, ProtocolError, ValueError) as e:
        raise CliError(f"{stage}: {e}", EXIT_RUNTIME) from None


# ---------------------------------------------------------------------------
# measure


def cmd_measure(a: argparse.Namespace) -> int:
    ld = load_protocol(a.protocol)
    spec = ld.protocol
    ns = parse_int_list(a.n, "--n")
    if a.trials < 1:
        raise CliError("--trials must be at least 1", EXIT_PARSE)
    seed = resolve_seed(a.seed)
    if a.split:
        weights = {k: float(v) for k, v in parse_inputs_float(a.split).items()}
    else:
        weights = {s: 1.0 for s in spec.input_alphabet}
    if not weights:
        raise CliError("protocol has no inputs; nothing to measure", EXIT_RUNTIME)
    root = np.random.SeedSequence(seed)
    stats = []
    try:
        for n, ss in zip(ns, root.spawn(len(ns))):
            inputs = split_counts(n, weights)
            stats.append(
                measure_time(
                    spec,
                    inputs,
                    a.trials,
                    a.estimator,
                    a.max_steps,
                    make_rng(ss),
                    until=ld.until,
                    workers=a.workers,
                )
            )
    except ProtocolError as e:
        raise CliError(str(e), EXIT_RUNTIME) from None
    header = {
        "protocol": spec.name or a.protocol,
        "seed": seed,
        "n": ",".join(map(str, ns)),
        "trials": a.trials,
        "estimator": a.estimator,
        "max_steps": a.max_steps,
        "split": json.dumps(weights, sort_keys=True),
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    csv_text = stats_to_csv(stats, header)
    if a.output:
        _write(a.output, csv_text)
    print(f"seed: {seed}")
    for s in stats:
        nlog = s.n * math.log(s.n) if s.n > 1 else float("nan")
        trunc = sum(s.truncated)
        print(f"n={s.n} trials={s.trials} mean={s.mean:.2f} mean/(n ln n)={s.mean / nlog:.4f} truncated={trunc}")
        if spec.name == "clock" and s.n > 1:
            bound = 2 * s.n * math.log(s.n) + 4
            print(f"  clock: mean {s.mean:.1f} vs 2n ln n + 4 = {bound:.1f} ({'within' if s.mean <= bound else 'ABOVE'})")
    try:
        fit = fit_nlogn([(s.n, s.mean) for s in stats])
        print("fit: " + fit.report())
    except DegenerateInput as e:
        print(f"fit: not computed ({e})")
    if not a.output:
        sys.stdout.write(csv_text)
    return EXIT_OK


def parse_inputs_float(text: str) -> dict[str, float]:
    out = {}
    for col, item in _items(text):
        if "=" not in item:
            raise CliError(f"--split column {col}: expected symbol=weight", EXIT_PARSE)
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise CliError(f"--split column {col}: weight {v!r} is not a number", EXIT_PARSE) from None
    return out


# ---------------------------------------------------------------------------
# check


def input_vectors(symbols: Sequence[str], max_n: int):
    """All inputs with 1 <= n <= max_n agents."""
    for counts in itertools.product(range(max_n + 1), repeat=len(symbols)):
        if 1 <= sum(counts) <= max_n:
            yield dict(zip(symbols, counts))


def _check_conformance(n: int, budget: int) -> int:
    from .cmsim import CMDS, decode_final, is_final, phi, step_bp
    from .machines.models import cm_step

    p = step_bp()
    failures = 0
    checked = 0
    for cmd in CMDS:
        for w in range(n + 1):
            status, v = cm_step(cmd, w)
            if v > n:
                continue
            try:
                finals = {decode_final(c) for c in reachable(p, phi(cmd, w, n), budget) if is_final(c)}
            except BudgetExceeded as e:
                print(f"bound_exceeded: {e}")
                return EXIT_BUDGET
            checked += 1
            ok = finals == {(status, v)}
            failures += not ok
            print(f"{cmd} w={w}: {'ok' if ok else 'FAIL'} finals={sorted(finals)} expected=({status}, {v})")
    print(f"verdict: {'correct' if not failures else 'counterexample'} ({checked} cases)")
    return EXIT_OK if not failures else EXIT_COUNTEREXAMPLE


def cmd_check(a: argparse.Namespace) -> int:
    if a.conformance:
        if a.protocol != "stepbp":
            raise CliError("--conformance applies to the step protocol (stepbp)", EXIT_PARSE)
        return _check_conformance(a.n, a.budget)
    ld = load_protocol(a.protocol)
    spec = ld.protocol
    formula = ld.formula
    if a.formula:
        try:
            formula = parse_formula(a.formula)
        except FormulaSyntaxError as e:
            raise CliError(str(e), EXIT_PARSE) from None
    if a.input is not None:
        cases = [parse_inputs(a.input)]
    else:
        if a.inputs_up_to is None:
            raise CliError("give --input or --inputs-up-to", EXIT_PARSE)
        cases = list(input_vectors(spec.input_alphabet, a.inputs_up_to))
    if a.expected is None and (a.oracle != "formula" or formula is None):
        raise CliError("no oracle: pass --expected, --formula, or a protocol compiled from a formula", EXIT_PARSE)
    explored = 0
    for inp in cases:
        expected = a.expected if a.expected is not None else eval_formula(formula, {**{v: 0 for v in variables(formula)}, **inp})
        try:
            v = model_check(spec, inp, expected, a.budget)
        except ProtocolError as e:
            raise CliError(str(e), EXIT_RUNTIME) from None
        explored += v.explored
        if v.status == "bound_exceeded":
            print(json.dumps({"verdict": "bound_exceeded", "input": inp, "reason": v.reason}))
            return EXIT_BUDGET
        if v.status == "counterexample":
            replay = {
                "verdict": "counterexample",
                "input": inp,
                "expected": int(bool(expected)),
                "reason": v.reason,
                "path": [label(q) for q in v.witness or []],
                "final": {label(q): c for q, c in v.witness_config.items()},
            }
            print(json.dumps(replay))
            if a.replay:
                _write(a.replay, json.dumps(replay, indent=1) + "\n")
            return EXIT_COUNTEREXAMPLE
    print(json.dumps({"verdict": "correct", "inputs": len(cases), "explored": explored}))
    return EXIT_OK


def replay_file(protocol: Protocol, data: dict) -> Configuration:
    """Re-run a counterexample written by ``check --replay``."""
    from .core import apply_broadcast

    by_label = {label(q): q for q in protocol.states}
    c = init_config(protocol, data["input"])
    for lbl in data["path"]:
        c = apply_broadcast(protocol, c, by_label[lbl])
    return c


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bcp", description="Broadcast consensus protocol toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one execution")
    s.add_argument("protocol", help=f"protocol file or one of {', '.join(BUILTINS)}")
    s.add_argument("--input", default="", help="counts, e.g. x=3,y=2")
    s.add_argument("--seed", type=int)
    s.add_argument("--max-steps", type=int, default=10**7)
    s.add_argument("--stop", choices=[x.value for x in Stop], default=Stop.QUIESCENCE.value)
    s.add_argument("--trace", help="write the non-silent steps to this file")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compile", help="build a protocol or machine")
    c.add_argument("--formula")
    c.add_argument("--symbols", help="extra input symbols for a formula, comma separated")
    c.add_argument("--rtm")
    c.add_argument("--cm")
    c.add_argument("--emit", choices=("binary", "sm", "cm", "bcp"))
    c.add_argument("-k", type=int, default=2, help="hardness parameter of the clocks")
    c.add_argument("--phases", type=int, help="override the number of clock phases")
    c.add_argument("--space", type=int, default=1, help="auxiliary stacks per tape stack")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_compile)

    m = sub.add_parser("measure", help="stabilisation times over a sweep of n")
    m.add_argument("protocol")
    m.add_argument("--n", required=True, help="comma-separated population sizes")
    m.add_argument("--trials", type=int, default=100)
    m.add_argument("--seed", type=int)
    m.add_argument("--estimator", choices=("quiescence", "exact_stable", "last_consensus_change"), default="quiescence")
    m.add_argument("--split", help="input weights, e.g. x=1,y=1 (default: equal)")
    m.add_argument("--max-steps", type=int, default=10**7)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_measure)

    k = sub.add_parser("check", help="exhaustive model checking at small n")
    k.add_argument("protocol")
    k.add_argument("--input")
    k.add_argument("--inputs-up-to", type=int)
    k.add_argument("--oracle", choices=("formula",), default="formula")
    k.add_argument("--formula")
    k.add_argument("--expected", type=int, choices=(0, 1))
    k.add_argument("--conformance", action="store_true", help="step protocol against the counter semantics")
    k.add_argument("--n", type=int, default=4)
    k.add_argument("--budget", type=int, default=10**6)
    k.add_argument("--replay", help="write a counterexample here")
    k.set_defaults(func=cmd_check)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"bcp: error: {e}", file=sys.stderr)
        return e.code
    except BudgetExceeded as e:
        print(f"bcp: budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (MachineError, ProtocolError) as e:
        print(f"bcp: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
