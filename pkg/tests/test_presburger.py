import itertools

import pytest

from bcp.analysis import model_check
from bcp.core import GState, Stop, apply_broadcast, init_config, make_rng, run_execution, sample_step
from bcp.presburger import (
    And,
    Atom,
    BadModulus,
    CoefficientZero,
    Const,
    FormulaSyntaxError,
    LinearCongruence,
    LinearInequality,
    Not,
    Or,
    compile_formula,
    eval_formula,
    format_formula,
    inequality_protocol,
    inequality_sum,
    majority_protocol,
    modulo_protocol,
    parse_formula,
    variables,
)


def inputs_up_to(symbols, n_max):
    for counts in itertools.product(range(n_max + 1), repeat=len(symbols)):
        if 1 <= sum(counts) <= n_max:
            yield dict(zip(symbols, counts))


# -- majority -------------------------------------------------------------------


def test_majority_states_and_acceptance():
    p = majority_protocol()
    assert len(p.states) == 6
    assert p.accepting == {GState(s, 1) for s in ("x", "y", "d")}


@pytest.mark.parametrize("x, y", [(3, 2), (2, 3), (2, 2), (1, 0), (0, 1), (5, 4)])
def test_majority_stabilises_to_strict_majority(x, y):
    p = majority_protocol()
    want = int(x > y)
    assert model_check(p, {"x": x, "y": y}, want).ok
    assert run_execution(p, {"x": x, "y": y}, make_rng(x + 7 * y)).outcome(p) == want


def test_majority_without_beta_is_caught():
    from bcp.core import Protocol, Transition

    p = majority_protocol()
    broken = Protocol(p.states, {GState("x", 0): Transition(GState("d", 1), {})}, p.inputs, p.accepting, [0, 1])
    v = model_check(broken, {"x": 1, "y": 2}, 0)
    assert v.status == "counterexample"


# -- atoms ------------------------------------------------------------------------


def test_normalize_merges_and_drops_zero():
    a = LinearInequality((("x", 2), ("y", 3), ("x", -2)), 1).normalize()
    assert a.coeffs == (("y", 3),)
    assert a.inert == ("x",)
    m = LinearCongruence((("x", 5), ("y", 2)), 7, 5).normalize()
    assert m.coeffs == (("y", 2),) and m.c == 2 and m.inert == ("x",)


def test_zero_coefficient_and_bad_modulus_rejected():
    with pytest.raises(CoefficientZero):
        inequality_protocol(LinearInequality.of({"x": 0}, 1))
    with pytest.raises(BadModulus):
        modulo_protocol(LinearCongruence.of({"x": 1}, 0, 1))
    with pytest.raises(BadModulus):
        LinearCongruence.of({"x": 1}, 0, 1).holds({"x": 1})


def test_inequality_counter_range():
    a = LinearInequality.of({"x": 2, "y": -3}, 4)
    assert a.A == 4
    p = inequality_protocol(a)
    assert set(p.globals) == set(range(-8, 9))
    # locals: spent marker plus distinct coefficients
    assert {q.local for q in p.states} == {0, 2, -3}


def test_shared_coefficient_shares_input_state():
    p = inequality_protocol(LinearInequality.of({"x": 1, "y": 1, "z": -1}, 1))
    assert p.inputs["x"] == p.inputs["y"]


@pytest.mark.parametrize(
    "atom",
    [
        LinearInequality.of({"x": 1, "y": -1}, 0),
        LinearInequality.of({"x": 2, "y": -1}, 1),
        LinearInequality.of({"x": 1, "y": 1}, 3),
    ],
)
def test_inequality_sum_is_invariant(atom):
    p = inequality_protocol(atom)
    rng = make_rng(3)
    c = init_config(p, {"x": 4, "y": 3})
    s0 = inequality_sum(c, atom)
    assert s0 == atom.value({"x": 4, "y": 3})
    for _ in range(500):
        _, c = sample_step(p, c, rng)
        assert inequality_sum(c, atom) == s0


def test_less_than_with_one_x_two_y_stabilises_to_one():
    p = inequality_protocol(LinearInequality.of({"x": 1, "y": -1}, 0))
    tr = run_execution(p, {"x": 1, "y": 2}, make_rng(0), Stop.EXACT_STABLE)
    assert tr.outcome(p) == 1


@pytest.mark.parametrize(
    "atom",
    [LinearCongruence.of({"x": 1}, 1, 2), LinearCongruence.of({"x": 1, "y": 2}, 0, 3)],
)
def test_modulo_protocol_correct_small_n(atom):
    p = modulo_protocol(atom)
    for x in inputs_up_to(["x", "y"] if len(atom.coeffs) > 1 else ["x"], 5):
        assert model_check(p, x, atom.holds(x)).ok, x


# -- formulas ----------------------------------------------------------------------


def test_parse_examples():
    f = parse_formula("(and (< (+ (* 2 x) (* -1 y)) 3) (mod (+ x y) 2 1))")
    assert isinstance(f, And) and len(f.args) == 2
    assert eval_formula(f, {"x": 1, "y": 0}) is True
    assert eval_formula(f, {"x": 1, "y": 1}) is False
    assert variables(f) == ["x", "y"]


@pytest.mark.parametrize(
    "text, x, want",
    [
        ("(<= x 2)", {"x": 2}, True),
        ("(> x y)", {"x": 2, "y": 2}, False),
        ("(>= x y)", {"x": 2, "y": 2}, True),
        ("(= x 3)", {"x": 3}, True),
        ("(not (= x 3))", {"x": 3}, False),
        ("(or false (< x 1))", {"x": 0}, True),
        ("(< (- x y) 0)", {"x": 1, "y": 2}, True),
        ("(< (* 3 (+ x 1)) 7)", {"x": 1}, True),
    ],
)
def test_formula_semantics(text, x, want):
    assert eval_formula(parse_formula(text), x) is want


@pytest.mark.parametrize(
    "text, pos",
    [("(< x", 4), ("(foo x 1)", 1), ("(mod x 0 1)", 7), ("(< x 1))", 7), ("(* x y)", 1)],
)
def test_parse_errors_have_positions(text, pos):
    with pytest.raises(FormulaSyntaxError) as e:
        parse_formula(text)
    assert e.value.pos == pos
    assert f"position {pos}" in str(e.value)


def test_format_parse_round_trip():
    for text in ["(and (< (+ (* 2 x) (* -1 y)) 3) (mod (+ x y) 2 1))", "(or (not (< x 1)) true)"]:
        f = parse_formula(text)
        assert parse_formula(format_formula(f)) == f


def test_boolean_structure_lives_in_accepting_set():
    a = Atom(LinearInequality.of({"x": 1, "y": -1}, 0))
    p, q = compile_formula(a), compile_formula(Not(a))
    assert p.states == q.states
    for s in p.states:
        assert p.is_accepting(s) != q.is_accepting(s)


def test_constants_compile():
    t = compile_formula(Const(True), ["x"])
    assert model_check(t, {"x": 2}, 1).ok
    f = compile_formula(Or(()), ["x"])
    assert model_check(f, {"x": 2}, 0).ok


@pytest.mark.parametrize(
    "text",
    ["(and (>= (* 2 x) y) (not (= x 3)))", "(or (mod x 2 0) (< (+ y (* -2 x)) 1))"],
)
def test_composed_formula_correct_small_n(text):
    f = parse_formula(text)
    p = compile_formula(f)
    for x in inputs_up_to(variables(f), 4):
        assert model_check(p, x, eval_formula(f, x)).ok, x


def test_run_agrees_with_step_relation_for_compiled_formula():
    f = parse_formula("(and (< x 3) (mod y 2 1))")
    p = compile_formula(f)
    tr = run_execution(p, {"x": 2, "y": 3}, make_rng(5), record=True)
    c = tr.initial
    for _, q, cfg in tr.events:
        c = apply_broadcast(p, c, q)
        assert c == cfg
    assert tr.outcome(p) == 1
