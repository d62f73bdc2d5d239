"""Property tests over randomly generated protocols, formulas and inputs."""
from hypothesis import given, settings
from hypothesis import strategies as st

from bcp.analysis import model_check, reachable
from bcp.combinators import NondetSpec, type_counts, with_coin
from bcp.core import (
    Configuration,
    Protocol,
    Transition,
    apply_broadcast,
    init_config,
    make_rng,
    run_execution,
    sample_step,
)
from bcp.fileformat import format_protocol, parse_protocol
from bcp.machines.models import cm_step
from bcp.presburger import (
    And,
    Atom,
    LinearCongruence,
    LinearInequality,
    Not,
    Or,
    compile_formula,
    eval_formula,
    format_formula,
    inequality_sum,
    modulo_protocol,
    parse_formula,
)

from oracles import naive_step

NAMES = ["a", "b", "c", "d"]


@st.composite
def protocols(draw):
    k = draw(st.integers(2, 4))
    states = NAMES[:k]
    table = {}
    for q in states:
        if draw(st.booleans()):
            succ = draw(st.sampled_from(states))
            resp = draw(st.dictionaries(st.sampled_from(states), st.sampled_from(states), max_size=k))
            table[q] = Transition(succ, resp)
    acc = draw(st.lists(st.sampled_from(states), unique=True))
    return Protocol(states, table, {"x": states[0], "y": states[1]}, acc)


@st.composite
def configs(draw, states):
    counts = draw(st.lists(st.integers(0, 4), min_size=len(states), max_size=len(states)))
    if sum(counts) == 0:
        counts[0] = 1
    return Configuration(dict(zip(states, counts)))


def _naive(p, c, q):
    succ = {s: p.delta(s).successor for s in p.states}
    resp = {s: p.delta(q).respond(s) for s in p.states}
    return Configuration(naive_step(list(p.states), succ, resp, dict(c), q))


@given(p=protocols(), data=st.data())
def test_broadcast_matches_reference(p, data):
    c = data.draw(configs(list(p.states)))
    for q in c:
        d = apply_broadcast(p, c, q)
        assert d == _naive(p, c, q)
        assert d.size == c.size


@given(p=protocols(), data=st.data())
def test_silent_transition_is_identity(p, data):
    c = data.draw(configs(list(p.states)))
    for q in c:
        if p.delta(q).is_silent(q):
            assert apply_broadcast(p, c, q) == c


@given(p=protocols(), x=st.integers(1, 5), y=st.integers(0, 5), seed=st.integers(0, 2**32))
def test_recorded_runs_replay_under_reference(p, x, y, seed):
    tr = run_execution(p, {"x": x, "y": y}, make_rng(seed), max_steps=300, record=True)
    c = tr.initial
    for _, q, cfg in tr.events:
        c = _naive(p, c, q)
        assert c == cfg and c.size == x + y
    assert c == tr.final


@given(p=protocols())
def test_random_protocols_round_trip(p):
    text = format_protocol(p)
    assert format_protocol(parse_protocol(text).protocol) == text


# -- formulas -------------------------------------------------------------------------

VARS = ["x", "y"]
coeff = st.integers(-3, 3).filter(bool)


def ineqs():
    return st.builds(
        lambda a, b, c: LinearInequality.of({"x": a, "y": b}, c), coeff, coeff, st.integers(-3, 3)
    )


def congs():
    return st.builds(
        lambda a, b, l, c: LinearCongruence.of({"x": a, "y": b}, c % l, l),
        coeff, coeff, st.integers(2, 4), st.integers(0, 3),
    ).filter(lambda m: all(a % m.l for _, a in m.coeffs))


atoms = st.one_of(ineqs(), congs()).map(Atom)
formulas = st.recursive(
    atoms,
    lambda sub: st.one_of(
        sub.map(Not),
        st.lists(sub, min_size=2, max_size=2).map(lambda a: And(tuple(a))),
        st.lists(sub, min_size=2, max_size=2).map(lambda a: Or(tuple(a))),
    ),
    max_leaves=3,
)


@given(f=formulas)
def test_formula_text_round_trip(f):
    g = parse_formula(format_formula(f))
    for x in range(3):
        for y in range(3):
            assert eval_formula(g, {"x": x, "y": y}) == eval_formula(f, {"x": x, "y": y})


@settings(max_examples=25)
@given(f=formulas, x=st.integers(0, 2), y=st.integers(0, 2))
def test_compiled_formula_is_correct(f, x, y):
    if x + y == 0:
        x = 1
    p = compile_formula(f, VARS)
    assert model_check(p, {"x": x, "y": y}, eval_formula(f, {"x": x, "y": y})).ok


@settings(max_examples=25)
@given(f=formulas, x=st.integers(0, 3), y=st.integers(0, 3), seed=st.integers(0, 2**32))
def test_compiled_states_share_one_global(f, x, y, seed):
    if x + y == 0:
        y = 1
    p = compile_formula(f, VARS)
    c = init_config(p, {"x": x, "y": y})
    rng = make_rng(seed)
    for _ in range(50):
        _, c = sample_step(p, c, rng)
        assert len({q.glob for q in c}) == 1


@given(m=congs(), x=st.integers(0, 4), y=st.integers(0, 4), seed=st.integers(0, 2**32))
def test_modulo_sum_invariant(m, x, y, seed):
    if x + y == 0:
        x = 1
    p = modulo_protocol(m)
    c = init_config(p, {"x": x, "y": y})
    s0 = inequality_sum(c, m) % m.l
    assert s0 == m.value({"x": x, "y": y}) % m.l
    rng = make_rng(seed)
    for _ in range(100):
        _, c = sample_step(p, c, rng)
        assert inequality_sum(c, m) % m.l == s0


@given(a=ineqs(), x=st.integers(0, 4), y=st.integers(0, 4), seed=st.integers(0, 2**32))
def test_inequality_counter_stays_in_range(a, x, y, seed):
    from bcp.presburger import inequality_protocol

    if x + y == 0:
        x = 1
    p = inequality_protocol(a)
    c = init_config(p, {"x": x, "y": y})
    rng = make_rng(seed)
    for _ in range(100):
        _, c = sample_step(p, c, rng)
        g = next(iter(c)).glob
        assert -2 * a.A <= g <= 2 * a.A


# -- coin ------------------------------------------------------------------------------


def _flip():
    base = Protocol(["a", "b"], {}, {"x": "a"}, ["b"])
    return NondetSpec(base, {"a": Transition("b", {}), "b": Transition("a", {})})


@given(n=st.integers(1, 12), seed=st.integers(0, 2**32))
def test_coin_types_balance_on_sampled_runs(n, seed):
    p = with_coin(_flip())
    c = init_config(p, {"x": n})
    rng = make_rng(seed)
    for _ in range(200):
        _, c = sample_step(p, c, rng)
        t = type_counts(c)
        assert t["0"] == t["1"]
        assert sum(t.values()) == n


@settings(max_examples=5)
@given(n=st.integers(1, 3))
def test_coin_types_balance_exhaustively(n):
    p = with_coin(_flip())
    for c in reachable(p, init_config(p, {"x": n})):
        t = type_counts(c)
        assert t["0"] == t["1"]


# -- counter commands ----------------------------------------------------------------


@given(x=st.integers(0, 10**6))
def test_counter_command_inverses(x):
    assert cm_step("divmod2", cm_step("mul2", x)[1]) == ("done0", x)
    assert cm_step("divmod2", cm_step("inc", 2 * x)[1]) == ("done1", x)
    status, v = cm_step("iszero", x)
    assert v == x and (status == "done0") == (x == 0)
