import math

import numpy as np
import pytest
from scipy import stats

from bcp.core import (
    MIXED,
    Configuration,
    EmptyPopulation,
    Engine,
    GState,
    Protocol,
    ProtocolError,
    StateNotPresent,
    Stop,
    Transition,
    UnknownSymbol,
    apply_broadcast,
    enabled_nonsilent,
    init_config,
    is_consensus,
    is_fixed_point,
    make_rng,
    run_execution,
    sample_step,
    spawn_rngs,
)
from bcp.presburger import majority_protocol

from oracles import naive_step


def toy():
    """a broadcasts: a->b, everyone in a moves to c."""
    return Protocol(["a", "b", "c"], {"a": Transition("b", {"a": "c"})}, {"x": "a"}, ["b"])


# -- configurations -----------------------------------------------------------


def test_configuration_size_and_zero_entries():
    c = Configuration({"a": 2, "b": 0, "c": 1})
    assert c.size == 3
    assert len(c) == 2
    assert c == Configuration(["a", "c", "a"])
    assert c["b"] == 0
    assert hash(c) == hash(Configuration({"c": 1, "a": 2}))


def test_configuration_rejects_negative_counts():
    with pytest.raises(ValueError):
        Configuration({"a": -1})
    with pytest.raises(ValueError):
        Configuration({"a": 1}) - Configuration({"a": 2})


# -- step relation ------------------------------------------------------------


def test_broadcast_moves_others_and_broadcaster():
    p = toy()
    c = Configuration({"a": 3})
    assert apply_broadcast(p, c, "a") == Configuration({"b": 1, "c": 2})


def test_broadcast_matches_definition_on_majority():
    p = majority_protocol()
    c = Configuration({GState("x", 0): 2, GState("y", 0): 1, GState("d", 0): 1})
    got = apply_broadcast(p, c, GState("x", 0))
    # global flips for everyone, locals unchanged, broadcaster spent
    assert got == Configuration({GState("x", 1): 1, GState("y", 1): 1, GState("d", 1): 2})
    states = list(p.states)
    succ = {q: p.delta(q).successor for q in states}
    resp = {s: p.delta(GState("x", 0)).respond(s) for s in states}
    assert got == naive_step(states, succ, resp, dict(c), GState("x", 0))


def test_broadcast_from_absent_state_raises():
    with pytest.raises(StateNotPresent):
        apply_broadcast(toy(), Configuration({"b": 1}), "a")


def test_silent_flag():
    assert Transition("a", {}).is_silent("a")
    assert Transition("a", {"b": "b"}).is_silent("a")
    assert not Transition("a", {"b": "c"}).is_silent("a")
    assert not Transition("b", {}).is_silent("a")
    p = toy()
    assert p.delta("c").is_silent("c")  # omitted -> silent default


def test_validation_errors():
    with pytest.raises(ProtocolError):
        Protocol(["a"], {"a": Transition("zz", {})})
    with pytest.raises(ProtocolError):
        Protocol(["a"], {}, {"x": "q"})
    with pytest.raises(ProtocolError):
        Protocol(["a"], {}, {}, ["q"])
    with pytest.raises(ProtocolError):
        Protocol(["a", "a"], {})
    with pytest.raises(ProtocolError):
        Protocol(
            [GState("a", 0), GState("a", 1)],
            {},
            {"x": GState("a", 0), "y": GState("a", 1)},
            globals_=[0, 1],
        )


def test_init_config_errors():
    p = majority_protocol()
    with pytest.raises(UnknownSymbol):
        init_config(p, {"z": 1})
    with pytest.raises(EmptyPopulation):
        init_config(p, {"x": 0, "y": 0})
    assert init_config(p, {"x": 2, "y": 1}).size == 3


def test_consensus_classification():
    p = majority_protocol()
    assert is_consensus(p, Configuration({GState("d", 1): 2})) == 1
    assert is_consensus(p, Configuration({GState("d", 0): 2})) == 0
    assert is_consensus(p, Configuration({GState("d", 0): 1, GState("x", 1): 1})) is MIXED


def test_fixed_point_and_enabled():
    p = majority_protocol()
    c = Configuration({GState("d", 1): 1, GState("x", 1): 1})
    assert is_fixed_point(p, c)
    assert enabled_nonsilent(p, c) == set()
    assert enabled_nonsilent(p, init_config(p, {"x": 1})) == {GState("x", 0)}


# -- scheduler ----------------------------------------------------------------


def test_scheduler_picks_proportionally():
    p = toy()
    c = Configuration({"a": 1, "b": 3, "c": 6})
    rng = make_rng(5)
    picks = {"a": 0, "b": 0, "c": 0}
    for _ in range(100_000):
        q, _ = sample_step(p, c, rng)
        picks[q] += 1
    obs = [picks["a"], picks["b"], picks["c"]]
    exp = [10_000, 30_000, 60_000]
    assert stats.chisquare(obs, exp).pvalue > 0.001


def test_sample_step_conserves_agents():
    p = majority_protocol()
    c = init_config(p, {"x": 4, "y": 3})
    rng = make_rng(0)
    for _ in range(200):
        _, c = sample_step(p, c, rng)
        assert c.size == 7


def test_seeds_reproduce_and_streams_differ():
    a, b = spawn_rngs(11, 2)
    a2, _ = spawn_rngs(11, 2)
    xa, xb, xa2 = a.random(5), b.random(5), a2.random(5)
    assert np.array_equal(xa, xa2)
    assert not np.array_equal(xa, xb)


# -- executions ---------------------------------------------------------------


def test_single_y_agent_is_already_stable():
    p = majority_protocol()
    tr = run_execution(p, {"x": 0, "y": 1}, make_rng(1))
    assert tr.step_count == 0 and tr.effective_steps == 0
    assert tr.outcome(p) == 0
    assert tr.stopped_by == "quiescent"


def test_same_seed_same_trace():
    p = majority_protocol()
    t1 = run_execution(p, {"x": 30, "y": 20}, make_rng(9), record=True)
    t2 = run_execution(p, {"x": 30, "y": 20}, make_rng(9), record=True)
    assert t1.step_count == t2.step_count
    assert [(i, q) for i, q, _ in t1.events] == [(i, q) for i, q, _ in t2.events]


def test_max_steps_truncates():
    p = majority_protocol()
    tr = run_execution(p, {"x": 300, "y": 200}, make_rng(2), max_steps=10)
    assert tr.truncated and tr.step_count == 10
    tr = run_execution(p, {"x": 3, "y": 2}, make_rng(2), Stop.FIXED_STEPS, max_steps=50)
    assert not tr.truncated and tr.step_count == 50


def test_until_predicate_stops_run():
    p = majority_protocol()
    tr = run_execution(p, {"x": 5, "y": 5}, make_rng(3), until=lambda c: c[GState("d", 1)] + c[GState("d", 0)] >= 3)
    assert tr.stopped_by == "until"
    assert sum(k for q, k in tr.final.items() if q.local == "d") == 3


def test_exact_stable_stop_is_stable():
    from bcp.analysis import decide_stable

    p = majority_protocol()
    tr = run_execution(p, {"x": 3, "y": 2}, make_rng(4), Stop.EXACT_STABLE)
    assert tr.stopped_by == "stable"
    assert decide_stable(p, tr.final)


def test_events_are_consistent_with_step_relation():
    p = majority_protocol()
    tr = run_execution(p, {"x": 6, "y": 4}, make_rng(8), record=True)
    c = tr.initial
    for _, q, cfg in tr.events:
        c = apply_broadcast(p, c, q)
        assert c == cfg
    assert c == tr.final


def _naive_quiescence_time(p, inputs, rng):
    c = init_config(p, inputs)
    steps = 0
    while not is_fixed_point(p, c):
        _, c = sample_step(p, c, rng)
        steps += 1
    return steps


def test_leaping_simulator_matches_plain_stepping_in_law():
    """Mean quiescence time of the geometric-skip simulator agrees with naive
    one-agent-per-step sampling."""
    p = majority_protocol()
    inputs = {"x": 3, "y": 2}
    rng = make_rng(21)
    naive = [_naive_quiescence_time(p, inputs, rng) for _ in range(3000)]
    eng = Engine(p)
    fast = [run_execution(p, inputs, rng, engine=eng).step_count for _ in range(3000)]
    se = math.sqrt(np.var(naive) / len(naive) + np.var(fast) / len(fast))
    assert abs(np.mean(naive) - np.mean(fast)) < 4 * se


def test_engine_active_set_matches_definition():
    p = majority_protocol()
    eng = Engine(p)
    c = Configuration({GState("x", 0): 1, GState("y", 0): 2, GState("d", 0): 1})
    counts = eng.encode(c)
    act = {eng.states[i] for i in eng.active(counts)}
    assert act == {q for q in c if apply_broadcast(p, c, q) != c}
