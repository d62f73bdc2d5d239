import math

import numpy as np
import pytest

from bcp.analysis import (
    BudgetExceeded,
    DegenerateInput,
    DomainError,
    decide_stable,
    fit_nlogn,
    geom_tail_lower,
    geom_tail_upper,
    harmonic,
    harmonic_tail_threshold,
    measure_time,
    model_check,
    reachable,
    replay,
    sample_geometric_sums,
    solve_lambda,
    stats_to_csv,
)
from bcp.core import Configuration, GState, apply_broadcast, Protocol, Transition, init_config, is_consensus
from bcp.presburger import majority_protocol

from oracles import naive_reachable


def lone():
    q = GState("a", 0)
    return Protocol([q], {}, {"x": q}, [q], [0], name="lone")


# -- stability ---------------------------------------------------------------------


def test_decide_stable_examples():
    p = majority_protocol()
    assert decide_stable(p, Configuration({GState("d", 1): 2}))
    assert not decide_stable(p, init_config(p, {"x": 1, "y": 1}))
    assert not decide_stable(p, Configuration({GState("d", 1): 1, GState("d", 0): 1}))


def _brute_stable(p, c):
    b = is_consensus(p, c)
    if b not in (0, 1):
        return False
    seen = naive_reachable(lambda d, q: dict(apply_broadcast(p, Configuration(d), q)), dict(c))
    return all(is_consensus(p, Configuration(dict(d))) == b for d in seen)


@pytest.mark.parametrize("x, y", [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1)])
def test_decide_stable_matches_brute_force(x, y):
    p = majority_protocol()
    for c in reachable(p, init_config(p, {"x": x, "y": y})):
        assert decide_stable(p, c) == _brute_stable(p, c)


def test_budget_is_enforced():
    cyc = Protocol(["a", "b", "c"], {"a": Transition("b", {}), "b": Transition("c", {})}, {"x": "a"}, ["a", "b", "c"])
    assert decide_stable(cyc, Configuration({"a": 2}))
    with pytest.raises(BudgetExceeded):
        decide_stable(cyc, Configuration({"a": 2}), budget=1)
    p = majority_protocol()
    v = model_check(p, {"x": 3, "y": 3}, 0, budget=2)
    assert v.status == "bound_exceeded"


# -- model checking ----------------------------------------------------------------


def test_model_check_examples():
    p = majority_protocol()
    assert model_check(p, {"x": 2, "y": 1}, 1).ok
    assert model_check(lone(), {"x": 1}, 1).ok
    assert model_check(lone(), {"x": 1}, 0).status == "counterexample"


def test_counterexample_replays():
    p = majority_protocol()
    broken = Protocol(p.states, {GState("x", 0): Transition(GState("d", 1), {})}, p.inputs, p.accepting, [0, 1])
    start = init_config(broken, {"x": 1, "y": 2})
    v = model_check(broken, start, 0)
    assert v.status == "counterexample"
    assert replay(broken, start, v.witness) == v.witness_config
    assert decide_stable(broken, v.witness_config)
    assert is_consensus(broken, v.witness_config) == 1


# -- measurement -----------------------------------------------------------------------


def test_measure_time_silent_protocol_is_zero():
    s = measure_time(lone(), {"x": 5}, 10, rng=1)
    assert s.T == [0.0] * 10 and s.trials == 10


def test_measure_time_majority_bound():
    n = 100
    s = measure_time(majority_protocol(), {"x": 50, "y": 50}, 200, "last_consensus_change", rng=3)
    assert s.mean <= 2 * n * harmonic(n)
    assert not any(s.truncated)
    assert s.mean == pytest.approx(np.mean(s.T))
    assert s.variance == pytest.approx(np.var(s.T, ddof=1))


def test_estimators_are_ordered():
    p = majority_protocol()
    a = measure_time(p, {"x": 6, "y": 5}, 30, "exact_stable", rng=7)
    b = measure_time(p, {"x": 6, "y": 5}, 30, "quiescence", rng=7)
    assert a.seeds == b.seeds
    for t_stable, t_quiet in zip(a.T, b.T):
        assert t_stable <= t_quiet


def test_truncation_flagged():
    s = measure_time(majority_protocol(), {"x": 300, "y": 299}, 3, "last_consensus_change", max_steps=20, rng=0)
    assert all(s.truncated)


def test_same_seed_same_stats():
    p = majority_protocol()
    a = measure_time(p, {"x": 9, "y": 8}, 20, rng=42)
    b = measure_time(p, {"x": 9, "y": 8}, 20, rng=42)
    assert a.T == b.T and a.seeds == b.seeds


def test_measure_time_rejects_bad_args():
    with pytest.raises(ValueError):
        measure_time(lone(), {"x": 1}, 0)
    with pytest.raises(ValueError):
        measure_time(lone(), {"x": 1}, 1, estimator="guess")


def test_csv_columns_and_header():
    s = measure_time(lone(), {"x": 2}, 2, rng=1)
    text = stats_to_csv([s], {"seed": 1})
    lines = text.splitlines()
    assert lines[0] == "# seed: 1"
    assert lines[1] == "n,trial,seed,steps,T,estimator,truncated"
    assert len(lines) == 4


# -- fitting ----------------------------------------------------------------------------


def test_fit_exact_nlogn():
    pts = [(n, 3 * n * math.log(n)) for n in (10, 100, 1000)]
    f = fit_nlogn(pts)
    assert f.a == pytest.approx(3)
    assert f.residual == pytest.approx(0, abs=1e-12)
    assert not f.poor and f.ratios_nonincreasing


def test_fit_flags_quadratic():
    f = fit_nlogn([(n, n * n) for n in (10, 100, 1000)])
    assert f.poor
    assert not f.ratios_nonincreasing


def test_fit_needs_three_sizes():
    with pytest.raises(DegenerateInput):
        fit_nlogn([(10, 1.0), (10, 2.0), (100, 3.0)])


# -- tails --------------------------------------------------------------------------------


def test_tail_bounds_at_one():
    ps = [i / 10 for i in range(1, 11)]
    assert geom_tail_upper(ps, 1.0) == 1.0
    assert geom_tail_lower(ps, 1.0) == 1.0


def test_tail_upper_harmonic_form():
    n = 50
    ps = [i / n for i in range(1, n + 1)]
    k = 1.5
    lam = solve_lambda(k)
    assert geom_tail_upper(ps, lam) == pytest.approx(math.exp(-k * harmonic(n)))


def test_tail_lower_seventh():
    n = 100
    ps = [i / n for i in range(1, n + 1)]
    assert geom_tail_lower(ps, 1 / 7) <= n**-0.5


def test_tail_domain_errors():
    with pytest.raises(DomainError):
        geom_tail_upper([0.5], 0.5)
    with pytest.raises(DomainError):
        geom_tail_lower([0.5], 2)
    with pytest.raises(DomainError):
        geom_tail_upper([0.0], 2)
    with pytest.raises(DomainError):
        geom_tail_upper([1.5], 2)
    with pytest.raises(DomainError):
        harmonic_tail_threshold(2, 1)
    with pytest.raises(DomainError):
        harmonic_tail_threshold(10, 0.5)


def test_threshold_values():
    assert 2 * solve_lambda(1 - math.log(2)) == pytest.approx(4, abs=1e-8)
    assert harmonic_tail_threshold(100, 1) == pytest.approx(2 * solve_lambda(1))
    ks = [1, 1.5, 2, 3, 5]
    ls = [harmonic_tail_threshold(100, k) for k in ks]
    assert all(a < b for a, b in zip(ls, ls[1:]))


def test_tail_bounds_dominate_samples():
    n = 100
    ps = [i / n for i in range(1, n + 1)]
    mu = sum(1 / p for p in ps)
    rng = np.random.default_rng(0)
    xs = sample_geometric_sums(ps, 10_000, rng)
    for lam in (1.2, 1.5, 2.0):
        freq = float(np.mean(xs >= lam * mu))
        sigma = math.sqrt(max(freq * (1 - freq), 1e-12) / len(xs))
        assert freq <= geom_tail_upper(ps, lam) + 3 * sigma
    for lam in (0.5, 0.7, 0.9):
        freq = float(np.mean(xs <= lam * mu))
        sigma = math.sqrt(max(freq * (1 - freq), 1e-12) / len(xs))
        assert freq <= geom_tail_lower(ps, lam) + 3 * sigma
    l1 = harmonic_tail_threshold(n, 1)
    freq = float(np.mean(xs >= l1 * n * math.log(n)))
    assert freq <= 1 / n + 3 * math.sqrt((1 / n) * (1 - 1 / n) / len(xs))
