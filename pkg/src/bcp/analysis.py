"""Exhaustive verification at fixed population size, run-time measurement and
the geometric tail bounds used to reason about coupon-collector phases."""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import (
    MIXED,
    RNG_ALGORITHM,
    Configuration,
    Engine,
    Protocol,
    State,
    Stop,
    init_config,
    label,
    make_rng,
    run_execution,
)


class BudgetExceeded(RuntimeError):
    pass


class DomainError(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


Key = tuple  # canonical configuration key: sorted ((state id, count), ...)


def _key(counts: Mapping[int, int]) -> Key:
    return tuple(sorted(counts.items()))


class StateGraph:
    """Explicit configuration graph reachable from one configuration."""

    def __init__(self, spec: Protocol, start: Configuration, budget: int = 10**6, engine: Engine | None = None):
        self.spec = spec
        self.eng = engine or Engine(spec)
        root = _key(self.eng.encode(start))
        self.root = root
        self.nodes: list[Key] = [root]
        self.index: dict[Key, int] = {root: 0}
        self.succ: list[list[tuple[int, int]]] = []  # (broadcaster id, node)
        self.parent: list[tuple[int, int] | None] = [None]
        queue = deque([0])
        eng = self.eng
        while queue:
            i = queue.popleft()
            counts = dict(self.nodes[i])
            edges = []
            for q in counts:
                k = _key(eng.apply(counts, q))
                j = self.index.get(k)
                if j is None:
                    if len(self.nodes) >= budget:
                        raise BudgetExceeded(f"more than {budget} configurations reachable")
                    j = len(self.nodes)
                    self.index[k] = j
                    self.nodes.append(k)
                    self.parent.append((q, i))
                    queue.append(j)
                edges.append((q, j))
            self.succ.append(edges)

    def __len__(self) -> int:
        return len(self.nodes)

    def config(self, i: int) -> Configuration:
        return self.eng.decode(dict(self.nodes[i]))

    def consensus(self, i: int):
        return self.eng.consensus(dict(self.nodes[i]))

    def path_to(self, i: int) -> list[State]:
        path = []
        while self.parent[i] is not None:
            q, i = self.parent[i]
            path.append(self.eng.states[q])
        return path[::-1]

    def can_reach(self, targets: set[int]) -> set[int]:
        """Nodes from which some target is reachable (backward closure)."""
        pred: list[list[int]] = [[] for _ in self.nodes]
        for i, edges in enumerate(self.succ):
            for _, j in edges:
                pred[j].append(i)
        seen = set(targets)
        work = list(targets)
        while work:
            j = work.pop()
            for i in pred[j]:
                if i not in seen:
                    seen.add(i)
                    work.append(i)
        return seen

    def stable(self, b) -> set[int]:
        """Nodes all of whose reachable nodes are b-consensuses."""
        bad = {i for i in range(len(self.nodes)) if self.consensus(i) != b}
        return set(range(len(self.nodes))) - self.can_reach(bad)


def reachable(spec: Protocol, config: Configuration, budget: int = 10**6) -> list[Configuration]:
    g = StateGraph(spec, config, budget)
    return [g.config(i) for i in range(len(g))]


def decide_stable(spec: Protocol, config: Configuration, budget: int = 10**6, engine: Engine | None = None) -> bool:
    """Whether ``config`` is a b-consensus from which only b-consensuses are reachable."""
    eng = engine or Engine(spec)
    start = eng.encode(config)
    b = eng.consensus(start)
    if b == MIXED:
        return False
    seen = {_key(start)}
    queue = deque([start])
    while queue:
        counts = queue.popleft()
        for q in list(counts):
            nxt = eng.apply(counts, q)
            k = _key(nxt)
            if k in seen:
                continue
            if eng.consensus(nxt) != b:
                return False
            if len(seen) >= budget:
                raise BudgetExceeded(f"more than {budget} configurations reachable")
            seen.add(k)
            queue.append(nxt)
    return True


@dataclass
class Verdict:
    status: str  # "correct" | "counterexample" | "bound_exceeded"
    explored: int
    witness: list | None = None  # broadcasting states, replayable from the initial configuration
    witness_config: Configuration | None = None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "correct"


def model_check(
    spec: Protocol,
    inputs: Mapping[str, int] | Configuration,
    expected: bool | int,
    budget: int = 10**6,
) -> Verdict:
    """Probability-1 stabilisation to ``expected`` on the finite chain.

    Holds iff every reachable configuration can reach a configuration that is
    stable with the expected output; a reachable configuration violating this
    is returned with a path leading to it.
    """
    start = inputs if isinstance(inputs, Configuration) else init_config(spec, inputs)
    try:
        g = StateGraph(spec, start, budget)
    except BudgetExceeded as e:
        return Verdict("bound_exceeded", budget, reason=str(e))
    b = int(bool(expected))
    good = g.stable(b)
    ok = g.can_reach(good)
    if len(ok) == len(g):
        return Verdict("correct", len(g))
    bad_nodes = sorted(set(range(len(g))) - ok)
    wrong = g.stable(1 - b)
    pick = next((i for i in bad_nodes if i in wrong), bad_nodes[0])
    why = "stable wrong consensus reachable" if pick in wrong else "expected output not reachable"
    return Verdict("counterexample", len(g), g.path_to(pick), g.config(pick), why)


def replay(spec: Protocol, start: Configuration, path: Sequence[State]) -> Configuration:
    from .core import apply_broadcast

    c = start
    for q in path:
        c = apply_broadcast(spec, c, q)
    return c


# ---------------------------------------------------------------------------
# measurement

ESTIMATORS = ("exact_stable", "quiescence", "last_consensus_change")


@dataclass
class RunStats:
    n: int
    estimator: str
    steps: list[int]
    T: list[float]
    truncated: list[bool]
    seeds: list[int]
    outcomes: list[Any] = field(default_factory=list)
    rng: str = RNG_ALGORITHM

    @property
    def trials(self) -> int:
        return len(self.T)

    @property
    def mean(self) -> float:
        return float(np.mean(self.T)) if self.T else float("nan")

    @property
    def variance(self) -> float:
        return float(np.var(self.T, ddof=1)) if len(self.T) > 1 else 0.0

    def rows(self):
        for i, (s, t, tr, seed) in enumerate(zip(self.steps, self.T, self.truncated, self.seeds)):
            yield {"n": self.n, "trial": i, "seed": seed, "steps": s, "T": t, "estimator": self.estimator, "truncated": int(tr)}


CSV_COLUMNS = ("n", "trial", "seed", "steps", "T", "estimator", "truncated")


def stats_to_csv(stats: Sequence[RunStats], header: Mapping[str, Any] | None = None) -> str:
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for s in stats:
        for row in s.rows():
            w.writerow(row)
    return buf.getvalue()


def _trial(args) -> tuple[int, float, bool, Any]:
    spec, start, seed, estimator, max_steps, target, until = args
    rng = make_rng(seed)
    stop = {
        "exact_stable": Stop.EXACT_STABLE,
        "quiescence": Stop.QUIESCENCE,
        "last_consensus_change": Stop.QUIESCENCE,
    }[estimator]
    tr = run_execution(spec, start, rng, stop, max_steps, until=until)
    outcome = tr.outcome(spec)
    if estimator == "quiescence":
        t = float(tr.step_count)
    else:
        t = float(stabilisation_index(tr, target))
    return tr.step_count, t, tr.truncated, outcome


def stabilisation_index(trace, target=None) -> int:
    """First index from which the recorded consensus never changes again
    (or never leaves ``target`` when given)."""
    changes = trace.consensus_changes
    if target is None:
        return changes[-1][0]
    t = 0
    for idx, c in changes:
        if c != target:
            t = None
        elif t is None:
            t = idx
    return t if t is not None else trace.step_count


def measure_time(
    spec: Protocol,
    inputs: Mapping[str, int] | Configuration,
    trials: int,
    estimator: str = "quiescence",
    max_steps: int = 10**7,
    rng: np.random.Generator | int | None = None,
    *,
    target: Any = None,
    until: Callable[[Configuration], bool] | None = None,
    workers: int = 1,
) -> RunStats:
    """Per-trial stabilisation-time estimates.

    ``exact_stable`` runs to a certified stable configuration and reports the
    last consensus change; ``quiescence`` reports the step at which no
    broadcast changes the configuration; ``last_consensus_change`` reports the
    last change seen in a possibly truncated run.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    start = inputs if isinstance(inputs, Configuration) else init_config(spec, inputs)
    if isinstance(rng, np.random.Generator):
        seeds = [int(s) for s in rng.integers(0, 2**63 - 1, size=trials)]
    else:
        ss = np.random.SeedSequence(rng)
        seeds = [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(trials)]
    jobs = [(spec, start, s, estimator, max_steps, target, until) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    return RunStats(
        n=start.size,
        estimator=estimator,
        steps=[r[0] for r in results],
        T=[r[1] for r in results],
        truncated=[r[2] for r in results],
        seeds=seeds,
        outcomes=[r[3] for r in results],
    )


@dataclass
class Fit:
    a: float
    residual: float  # relative RMS error of the model a*n*ln(n)
    ratios: list[float]
    ratios_nonincreasing: bool
    poor: bool

    def report(self) -> str:
        r = ", ".join(f"{x:.4f}" for x in self.ratios)
        flag = "POOR FIT" if self.poor else "ok"
        return f"T ~ {self.a:.4f} * n ln n  (relative residual {self.residual:.4f}, {flag}); mean/(n ln n): {r}"


def fit_nlogn(points: Sequence[tuple[int, float]], poor_threshold: float = 0.15, slack: float = 0.05) -> Fit:
    """Least-squares fit of mean T = a * n ln n.

    ``ratios_nonincreasing`` allows each ratio to exceed its predecessor by a
    relative ``slack`` (sampling noise).
    """
    pts = sorted(points)
    if len({n for n, _ in pts}) < 3:
        raise DegenerateInput("need at least three distinct population sizes")
    n = np.array([p[0] for p in pts], dtype=float)
    t = np.array([p[1] for p in pts], dtype=float)
    if np.any(n < 2):
        raise DegenerateInput("n ln n vanishes for n < 2")
    x = n * np.log(n)
    a = float(np.dot(x, t) / np.dot(x, x))
    rel = (a * x - t) / t
    residual = float(np.sqrt(np.mean(rel**2)))
    ratios = [float(v) for v in t / x]
    mono = all(ratios[i + 1] <= ratios[i] * (1 + slack) for i in range(len(ratios) - 1))
    return Fit(a, residual, ratios, mono, residual > poor_threshold)


# ---------------------------------------------------------------------------
# tails of sums of geometric variables


def _tail_exponent(p_list: Sequence[float], lam: float) -> float:
    ps = np.asarray(p_list, dtype=float)
    if ps.size == 0 or np.any(ps <= 0) or np.any(ps > 1):
        raise DomainError("success probabilities must lie in (0, 1]")
    if lam <= 0:
        raise DomainError("lambda must be positive")
    mu = float(np.sum(1.0 / ps))
    return float(ps.min()) * mu * (lam - 1 - math.log(lam))


def geom_tail_upper(p_list: Sequence[float], lam: float) -> float:
    """Bound on P(X >= lam * E X) for X a sum of independent geometrics."""
    if lam < 1:
        raise DomainError("upper tail needs lambda >= 1")
    return math.exp(-_tail_exponent(p_list, lam))


def geom_tail_lower(p_list: Sequence[float], lam: float) -> float:
    """Bound on P(X <= lam * E X)."""
    if lam > 1:
        raise DomainError("lower tail needs lambda <= 1")
    return math.exp(-_tail_exponent(p_list, lam))


def solve_lambda(k: float, tol: float = 1e-10) -> float:
    """The lambda >= 1 with lambda - 1 - ln(lambda) = k."""
    if k < 0:
        raise DomainError("k must be non-negative")
    g = lambda x: x - 1 - math.log(x) - k  # noqa: E731
    lo, hi = 1.0, 2.0
    while g(hi) < 0:
        hi *= 2
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def harmonic_tail_threshold(n: int, k: float) -> float:
    """l with P(sum of Geom(i/n), i=1..n >= l n ln n) <= n^-k."""
    if n < 3:
        raise DomainError("needs n >= 3")
    if k < 1:
        raise DomainError("needs k >= 1")
    return 2 * solve_lambda(k)


def harmonic(n: int) -> float:
    return float(sum(1.0 / i for i in range(1, n + 1)))


def sample_geometric_sums(p_list: Sequence[float], samples: int, rng: np.random.Generator) -> np.ndarray:
    ps = np.asarray(p_list, dtype=float)
    out = np.zeros(samples, dtype=np.int64)
    for p in ps:
        out += rng.geometric(p, size=samples)
    return out


def binomial_sigma(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / trials)


__all__ = [
    "BudgetExceeded",
    "DomainError",
    "DegenerateInput",
    "StateGraph",
    "reachable",
    "decide_stable",
    "Verdict",
    "model_check",
    "replay",
    "RunStats",
    "measure_time",
    "stats_to_csv",
    "Fit",
    "fit_nlogn",
    "geom_tail_upper",
    "geom_tail_lower",
    "harmonic_tail_threshold",
    "solve_lambda",
    "harmonic",
    "label",
]
