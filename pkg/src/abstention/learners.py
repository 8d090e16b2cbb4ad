"""Active learners with abstention and their baselines.

All learners read a stream of support points, decide per point whether to ask
for its label, and maintain a loss-ball version space through the regression
oracle.  Within an epoch (or between two queries, for the per-step learner)
the classifier and query rule are fixed, so streams are processed a block at a
time; the result is identical to stepping one point at a time.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .environments import ABSTAIN, Environment, chow_excess
from .function_class import FunctionClass
from .oracle import (
    OracleCounter,
    QueryHistory,
    active_set,
    approx_bound,
    exact_intervals,
    fit_history,
    in_active_set,
    monotone_slacks,
)

__all__ = [
    "AbstainingClassifier",
    "AlgoConfig",
    "EpochRecord",
    "PointStream",
    "RandomizedClassifier",
    "RunTrace",
    "abstain_or_label",
    "alg1_beta",
    "alg3_beta",
    "c_delta",
    "epoch_schedule",
    "expected_chow_excess",
    "gamma_for_massart",
    "gamma_for_tsybakov",
    "horizon",
    "query_flag",
    "randomize",
    "run_alg1",
    "run_alg2",
    "run_alg3",
    "run_passive",
    "run_uncertainty_baseline",
]

CHUNK = 4096


# --------------------------------------------------------------------------
# configuration and schedules


@dataclass(frozen=True)
class AlgoConfig:
    epsilon: float = 0.01
    gamma: float = 0.1
    delta: float = 0.1
    T: int | None = None
    c0: float = 8.0
    k_T: float = 1.0
    mode: str = "exact"
    budget: int | None = None

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.gamma < 0.5:
            raise ValueError("gamma must lie in (0, 1/2)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.T is not None and self.T < 1:
            raise ValueError("T must be at least 1")
        if not self.c0 > 0 or not self.k_T > 0:
            raise ValueError("c0 and k_T must be positive")
        if self.mode not in ("exact", "approx"):
            raise ValueError("mode must be 'exact' or 'approx'")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be nonnegative")


def horizon(cls: FunctionClass, cfg: AlgoConfig) -> int:
    """``T``: the override if given, else ``ceil(k_T * complexity / (epsilon gamma))``."""
    if cfg.T is not None:
        return int(cfg.T)
    return max(2, math.ceil(cfg.k_T * cls.complexity / (cfg.epsilon * cfg.gamma)))


def c_delta(complexity: float, T: int, delta: float, c0: float = 8.0) -> float:
    return c0 * complexity * math.log(T / delta)


def epoch_schedule(T: int) -> tuple[int, list[int]]:
    """``M = ceil(log2 T)`` and the epoch boundaries ``tau_0 = 0, tau_m = 2^m``."""
    M = max(1, math.ceil(math.log2(T)))
    return M, [0] + [2 ** m for m in range(1, M + 1)]


def alg1_beta(m: int, M: int, C: float) -> float:
    return (M - m + 1) * C


def alg3_beta(m: int, M: int, C: float, epsilon: float, tau_last: int) -> float:
    return (M - m + 1) * (2 * epsilon ** 2 * tau_last + 2 * C)


def gamma_for_massart(tau0: float) -> float:
    return tau0


def gamma_for_tsybakov(epsilon: float, c: float, beta_exp: float) -> float:
    """Abstention level making ``gamma * P(|eta - 1/2| <= gamma) <= epsilon / 2``."""
    return (epsilon / (2 * c)) ** (1 / (1 + beta_exp))


# --------------------------------------------------------------------------
# classifiers


def abstain_or_label(interval, f_hat_value: float, gamma: float) -> int:
    """Abstain (``0``) iff ``[lcb, ucb]`` sits inside ``[1/2 - gamma, 1/2 + gamma]``."""
    if 0.5 - gamma <= interval.lcb and interval.ucb <= 0.5 + gamma:
        return ABSTAIN
    return 1 if f_hat_value >= 0.5 else -1


def query_flag(interval, gamma: float, decision: int) -> int:
    return int(interval.lcb < 0.5 < interval.ucb and decision != ABSTAIN)


def _rules(lcb, ucb, fhat_values, gamma):
    """Vectorized :func:`abstain_or_label` and :func:`query_flag` over the support."""
    abstain = (0.5 - gamma <= lcb) & (ucb <= 0.5 + gamma)
    labels = np.where(fhat_values >= 0.5, 1, -1)
    decisions = np.where(abstain, ABSTAIN, labels).astype(np.int8)
    queries = ((lcb < 0.5) & (0.5 < ucb) & ~abstain).astype(np.int8)
    return decisions, queries


@dataclass(frozen=True, eq=False)
class AbstainingClassifier:
    """Decisions in ``{+1, -1, 0 (abstain)}`` on each support point.

    ``lcb``/``ucb`` and ``f_hat`` record how the decisions were formed;
    ``queries`` is the matching query function.
    """

    decisions: np.ndarray
    queries: np.ndarray
    lcb: np.ndarray
    ucb: np.ndarray
    f_hat: np.ndarray
    gamma: float
    step: int = 0
    f_hat_id: int | None = None

    def decide(self, x: int) -> int:
        return int(self.decisions[x])

    __call__ = decide

    def query(self, x: int) -> int:
        return int(self.queries[x])

    @classmethod
    def from_bounds(cls, lcb, ucb, f_hat, gamma, step=0, f_hat_id=None, abstain=True):
        lcb = np.asarray(lcb, dtype=float)
        ucb = np.asarray(ucb, dtype=float)
        f_hat = np.asarray(f_hat, dtype=float)
        decisions, queries = _rules(lcb, ucb, f_hat, gamma)
        if not abstain:
            decisions = np.where(f_hat >= 0.5, 1, -1).astype(np.int8)
            queries = ((lcb < 0.5) & (0.5 < ucb)).astype(np.int8)
        return cls(decisions, queries, lcb, ucb, f_hat, gamma, step, f_hat_id)


class RandomizedClassifier:
    """Replaces every abstention by a fresh fair coin flip."""

    def __init__(self, base, rng: np.random.Generator) -> None:
        self.base = base
        self.rng = rng

    def decide(self, x: int) -> int:
        d = self.base.decide(x)
        if d != ABSTAIN:
            return d
        return 1 if self.rng.random() < 0.5 else -1

    __call__ = decide


def randomize(h, rng: np.random.Generator):
    if not np.any(np.asarray(h.decisions) == ABSTAIN):
        return h
    return RandomizedClassifier(h, rng)


# --------------------------------------------------------------------------
# streams


class PointStream:
    """Buffered i.i.d. point stream drawn in fixed-size blocks.

    Drawing in blocks of a fixed size keeps the stream's prefix independent of
    how much of it a learner ends up consuming.
    """

    def __init__(self, domain, rng: np.random.Generator, chunk: int = CHUNK) -> None:
        self.domain = domain
        self.rng = rng
        self.chunk = chunk
        self._buf = np.zeros(0, dtype=np.int64)

    def peek(self, n: int) -> np.ndarray:
        while self._buf.size < n:
            self._buf = np.concatenate([self._buf, self.domain.sample(self.rng, self.chunk)])
        return self._buf[:n]

    def advance(self, n: int) -> None:
        self.peek(n)
        self._buf = self._buf[n:]

    def take(self, n: int) -> np.ndarray:
        out = self.peek(n).copy()
        self.advance(n)
        return out


class ReplayStream:
    """A fixed, caller-chosen sequence of points (adversarial stream)."""

    def __init__(self, xs) -> None:
        self._buf = np.asarray(xs, dtype=np.int64)

    def peek(self, n: int) -> np.ndarray:
        if n > self._buf.size:
            raise ValueError("replayed stream is shorter than the run")
        return self._buf[:n]

    def advance(self, n: int) -> None:
        self.peek(n)
        self._buf = self._buf[n:]

    def take(self, n: int) -> np.ndarray:
        out = self.peek(n).copy()
        self.advance(n)
        return out


# --------------------------------------------------------------------------
# traces


@dataclass
class EpochRecord:
    """State of the version space when a classifier is formed."""

    index: int
    beta: float
    f_hat_id: int | None
    active_size: int | None
    reference_retained: bool | None
    lcb: np.ndarray
    ucb: np.ndarray
    active: np.ndarray | None = None
    oracle_calls: int = 0


@dataclass
class RunTrace:
    algorithm: str
    T: int
    xs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    qs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    ys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    phase: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    lcb: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ucb: np.ndarray = field(default_factory=lambda: np.zeros(0))
    acts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    epochs: list = field(default_factory=list)
    classifiers: list = field(default_factory=list)
    multiplicity: list = field(default_factory=list)
    clamp_events: int = 0
    oracle_calls: int = 0
    wall_ms: float = 0.0
    approx: bool = False

    @property
    def queries(self) -> int:
        return int(self.qs.sum())

    @property
    def steps(self) -> int:
        return int(self.xs.size)

    @property
    def reference_retained(self) -> bool | None:
        flags = [e.reference_retained for e in self.epochs]
        if any(f is None for f in flags):
            return None
        return all(flags)

    def _append(self, blocks: list, xs, qs, ys, phase, lcb, ucb, acts) -> None:
        blocks.append((xs, qs, ys, np.full(xs.size, phase), lcb[xs], ucb[xs], acts[xs]))

    def _finish(self, blocks: list) -> None:
        if not blocks:
            return
        cols = list(zip(*blocks))
        self.xs = np.concatenate(cols[0]).astype(np.int64)
        self.qs = np.concatenate(cols[1]).astype(np.int8)
        self.ys = np.concatenate(cols[2]).astype(np.int8)
        self.phase = np.concatenate(cols[3]).astype(np.int64)
        self.lcb = np.concatenate(cols[4])
        self.ucb = np.concatenate(cols[5])
        self.acts = np.concatenate(cols[6]).astype(np.int8)


def _split(rng: np.random.Generator):
    """Independent generators for points, labels and any final draw."""
    return rng.spawn(3)


def _labels(y_rng: np.random.Generator, env: Environment, xs: np.ndarray) -> np.ndarray:
    """``y01`` draws for the queried points, consumed in stream order."""
    return (y_rng.random(xs.size) < env.eta[xs]).astype(np.int8)


def _reference(env: Environment, reference_id):
    if reference_id is not None:
        return reference_id
    return env.truth_id if env.truth_id is not None else env.best_id


def _intervals(history, beta, cls, cfg, m, M, counter, reference):
    """Confidence bounds on every support point plus the fitted function."""
    if cfg.mode == "exact":
        lcb, ucb, best, mask = exact_intervals(history, beta, cls)
        counter.calls += 1
        f_hat = cls.member(best)
        retained = None if reference is None else bool(mask[reference])
        return lcb, ucb, f_hat, mask, retained, 0.0
    f_hat = fit_history(history, cls, counter)
    acc, pad = monotone_slacks(m, M, cfg.gamma)
    K = cls.n_points
    lcb = np.array([approx_bound(x, history, beta, acc, "lower", cls, counter) - pad
                    for x in range(K)])
    ucb = np.array([approx_bound(x, history, beta, acc, "upper", cls, counter) + pad
                    for x in range(K)])
    mask = None
    retained = None
    if cls.kind == "finite":
        _, mask = active_set(history, beta, cls)
        if reference is not None:
            retained = bool(mask[reference])
    elif reference is not None:
        retained = in_active_set(reference, history, f_hat, beta)
    return lcb, ucb, f_hat, mask, retained, acc + pad


# --------------------------------------------------------------------------
# epoch-based learners


def _run_epochs(env, cls, cfg, rng, beta_fn, name, reference_id=None, stream=None):
    start = time.perf_counter()
    clamps0 = cls.clamps.count
    T = horizon(cls, cfg)
    M, tau = epoch_schedule(T)
    x_rng, y_rng, _ = _split(rng)
    stream = PointStream(env.domain, x_rng) if stream is None else stream
    reference = _reference(env, reference_id)
    history = QueryHistory(cls.n_points)
    trace = RunTrace(name, T, approx=cfg.mode == "approx")
    counter = OracleCounter()
    blocks: list = []
    h = None
    for m in range(1, M + 1):
        beta = beta_fn(m, M, T, tau)
        calls0 = counter.calls
        lcb, ucb, f_hat, mask, retained, _ = _intervals(history, beta, cls, cfg, m, M,
                                                        counter, reference)
        h = AbstainingClassifier.from_bounds(lcb, ucb, f_hat.values(), cfg.gamma,
                                             step=m, f_hat_id=f_hat.id)
        trace.epochs.append(EpochRecord(
            m, beta, f_hat.id, None if mask is None else int(mask.sum()), retained,
            lcb, ucb, mask, counter.calls - calls0))
        if m == M:
            break
        xs = stream.take(tau[m] - tau[m - 1])
        qs = h.queries[xs]
        ys = np.full(xs.size, -1, dtype=np.int8)
        hit = qs == 1
        ys[hit] = _labels(y_rng, env, xs[hit])
        history.extend(xs, qs, ys)
        trace._append(blocks, xs, qs, ys, m, lcb, ucb, h.decisions)
    trace._finish(blocks)
    trace.classifiers = [h]
    trace.multiplicity = [1]
    trace.clamp_events = cls.clamps.count - clamps0
    trace.oracle_calls = counter.calls
    trace.wall_ms = 1000 * (time.perf_counter() - start)
    return h, trace


def run_alg1(env: Environment, cls: FunctionClass, cfg: AlgoConfig,
             rng: np.random.Generator, reference_id=None, stream=None):
    """Epoch-doubling active learner with abstention.

    Returns the final classifier and the run trace.  ``reference_id`` names
    the member whose retention in every active set is tracked (default: the
    environment's truth).
    """

    def beta(m, M, T, tau):
        return alg1_beta(m, M, c_delta(cls.complexity, T, cfg.delta, cfg.c0))

    return _run_epochs(env, cls, cfg, rng, beta, "alg1", reference_id, stream)


def run_alg3(env: Environment, cls: FunctionClass, cfg: AlgoConfig,
             rng: np.random.Generator, reference_id=None, stream=None):
    """The epoch learner's control flow with radii inflated for misspecification.

    The default horizon is ``complexity / (epsilon gamma)``.
    """
    if not cfg.gamma > cfg.epsilon:
        raise ValueError("misspecified learner needs gamma > epsilon")

    def beta(m, M, T, tau):
        C = c_delta(cls.complexity, T, cfg.delta, cfg.c0)
        return alg3_beta(m, M, C, cfg.epsilon, tau[M - 1])

    return _run_epochs(env, cls, cfg, rng, beta, "alg3", reference_id, stream)


# --------------------------------------------------------------------------
# per-step learners


def _version(history, beta, cls, gamma, reference, step, abstain=True):
    lcb, ucb, best, mask = exact_intervals(history, beta, cls)
    h = AbstainingClassifier.from_bounds(lcb, ucb, cls.table[best], gamma, step=step,
                                         f_hat_id=best, abstain=abstain)
    retained = None if reference is None else bool(mask[reference])
    return h, EpochRecord(step, beta, best, int(mask.sum()), retained, lcb, ucb, mask, 1)


def run_alg2(env: Environment, cls: FunctionClass, cfg: AlgoConfig,
             rng: np.random.Generator, stream=None, reference_id=None):
    """Per-step elimination with the fixed radius ``log(|F| / delta) / 2``.

    Returns a classifier drawn uniformly from the per-step classifiers and the
    trace, whose ``classifiers``/``multiplicity`` lists hold every distinct
    classifier with the number of steps it was in force.  Pass a
    :class:`ReplayStream` as ``stream`` to run on a fixed sequence of points.
    """
    if cls.kind != "finite":
        raise TypeError("the constant-label learner needs a finite class")
    start = time.perf_counter()
    T = horizon(cls, cfg)
    beta = 0.5 * math.log(len(cls) / cfg.delta)
    x_rng, y_rng, pick_rng = _split(rng)
    stream = PointStream(env.domain, x_rng) if stream is None else stream
    reference = _reference(env, reference_id)
    history = QueryHistory(cls.n_points)
    trace = RunTrace("alg2", T)
    blocks: list = []
    t = 0
    while t < T:
        h, rec = _version(history, beta, cls, cfg.gamma, reference, t + 1)
        trace.epochs.append(rec)
        n, xs, qs, ys = _advance_until_query(stream, h.queries, T - t, y_rng, env)
        trace._append(blocks, xs, qs, ys, len(trace.epochs), h.lcb, h.ucb, h.decisions)
        history.extend(xs, qs, ys)
        trace.classifiers.append(h)
        trace.multiplicity.append(n)
        t += n
    trace._finish(blocks)
    trace.oracle_calls = len(trace.epochs)
    trace.wall_ms = 1000 * (time.perf_counter() - start)
    u = int(pick_rng.integers(T))
    chosen = trace.classifiers[int(np.searchsorted(np.cumsum(trace.multiplicity), u, side="right"))]
    return chosen, trace


def expected_chow_excess(trace: RunTrace, env: Environment, gamma: float) -> float:
    """Exact Chow excess of the uniform draw from the per-step classifiers."""
    total = sum(n * chow_excess(h, env, gamma)
                for h, n in zip(trace.classifiers, trace.multiplicity))
    return total / sum(trace.multiplicity)


def _advance_until_query(stream, queries, limit, y_rng, env):
    """Consume points up to and including the next queried one (at most ``limit``)."""
    if not queries.any():
        xs = stream.take(limit)
        return limit, xs, np.zeros(limit, dtype=np.int8), np.full(limit, -1, dtype=np.int8)
    seen = 0
    while True:
        n = min(CHUNK, limit - seen)
        ahead = stream.peek(seen + n)[seen:]
        hits = np.nonzero(queries[ahead])[0]
        if hits.size:
            n = seen + int(hits[0]) + 1
            break
        seen += n
        if seen >= limit:
            n = limit
            break
    xs = stream.take(n)
    qs = queries[xs].astype(np.int8)
    ys = np.full(n, -1, dtype=np.int8)
    if qs[-1]:
        ys[-1] = _labels(y_rng, env, xs[-1:])[0]
    return n, xs, qs, ys


def run_uncertainty_baseline(env: Environment, cls: FunctionClass, budget: int,
                             delta: float, rng: np.random.Generator,
                             max_steps: int = 1_000_000, reference_id=None):
    """Queries whenever 1/2 lies strictly inside the interval, until ``budget`` labels.

    Uses the per-step learner's fixed-radius version space and never abstains.
    The run stops when the budget is spent, when no support point can be
    queried any more, or after ``max_steps`` points; the classifier is then
    ``sgn(2 f_hat - 1)`` for the last fit.
    """
    if cls.kind != "finite":
        raise TypeError("the uncertainty baseline needs a finite class")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    start = time.perf_counter()
    beta = 0.5 * math.log(len(cls) / delta)
    x_rng, y_rng, _ = _split(rng)
    stream = PointStream(env.domain, x_rng)
    reference = _reference(env, reference_id)
    history = QueryHistory(cls.n_points)
    trace = RunTrace("uncertainty", max_steps)
    blocks: list = []
    t = 0
    live = env.masses > 0
    while True:
        h, rec = _version(history, beta, cls, 0.25, reference, t + 1, abstain=False)
        trace.epochs.append(rec)
        if history.num_queries >= budget or not np.any(h.queries.astype(bool) & live) \
                or t >= max_steps:
            break
        n, xs, qs, ys = _advance_until_query(stream, h.queries, max_steps - t, y_rng, env)
        trace._append(blocks, xs, qs, ys, len(trace.epochs), h.lcb, h.ucb, h.decisions)
        history.extend(xs, qs, ys)
        t += n
    trace._finish(blocks)
    trace.T = t
    trace.classifiers = [h]
    trace.multiplicity = [1]
    trace.oracle_calls = len(trace.epochs)
    trace.wall_ms = 1000 * (time.perf_counter() - start)
    return h, trace


def run_passive(env: Environment, cls: FunctionClass, cfg: AlgoConfig,
                rng: np.random.Generator, reference_id=None):
    """Label every one of ``T`` points and predict with the least-squares fit."""
    start = time.perf_counter()
    T = horizon(cls, cfg)
    x_rng, y_rng, _ = _split(rng)
    xs = PointStream(env.domain, x_rng).take(T)
    ys = _labels(y_rng, env, xs)
    history = QueryHistory(cls.n_points)
    history.extend(xs, np.ones(T, dtype=np.int8), ys)
    f_hat = fit_history(history, cls)
    vals = f_hat.values()
    h = AbstainingClassifier.from_bounds(vals, vals, vals, cfg.gamma, step=T,
                                         f_hat_id=f_hat.id, abstain=False)
    trace = RunTrace("passive", T)
    trace._finish([(xs, np.ones(T, dtype=np.int8), ys, np.ones(T), vals[xs], vals[xs],
                    h.decisions[xs])])
    reference = _reference(env, reference_id)
    retained = None
    if reference is not None and cls.kind == "finite":
        retained = True
    trace.epochs.append(EpochRecord(1, 0.0, f_hat.id, None, retained, vals, vals))
    trace.classifiers = [h]
    trace.multiplicity = [1]
    trace.oracle_calls = 1
    trace.wall_ms = 1000 * (time.perf_counter() - start)
    return h, trace
