"""Weighted square-loss regression oracle and confidence bounds over loss balls.

Labels enter the regression problem encoded as ``y01 = (y + 1) / 2`` so that
``E[y01 | x] = eta(x)``.  The active set (version space) at radius ``beta`` is

    F(beta) = {f : L(f) <= L(f_hat) + beta},   L(f) = sum_t Q_t (f(x_t) - y01_t)^2,

and ``lcb`` / ``ucb`` are the pointwise min / max of ``f(x)`` over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .function_class import FunctionClass, RegressionFunction

__all__ = [
    "ConfidenceInterval",
    "OracleCounter",
    "OracleError",
    "QueryHistory",
    "WeightedSample",
    "active_set",
    "approx_bound",
    "class_losses",
    "constrained_lstsq",
    "empirical_loss",
    "exact_bounds",
    "exact_intervals",
    "fit",
    "fit_history",
    "in_active_set",
    "monotone_interval",
    "monotone_slacks",
]

LAMBDA_TOL = 1e-10


class OracleError(RuntimeError):
    """A bound computation did not converge within its oracle-call budget."""


class OracleCounter:
    def __init__(self) -> None:
        self.calls = 0


@dataclass(frozen=True)
class WeightedSample:
    weight: float
    x: int
    y01: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.weight) and math.isfinite(self.y01)):
            raise ValueError("weight and target must be finite")
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")
        if self.y01 not in (0, 1):
            raise ValueError("regression target must be 0 or 1")


class QueryHistory:
    """Append-only stream trace ``(x_t, Q_t, y01_t)``.

    Alongside the ordered record it keeps per-point label tallies, which is all
    a square loss over a finite support needs: ``L(f) = sum_x n1[x] (f(x)-1)^2
    + n0[x] f(x)^2``.
    """

    def __init__(self, n_points: int) -> None:
        self.n_points = int(n_points)
        self._xs: list[int] = []
        self._qs: list[int] = []
        self._ys: list[int] = []
        self.n1 = np.zeros(self.n_points)
        self.n0 = np.zeros(self.n_points)

    def append(self, x: int, q: int, y01: int | None = None) -> None:
        if q not in (0, 1):
            raise ValueError("query flag must be 0 or 1")
        if (y01 is None) == (q == 1):
            raise ValueError("a label is present exactly when the step is queried")
        if not 0 <= x < self.n_points:
            raise ValueError(f"point {x} outside the support")
        self._xs.append(int(x))
        self._qs.append(int(q))
        self._ys.append(-1 if y01 is None else int(y01))
        if q:
            if y01 == 1:
                self.n1[x] += 1
            elif y01 == 0:
                self.n0[x] += 1
            else:
                raise ValueError("label must be 0 or 1")

    def extend(self, xs, qs, ys) -> None:
        """Bulk append; ``ys`` entries of unqueried steps are ignored."""
        xs = np.asarray(xs, dtype=np.int64)
        qs = np.asarray(qs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        if xs.size and (xs.min() < 0 or xs.max() >= self.n_points):
            raise ValueError("point outside the support")
        ys = np.where(qs == 1, ys, -1)
        if np.any((qs == 1) & (ys != 0) & (ys != 1)):
            raise ValueError("queried labels must be 0 or 1")
        self._xs.extend(xs.tolist())
        self._qs.extend(qs.tolist())
        self._ys.extend(ys.tolist())
        hit = qs == 1
        self.n1 += np.bincount(xs[hit & (ys == 1)], minlength=self.n_points)
        self.n0 += np.bincount(xs[hit & (ys == 0)], minlength=self.n_points)

    def copy(self) -> "QueryHistory":
        out = QueryHistory(self.n_points)
        out._xs = list(self._xs)
        out._qs = list(self._qs)
        out._ys = list(self._ys)
        out.n1 = self.n1.copy()
        out.n0 = self.n0.copy()
        return out

    def __len__(self) -> int:
        return len(self._xs)

    @property
    def num_queries(self) -> int:
        return int(self.n1.sum() + self.n0.sum())

    @property
    def xs(self) -> np.ndarray:
        return np.asarray(self._xs, dtype=np.int64)

    @property
    def qs(self) -> np.ndarray:
        return np.asarray(self._qs, dtype=np.int64)

    @property
    def ys(self) -> np.ndarray:
        """Labels with ``-1`` marking unqueried steps."""
        return np.asarray(self._ys, dtype=np.int64)

    def samples(self) -> list[WeightedSample]:
        return [WeightedSample(1.0, x, y) for x, q, y in zip(self._xs, self._qs, self._ys) if q]


@dataclass(frozen=True)
class ConfidenceInterval:
    lcb: float
    ucb: float
    slack: float = 0.0

    def __post_init__(self) -> None:
        if not self.lcb <= self.ucb:
            raise ValueError(f"lcb {self.lcb} exceeds ucb {self.ucb}")
        lo, hi = -self.slack, 1.0 + self.slack
        if self.lcb < lo - 1e-12 or self.ucb > hi + 1e-12:
            raise ValueError(f"interval ({self.lcb}, {self.ucb}) outside [{lo}, {hi}]")

    @property
    def width(self) -> float:
        return self.ucb - self.lcb

    @property
    def mode(self) -> str:
        return "exact" if self.slack == 0 else "approximate"

    def contains(self, other: "ConfidenceInterval") -> bool:
        return self.lcb <= other.lcb and other.ucb <= self.ucb


# --------------------------------------------------------------------------
# least squares over a norm ball


def constrained_lstsq(A, b, w, radius: float, tol: float = LAMBDA_TOL) -> np.ndarray:
    """Solve ``min_theta sum_i w_i (A_i theta - b_i)^2`` subject to ``||theta|| <= radius``.

    The minimum-norm unconstrained solution is returned when it lies in the
    ball; otherwise the multiplier ``lam`` of ``(H + lam I) theta = g`` is
    bisected until ``||theta(lam)|| = radius`` to relative tolerance ``tol``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    d = A.shape[1]
    if A.shape[0] == 0:
        return np.zeros(d)
    H = A.T @ (w[:, None] * A)
    g = A.T @ (w * b)
    evals, evecs = np.linalg.eigh(H)
    evals = np.clip(evals, 0.0, None)
    proj = evecs.T @ g
    scale = max(evals[-1], 1.0)
    pos = evals > scale * 1e-12
    theta0 = evecs[:, pos] @ (proj[pos] / evals[pos])
    if np.linalg.norm(theta0) <= radius:
        return theta0

    def solve(lam):
        return evecs @ (proj / (evals + lam))

    lo, hi = 0.0, np.linalg.norm(g) / radius
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(solve(mid)) > radius:
            lo = mid
        else:
            hi = mid
    return solve(hi)


def _linear_design(samples: Iterable[WeightedSample], cls: FunctionClass):
    samples = list(samples)
    xs = np.array([s.x for s in samples], dtype=np.int64)
    A = cls.features[xs] if samples else np.zeros((0, cls.dim))
    b = np.array([s.y01 for s in samples], dtype=float)
    w = np.array([s.weight for s in samples], dtype=float)
    return A, b, w


def _history_design(history: QueryHistory, cls: FunctionClass):
    """Aggregated least-squares rows: one per (point, label) with its count."""
    rows = np.concatenate([np.nonzero(history.n1)[0], np.nonzero(history.n0)[0]])
    b = np.concatenate([np.ones(np.count_nonzero(history.n1)),
                        np.zeros(np.count_nonzero(history.n0))])
    w = np.concatenate([history.n1[history.n1 > 0], history.n0[history.n0 > 0]])
    return cls.features[rows], b, w


# --------------------------------------------------------------------------
# the regression oracle


def _tally(samples: Iterable[WeightedSample], n_points: int):
    w1 = np.zeros(n_points)
    w0 = np.zeros(n_points)
    for s in samples:
        if s.y01 == 1:
            w1[s.x] += s.weight
        else:
            w0[s.x] += s.weight
    return w1, w0


def _table_losses(table: np.ndarray, w1: np.ndarray, w0: np.ndarray) -> np.ndarray:
    return ((table - 1.0) ** 2) @ w1 + (table ** 2) @ w0


def fit(samples: Iterable[WeightedSample], cls: FunctionClass,
        counter: OracleCounter | None = None) -> RegressionFunction:
    """Weighted square-loss minimizer over ``cls``.

    Finite classes are enumerated and ties go to the lowest id; linear classes
    solve the norm-ball constrained least-squares problem exactly.  An empty
    sample set gives member 0 (finite) or the zero weight vector (linear).
    """
    if counter is not None:
        counter.calls += 1
    samples = list(samples)
    if cls.kind == "finite":
        w1, w0 = _tally(samples, cls.n_points)
        return cls.member(int(np.argmin(_table_losses(cls.table, w1, w0))))
    A, b, w = _linear_design(samples, cls)
    return cls.from_weights(constrained_lstsq(A, b, w, cls.weight_bound))


def class_losses(cls: FunctionClass, history: QueryHistory) -> np.ndarray:
    """Empirical loss of every member of a finite class."""
    return _table_losses(cls.table, history.n1, history.n0)


def fit_history(history: QueryHistory, cls: FunctionClass,
                counter: OracleCounter | None = None) -> RegressionFunction:
    """:func:`fit` on the queried part of ``history`` with unit weights."""
    if counter is not None:
        counter.calls += 1
    if cls.kind == "finite":
        return cls.member(int(np.argmin(class_losses(cls, history))))
    A, b, w = _history_design(history, cls)
    return cls.from_weights(constrained_lstsq(A, b, w, cls.weight_bound))


def empirical_loss(f: RegressionFunction, history: QueryHistory) -> float:
    """``sum_t Q_t (f(x_t) - y01_t)^2``; zero for an empty history."""
    v = f.values() if f.owner.kind == "finite" else f.owner.raw_values(f)
    return float(history.n1 @ (v - 1.0) ** 2 + history.n0 @ v ** 2)


def in_active_set(f: RegressionFunction, history: QueryHistory,
                  f_hat: RegressionFunction, beta: float) -> bool:
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return empirical_loss(f, history) <= empirical_loss(f_hat, history) + beta


def active_set(history: QueryHistory, beta: float, cls: FunctionClass):
    """Return ``(f_hat_id, mask)`` for a finite class; ``mask[i]`` marks membership."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    losses = class_losses(cls, history)
    best = int(np.argmin(losses))
    return best, losses <= losses[best] + beta


def exact_intervals(history: QueryHistory, beta: float, cls: FunctionClass):
    """Exact ``(lcb, ucb)`` vectors over the whole support, plus ``f_hat`` id and mask."""
    if cls.kind != "finite":
        raise TypeError("exact bounds enumerate a finite class")
    best, mask = active_set(history, beta, cls)
    assert mask.any(), "the empirical minimizer always belongs to its own ball"
    vals = cls.table[mask]
    return vals.min(axis=0), vals.max(axis=0), best, mask


def exact_bounds(x: int, history: QueryHistory, beta: float,
                 cls: FunctionClass) -> ConfidenceInterval:
    if cls.kind != "finite":
        raise TypeError("exact bounds enumerate a finite class")
    best, mask = active_set(history, beta, cls)
    assert mask.any(), "the empirical minimizer always belongs to its own ball"
    vals = cls.table[mask, x]
    return ConfidenceInterval(float(vals.min()), float(vals.max()))


# --------------------------------------------------------------------------
# approximate bounds


def finite_call_budget(alpha: float) -> int:
    """Oracle calls the bisection on a finite class may use."""
    return 2 + math.ceil(math.log2((1.0 + alpha) / alpha))


def _approx_bound_finite(x, history, beta, alpha, upper, cls, counter):
    """Bisection on the candidate value ``z``.

    The feasibility test "some f in the ball has f(x) >= z" is one oracle call
    on the sub-class ``{f : f(x) >= z}``: the test is feasible iff that fit's
    loss is within the ball.  Finite classes are not convex, so a weighted
    Lagrangian refit would only see the lower convex hull of (value, loss)
    pairs and could miss members; restricting the class keeps the test exact.
    """
    budget = finite_call_budget(alpha)
    losses = class_losses(cls, history)
    best = int(np.argmin(losses))
    counter.calls += 1
    limit = losses[best] + beta
    vals = cls.table[:, x] if upper else -cls.table[:, x]
    lo, hi = float(vals[best]), float(np.max(vals)) + 0.5 * alpha
    # every member lies in [0, 1]; hi starts strictly above all of them
    hi = min(hi, (1.0 if upper else 0.0) + 0.5 * alpha)
    while hi - lo > alpha:
        if counter.calls >= budget:
            raise OracleError("bisection exceeded its oracle-call budget")
        z = 0.5 * (lo + hi)
        counter.calls += 1
        sub = np.nonzero(vals >= z)[0]
        if sub.size:
            g = sub[int(np.argmin(losses[sub]))]
            if losses[g] <= limit:
                lo = float(vals[g])
                continue
        hi = z
    return hi if upper else -hi


def _approx_bound_linear(x, history, beta, alpha, upper, cls, counter, max_calls):
    """Weight escalation on a synthetic sample at ``x`` (convex classes).

    Refitting with an extra sample of weight ``W`` and a target beyond every
    reachable value traces the ball's boundary monotonically in ``W``.  A fit
    whose loss stays inside the ball certifies its value from inside; a fit
    that leaves the ball certifies, by its optimality, that no member with a
    larger value fits the ball either.
    """
    phi = cls.features[x]
    R = cls.weight_bound
    reach = R * float(np.linalg.norm(phi))
    sign = 1.0 if upper else -1.0
    if reach == 0.0:
        return 0.0
    A, b, w = _history_design(history, cls)

    def loss(theta):
        return float(w @ (A @ theta - b) ** 2)

    counter.calls += 1
    theta_hat = constrained_lstsq(A, b, w, R)
    limit = loss(theta_hat) + beta
    clip = lambda v: min(max(v, 0.0), 1.0)  # noqa: E731

    extreme = sign * R * phi / np.linalg.norm(phi)
    if loss(extreme) <= limit:
        return clip(sign * reach)

    target = sign * max(1.0, reach)
    A_aug = np.vstack([A, phi])
    b_aug = np.append(b, target)

    def refit(weight):
        counter.calls += 1
        theta = constrained_lstsq(A_aug, b_aug, np.append(w, weight), R)
        return float(phi @ theta), loss(theta)

    v_in = float(phi @ theta_hat)
    w_in, w_out = 0.0, 1.0
    v_out, l_out = refit(w_out)
    while l_out <= limit:
        if counter.calls >= max_calls:
            raise OracleError("weight escalation exceeded its oracle-call budget")
        w_in, v_in = w_out, v_out
        w_out *= 4.0
        v_out, l_out = refit(w_out)
    while abs(clip(v_out) - clip(v_in)) > alpha:
        if counter.calls >= max_calls:
            raise OracleError("weight bisection exceeded its oracle-call budget")
        mid = 0.5 * (w_in + w_out)
        v_mid, l_mid = refit(mid)
        if l_mid <= limit:
            w_in, v_in = mid, v_mid
        else:
            w_out, v_out = mid, v_mid
    return clip(v_out)


def approx_bound(x: int, history: QueryHistory, beta: float, alpha: float,
                 direction: str, cls: FunctionClass,
                 counter: OracleCounter | None = None,
                 max_calls: int | None = None) -> float:
    """One-sided ``alpha``-approximation of ``lcb`` or ``ucb`` at ``x``.

    ``direction="lower"`` returns ``v`` with ``lcb - alpha <= v <= lcb``;
    ``direction="upper"`` returns ``v`` with ``ucb <= v <= ucb + alpha``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if direction not in ("lower", "upper"):
        raise ValueError(f"direction must be 'lower' or 'upper', got {direction!r}")
    counter = OracleCounter() if counter is None else counter
    start = counter.calls
    local = OracleCounter()
    upper = direction == "upper"
    if cls.kind == "finite":
        out = _approx_bound_finite(x, history, beta, alpha, upper, cls, local)
    else:
        if max_calls is None:
            max_calls = math.ceil(8 * math.log2(8.0 / alpha) ** 2) + 64
        out = _approx_bound_linear(x, history, beta, alpha, upper, cls, local, max_calls)
    counter.calls = start + local.calls
    return out


def monotone_slacks(m: int, M: int, gamma: float) -> tuple[float, float]:
    """Per-call accuracy ``gamma / 4M`` and epoch padding ``(M - m) gamma / 4M``."""
    if not 1 <= m <= M:
        raise ValueError(f"epoch {m} outside 1..{M}")
    if not 0 < gamma < 0.5:
        raise ValueError("gamma must lie in (0, 1/2)")
    return gamma / (4 * M), (M - m) * gamma / (4 * M)


def monotone_interval(x: int, m: int, M: int, gamma: float, history: QueryHistory,
                      beta: float, cls: FunctionClass,
                      counter: OracleCounter | None = None) -> ConfidenceInterval:
    """Padded approximate interval; nested across epochs whenever the balls are."""
    acc, pad = monotone_slacks(m, M, gamma)
    lo = approx_bound(x, history, beta, acc, "lower", cls, counter) - pad
    hi = approx_bound(x, history, beta, acc, "upper", cls, counter) + pad
    return ConfidenceInterval(lo, hi, slack=acc + pad)
