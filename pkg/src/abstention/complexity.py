"""Exhaustive eluder dimension, star number and disagreement coefficient.

These calculators are exact oracles for small finite classes over finite
domains, not estimators: inputs past the search budget raise
:class:`SearchBudgetExceeded` instead of being approximated.

Neither sequence can repeat a point (a repeated point's own deviation already
breaks the square-sum constraint), and both constraints depend only on the
*set* of earlier points.  The longest eluder sequence is therefore the largest
subset reachable by adding one witnessed point at a time, and star sets are
closed under taking subsets, so both searches run over subsets level by level.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .function_class import Domain, FunctionClass, load_table

__all__ = [
    "K_E",
    "MAX_POINTS",
    "MAX_STATES",
    "ComplexityReport",
    "SearchBudgetExceeded",
    "candidate_distributions",
    "complexity_report",
    "disagreement_coefficient",
    "eluder_dimension",
    "load_class_file",
    "reference_bounds",
    "star_number",
]

MAX_POINTS = 24
MAX_STATES = 2_000_000
# Calibration constant for the O(d log 1/gamma) eluder bounds, set once so the
# bound covers the brute-force linear fixtures and frozen since.
K_E = 1.0
TOL = 1e-12


class SearchBudgetExceeded(RuntimeError):
    """The exhaustive search would visit more subsets than allowed."""


def _deviations(cls: FunctionClass, f_star, points) -> np.ndarray:
    if cls.kind != "finite":
        raise TypeError("brute-force complexity needs a finite class")
    star = cls.table[int(getattr(f_star, "id", f_star))]
    pts = np.arange(cls.n_points) if points is None else _points(points, cls.n_points)
    if pts.size > MAX_POINTS:
        raise SearchBudgetExceeded(f"{pts.size} points exceed the cap of {MAX_POINTS}")
    return cls.table[:, pts] - star[pts]


def _points(points, n):
    if isinstance(points, Domain):
        return np.nonzero(points.masses > 0)[0]
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim != 1 or np.any(pts < 0) or np.any(pts >= n):
        raise ValueError("points must index the class's support")
    return np.unique(pts)


def _grid(gamma, grid):
    """Grid values at or above ``gamma`` (``gamma`` itself always included)."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if grid is None:
        return [float(gamma)]
    return sorted({float(gamma), *(float(g) for g in grid if g >= gamma)})


def _eluder_check(dev: np.ndarray, gamma: float, max_states: int) -> int:
    big = np.abs(dev) > gamma
    sq = dev ** 2
    limit = gamma ** 2 + TOL
    layer = {0: np.zeros(dev.shape[0])}
    depth, visited = 0, 0
    while layer:
        nxt: dict = {}
        for mask, sums in layer.items():
            ok = sums <= limit
            cand = (big & ok[:, None]).any(axis=0)
            for x in np.nonzero(cand)[0]:
                bit = 1 << int(x)
                if mask & bit or (mask | bit) in nxt:
                    continue
                nxt[mask | bit] = sums + sq[:, x]
        visited += len(nxt)
        if visited > max_states:
            raise SearchBudgetExceeded(f"eluder search passed {max_states} subsets")
        if nxt:
            depth += 1
        layer = nxt
    return depth


def _star_check(dev: np.ndarray, gamma: float, max_states: int) -> int:
    big = np.abs(dev) > gamma
    sq = dev ** 2
    limit = gamma ** 2 + TOL
    K = dev.shape[1]
    layer = [()]
    depth, visited = 0, 0
    while layer:
        nxt = []
        for s in layer:
            for x in range(s[-1] + 1 if s else 0, K):
                t = s + (x,)
                cols = list(t)
                rest = sq[:, cols].sum(axis=1)[:, None] - sq[:, cols]
                if np.all((big[:, cols] & (rest <= limit)).any(axis=0)):
                    nxt.append(t)
        visited += len(nxt)
        if visited > max_states:
            raise SearchBudgetExceeded(f"star search passed {max_states} subsets")
        if nxt:
            depth += 1
        layer = nxt
    return depth


def eluder_dimension(cls: FunctionClass, f_star, gamma: float, domain=None, grid=None,
                     max_states: int = MAX_STATES) -> int:
    """Longest eluder sequence, maximized over ``grid`` values ``>= gamma``.

    Parameters
    ----------
    cls : FunctionClass
        Finite class.
    f_star : int or RegressionFunction
        Reference member.
    gamma : float
        Deviation level.
    domain : Domain or array_like of int, optional
        Points the sequence may use (a domain contributes its positive-mass
        support); defaults to the whole support.
    grid : iterable of float, optional
        Extra deviation levels for the supremum; without it only ``gamma`` is
        searched.
    """
    dev = _deviations(cls, f_star, domain)
    return max(_eluder_check(dev, g, max_states) for g in _grid(gamma, grid))


def star_number(cls: FunctionClass, f_star, gamma: float, domain=None, grid=None,
                max_states: int = MAX_STATES) -> int:
    """Largest star set, maximized over ``grid`` values ``>= gamma``."""
    dev = _deviations(cls, f_star, domain)
    return max(_star_check(dev, g, max_states) for g in _grid(gamma, grid))


def _as_masses(dist, n):
    p = dist.masses if isinstance(dist, Domain) else np.asarray(dist, dtype=float)
    if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("each distribution must be a probability vector over the support")
    return p


def _theta_raw(dev, dists, gamma0, eps0, gammas, epsilons):
    gs = [g for g in gammas if g > gamma0]
    es = [e for e in epsilons if e > eps0]
    absdev = np.abs(dev)
    sq = dev ** 2
    best = 0.0
    for p in dists:
        norms = np.sqrt(sq @ p)
        for g in gs:
            big = absdev > g
            for e in es:
                hit = (big & (norms <= e + TOL)[:, None]).any(axis=0)
                best = max(best, g * g / (e * e) * float(p[hit].sum()))
    return best


def disagreement_coefficient(cls: FunctionClass, f_star, gamma0: float, epsilon0: float,
                             distributions, gammas, epsilons, raw: bool = False) -> float:
    """Grid estimate of the value-function disagreement coefficient.

    The maximum over the supplied distributions and grid points ``gamma >
    gamma0``, ``epsilon > epsilon0`` of ``(gamma/epsilon)^2 P(exists f:
    |f - f*|(x) > gamma, ||f - f*||_D <= epsilon)``, floored at one unless
    ``raw`` is set.  Norms are exact sums over each distribution's support.
    """
    distributions = list(distributions)
    if not distributions:
        raise ValueError("need at least one distribution")
    dev = _deviations(cls, f_star, None)
    dists = [_as_masses(d, cls.n_points) for d in distributions]
    value = _theta_raw(dev, dists, gamma0, epsilon0, list(gammas), list(epsilons))
    return value if raw else max(value, 1.0)


def candidate_distributions(n_points: int, n_random: int = 32, seed: int = 0) -> list:
    """Point masses, uniform pairs, the uniform law and Dirichlet draws."""
    eye = np.eye(n_points)
    dists = list(eye)
    for i in range(n_points):
        for j in range(i + 1, n_points):
            dists.append((eye[i] + eye[j]) / 2)
    dists.append(np.full(n_points, 1.0 / n_points))
    rng = np.random.default_rng(seed)
    dists.extend(rng.dirichlet(np.full(n_points, 0.5), size=n_random))
    return dists


def reference_bounds(kind: str, d: int, gamma: float, c_l: float | None = None,
                     c_u: float | None = None, k_e: float = K_E) -> tuple[float, float]:
    """Closed-form ``(theta_bound, eluder_bound)`` for linear and generalized linear classes.

    ``linear``: ``(d, k_e d log(1/gamma))``.  ``glm``: with ``r = (c_u/c_l)^2``,
    ``(r d, k_e r d log(c_u/gamma))``.  ``k_e`` is a calibration constant.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if kind == "linear":
        return float(d), k_e * d * math.log(1 / gamma)
    if kind == "glm":
        if c_l is None or c_u is None or not 0 < c_l < c_u:
            raise ValueError("glm bounds need 0 < c_l < c_u")
        r = (c_u / c_l) ** 2
        return r * d, k_e * r * d * math.log(c_u / gamma)
    raise ValueError(f"unknown kind {kind!r}")


# --------------------------------------------------------------------------
# reports


@dataclass
class ComplexityReport:
    """Brute-force measures over a gamma grid, with the grid recorded.

    ``eluder``/``star`` hold the sup-over-larger-gamma values and
    ``eluder_check``/``star_check`` the per-level values.  ``theta`` maps
    ``"gamma0,epsilon0"`` to the floored estimate and ``theta_raw`` to the
    unfloored one.
    """

    f_star: int
    gammas: list
    epsilons: list
    eluder: dict = field(default_factory=dict)
    star: dict = field(default_factory=dict)
    eluder_check: dict = field(default_factory=dict)
    star_check: dict = field(default_factory=dict)
    theta: dict = field(default_factory=dict)
    theta_raw: dict = field(default_factory=dict)
    reference_bounds: dict | None = None

    def audit(self) -> list[tuple[str, bool, str]]:
        """Named checks: ordering, floor, gamma-monotonicity and the theta/star/eluder bounds."""
        out = []
        bad = [g for g in self.gammas if self.star[g] > self.eluder[g]]
        out.append(("star_number <= eluder_dimension", not bad, f"violations at {bad}"))
        low = [k for k, v in self.theta.items() if v < 1]
        out.append(("disagreement_coefficient >= 1", not low, f"violations at {low}"))
        gs = sorted(self.gammas)
        mono = all(self.eluder[a] >= self.eluder[b] and self.star[a] >= self.star[b]
                   for a, b in zip(gs, gs[1:]))
        out.append(("eluder/star nonincreasing in gamma", mono, f"grid {gs}"))
        worst_s, worst_e = [], []
        for key, th in self.theta_raw.items():
            g0 = float(key.split(",")[0])
            if g0 in self.star:
                if th > 4 * self.star[g0] ** 2 + TOL:
                    worst_s.append(key)
                if th > 4 * self.eluder[g0] + TOL:
                    worst_e.append(key)
        out.append(("theta <= 4 star^2", not worst_s, f"violations at {worst_s}"))
        out.append(("theta <= 4 eluder", not worst_e, f"violations at {worst_e}"))
        if self.reference_bounds:
            tb = self.reference_bounds["theta_bound"]
            over = [k for k, v in self.theta.items() if v > tb + TOL]
            out.append(("theta <= reference bound", not over, f"bound {tb}, violations {over}"))
        return out

    def to_text(self) -> str:
        data = asdict(self)
        for key in ("eluder", "star", "eluder_check", "star_check"):
            data[key] = {repr(g): v for g, v in data[key].items()}
        data["audit"] = [{"check": n, "ok": ok, "evidence": ev} for n, ok, ev in self.audit()]
        return json.dumps(data, indent=2, sort_keys=True)


def complexity_report(cls: FunctionClass, f_star, gammas, epsilons=None, distributions=None,
                      domain=None, reference=None, max_states: int = MAX_STATES
                      ) -> ComplexityReport:
    """Compute every measure on the grid.

    ``reference`` is an optional ``dict`` of :func:`reference_bounds` keyword
    arguments (``kind``, ``d`` and for ``glm`` ``c_l``, ``c_u``); it is
    evaluated at the smallest grid gamma.
    """
    gammas = sorted(float(g) for g in gammas)
    epsilons = sorted(float(e) for e in (gammas if epsilons is None else epsilons))
    fid = int(getattr(f_star, "id", f_star))
    dev = _deviations(cls, fid, domain)
    rep = ComplexityReport(fid, gammas, epsilons)
    for g in gammas:
        rep.eluder_check[g] = _eluder_check(dev, g, max_states)
        rep.star_check[g] = _star_check(dev, g, max_states)
    for g in gammas:
        rep.eluder[g] = max(rep.eluder_check[h] for h in gammas if h >= g)
        rep.star[g] = max(rep.star_check[h] for h in gammas if h >= g)
    if distributions is None:
        distributions = candidate_distributions(cls.n_points)
    dists = [_as_masses(d, cls.n_points) for d in distributions]
    full = _deviations(cls, fid, None)
    for g0 in gammas:
        for e0 in [0.0] + epsilons:
            key = f"{g0!r},{e0!r}"
            raw = _theta_raw(full, dists, g0, e0, gammas, epsilons)
            rep.theta_raw[key] = raw
            rep.theta[key] = max(raw, 1.0)
    if reference:
        tb, eb = reference_bounds(gamma=gammas[0], **reference)
        rep.reference_bounds = {**reference, "gamma": gammas[0], "theta_bound": tb,
                                "eluder_bound": eb}
    return rep


def load_class_file(path):
    """Read a class file: a value table plus ``key: value`` directive lines.

    Recognized directives are ``f_star`` (member id, default 0), ``gammas``
    and ``epsilons`` (comma or space separated), ``complexity``, and
    ``reference`` (``linear d`` or ``glm d c_l c_u``).
    """
    opts: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        key, value = key.strip().lower(), value.replace(",", " ").split()
        try:
            if key == "f_star":
                opts[key] = int(value[0])
            elif key in ("gammas", "epsilons"):
                opts[key] = [float(v) for v in value]
            elif key == "complexity":
                opts[key] = float(value[0])
            elif key == "reference":
                kind = value[0]
                ref = {"kind": kind, "d": int(value[1])}
                if kind == "glm":
                    ref.update(c_l=float(value[2]), c_u=float(value[3]))
                opts[key] = ref
            else:
                raise ValueError(f"unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    cls = load_table(path, complexity=opts.get("complexity"))
    return cls, opts
