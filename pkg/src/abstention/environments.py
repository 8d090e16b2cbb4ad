"""Piecewise-constant data-generating processes with exact error integration.

An :class:`Environment` is a :class:`~abstention.function_class.Domain` plus a
value of ``eta(x) = P(y = +1 | x)`` on every region.  Because every shipped
environment is piecewise constant, all error metrics below are finite sums
over regions; Monte Carlo estimators are provided only as cross-checks.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .function_class import Domain, FunctionClass

__all__ = [
    "ABSTAIN",
    "abstain_mass",
    "Environment",
    "TrapInstance",
    "audit_massart",
    "audit_noise_seeking_massart",
    "audit_noise_seeking_tsybakov",
    "audit_tsybakov",
    "bayes_error",
    "chow_error_exact",
    "chow_excess",
    "decision_table",
    "make_massart",
    "make_misspecified",
    "make_noise_seeking_massart",
    "make_noise_seeking_tsybakov",
    "make_trap",
    "make_tsybakov",
    "mc_chow_error",
    "optimal_chow_values",
    "pointwise_chow_excess",
    "realizable_class",
    "standard_error",
    "standard_error_after_randomization",
    "trap_class",
]

ABSTAIN = 0
TSYBAKOV_GRID = np.round(np.arange(1, 51) / 100, 2)
MARGIN_LEVELS = np.arange(1, 11) / 20


@dataclass(frozen=True)
class Environment:
    domain: Domain
    eta: np.ndarray
    noise: dict = field(default_factory=dict)
    truth_id: int | None = None
    best_id: int | None = None
    tags: tuple = ()
    name: str = ""

    def __post_init__(self) -> None:
        eta = np.asarray(self.eta, dtype=float).copy()
        if eta.shape != (self.domain.size,):
            raise ValueError("eta needs one value per region")
        if np.any(eta < 0) or np.any(eta > 1) or not np.all(np.isfinite(eta)):
            raise ValueError("eta must lie in [0, 1]")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        if self.tags and len(self.tags) != eta.size:
            raise ValueError("one tag per region")

    @property
    def masses(self) -> np.ndarray:
        return self.domain.masses

    @property
    def n_regions(self) -> int:
        return self.domain.size

    def sample(self, rng: np.random.Generator) -> tuple[int, int]:
        """One draw ``(x, y)`` with ``y`` in ``{+1, -1}``."""
        x = int(self.domain.sample(rng, 1)[0])
        y = 1 if rng.random() < self.eta[x] else -1
        return x, y

    def sample_many(self, rng: np.random.Generator, n: int):
        xs = self.domain.sample(rng, n)
        ys = np.where(rng.random(n) < self.eta[xs], 1, -1)
        return xs, ys

    def with_truth(self, truth_id: int | None) -> "Environment":
        return dataclasses.replace(self, truth_id=truth_id, best_id=truth_id)

    # serialization -------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"name: {self.name}"]
        if self.noise:
            lines.append("noise: " + " ".join(f"{k}={v}" for k, v in self.noise.items()))
        if self.truth_id is not None:
            lines.append(f"truth: {self.truth_id}")
        if self.best_id is not None:
            lines.append(f"best: {self.best_id}")
        if self.domain.edges is not None:
            lines.append("edges: " + " ".join(repr(float(e)) for e in self.domain.edges))
        lines.append("# mass eta tag")
        tags = self.tags or ("-",) * self.n_regions
        for m, e, t in zip(self.masses, self.eta, tags):
            lines.append(f"{float(m)!r} {float(e)!r} {t}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Environment":
        header: dict[str, str] = {}
        masses, etas, tags = [], [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if ":" in line:
                key, _, value = line.partition(":")
                header[key.strip()] = value.strip()
                continue
            parts = line.split()
            try:
                masses.append(float(parts[0]))
                etas.append(float(parts[1]))
            except (IndexError, ValueError):
                raise ValueError(f"line {lineno}: expected 'mass eta [tag]', got {raw!r}") from None
            tags.append(parts[2] if len(parts) > 2 else "-")
        noise = {}
        for item in header.get("noise", "").split():
            k, _, v = item.partition("=")
            noise[k] = _parse_scalar(v)
        edges = header.get("edges")
        domain = Domain(np.array(masses),
                        None if edges is None else np.array([float(e) for e in edges.split()]))
        truth = header.get("truth")
        best = header.get("best")
        return cls(domain, np.array(etas), noise=noise,
                   truth_id=None if truth is None else int(truth),
                   best_id=None if best is None else int(best),
                   tags=tuple(tags) if any(t != "-" for t in tags) else (),
                   name=header.get("name", ""))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Environment":
        return cls.from_text(Path(path).read_text())


def _parse_scalar(v: str):
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


# --------------------------------------------------------------------------
# exact error integration


def decision_table(h, n_regions: int) -> np.ndarray:
    """Decisions of ``h`` on every region, with ``0`` standing for abstention."""
    table = getattr(h, "decisions", None)
    if table is None:
        if isinstance(h, np.ndarray):
            table = h
        else:
            table = np.array([h(x) for x in range(n_regions)])
    table = np.asarray(table)
    if table.shape != (n_regions,):
        raise ValueError("classifier is not measurable on this region partition")
    if not np.all(np.isin(table, (-1, 0, 1))):
        raise ValueError("decisions must be +1, -1 or 0 (abstain)")
    return table


def bayes_error(env: Environment) -> float:
    return float(env.masses @ np.minimum(env.eta, 1.0 - env.eta))


def _mistake_prob(decisions: np.ndarray, eta: np.ndarray) -> np.ndarray:
    return np.where(decisions == 1, 1.0 - eta, eta)


def chow_error_exact(h, env: Environment, gamma: float) -> float:
    """Mistake probability where ``h`` predicts, plus ``1/2 - gamma`` where it abstains."""
    d = decision_table(h, env.n_regions)
    per_region = np.where(d == ABSTAIN, 0.5 - gamma, _mistake_prob(d, env.eta))
    return float(env.masses @ per_region)


def chow_excess(h, env: Environment, gamma: float) -> float:
    return chow_error_exact(h, env, gamma) - bayes_error(env)


def standard_error(h, env: Environment) -> float:
    d = decision_table(h, env.n_regions)
    if np.any(d == ABSTAIN):
        raise ValueError("classifier abstains; use standard_error_after_randomization")
    return float(env.masses @ _mistake_prob(d, env.eta))


def standard_error_after_randomization(h, env: Environment) -> float:
    """Error after replacing every abstention with a fair coin flip."""
    d = decision_table(h, env.n_regions)
    per_region = np.where(d == ABSTAIN, 0.5, _mistake_prob(d, env.eta))
    return float(env.masses @ per_region)


def abstain_mass(h, env: Environment) -> float:
    d = decision_table(h, env.n_regions)
    return float(env.masses[d == ABSTAIN].sum())


def pointwise_chow_excess(decisions: np.ndarray, eta: np.ndarray, gamma: float) -> np.ndarray:
    """Per-point Chow excess of a decision against the Bayes label."""
    decisions = np.asarray(decisions)
    bayes = np.minimum(eta, 1.0 - eta)
    return np.where(decisions == ABSTAIN, 0.5 - gamma, _mistake_prob(decisions, eta)) - bayes


def optimal_chow_values(env: Environment, gamma: float) -> np.ndarray:
    return np.minimum(np.minimum(env.eta, 1.0 - env.eta), 0.5 - gamma)


def mc_chow_error(h, env: Environment, gamma: float, n: int,
                  rng: np.random.Generator) -> float:
    """Monte Carlo estimate of :func:`chow_error_exact` from ``n`` fresh draws."""
    d = decision_table(h, env.n_regions)
    xs, ys = env.sample_many(rng, n)
    act = d[xs]
    loss = np.where(act == ABSTAIN, 0.5 - gamma, (act != ys).astype(float))
    return float(loss.mean())


# --------------------------------------------------------------------------
# noise-condition audits


def _margins(env: Environment) -> np.ndarray:
    return np.abs(env.eta - 0.5)


def audit_massart(env: Environment, tau0: float) -> bool:
    return float(env.masses[_margins(env) <= tau0].sum()) == 0.0


def _tsybakov_ok(env, lower, beta_exp, c, grid) -> bool:
    m = _margins(env)
    grid = TSYBAKOV_GRID if grid is None else np.asarray(grid, dtype=float)
    # the left side only jumps at region margins, so those are checked too
    taus = np.union1d(grid, m)
    taus = taus[taus > max(lower, 0.0)]
    for tau in taus:
        mass = float(env.masses[(m > lower) & (m <= tau)].sum())
        if mass > c * tau ** beta_exp + 1e-12:
            return False
    return True


def audit_tsybakov(env: Environment, beta_exp: float, c: float, grid=None) -> bool:
    """Check ``P(|eta - 1/2| <= tau) <= c tau^beta`` on a grid of ``tau``."""
    return _tsybakov_ok(env, -1.0, beta_exp, c, grid)


def audit_noise_seeking_massart(env: Environment, zeta0: float, tau0: float) -> bool:
    m = _margins(env)
    return float(env.masses[(m > zeta0) & (m <= tau0)].sum()) == 0.0


def audit_noise_seeking_tsybakov(env: Environment, zeta0: float, beta_exp: float,
                                 c: float, grid=None) -> bool:
    """Check ``P(zeta0 < |eta - 1/2| <= tau) <= c tau^beta`` for grid ``tau > zeta0``."""
    return _tsybakov_ok(env, zeta0, beta_exp, c, grid)


# --------------------------------------------------------------------------
# constructors


def _uniform_env(eta, name, noise, masses=None, tags=()):
    k = len(eta)
    masses = np.full(k, 1.0 / k) if masses is None else np.asarray(masses, dtype=float)
    edges = np.concatenate([[0.0], np.cumsum(masses)])
    edges[-1] = 1.0
    return Environment(Domain(masses, edges), np.asarray(eta), noise=noise,
                       tags=tuple(tags), name=name)


def _signed(rng, margins):
    signs = rng.choice([-1.0, 1.0], size=len(margins))
    return np.round(0.5 + signs * np.asarray(margins), 12)


def make_massart(tau0: float, region_count: int = 8, seed: int = 0) -> Environment:
    """Every region has ``|eta - 1/2|`` on the 0.05 grid and strictly above ``tau0``."""
    if not 0 < tau0 <= 0.5:
        raise ValueError("tau0 must lie in (0, 1/2]")
    levels = MARGIN_LEVELS[MARGIN_LEVELS > tau0 + 1e-12]
    if levels.size == 0:
        raise ValueError(f"no margin above tau0={tau0} fits in [0, 1]")
    rng = np.random.default_rng(seed)
    eta = _signed(rng, rng.choice(levels, size=region_count))
    env = _uniform_env(eta, "massart", {"kind": "massart", "tau0": tau0})
    if not audit_massart(env, tau0):
        raise ValueError("constructed environment violates its Massart condition")
    return env


def _ladder(total, zeta0, beta_exp, c, rungs):
    """Margins ``1/2, 1/4, ...`` above ``zeta0`` with masses saturating ``c tau^beta``."""
    taus = 0.5 * 0.5 ** np.arange(rungs)
    taus = taus[taus > zeta0]
    if taus.size == 0:
        raise ValueError("no ladder rung above zeta0")
    if total > c * taus[0] ** beta_exp + 1e-12:
        raise ValueError(f"mass {total} cannot satisfy c*tau^beta at tau={taus[0]}")
    tail = np.minimum(total, c * taus ** beta_exp)
    tail[0] = total
    masses = tail - np.append(tail[1:], 0.0)
    return taus, masses


def make_tsybakov(beta_exp: float, c: float, region_count: int = 8, seed: int = 0) -> Environment:
    """Geometric ladder of margins whose masses saturate ``c tau^beta`` at each rung."""
    if beta_exp < 0 or not c > 0:
        raise ValueError("need beta_exp >= 0 and c > 0")
    taus, masses = _ladder(1.0, 0.0, beta_exp, c, region_count)
    keep = masses > 0
    rng = np.random.default_rng(seed)
    eta = _signed(rng, taus[keep])
    env = _uniform_env(eta, "tsybakov", {"kind": "tsybakov", "beta": beta_exp, "c": c},
                       masses=masses[keep] / masses[keep].sum())
    if not audit_tsybakov(env, beta_exp, c):
        raise ValueError("constructed environment violates its Tsybakov condition")
    return env


def _hard_part(rng, zeta0, count):
    return np.round(0.5 + rng.uniform(-zeta0, zeta0, size=count), 12)


def make_noise_seeking_massart(zeta0: float, tau0: float, hard_mass: float = 0.5,
                               region_count: int = 8, seed: int = 0) -> Environment:
    """``hard_mass`` sits within ``zeta0`` of 1/2; the rest has margin above ``tau0``."""
    if not 0 <= zeta0 < tau0 <= 0.5:
        raise ValueError("need 0 <= zeta0 < tau0 <= 1/2")
    if not 0 <= hard_mass <= 1:
        raise ValueError("hard_mass must lie in [0, 1]")
    levels = MARGIN_LEVELS[MARGIN_LEVELS > tau0 + 1e-12]
    if levels.size == 0 and hard_mass < 1:
        raise ValueError(f"no margin above tau0={tau0} fits in [0, 1]")
    rng = np.random.default_rng(seed)
    n_hard = max(1, region_count // 2) if hard_mass > 0 else 0
    n_easy = region_count - n_hard if hard_mass < 1 else 0
    if hard_mass < 1 and n_easy < 1:
        raise ValueError("region_count too small for a hard and an easy part")
    eta = np.concatenate([_hard_part(rng, zeta0, n_hard),
                          _signed(rng, rng.choice(levels, size=n_easy))])
    masses = np.concatenate([np.full(n_hard, hard_mass / max(n_hard, 1)),
                             np.full(n_easy, (1 - hard_mass) / max(n_easy, 1))])
    tags = ["hard"] * n_hard + ["easy"] * n_easy
    env = _uniform_env(eta, "noise_seeking_massart",
                       {"kind": "noise_seeking_massart", "zeta0": zeta0, "tau0": tau0,
                        "hard_mass": hard_mass},
                       masses=masses, tags=tags)
    if not audit_noise_seeking_massart(env, zeta0, tau0):
        raise ValueError("constructed environment violates its noise-seeking Massart condition")
    return env


def make_noise_seeking_tsybakov(zeta0: float, beta_exp: float, c: float,
                                hard_mass: float = 0.5, region_count: int = 8,
                                seed: int = 0) -> Environment:
    if not 0 <= zeta0 < 0.5:
        raise ValueError("zeta0 must lie in [0, 1/2)")
    if beta_exp < 0 or not c > 0:
        raise ValueError("need beta_exp >= 0 and c > 0")
    rng = np.random.default_rng(seed)
    n_hard = max(1, region_count // 2)
    taus, masses = _ladder(1.0 - hard_mass, zeta0, beta_exp, c, region_count - n_hard)
    keep = masses > 0
    eta = np.concatenate([_hard_part(rng, zeta0, n_hard), _signed(rng, taus[keep])])
    masses = np.concatenate([np.full(n_hard, hard_mass / n_hard), masses[keep]])
    tags = ["hard"] * n_hard + ["easy"] * int(keep.sum())
    env = _uniform_env(eta, "noise_seeking_tsybakov",
                       {"kind": "noise_seeking_tsybakov", "zeta0": zeta0, "beta": beta_exp,
                        "c": c, "hard_mass": hard_mass},
                       masses=masses / masses.sum(), tags=tags)
    if not audit_noise_seeking_tsybakov(env, zeta0, beta_exp, c):
        raise ValueError("constructed environment violates its noise-seeking Tsybakov condition")
    return env


@dataclass(frozen=True)
class TrapInstance:
    """Two-region linear problem: a large coin-flip region and a tiny easy one.

    Features are ``phi(x) = [1, 1{x easy}]`` and the true weights are
    ``[1/2, sigma]`` with ``sigma = +-1/2``.
    """

    easy_mass: float
    sigma: float

    @property
    def features(self) -> np.ndarray:
        return np.array([[1.0, 0.0], [1.0, 1.0]])

    @property
    def theta_star(self) -> np.ndarray:
        return np.array([0.5, self.sigma])

    def linear_class(self) -> FunctionClass:
        return FunctionClass.linear(self.features, weight_bound=1.0)


def make_trap(budget: int, sigma: float | None = None,
              rng: np.random.Generator | None = None) -> tuple[TrapInstance, Environment]:
    """Easy mass ``1 / (2 budget)``; region 0 is hard (``eta = 1/2``), region 1 easy."""
    if budget < 4:
        raise ValueError("budget must be at least 4")
    if sigma is None:
        rng = np.random.default_rng() if rng is None else rng
        sigma = float(rng.choice([-0.5, 0.5]))
    if sigma not in (-0.5, 0.5):
        raise ValueError("sigma must be +1/2 or -1/2")
    p = 1.0 / (2 * budget)
    inst = TrapInstance(p, sigma)
    env = Environment(Domain.intervals([0.0, 1.0 - p, 1.0]),
                      inst.features @ inst.theta_star,
                      noise={"kind": "noise_seeking_massart", "zeta0": 0.0, "tau0": 0.25,
                             "hard_mass": 1.0 - p},
                      tags=("hard", "easy"), name="trap")
    return inst, env


def trap_class(instance: TrapInstance, step: float = 0.05) -> tuple[FunctionClass, int]:
    """Finite grid of the trap's linear class, restricted to outputs in ``[0, 1]``.

    Returns the class and the id of the member with the true weights.
    """
    n = int(round(1 / step))
    grid = np.arange(-n, n + 1) * step
    t1, t2 = np.meshgrid(grid[grid >= 0], grid, indexing="ij")
    weights = np.column_stack([t1.ravel(), t2.ravel()])
    weights = np.round(weights, 12)
    norm_ok = np.linalg.norm(weights, axis=1) <= 1.0 + 1e-12
    out = weights @ instance.features.T
    range_ok = np.all((out >= -1e-12) & (out <= 1 + 1e-12), axis=1)
    weights = weights[norm_ok & range_ok]
    truth = np.nonzero(np.all(np.isclose(weights, instance.theta_star), axis=1))[0]
    if truth.size != 1:
        raise ValueError("grid step does not contain the true weights")
    cls = FunctionClass.linear_grid(instance.features, weights)
    return cls, int(truth[0])


def realizable_class(env: Environment, n_alternatives: int = 30, seed: int = 0,
                     levels=None) -> tuple[FunctionClass, Environment]:
    """Finite class containing ``eta`` plus random alternatives on a value grid.

    Each alternative copies ``eta`` and redraws a random subset of regions from
    ``levels`` (default multiples of 0.05 other than 1/2, so no alternative
    puts a confidence bound exactly on the decision boundary where ``eta``
    is off it), so members differ from the truth on a few regions only.  The
    truth sits at a random id.
    """
    rng = np.random.default_rng(seed)
    if levels is None:
        levels = np.round(np.arange(0, 21) / 20, 12)
        levels = levels[levels != 0.5]
    levels = np.asarray(levels, dtype=float)
    k = env.n_regions
    rows = []
    while len(rows) < n_alternatives:
        row = env.eta.copy()
        n_changed = rng.integers(1, k + 1)
        idx = rng.choice(k, size=n_changed, replace=False)
        row[idx] = rng.choice(levels, size=n_changed)
        if not np.array_equal(row, env.eta):
            rows.append(row)
    truth = int(rng.integers(0, n_alternatives + 1))
    rows.insert(truth, env.eta.copy())
    return FunctionClass.finite(np.array(rows)), env.with_truth(truth)


def make_misspecified(base: Environment, cls: FunctionClass, kappa: float,
                      best_id: int | None = None,
                      direction="inward") -> tuple[Environment, FunctionClass]:
    """Shift ``eta`` by ``kappa`` on every region so that the class is off by ``kappa``.

    ``direction`` is ``"inward"`` (towards 1/2), ``"up"``, ``"down"`` or an
    array of per-region signs.  The returned environment records the member
    ``f_bar`` that was the truth before the shift.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive; use the realizable constructor for 0")
    best = base.truth_id if best_id is None else best_id
    if best is None:
        raise ValueError("base environment has no truth member to perturb around")
    fbar = cls.table[best]
    if isinstance(direction, str):
        signs = {"inward": np.where(fbar < 0.5, 1.0, -1.0),
                 "up": np.ones_like(fbar),
                 "down": -np.ones_like(fbar)}[direction]
    else:
        signs = np.sign(np.asarray(direction, dtype=float))
    eta = fbar + kappa * signs
    if np.any(eta < 0) or np.any(eta > 1):
        raise ValueError("perturbation would move eta outside [0, 1]")
    noise = dict(base.noise)
    noise["kappa"] = kappa
    env = dataclasses.replace(base, eta=eta, truth_id=None, best_id=best, noise=noise,
                              name=(base.name + "+misspecified").lstrip("+"))
    return env, cls
