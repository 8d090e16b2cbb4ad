"""Regression classes over a finite domain.

Every domain in this package is a finite set of support points (or a partition
of ``[0, 1]`` into cells), so a *point* is always an integer index into the
domain's support.  Functions are therefore vectors over the support; linear
functions are given by a weight vector and the domain's feature matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ClampCounter",
    "Domain",
    "FunctionClass",
    "RegressionFunction",
    "evaluate",
    "induced_label",
    "load_table",
]

MASS_TOL = 1e-12


class ClampCounter:
    """Counts how often a linear output had to be clipped into ``[0, 1]``."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


@dataclass(frozen=True)
class Domain:
    """Marginal distribution over a finite support.

    Parameters
    ----------
    masses : array_like, shape (K,)
        Probability of each support point; nonnegative and summing to one.
    edges : array_like, shape (K + 1,), optional
        When given, support point ``k`` is the cell ``[edges[k], edges[k+1])``
        of the unit interval and the domain is of *interval-with-regions* kind.
    """

    masses: np.ndarray
    edges: np.ndarray | None = None

    def __post_init__(self) -> None:
        masses = np.asarray(self.masses, dtype=float).copy()
        if masses.ndim != 1 or masses.size == 0:
            raise ValueError("masses must be a non-empty vector")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise ValueError("masses must be finite and nonnegative")
        if abs(masses.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {masses.sum()!r}, expected 1")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        if self.edges is not None:
            edges = np.asarray(self.edges, dtype=float).copy()
            if edges.shape != (masses.size + 1,):
                raise ValueError("edges must have one more entry than masses")
            if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) < 0):
                raise ValueError("edges must increase from 0 to 1")
            edges.setflags(write=False)
            object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, k: int) -> "Domain":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def intervals(cls, edges) -> "Domain":
        """Uniform distribution on ``[0, 1]`` cut into cells at ``edges``."""
        edges = np.asarray(edges, dtype=float)
        return cls(np.diff(edges), edges)

    @property
    def kind(self) -> str:
        return "finite-support" if self.edges is None else "interval-with-regions"

    @property
    def size(self) -> int:
        return int(self.masses.size)

    def locate(self, u: float) -> int:
        """Map a real coordinate in ``[0, 1]`` to its region index."""
        if self.edges is None:
            raise ValueError("finite-support domain has no real coordinate")
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"coordinate {u} outside [0, 1]")
        k = int(np.searchsorted(self.edges, u, side="right")) - 1
        return min(k, self.size - 1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.size, size=size, p=self.masses)


@dataclass(frozen=True, eq=False)
class RegressionFunction:
    """A member of a :class:`FunctionClass`.

    ``id`` is the row index for finite classes and ``None`` for a fitted linear
    function, which is identified by its ``weights`` instead.
    """

    owner: "FunctionClass" = field(repr=False)
    id: int | None = None
    weights: np.ndarray | None = None

    def __call__(self, x: int) -> float:
        return evaluate(self, x)

    def values(self) -> np.ndarray:
        """Values on every support point, already clipped into ``[0, 1]``."""
        return self.owner.values_of(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegressionFunction) or other.owner is not self.owner:
            return NotImplemented
        if self.id is not None or other.id is not None:
            return self.id == other.id
        return bool(np.array_equal(self.weights, other.weights))

    def __hash__(self) -> int:
        if self.id is not None:
            return hash((id(self.owner), self.id))
        return hash((id(self.owner), self.weights.tobytes()))


class FunctionClass:
    """A regression class ``F`` mapping support points into ``[0, 1]``.

    Use :meth:`finite` for a tabular class (one row of values per member) and
    :meth:`linear` for ``x -> clip(<phi(x), w>, 0, 1)`` with ``||w||_2 <= R``.
    ``complexity`` stands in for ``log |F|`` (finite) or the pseudo-dimension
    (linear, default ``d + 1``).
    """

    def __init__(self, kind, *, table=None, features=None, weight_bound=None,
                 complexity=None, weight_grid=None):
        self.kind = kind
        self.clamps = ClampCounter()
        self.table = None
        self.features = None
        self.weight_bound = None
        self.weight_grid = None
        if kind == "finite":
            table = np.asarray(table, dtype=float)
            if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
                raise ValueError("finite class needs a (members, points) table")
            if not np.all(np.isfinite(table)):
                raise ValueError("table entries must be finite")
            clipped = np.clip(table, 0.0, 1.0)
            self.clamps.add(np.count_nonzero(clipped != table))
            clipped.setflags(write=False)
            self.table = clipped
            if weight_grid is not None:
                self.weight_grid = np.asarray(weight_grid, dtype=float)
            default = max(np.log(table.shape[0]), np.log(2.0))
        elif kind == "linear":
            features = np.asarray(features, dtype=float)
            if features.ndim != 2 or features.shape[1] < 1:
                raise ValueError("features must be a (points, d) matrix")
            if not np.all(np.isfinite(features)):
                raise ValueError("feature vectors must have finite entries")
            if weight_bound is None or not weight_bound > 0:
                raise ValueError("weight_bound must be positive")
            features = features.copy()
            features.setflags(write=False)
            self.features = features
            self.weight_bound = float(weight_bound)
            default = features.shape[1] + 1.0
        else:
            raise ValueError(f"unknown class kind {kind!r}")
        self.complexity = float(default if complexity is None else complexity)
        if not self.complexity > 0:
            raise ValueError("complexity must be positive")

    @classmethod
    def finite(cls, table, complexity=None) -> "FunctionClass":
        return cls("finite", table=table, complexity=complexity)

    @classmethod
    def linear(cls, features, weight_bound, complexity=None) -> "FunctionClass":
        return cls("linear", features=features, weight_bound=weight_bound,
                   complexity=complexity)

    @classmethod
    def linear_grid(cls, features, weights, complexity=None) -> "FunctionClass":
        """Finite class made of the linear functions with the given weights."""
        features = np.asarray(features, dtype=float)
        weights = np.atleast_2d(np.asarray(weights, dtype=float))
        table = weights @ features.T
        out = cls("finite", table=table, complexity=complexity, weight_grid=weights)
        out.features = features
        return out

    @property
    def n_points(self) -> int:
        return self.table.shape[1] if self.kind == "finite" else self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        if self.kind != "finite":
            raise TypeError("a linear class has infinitely many members")
        return self.table.shape[0]

    def member(self, i: int) -> RegressionFunction:
        if self.kind != "finite":
            raise TypeError("only finite classes index members")
        if not 0 <= i < len(self):
            raise IndexError(i)
        return RegressionFunction(self, id=int(i))

    @property
    def members(self) -> list[RegressionFunction]:
        return [self.member(i) for i in range(len(self))]

    def from_weights(self, w) -> RegressionFunction:
        if self.kind != "linear":
            raise TypeError("weights only define members of a linear class")
        w = np.asarray(w, dtype=float).copy()
        if w.shape != (self.dim,):
            raise ValueError(f"weight vector has shape {w.shape}, expected ({self.dim},)")
        w.setflags(write=False)
        return RegressionFunction(self, weights=w)

    def raw_values(self, f: RegressionFunction) -> np.ndarray:
        """Unclipped linear outputs on every support point."""
        return self.features @ f.weights

    def values_of(self, f: RegressionFunction) -> np.ndarray:
        if self.kind == "finite":
            return self.table[f.id]
        raw = self.raw_values(f)
        out = np.clip(raw, 0.0, 1.0)
        self.clamps.add(np.count_nonzero(out != raw))
        return out

    def restrict(self, rows) -> "FunctionClass":
        """Finite sub-class keeping only ``rows`` (ids are renumbered)."""
        sub = FunctionClass.finite(self.table[np.asarray(rows)], complexity=self.complexity)
        sub.features = self.features
        return sub

    def __repr__(self) -> str:
        if self.kind == "finite":
            return f"FunctionClass(finite, members={len(self)}, points={self.n_points})"
        return (f"FunctionClass(linear, d={self.dim}, points={self.n_points}, "
                f"R={self.weight_bound})")


def evaluate(f: RegressionFunction, x: int) -> float:
    """Value of ``f`` at support point ``x``; linear outputs are clipped to ``[0, 1]``."""
    cls = f.owner
    if cls.kind == "finite":
        return float(cls.table[f.id, x])
    phi = cls.features[x]
    if phi.shape != f.weights.shape:
        raise ValueError(f"feature dimension {phi.shape} does not match weights {f.weights.shape}")
    raw = float(phi @ f.weights)
    if raw < 0.0 or raw > 1.0:
        cls.clamps.add(1)
        return min(max(raw, 0.0), 1.0)
    return raw


def induced_label(f: RegressionFunction, x: int) -> int:
    """``sgn(2 f(x) - 1)`` with the tie ``f(x) = 1/2`` sent to ``+1``."""
    return 1 if evaluate(f, x) >= 0.5 else -1


def load_table(path, complexity=None) -> FunctionClass:
    """Read a finite class from a whitespace/comma separated text table.

    One row per function, one column per support point.  Blank lines and
    lines starting with ``#`` are skipped.
    """
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or ":" in line:
            continue
        try:
            rows.append([float(v) for v in line.replace(",", " ").split()])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no function rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have different lengths")
    return FunctionClass.finite(np.array(rows), complexity=complexity)
