"""Invariant audits over finished runs."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import environments as envs
from .runner import RunRecord

__all__ = [
    "AuditCheck",
    "AuditReport",
    "audit_randomization_identity",
    "audit_no_query_safety",
    "audit_proper_abstention",
    "audit_query_width",
    "audit_records",
    "audit_retention",
    "mc_crosscheck",
    "no_query_violations",
    "query_width_violations",
]

TOL = 1e-12


@dataclass
class AuditCheck:
    name: str
    invariant: str
    passed: bool
    runs: int
    max_violation: float
    evidence: dict = field(default_factory=dict)


@dataclass
class AuditReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: AuditCheck) -> None:
        self.checks.append(check)

    def __getitem__(self, name: str) -> AuditCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        return json.dumps({"passed": self.passed, "checks": [asdict(c) for c in self.checks]},
                          indent=2, sort_keys=True, default=_jsonable)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def _ok(records):
    return [r for r in records if not r.row.error and r.trace is not None]


# --------------------------------------------------------------------------
# trace-level checks


def query_width_violations(trace, gamma: float) -> tuple[int, float]:
    """Queried steps whose width is not above ``gamma`` (``gamma / 2`` in approx mode).

    Returns the count and the smallest queried width (``inf`` with no queries).
    """
    q = trace.qs == 1
    if not q.any():
        return 0, math.inf
    widths = trace.ucb[q] - trace.lcb[q]
    floor = gamma / 2 if trace.approx else gamma
    return int(np.count_nonzero(widths <= floor)), float(widths.min())


def no_query_violations(trace, env: envs.Environment, gamma: float) -> tuple[int, float]:
    """Unqueried steps, in phases where the reference was retained, with positive excess.

    Returns the count and the largest pointwise excess over those steps.
    """
    retained = np.array([bool(e.reference_retained) for e in trace.epochs])
    if trace.xs.size == 0:
        return 0, 0.0
    keep = (trace.qs == 0) & retained[trace.phase - 1]
    if not keep.any():
        return 0, 0.0
    xs = trace.xs[keep]
    ex = envs.pointwise_chow_excess(trace.acts[keep], env.eta[xs], gamma)
    return int(np.count_nonzero(ex > TOL)), float(ex.max())


# --------------------------------------------------------------------------
# report entries


def audit_proper_abstention(records: list[RunRecord]) -> AuditCheck:
    """Mass abstained on where ``|eta - 1/2| > gamma``, max over runs with f* retained."""
    scored = [r for r in records if not r.row.error]
    retained = [r for r in scored if r.row.fstar_retained is not False]
    worst = max((r.row.proper_abstention_violations for r in retained), default=0.0)
    worst_all = max((r.row.proper_abstention_violations for r in scored), default=0.0)
    return AuditCheck(
        "proper_abstention",
        "Proper abstention: whenever f* is in the active set, decide(x) = abstain implies "
        "eta(x) in [1/2 - gamma, 1/2 + gamma]",
        worst <= TOL, len(retained), worst,
        {"max_violation_all_runs": worst_all,
         "violating_runs": [r.row.run_id for r in retained
                            if r.row.proper_abstention_violations > TOL]})


def audit_randomization_identity(records: list[RunRecord]) -> AuditCheck:
    """``std_excess_randomized - chow_excess = gamma * abstain_mass`` on every run."""
    gaps = [abs(r.row.std_excess_randomized - r.row.chow_excess
                - r.row.gamma * r.row.abstain_mass)
            for r in records if not r.row.error]
    worst = max(gaps, default=0.0)
    return AuditCheck(
        "randomization_identity",
        "Row-level identity: std_excess_randomized - chow_excess = gamma * abstain_mass",
        worst <= TOL, len(gaps), worst)


def audit_query_width(records: list[RunRecord]) -> AuditCheck:
    runs = _ok(records)
    counts, mins = [], []
    for r in runs:
        n, w = query_width_violations(r.trace, r.config.gamma)
        counts.append(n)
        mins.append(w)
    return AuditCheck(
        "query_width",
        "Query=>width: every queried step has width > gamma (exact) or > gamma/2 (approx)",
        sum(counts) == 0, len(runs), float(sum(counts)),
        {"min_queried_width": min(mins, default=math.inf),
         "violating_runs": [r.row.run_id for r, n in zip(runs, counts) if n]})


def audit_no_query_safety(records: list[RunRecord]) -> AuditCheck:
    runs = _ok(records)
    counts, worst = [], 0.0
    for r in runs:
        n, w = no_query_violations(r.trace, r.env, r.config.gamma)
        counts.append(n)
        worst = max(worst, w)
    return AuditCheck(
        "no_query_safety",
        "No-query safety: unqueried steps with f* retained have pointwise excess <= 0",
        sum(counts) == 0, len(runs), worst,
        {"violating_steps": int(sum(counts)),
         "violating_runs": [r.row.run_id for r, n in zip(runs, counts) if n]})


def audit_retention(records: list[RunRecord], delta: float | None = None) -> AuditCheck:
    """Fraction of runs whose reference member survived every elimination, against ``1 - 2 delta``."""
    flags = [r.row.fstar_retained for r in records
             if not r.row.error and r.row.fstar_retained is not None]
    rate = sum(flags) / len(flags) if flags else 1.0
    if delta is None:
        delta = records[0].config.delta if records else 0.1
    return AuditCheck(
        "fstar_retention",
        "f* (or f-bar) retained in every epoch's active set in at least 1 - 2 delta of runs",
        rate >= 1 - 2 * delta, len(flags), max(0.0, (1 - 2 * delta) - rate),
        {"rate": rate, "threshold": 1 - 2 * delta})


def audit_records(records: list[RunRecord]) -> AuditReport:
    report = AuditReport()
    report.add(audit_proper_abstention(records))
    report.add(audit_randomization_identity(records))
    report.add(audit_query_width(records))
    report.add(audit_no_query_safety(records))
    report.add(audit_retention(records))
    errors = [r.row.run_id for r in records if r.row.error]
    report.add(AuditCheck("run_errors", "runs complete without learner errors",
                          not errors, len(records), float(len(errors)), {"runs": errors}))
    return report


def mc_crosscheck(records: list[RunRecord], samples: int, seed: int = 0,
                  z: float = 5.0) -> AuditCheck:
    """Monte Carlo Chow error against the exact value, within ``z`` standard errors."""
    rng = np.random.default_rng(seed)
    worst, detail = 0.0, []
    for r in _ok(records):
        exact = envs.chow_error_exact(r.classifier, r.env, r.config.gamma)
        est = envs.mc_chow_error(r.classifier, r.env, r.config.gamma, samples, rng)
        se = max(math.sqrt(max(exact * (1 - exact), 1e-12) / samples), 1e-12)
        score = abs(est - exact) / se
        worst = max(worst, score)
        detail.append({"run": r.row.run_id, "exact": exact, "mc": est})
    return AuditCheck(
        "mc_crosscheck",
        f"Monte Carlo Chow error within {z} standard errors of exact integration",
        worst <= z, len(detail), worst, {"samples": samples, "runs": detail})
