"""Seeded experiment execution, result rows and output files."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .. import environments as envs
from ..function_class import FunctionClass, load_table
from ..learners import (
    AlgoConfig,
    run_alg1,
    run_alg2,
    run_alg3,
    run_passive,
    run_uncertainty_baseline,
)
from .config import ExperimentConfig

__all__ = [
    "ResultRow",
    "RunRecord",
    "build_problem",
    "emit",
    "execute",
    "metrics",
    "run_experiment",
    "run_seed",
    "summarize",
]


@dataclass
class ResultRow:
    run_id: str
    seed: int
    algorithm: str
    epsilon: float
    gamma: float
    delta: float
    T: int
    queries: int
    chow_excess: float
    std_excess_randomized: float
    abstain_mass: float
    proper_abstention_violations: float
    fstar_retained: bool | None
    wall_ms: float
    error: str = ""


@dataclass
class RunRecord:
    """A row plus everything needed to audit it."""

    row: ResultRow
    sweep_index: int
    replicate: int
    config: AlgoConfig
    env: envs.Environment | None = None
    classifier: object = None
    trace: object = None


def run_seed(base: int, sweep_index: int, replicate: int) -> int:
    """64-bit run seed hashed from ``(base, sweep_index, replicate)``."""
    ss = np.random.SeedSequence([base, sweep_index, replicate])
    return int(ss.generate_state(1, np.uint64)[0])


def _sub_seed(spec: dict, rng: np.random.Generator) -> int:
    return spec["seed"] if "seed" in spec else int(rng.integers(2 ** 31))


def build_problem(env_spec: dict, class_spec: dict, algo: AlgoConfig,
                  rng: np.random.Generator):
    """Construct ``(environment, class)`` from config sections.

    Sections without an explicit ``seed`` draw their construction seed from
    ``rng``, so such environments vary across replicates.
    """
    kind = env_spec["kind"]
    regions = env_spec.get("regions", 8)
    env_seed = _sub_seed(env_spec, rng)
    cls_seed = _sub_seed(class_spec, rng)
    if kind == "trap":
        budget = env_spec.get("budget", algo.budget)
        if budget is None:
            raise ValueError("trap environment needs a budget")
        inst, env = envs.make_trap(budget, env_spec.get("sigma"),
                                   np.random.default_rng(env_seed))
        cls, truth = envs.trap_class(inst, class_spec.get("step", 0.05))
        env = env.with_truth(truth)
    else:
        if kind == "massart":
            env = envs.make_massart(env_spec["tau0"], regions, env_seed)
        elif kind == "tsybakov":
            env = envs.make_tsybakov(env_spec["beta"], env_spec["c"], regions, env_seed)
        elif kind == "noise_seeking_massart":
            env = envs.make_noise_seeking_massart(env_spec["zeta0"], env_spec["tau0"],
                                                  env_spec.get("hard_mass", 0.5), regions,
                                                  env_seed)
        elif kind == "noise_seeking_tsybakov":
            env = envs.make_noise_seeking_tsybakov(env_spec["zeta0"], env_spec["beta"],
                                                   env_spec["c"], env_spec.get("hard_mass", 0.5),
                                                   regions, env_seed)
        elif kind == "file":
            env = envs.Environment.load(env_spec["path"])
        else:
            raise ValueError(f"unknown environment kind {kind!r}")
        ckind = class_spec.get("kind", "file" if kind == "file" else "realizable")
        if ckind == "file":
            cls = load_table(class_spec["path"], class_spec.get("complexity"))
        elif ckind == "realizable":
            cls, env = envs.realizable_class(env, class_spec.get("alternatives", 30), cls_seed)
        else:
            raise ValueError(f"class kind {ckind!r} needs a trap environment")
    if "complexity" in class_spec and cls.kind == "finite":
        cls.complexity = float(class_spec["complexity"])
    if env_spec.get("kappa"):
        env, cls = envs.make_misspecified(env, cls, env_spec["kappa"],
                                          direction=env_spec.get("direction", "inward"))
    return env, cls


def metrics(h, env: envs.Environment, gamma: float) -> dict:
    """Exact Chow/standard excess, abstention mass and proper-abstention violations."""
    bayes = envs.bayes_error(env)
    dec = envs.decision_table(h, env.n_regions)
    wrong = (dec == envs.ABSTAIN) & (np.abs(env.eta - 0.5) > gamma)
    return {
        "chow_excess": envs.chow_error_exact(h, env, gamma) - bayes,
        "std_excess_randomized": envs.standard_error_after_randomization(h, env) - bayes,
        "abstain_mass": envs.abstain_mass(h, env),
        "proper_abstention_violations": float(env.masses[wrong].sum()),
    }


def _run_one(cfg: ExperimentConfig, sweep_index: int, replicate: int, point: AlgoConfig,
             keep: bool) -> RunRecord:
    seed = run_seed(cfg.seed, sweep_index, replicate)
    run_id = f"s{sweep_index}-r{replicate}"
    nan = float("nan")
    row = ResultRow(run_id, seed, cfg.algorithm, point.epsilon, point.gamma, point.delta,
                    0, 0, nan, nan, nan, nan, None, 0.0)
    record = RunRecord(row, sweep_index, replicate, point)
    try:
        env_rng, run_rng = np.random.default_rng(seed).spawn(2)
        env, cls = build_problem(cfg.environment, cfg.function_class, point, env_rng)
        algo = cfg.algorithm
        if algo == "alg1":
            h, trace = run_alg1(env, cls, point, run_rng)
        elif algo == "alg2":
            h, trace = run_alg2(env, cls, point, run_rng)
        elif algo == "alg3":
            h, trace = run_alg3(env, cls, point, run_rng)
        elif algo == "uncertainty":
            h, trace = run_uncertainty_baseline(env, cls, point.budget, point.delta, run_rng)
        else:
            h, trace = run_passive(env, cls, point, run_rng)
        for key, value in metrics(h, env, point.gamma).items():
            setattr(row, key, value)
        row.T = trace.T
        row.queries = trace.queries
        row.fstar_retained = trace.reference_retained
        row.wall_ms = round(trace.wall_ms, 3) if cfg.timing else 0.0
        if keep:
            record.env, record.classifier, record.trace = env, h, trace
    except Exception as exc:  # recorded per row so sweeps complete
        row.error = f"{type(exc).__name__}: {exc}"
    return record


def _task(args):
    return _run_one(*args)


def execute(cfg: ExperimentConfig, jobs: int = 1, keep: bool = True) -> list[RunRecord]:
    """Run every sweep point and replicate; records come back in (sweep, replicate) order."""
    tasks = [(cfg, i, r, point, keep)
             for i, point in enumerate(cfg.points()) for r in range(cfg.replicates)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        records = [_task(t) for t in tasks]
    return sorted(records, key=lambda r: (r.sweep_index, r.replicate))


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    return [r.row for r in execute(cfg, jobs, keep=False)]


# --------------------------------------------------------------------------
# output

FIELDS = [f.name for f in fields(ResultRow)]
NUMERIC = ["epsilon", "gamma", "delta", "T", "queries", "chow_excess",
           "std_excess_randomized", "abstain_mass", "proper_abstention_violations", "wall_ms"]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _stats(values) -> dict:
    a = np.array([v for v in values if not (isinstance(v, float) and math.isnan(v))], dtype=float)
    if a.size == 0:
        return {"mean": None, "std": None, "min": None, "max": None}
    # population convention: divide by n
    return {"mean": float(a.mean()), "std": float(a.std(ddof=0)),
            "min": float(a.min()), "max": float(a.max())}


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Per sweep point: mean, population std, min and max of each numeric column."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(row.run_id.split("-")[0], []).append(row)
    out = []
    for point, members in groups.items():
        first = members[0]
        retained = [r.fstar_retained for r in members if r.fstar_retained is not None]
        out.append({
            "sweep_point": point,
            "algorithm": first.algorithm,
            "runs": len(members),
            "errors": sum(1 for r in members if r.error),
            "fstar_retained_rate": (sum(retained) / len(retained)) if retained else None,
            "columns": {c: _stats([getattr(r, c) for r in members]) for c in NUMERIC},
        })
    return out


def emit(rows: list[ResultRow], format: str = "csv", path=None) -> str:
    """Write rows as CSV (header plus one line per row) or a JSON summary.

    Returns the text; also writes it to ``path`` when given.
    """
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FIELDS)
        for row in rows:
            writer.writerow([_cell(v) for v in astuple(row)])
        text = buf.getvalue()
    elif format in ("json", "json-summary"):
        text = json.dumps(summarize(rows), indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown format {format!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
