"""Command line interface.

Subcommands::

    run <config>                 run every sweep point and replicate
    sweep <config>               same, but the config must declare a [sweep]
    complexity <class-file>      brute-force complexity report
    audit <config>               run and check the trace invariants
    audit mc-crosscheck <config> compare Monte Carlo and exact Chow error

Results go to ``--out`` (default ``$ABSTENTION_OUT`` or ``./results``) together
with the resolved config.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ..complexity import SearchBudgetExceeded, complexity_report, load_class_file
from .audit import audit_records, mc_crosscheck, AuditReport
from .config import ConfigError, load_config
from .runner import emit, execute

OUT_ENV = "ABSTENTION_OUT"


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    cfg = load_config(args.config, seed=args.seed)
    out = _out_dir(args)
    (out / "resolved_config.ini").write_text(cfg.to_text(), encoding="utf-8")
    return cfg, out


def cmd_run(args, require_sweep=False) -> int:
    cfg, out = _load(args)
    if require_sweep and not cfg.sweep:
        raise ConfigError("sweep needs a [sweep] section", field="sweep")
    rows = [r.row for r in execute(cfg, args.jobs, keep=False)]
    name = "results.csv" if args.format == "csv" else "summary.json"
    emit(rows, args.format, out / name)
    failed = sum(1 for r in rows if r.error)
    print(f"{len(rows)} runs ({failed} failed) -> {out / name}")
    return 0


def cmd_complexity(args) -> int:
    cls, opts = load_class_file(args.class_file)
    gammas = args.gammas or opts.get("gammas") or [0.05, 0.1, 0.2]
    report = complexity_report(cls, opts.get("f_star", 0), gammas, opts.get("epsilons"),
                               reference=opts.get("reference"))
    text = report.to_text()
    if args.out:
        out = _out_dir(args)
        (out / "complexity.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if all(ok for _, ok, _ in report.audit()) else 1


def cmd_audit(args) -> int:
    targets = list(args.targets)
    mode = "invariants"
    if targets and targets[0] == "mc-crosscheck":
        mode = targets.pop(0)
    if len(targets) != 1:
        raise ConfigError("audit takes one config path")
    args.config = targets[0]
    cfg, out = _load(args)
    records = execute(cfg, args.jobs, keep=True)
    if mode == "mc-crosscheck":
        report = AuditReport([mc_crosscheck(records, args.samples, seed=cfg.seed)])
    else:
        report = audit_records(records)
    text = report.to_text()
    (out / f"audit_{mode}.json").write_text(text + "\n", encoding="utf-8")
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: max violation {c.max_violation:.3g}"
              f" over {c.runs} runs")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abstention", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the base seed")
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV})")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("config")
    p = sub.add_parser("complexity", parents=[common])
    p.add_argument("class_file")
    p.add_argument("--gammas", type=float, nargs="+", default=None)
    p = sub.add_parser("audit", parents=[common])
    p.add_argument("targets", nargs="+", metavar="[mc-crosscheck] config")
    p.add_argument("--samples", type=int, default=100_000,
                   help="Monte Carlo draws per run for mc-crosscheck")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_run(args, require_sweep=True)
        if args.command == "complexity":
            return cmd_complexity(args)
        return cmd_audit(args)
    except (ConfigError, SearchBudgetExceeded, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
