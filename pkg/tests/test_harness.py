import json
import math

import numpy as np
import pytest

from abstention.environments import make_massart
from abstention.harness.audit import audit_proper_abstention, audit_records, mc_crosscheck
from abstention.harness.cli import main
from abstention.harness.config import ConfigError, parse_config
from abstention.harness.runner import (
    FIELDS,
    ResultRow,
    RunRecord,
    emit,
    execute,
    metrics,
    run_experiment,
    run_seed,
    summarize,
)
from abstention.learners import AbstainingClassifier, AlgoConfig

MASSART = """\
[experiment]
algorithm = alg1
replicates = 3
seed = 0

[environment]
kind = massart
tau0 = 0.3
regions = 6

[class]
alternatives = 10

[algorithm]
epsilon = 0.05
gamma = 0.2
c0 = 0.1
"""

TRAP = """\
[experiment]
algorithm = uncertainty
replicates = 50
seed = 0

[environment]
kind = trap

[algorithm]
budget = 100

[sweep]
budget = 100, 200, 400
"""


def row(run_id="s0-r0", queries=0, **kw):
    base = dict(seed=1, algorithm="alg1", epsilon=0.1, gamma=0.1, delta=0.1, T=10,
                queries=queries, chow_excess=0.0, std_excess_randomized=0.0, abstain_mass=0.0,
                proper_abstention_violations=0.0, fstar_retained=True, wall_ms=0.0)
    base.update(kw)
    return ResultRow(run_id, **base)


@pytest.mark.parametrize("text, line, field", [
    ("[experiment]\nalgorithm = alg9\n[environment]\nkind = massart\n", None,
     "experiment.algorithm"),
    ("[experiment]\nalgorithm = alg1\n[environment]\nkind = massart\ntau0 = high\n", 5,
     "environment.tau0"),
    ("[experiment]\nalgorithm = alg1\n[environment]\nkind = massart\ncolour = red\n", 5,
     "environment.colour"),
    ("[experiment]\nalgorithm = alg1\n[environment]\nkind = massart\n[sweep]\ndelta = 0.1\n", 6,
     "sweep.delta"),
    ("[experiment]\nalgorithm = alg1\nreplicates = 0\n[environment]\nkind = massart\n", None,
     "experiment.replicates"),
    ("[experiment]\nalgorithm = alg3\n[environment]\nkind = massart\n[algorithm]\n"
     "epsilon = 0.2\ngamma = 0.1\n", None, "algorithm.gamma"),
    ("[experiment]\nalgorithm = uncertainty\n[environment]\nkind = trap\n", None,
     "algorithm.budget"),
    ("[experiment]\nalgorithm = alg1\n[environment]\nkind = massart\n[extra]\n", 5, "extra"),
])
def test_config_errors(text, line, field):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.field == field
    assert err.value.line == line


def test_config_roundtrip():
    cfg = parse_config(MASSART)
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert parse_config(MASSART, seed=9).seed == 9


def test_three_rows_distinct_seeds():
    rows = run_experiment(parse_config(MASSART))
    assert len(rows) == 3
    assert len({r.seed for r in rows}) == 3
    assert [r.run_id for r in rows] == ["s0-r0", "s0-r1", "s0-r2"]
    assert all(not r.error and r.queries >= 0 and 0 <= r.abstain_mass <= 1 for r in rows)
    assert rows[0].seed == run_seed(0, 0, 0)


def test_bitwise_reproducible_and_parallel_invariant():
    cfg = parse_config(MASSART)
    a = emit(run_experiment(cfg))
    b = emit(run_experiment(cfg))
    c = emit(run_experiment(cfg, jobs=2))
    assert a == b == c


def test_errors_recorded_per_row():
    text = MASSART.replace("kind = massart", "kind = file\npath = /nonexistent/env.txt")
    rows = run_experiment(parse_config(text))
    assert len(rows) == 3 and all(r.error for r in rows)
    assert emit(rows).count("\n") == 4


def test_emit_csv(tmp_path):
    assert emit([]) == ",".join(FIELDS) + "\n"
    text = emit([row(queries=q) for q in (1, 2, 3)], path=tmp_path / "r.csv")
    assert len(text.splitlines()) == 4
    assert (tmp_path / "r.csv").read_text() == text
    assert text.splitlines()[0].split(",") == FIELDS


def test_summary_population_std():
    rows = [row(f"s0-r{i}", queries=q) for i, q in enumerate((10, 12, 14))]
    (summary,) = summarize(rows)
    q = summary["columns"]["queries"]
    assert q["mean"] == 12 and q["min"] == 10 and q["max"] == 14
    assert math.isclose(q["std"], math.sqrt(8 / 3))
    parsed = json.loads(emit(rows, "json-summary"))
    assert parsed[0]["runs"] == 3
    with pytest.raises(ValueError):
        emit(rows, "xml")


def test_metrics_identity():
    records = execute(parse_config(MASSART))
    for r in records:
        gap = r.row.std_excess_randomized - r.row.chow_excess - r.row.gamma * r.row.abstain_mass
        assert abs(gap) <= 1e-12


def test_proper_abstention_audit_planted_failure():
    env = make_massart(0.3, 6, seed=0)
    n = env.n_regions
    always = AbstainingClassifier.from_bounds(np.full(n, 0.5), np.full(n, 0.5),
                                              np.full(n, 0.5), 0.2)
    m = metrics(always, env, 0.2)
    planted = RunRecord(row(proper_abstention_violations=m["proper_abstention_violations"]),
                        0, 0, AlgoConfig(gamma=0.2))
    check = audit_proper_abstention([planted])
    assert math.isclose(check.max_violation, 1.0) and not check.passed


def test_proper_abstention_audit_on_runs():
    alg1 = execute(parse_config(MASSART))
    assert audit_proper_abstention(alg1).max_violation == 0
    text = MASSART.replace("algorithm = alg1", "algorithm = uncertainty") + "budget = 50\n"
    base = execute(parse_config(text))
    assert all(r.row.abstain_mass == 0 for r in base)
    assert audit_proper_abstention(base).max_violation == 0


def test_audit_records_pass():
    report = audit_records(execute(parse_config(MASSART)))
    assert report.passed, report.to_text()
    assert report["query_width"].runs == 3


def test_mc_crosscheck():
    check = mc_crosscheck(execute(parse_config(MASSART)), samples=20_000, seed=1)
    assert check.passed and check.runs == 3


def test_trap_sweep_band():
    # Expected mean is about 0.15/B against a lower edge of 0.125/B, so with 50
    # replicates each B lands below the band by chance roughly 1 time in 4.
    rows = run_experiment(parse_config(TRAP), jobs=2)
    for summary, B in zip(summarize(rows), (100, 200, 400)):
        mean = summary["columns"]["std_excess_randomized"]["mean"]
        assert summary["errors"] == 0
        assert 1 / (8 * B) <= mean <= 1 / (2 * B), f"B={B}: mean {mean}"


def test_cli_run_and_audit(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(MASSART)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    first = (out / "results.csv").read_text()
    assert len(first.splitlines()) == 4
    assert parse_config((out / "resolved_config.ini").read_text()) == parse_config(MASSART)
    assert main(["run", str(cfg), "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "results.csv").read_text() == first
    assert main(["run", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    assert (out / "results.csv").read_text() != first

    env_out = tmp_path / "from_env"
    monkeypatch.setenv("ABSTENTION_OUT", str(env_out))
    assert main(["run", str(cfg), "--format", "json"]) == 0
    assert json.loads((env_out / "summary.json").read_text())[0]["runs"] == 3

    assert main(["audit", str(cfg)]) == 0
    assert main(["audit", "mc-crosscheck", str(cfg), "--samples", "5000"]) == 0
    assert main(["sweep", str(cfg)]) == 2
    printed = capsys.readouterr()
    assert "PASS proper_abstention" in printed.out
    assert "[sweep]" in printed.err


def test_cli_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[experiment]\nalgorithm = alg1\n[environment]\nkind = massart\ntau0 = x\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 2
    assert "line 5" in capsys.readouterr().err


def test_cli_complexity(tmp_path, capsys):
    path = tmp_path / "cls.txt"
    path.write_text("f_star: 0\ngammas: 0.1 0.2\n0.5 0.5 0.5\n0.9 0.5 0.1\n0.5 0.8 0.5\n")
    assert main(["complexity", str(path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["gammas"] == [0.1, 0.2]
    assert all(entry["ok"] for entry in report["audit"])
