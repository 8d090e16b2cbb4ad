"""Experiment orchestration, output and audits."""

from .audit import AuditCheck, AuditReport, audit_proper_abstention, audit_records
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import ResultRow, RunRecord, emit, execute, metrics, run_experiment, summarize

__all__ = [
    "AuditCheck",
    "AuditReport",
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "RunRecord",
    "audit_proper_abstention",
    "audit_records",
    "emit",
    "execute",
    "load_config",
    "metrics",
    "parse_config",
    "run_experiment",
    "summarize",
]
