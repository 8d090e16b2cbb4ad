"""Experiment configuration files.

A config is sectioned ``key = value`` text::

    [experiment]
    algorithm = alg1
    replicates = 3
    seed = 0

    [environment]
    kind = massart
    tau0 = 0.3

    [class]
    kind = realizable
    alternatives = 30

    [algorithm]
    epsilon = 0.01
    gamma = 0.3
    c0 = 0.1

    [sweep]
    epsilon = 0.01, 0.001

Every sweep axis is a comma separated list; the sweep is their product.
Errors carry the offending line and ``section.key``.
"""

from __future__ import annotations

import configparser
import itertools
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..learners import AlgoConfig

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]

ALGORITHMS = ("alg1", "alg2", "alg3", "uncertainty", "passive")
ENV_KINDS = ("massart", "tsybakov", "noise_seeking_massart", "noise_seeking_tsybakov",
             "trap", "file")
CLASS_KINDS = ("realizable", "trap_grid", "file")
SWEEP_AXES = ("epsilon", "gamma", "budget", "T")

_ENV_KEYS = {
    "kind": str, "tau0": float, "beta": float, "c": float, "zeta0": float,
    "hard_mass": float, "regions": int, "seed": int, "budget": int, "sigma": float,
    "path": str, "kappa": float, "direction": str,
}
_CLASS_KEYS = {"kind": str, "alternatives": int, "seed": int, "step": float, "path": str,
               "complexity": float}
_ALGO_KEYS = {"epsilon": float, "gamma": float, "delta": float, "T": int, "c0": float,
              "k_T": float, "mode": str, "budget": int}
_EXP_KEYS = {"algorithm": str, "replicates": int, "seed": int, "name": str, "timing": bool}


class ConfigError(ValueError):
    """A config problem, located by line number and ``section.key``."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        self.message = message
        where = ", ".join(p for p in (f"line {line}" if line else "", field or "") if p)
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    algo: AlgoConfig
    environment: dict = field(default_factory=dict)
    function_class: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    replicates: int = 1
    seed: int = 0
    name: str = "experiment"
    timing: bool = False

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}", field="experiment.algorithm")
        if self.replicates < 1:
            raise ConfigError("replicate count must be at least 1", field="experiment.replicates")
        for point in self.points():
            _check_point(self.algorithm, point)

    def points(self) -> list[AlgoConfig]:
        """One :class:`AlgoConfig` per sweep point, in sweep-index order."""
        axes = [a for a in SWEEP_AXES if a in self.sweep]
        out = []
        for combo in itertools.product(*(self.sweep[a] for a in axes)):
            try:
                out.append(replace(self.algo, **dict(zip(axes, combo))))
            except ValueError as exc:
                raise ConfigError(f"sweep point {dict(zip(axes, combo))}: {exc}",
                                  field="sweep") from None
        return out

    def to_text(self) -> str:
        """The resolved config, defaults filled in, in the same file format."""
        parser = configparser.ConfigParser()
        parser.optionxform = str
        parser["experiment"] = {"algorithm": self.algorithm, "replicates": str(self.replicates),
                                "seed": str(self.seed), "name": self.name,
                                "timing": "yes" if self.timing else "no"}
        parser["environment"] = {k: str(v) for k, v in self.environment.items()}
        parser["class"] = {k: str(v) for k, v in self.function_class.items()}
        parser["algorithm"] = {f.name: str(getattr(self.algo, f.name))
                               for f in fields(AlgoConfig)
                               if getattr(self.algo, f.name) is not None}
        parser["sweep"] = {k: ", ".join(map(str, v)) for k, v in self.sweep.items()}
        lines = []
        for sec in parser.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in parser[sec].items())
            lines.append("")
        return "\n".join(lines)


def _check_point(algorithm: str, cfg: AlgoConfig) -> None:
    if algorithm == "alg3" and not cfg.gamma > cfg.epsilon:
        raise ConfigError("alg3 needs gamma > epsilon at every sweep point", field="algorithm.gamma")
    if algorithm == "uncertainty" and cfg.budget is None:
        raise ConfigError("the uncertainty baseline needs a budget", field="algorithm.budget")


def _locate(text: str, section: str, key: str | None) -> int | None:
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[\s*([^\]]+?)\s*\]", s)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return n
            continue
        if current == section and key and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return n
    return None


def _convert(kind, raw: str):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    return kind(raw.strip())


def _section(parser, text, name, schema, required=False) -> dict:
    if not parser.has_section(name):
        if required:
            raise ConfigError(f"missing section [{name}]", field=name)
        return {}
    out = {}
    for key, raw in parser.items(name):
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", _locate(text, name, key), f"{name}.{key}")
        try:
            out[key] = _convert(schema[key], raw)
        except ValueError as exc:
            raise ConfigError(str(exc), _locate(text, name, key), f"{name}.{key}") from None
    return out


def parse_config(text: str, seed: int | None = None) -> ExperimentConfig:
    """Parse config text; ``seed`` overrides ``[experiment] seed``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    unknown = set(parser.sections()) - {"experiment", "environment", "class", "algorithm", "sweep"}
    if unknown:
        sec = sorted(unknown)[0]
        raise ConfigError(f"unknown section [{sec}]", _locate(text, sec, None), sec)
    exp = _section(parser, text, "experiment", _EXP_KEYS, required=True)
    env = _section(parser, text, "environment", _ENV_KEYS, required=True)
    cls = _section(parser, text, "class", _CLASS_KEYS)
    algo = _section(parser, text, "algorithm", _ALGO_KEYS)
    sweep = {}
    if parser.has_section("sweep"):
        for key, raw in parser.items("sweep"):
            line = _locate(text, "sweep", key)
            if key not in SWEEP_AXES:
                raise ConfigError(f"cannot sweep over {key!r}", line, f"sweep.{key}")
            try:
                values = [_convert(_ALGO_KEYS[key], v) for v in raw.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(str(exc), line, f"sweep.{key}") from None
            if not values:
                raise ConfigError("empty sweep axis", line, f"sweep.{key}")
            sweep[key] = values
    if "algorithm" not in exp:
        raise ConfigError("missing key 'algorithm'", _locate(text, "experiment", None),
                          "experiment.algorithm")
    if env.get("kind") not in ENV_KINDS:
        raise ConfigError(f"environment kind must be one of {ENV_KINDS}",
                          _locate(text, "environment", "kind"), "environment.kind")
    if cls.get("kind", "realizable") not in CLASS_KINDS:
        raise ConfigError(f"class kind must be one of {CLASS_KINDS}",
                          _locate(text, "class", "kind"), "class.kind")
    try:
        algo_cfg = AlgoConfig(**algo)
    except ValueError as exc:
        raise ConfigError(str(exc), _locate(text, "algorithm", None), "algorithm") from None
    if seed is not None:
        exp["seed"] = seed
    return ExperimentConfig(
        algorithm=exp["algorithm"], algo=algo_cfg, environment=env,
        function_class=cls, sweep=sweep, replicates=exp.get("replicates", 1),
        seed=exp.get("seed", 0), name=exp.get("name", "experiment"),
        timing=exp.get("timing", False))


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return parse_config(text, seed)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc.message}", exc.line, exc.field) from None
