"""Active learning with abstention through regression oracles."""

from .environments import Environment
from .function_class import Domain, FunctionClass, RegressionFunction
from .learners import AbstainingClassifier, AlgoConfig, RunTrace
from .oracle import ConfidenceInterval, QueryHistory

__all__ = [
    "AbstainingClassifier",
    "AlgoConfig",
    "ConfidenceInterval",
    "Domain",
    "Environment",
    "FunctionClass",
    "QueryHistory",
    "RegressionFunction",
    "RunTrace",
]

__version__ = "0.1.0"
