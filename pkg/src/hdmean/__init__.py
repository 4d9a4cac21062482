"""Tests for high-dimensional sparse mean vectors via a precision-matrix transform."""

from .bootstrap import BootstrapConfig, StatisticSpec, TestOutcome, critical_value, run_test
from .core import RngStream
from .exceptions import HDMeanError
from .onesample import dense_stat, graph_stat, hotelling, lr_exact, modified_stat, scores, t_stat, thred_stat
from .precision import PrecisionEstimate, PrecisionSpec, estimate_precision, select_lambda
from .twosample import run_two_sample_test, select_k

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "HDMeanError",
    "PrecisionEstimate",
    "PrecisionSpec",
    "RngStream",
    "StatisticSpec",
    "TestOutcome",
    "critical_value",
    "dense_stat",
    "estimate_precision",
    "graph_stat",
    "hotelling",
    "lr_exact",
    "modified_stat",
    "run_test",
    "run_two_sample_test",
    "scores",
    "select_k",
    "select_lambda",
    "t_stat",
    "thred_stat",
    "__version__",
]
