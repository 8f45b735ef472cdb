"""Deployment reliability control: drift-triggered interventions and cost-volatility trade-offs."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, InvariantError, RelctlError, UndefinedMetricError
from .metrics import ReliabilityState, brier, downside_volatility, ece, roc_auc, volatility_l1
from .policy import Action, PolicySpec, RunConfig, ThresholdConfig, run_deployment, summarize

__all__ = [
    "Action",
    "ConfigError",
    "DataError",
    "InvariantError",
    "PolicySpec",
    "RelctlError",
    "ReliabilityState",
    "RunConfig",
    "ThresholdConfig",
    "UndefinedMetricError",
    "brier",
    "downside_volatility",
    "ece",
    "roc_auc",
    "run_deployment",
    "summarize",
    "volatility_l1",
]
