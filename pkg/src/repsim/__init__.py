"""Deterministic ad hoc network simulator with a local-reputation IDS.

Nodes run DSR-lite source routing; a per-node watchdog, reputation
manager and path manager detect non-cooperative neighbors, route around
them, and let inactive offenders fade back into the network.
"""

from .engine import SimResult, Simulator, run_scenario
from .metrics import MetricsReport, compute_metrics
from .reputation import (DEFAULT_PARAMS, ReputationEntry, ReputationParams,
                         ReputationTable, TrustLevel)
from .scenario import Scenario, ScenarioError, load_scenario, scenario_from_dict

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PARAMS",
    "MetricsReport",
    "ReputationEntry",
    "ReputationParams",
    "ReputationTable",
    "Scenario",
    "ScenarioError",
    "SimResult",
    "Simulator",
    "TrustLevel",
    "compute_metrics",
    "load_scenario",
    "run_scenario",
    "scenario_from_dict",
    "__version__",
]
