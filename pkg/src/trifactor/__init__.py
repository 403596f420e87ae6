"""Trust-aware secure routing simulator for mobile ad hoc networks.

Combines a watchdog-based direct trust factor, neighbour reputation reports
and per-packet HMAC tags on top of AODV or DSR, with a deterministic
discrete-event kernel for reproducible Baseline vs TripleFactor experiments.
"""

from .harness import ParseError, ScenarioConfig, ValidationError, parse_scenario, run_experiment
from .metrics import MetricsReport
from .network import BASELINE, TRIPLE_FACTOR, RunSpec, simulate

__version__ = "0.1.0"

__all__ = [
    "BASELINE", "TRIPLE_FACTOR", "MetricsReport", "ParseError", "RunSpec",
    "ScenarioConfig", "ValidationError", "parse_scenario", "run_experiment", "simulate",
]
