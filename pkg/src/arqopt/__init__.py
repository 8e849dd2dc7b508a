"""Optimal randomized transmit/drop policies for interfering ARQ sources.

Typical use::

    from arqopt import load_scenario, solve_point
    s = load_scenario("fig1")
    ps = solve_point(s)
    ps.result.objective, ps.result.policy
"""

from .costs import (CostFunction, Event, Metric, UndefinedMetricError, builtin_cost,
                    event_cost, metric_value, named_metric)
from .kernels import BACKEND
from .lfp import (LfpProblem, OccupancyMeasure, Policy, assemble, brute_force_reference,
                  charnes_cooper, extract_policy, predicted_metrics, recover, solve_lfp,
                  stationary_distribution)
from .lp import LpProblem, LpSolution, solve, verify
from .model import Model, NetworkConfig, enumerate_states, legal_actions
from .scenario import Scenario, dump_scenario, load_scenario
from .sim import SimConfig, empirical_metric, renewal_counts, simulate
from .sweep import ResultRow, dump_policy_map, run_sweep, solve_point

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CostFunction", "Event", "LfpProblem", "LpProblem", "LpSolution", "Metric",
    "Model", "NetworkConfig", "OccupancyMeasure", "Policy", "ResultRow", "Scenario",
    "SimConfig", "UndefinedMetricError", "assemble", "brute_force_reference",
    "builtin_cost", "charnes_cooper", "dump_policy_map", "dump_scenario", "empirical_metric",
    "enumerate_states", "event_cost", "extract_policy", "legal_actions", "load_scenario",
    "metric_value", "named_metric", "predicted_metrics", "recover", "renewal_counts",
    "run_sweep", "simulate", "solve", "solve_lfp", "solve_point", "stationary_distribution",
    "verify",
]
