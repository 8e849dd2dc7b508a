"""Scenario sweeps: one optimization (and optional simulation) per grid point."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lfp, sim
from .costs import Metric, UndefinedMetricError, named_metric
from .model import Model
from .scenario import Scenario

log = logging.getLogger(__name__)

PER_SOURCE = ("throughput", "energy", "delay", "delivery")
_KIND = {"throughput": "throughput", "energy": "energy", "delay": "delay",
         "delivery": "delivery_prob"}
INFEASIBLE_MARK = "infeasible"


@dataclass
class ResultRow:
    coords: tuple[float, ...]
    status: str                                 # optimal, infeasible or error
    objective: float | None = None
    per_source: dict[str, list[float]] = field(default_factory=dict)
    p_simultaneous: float | None = None
    n_randomized: int | None = None
    iterations: int | None = None
    constraints_ok: bool | None = None
    sim: dict[str, sim.Estimate] = field(default_factory=dict)
    error: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


@dataclass
class PointSolution:
    model: Model
    objective: Metric
    constraints: list[Metric]
    result: lfp.LfpResult


def solve_point(scenario: Scenario, point: Sequence[float] = (), model: Model | None = None,
                dump_path: str | None = None) -> PointSolution:
    model = model or scenario.model()
    obj, cons = scenario.metrics(model, point)
    res = lfp.solve_lfp(lfp.assemble(model, obj, cons), dump_path=dump_path)
    return PointSolution(model, obj, cons, res)


def source_metrics(model: Model) -> dict[str, list[Metric]]:
    return {k: [named_metric(_KIND[k], [s], model) for s in range(1, model.S + 1)]
            for k in PER_SOURCE}


def _safe(f) -> float:
    try:
        return float(f())
    except UndefinedMetricError:
        return math.nan


def point_seed(base: int, index: int) -> int:
    """Simulation seed of grid point ``index``."""
    return int(np.random.SeedSequence([base, index]).generate_state(1, np.uint64)[0])


def evaluate_point(scenario: Scenario, point: Sequence[float], index: int = 0,
                   model: Model | None = None, simulate: bool | None = None,
                   n_slots: int | None = None, seed: int | None = None) -> ResultRow:
    """Solve one grid point; failures are captured into the row."""
    row = ResultRow(tuple(point), "error")
    try:
        ps = solve_point(scenario, point, model)
    except Exception as e:  # captured per point, the sweep goes on
        log.warning("point %s failed: %s", point, e)
        row.error = f"{type(e).__name__}: {e}"
        return row
    res, model = ps.result, ps.model
    row.iterations = res.lp_solution.iterations
    if not res.feasible:
        row.status = "infeasible"
        return row
    row.status = "optimal"
    omega = res.omega
    row.objective = res.objective
    for k, mets in source_metrics(model).items():
        row.per_source[k] = [_safe(lambda m=m: m.ratio(omega)) for m in mets]
    both = model.pair_T.sum(axis=1) >= 2
    row.p_simultaneous = float(omega.values[both].sum())
    row.n_randomized = len(res.policy.randomized_states())
    row.constraints_ok = all(c.value(omega) <= c.bound + lfp.CONSTRAINT_SLACK
                             for c in ps.constraints)
    if not row.constraints_ok:
        log.warning("point %s: constraint re-check failed", point)

    spec = scenario.simulation
    if spec.enabled if simulate is None else simulate:
        cfg = sim.SimConfig(n_slots or spec.n_slots, point_seed(spec.seed if seed is None else seed, index),
                            min(spec.burn_in, (n_slots or spec.n_slots) // 10), spec.n_batches)
        acc = sim.simulate(model, res.policy, cfg)
        row.sim["objective"] = _estimate(acc, ps.objective)
        for k, mets in source_metrics(model).items():
            for s, m in enumerate(mets, start=1):
                row.sim[f"{k}_{s}"] = _estimate(acc, m)
    return row


def _estimate(acc, m: Metric) -> sim.Estimate:
    try:
        return sim.empirical_metric(acc, m)
    except UndefinedMetricError:
        return sim.Estimate(math.nan, math.nan)


_WORKER: dict = {}


def _init_worker(scenario: Scenario) -> None:
    _WORKER["scenario"] = scenario
    _WORKER["model"] = scenario.model()


def _work(args) -> ResultRow:
    index, point, simulate, n_slots, seed = args
    return evaluate_point(_WORKER["scenario"], point, index, _WORKER["model"],
                          simulate, n_slots, seed)


def run_sweep(scenario: Scenario, simulate: bool | None = None, jobs: int | None = None,
              n_slots: int | None = None, seed: int | None = None) -> list[ResultRow]:
    """Evaluate every grid point; rows come back in grid order."""
    grid = scenario.grid()
    tasks = [(i, p, simulate, n_slots, seed) for i, p in enumerate(grid)]
    jobs = jobs or scenario.jobs
    if jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(scenario,)) as ex:
            return list(ex.map(_work, tasks))
    _init_worker(scenario)
    return [_work(t) for t in tasks]


# -- output ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def result_columns(scenario: Scenario) -> list[str]:
    S = scenario.network.S
    cols = [f"bound_{a.constraint}" for a in scenario.axes]
    cols += ["status", "objective"]
    cols += [f"{k}_{s}" for k in PER_SOURCE for s in range(1, S + 1)]
    cols += ["p_simultaneous", "n_randomized", "iterations", "constraints_ok"]
    cols += ["sim_objective", "sim_objective_se"]
    for k in PER_SOURCE:
        for s in range(1, S + 1):
            cols += [f"sim_{k}_{s}", f"sim_{k}_{s}_se"]
    cols.append("error")
    return cols


def write_results(rows: Sequence[ResultRow], scenario: Scenario, path) -> None:
    """``results.csv``; the objective of infeasible points reads ``infeasible``."""
    S = scenario.network.S
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(result_columns(scenario))
        for r in rows:
            line = [_fmt(c) for c in r.coords]
            line += [r.status, _fmt(r.objective) if r.feasible else INFEASIBLE_MARK
                     if r.status == "infeasible" else ""]
            for k in PER_SOURCE:
                vals = r.per_source.get(k, [None] * S)
                line += [_fmt(v) for v in vals]
            line += [_fmt(r.p_simultaneous), _fmt(r.n_randomized), _fmt(r.iterations),
                     "" if r.constraints_ok is None else int(r.constraints_ok)]
            names = ["objective"] + [f"{k}_{s}" for k in PER_SOURCE for s in range(1, S + 1)]
            for n in names:
                e = r.sim.get(n)
                line += ["", ""] if e is None else [_fmt(e.value), _fmt(e.se)]
            line.append(r.error)
            w.writerow(line)


def write_objective_map(rows: Sequence[ResultRow], scenario: Scenario, path) -> None:
    """2-D sweeps: objective matrix, first axis down, second axis across."""
    if len(scenario.axes) != 2:
        raise ValueError("objective map needs a two-axis sweep")
    a1, a2 = scenario.axes
    cells = {r.coords: r for r in rows}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"{a1.constraint} \\ {a2.constraint}", *(_fmt(v) for v in a2.values)])
        for v1 in a1.values:
            line = [_fmt(v1)]
            for v2 in a2.values:
                r = cells[(v1, v2)]
                line.append(_fmt(r.objective) if r.feasible else
                            INFEASIBLE_MARK if r.status == "infeasible" else "error")
            w.writerow(line)


def policy_map(policy: lfp.Policy) -> list[dict]:
    """Per joint state of a two-source network: marginal transmit
    probabilities of both sources and the simultaneous-transmit probability."""
    model = policy.model
    if model.S != 2:
        raise ValueError("policy maps are defined for two-source networks")
    t1, t2 = policy.transmit_prob(1), policy.transmit_prob(2)
    both = policy.simultaneous_prob()
    out = []
    for i, x in enumerate(model.states):
        s1, s2 = x.per_source
        out.append({"x1": s1.label(), "x2": s2.label(), "b1": s1.b, "f1": s1.f,
                    "b2": s2.b, "f2": s2.f, "p_tx1": float(t1[i]), "p_tx2": float(t2[i]),
                    "p_both": float(both[i])})
    return out


def dump_policy_map(policy: lfp.Policy, model: Model, path) -> None:
    if policy.model is not model:
        policy = lfp.Policy(model, policy.probs, policy.transient)
    rows = policy_map(policy)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
