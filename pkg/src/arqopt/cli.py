"""Command-line entry point: ``arqopt {solve,sweep,simulate,policy-map,validate}``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels, lfp, lp, sim
from .costs import UndefinedMetricError
from .scenario import Scenario, ScenarioError, bundled_names, load_scenario
from .sweep import (dump_policy_map, run_sweep, solve_point, source_metrics,
                    write_objective_map, write_results, point_seed)

log = logging.getLogger("arqopt")

SIM_SE_FACTOR = 3.0
TV_LIMIT = 0.02
TOL = 1e-8


def _point(s: Scenario, text: str | None) -> tuple[float, ...]:
    """``--at`` value: one bound per sweep axis, comma separated.  Without it
    the constraint bounds written in the scenario are used."""
    if text is None:
        return ()
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != len(s.axes):
        raise ScenarioError(f"--at needs {len(s.axes)} value(s), one per sweep axis")
    return vals


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sim_config(s: Scenario, args, index: int = 0) -> sim.SimConfig:
    spec = s.simulation
    n = args.slots or spec.n_slots
    seed = spec.seed if args.seed is None else args.seed
    return sim.SimConfig(n, point_seed(seed, index), min(spec.burn_in, n // 10), spec.n_batches,
                         record_trace=getattr(args, "trace", False))


def _write_metric_summary(path: Path, ps) -> None:
    omega = ps.result.omega
    mets = [ps.objective, *ps.constraints]
    for ms in source_metrics(ps.model).values():
        mets += ms
    rep = lfp.predicted_metrics(omega, mets)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "ratio", "value", "bound", "satisfied"])
        for r in rep.values():
            w.writerow([r.name, "" if r.ratio is None else repr(r.ratio),
                        "" if r.value is None else repr(r.value),
                        "" if r.bound is None else repr(r.bound),
                        "" if r.satisfied is None else int(r.satisfied)])


# -- verbs -------------------------------------------------------------------

def cmd_solve(args) -> int:
    s = load_scenario(args.config)
    point = _point(s, args.at)
    t0 = time.perf_counter()
    ps = solve_point(s, point, dump_path=args.dump_tableau)
    dt = time.perf_counter() - t0
    res = ps.result
    if not res.feasible:
        print(f"{s.name}: infeasible ({res.lp_solution.iterations} pivots, {dt:.2f}s)")
        return 2
    out = _out(args)
    res.omega.to_csv(out / "occupancy.csv")
    res.policy.to_csv(out / "policy.csv")
    _write_metric_summary(out / "summary.csv", ps)
    print(f"{s.name}: objective {res.objective:.10g}, {len(res.policy.randomized_states())} "
          f"randomized states (M_c={len(ps.constraints)}), {res.lp_solution.iterations} pivots, "
          f"{dt:.2f}s")
    print(f"wrote {out / 'occupancy.csv'}, {out / 'policy.csv'}, {out / 'summary.csv'}")
    return 0


def cmd_sweep(args) -> int:
    s = load_scenario(args.config)
    simulate = False if args.no_sim else None
    t0 = time.perf_counter()
    rows = run_sweep(s, simulate=simulate, jobs=args.jobs, n_slots=args.slots, seed=args.seed)
    out = _out(args)
    write_results(rows, s, out / "results.csv")
    wrote = [out / "results.csv"]
    if len(s.axes) == 2:
        write_objective_map(rows, s, out / "objective_map.csv")
        wrote.append(out / "objective_map.csv")
    n_ok = sum(r.feasible for r in rows)
    n_err = sum(r.status == "error" for r in rows)
    print(f"{s.name}: {len(rows)} points, {n_ok} feasible, {n_err} errors, "
          f"{time.perf_counter() - t0:.2f}s")
    print("wrote " + ", ".join(str(p) for p in wrote))
    return 1 if n_err else 0


def cmd_simulate(args) -> int:
    s = load_scenario(args.config)
    point = _point(s, args.at)
    ps = solve_point(s, point)
    if not ps.result.feasible:
        print(f"{s.name}: infeasible, nothing to simulate")
        return 2
    cfg = _sim_config(s, args)
    t0 = time.perf_counter()
    acc = sim.simulate(ps.model, ps.result.policy, cfg, backend=args.backend)
    dt = time.perf_counter() - t0
    out = _out(args)
    mets = [ps.objective, *ps.constraints]
    for ms in source_metrics(ps.model).values():
        mets += ms
    with open(out / "sim_summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "predicted", "estimate", "se", "z"])
        for m in mets:
            try:
                pred, est = m.value(ps.result.omega), sim.empirical_metric(acc, m)
            except UndefinedMetricError:
                w.writerow([m.name, "", "", "", ""])
                continue
            z = (est.value - pred) / est.se if est.se > 0 else 0.0
            w.writerow([m.name, repr(pred), repr(est.value), repr(est.se), f"{z:.3f}"])
    acc.to_csv(out / "accumulator.csv")
    wrote = [out / "sim_summary.csv", out / "accumulator.csv"]
    if args.trace:
        acc.write_trace(out / "trace.csv")
        wrote.append(out / "trace.csv")
    print(f"{s.name}: {cfg.n_slots} slots ({args.backend or kernels.BACKEND} kernels) "
          f"in {dt:.2f}s, TV distance to occupancy {acc.tv_distance(ps.result.omega):.4f}")
    print("wrote " + ", ".join(str(p) for p in wrote))
    return 0


def cmd_policy_map(args) -> int:
    s = load_scenario(args.config)
    ps = solve_point(s, _point(s, args.at))
    if not ps.result.feasible:
        print(f"{s.name}: infeasible")
        return 2
    out = _out(args)
    dump_policy_map(ps.result.policy, ps.model, out / "policy_map.csv")
    print(f"wrote {out / 'policy_map.csv'}")
    return 0


class _Checks:
    def __init__(self):
        self.failed = 0

    def __call__(self, name: str, ok: bool, detail: str = "") -> None:
        if not ok:
            self.failed += 1
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))


def validate_point(s: Scenario, point, model, check: _Checks, label: str):
    ps = solve_point(s, point, model)
    res = ps.result
    if not res.feasible:
        print(f"INFO  {label}: infeasible")
        return None
    om = res.omega
    check(f"{label} occupancy sums to one", om.normalization_residual() <= TOL,
          f"{om.normalization_residual():.2e}")
    check(f"{label} balance equations", om.balance_residual() <= TOL,
          f"{om.balance_residual():.2e}")
    check(f"{label} nonnegative occupancy", bool(om.values.min() >= 0.0))
    n_rand = len(res.policy.randomized_states())
    check(f"{label} randomized states <= M_c", n_rand <= len(ps.constraints),
          f"{n_rand} <= {len(ps.constraints)}")
    gap = abs(res.objective - res.lp_solution.objective)
    check(f"{label} transform identity", gap <= TOL * max(1.0, abs(res.objective)), f"{gap:.2e}")
    rep = lp.verify(res.lp_problem, res.lp_solution)
    check(f"{label} LP optimality certificate", rep.ok, "; ".join(rep.failures))
    bad = [c.name for c in ps.constraints if c.value(om) > c.bound + lfp.CONSTRAINT_SLACK]
    check(f"{label} constraints re-checked", not bad, ", ".join(bad))
    try:
        pi = lfp.stationary_distribution(model, res.policy)
        marg = om.state_marginal()
        rec = marg > lfp.TRANSIENT_TOL
        err = float(np.abs(pi[rec] - marg[rec]).max())
        check(f"{label} stationary distribution matches occupancy", err <= TOL, f"{err:.2e}")
    except lfp.NotUnichain as e:
        check(f"{label} stationary distribution matches occupancy", False, str(e))
    return ps


def cmd_validate(args) -> int:
    s = load_scenario(args.config)
    check = _Checks()
    model = s.model()
    rows = model.P.sum(axis=1)
    check("transition rows sum to one", bool(np.abs(rows - 1.0).max() <= 1e-12),
          f"{np.abs(rows - 1.0).max():.2e}")
    check("transition probabilities nonnegative", bool(model.P.min() >= 0.0))
    n_rec = lfp.recurrent_class_count(model.kernel(lfp.Policy.uniform(model).probs))
    print(f"INFO  recurrent classes under the uniform policy: {n_rec}")

    points = [_point(s, args.at)] if args.at is not None else (s.grid() if s.axes else [()])
    solved = []
    for i, pt in enumerate(points):
        label = f"point {pt}" if pt else "base"
        ps = validate_point(s, pt, model, check, label)
        if ps is not None:
            solved.append((i, pt, ps))

    if not args.no_sim and solved:
        i, pt, ps = solved[len(solved) // 2]
        cfg = _sim_config(s, args, i)
        acc = sim.simulate(model, ps.result.policy, cfg)
        tv = acc.tv_distance(ps.result.omega)
        check(f"simulation at {pt or 'base'}: state-action frequencies", tv <= TV_LIMIT,
              f"TV {tv:.4f} over {cfg.n_slots} slots")
        mets = [ps.objective, *ps.constraints]
        for ms in source_metrics(model).values():
            mets += ms
        for m in mets:
            try:
                pred, est = m.value(ps.result.omega), sim.empirical_metric(acc, m)
            except UndefinedMetricError:
                continue
            ok = est.within(pred, SIM_SE_FACTOR) or math.isclose(est.value, pred, abs_tol=1e-12)
            check(f"simulation at {pt or 'base'}: {m.name}", ok,
                  f"{est.value:.5f} +- {est.se:.5f} vs {pred:.5f}")
    print(f"{check.failed} check(s) failed" if check.failed else "all checks passed")
    return 1 if check.failed else 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="arqopt",
        description="Optimal transmit/drop policies for interfering ARQ sources.",
        epilog="Bundled scenarios: " + ", ".join(bundled_names()))
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, out=True, at=True):
        sp.add_argument("--config", required=True, help="scenario JSON file or bundled name")
        if out:
            sp.add_argument("--out", default=".", help="output directory (default: .)")
        if at:
            sp.add_argument("--at", help="sweep point, one comma-separated bound per axis")

    def sim_flags(sp):
        sp.add_argument("--seed", type=int, help="simulation base seed")
        sp.add_argument("--slots", type=int, help="simulated slots per point")

    sp = sub.add_parser("solve", help="solve one point; writes occupancy.csv, policy.csv, summary.csv")
    common(sp)
    sp.add_argument("--dump-tableau", metavar="PATH", help="write simplex pivots to PATH")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="run the sweep grid; writes results.csv (+ objective_map.csv)")
    common(sp, at=False)
    sim_flags(sp)
    sp.add_argument("--no-sim", action="store_true", help="skip the simulations")
    sp.add_argument("--jobs", type=int, help="worker processes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="solve and simulate one point")
    common(sp)
    sim_flags(sp)
    sp.add_argument("--trace", action="store_true", help="also write trace.csv")
    sp.add_argument("--backend", choices=("compiled", "python"), help="kernel backend")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("policy-map", help="per-state transmit probabilities (policy_map.csv)")
    common(sp)
    sp.set_defaults(func=cmd_policy_map)

    sp = sub.add_parser("validate", help="run the invariant checks; nonzero exit on failure")
    common(sp, out=False)
    sim_flags(sp)
    sp.add_argument("--no-sim", action="store_true", help="skip the simulation check")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
