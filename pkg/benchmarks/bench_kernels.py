"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--slots N] [--repeat R]

Times the slot loop (``run_slots`` through ``simulate``), the row-elimination
kernel on a dense tableau, and a full LP solve of the fig3 program with each
backend's ``eliminate``/``lex_filter`` swapped in.  Results are checked to be
identical across backends before timings are printed.
"""

import argparse
import time

import numpy as np

from arqopt import kernels, lfp, lp
from arqopt.lfp import Policy
from arqopt.scenario import load_scenario
from arqopt.sim import SimConfig, simulate


def best_of(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_sim(n_slots, repeat):
    s = load_scenario("fig1")
    model = s.model()
    pol = Policy.uniform(model)
    cfg = SimConfig(n_slots, seed=1, burn_in=1000)
    res = {}
    for b in ("compiled", "python"):
        t, acc = best_of(lambda: simulate(model, pol, cfg, backend=b), repeat)
        res[b] = (t, acc.visits)
    return res


def bench_eliminate(repeat):
    rng = np.random.default_rng(0)
    T0 = rng.random((400, 1200))
    col = T0[:, 7].copy()
    col[5] = 0.0
    res = {}
    for b in ("compiled", "python"):
        k = kernels.get(b)

        def run():
            T = T0.copy()
            for _ in range(20):
                k.eliminate(T, 5, col)
            return T
        res[b] = best_of(run, repeat)
    return res


def bench_lp(repeat):
    s = load_scenario("fig3")
    model = s.model()
    obj, cons = s.metrics(model)
    prob = lfp.charnes_cooper(lfp.assemble(model, obj, cons))
    saved = kernels.eliminate, kernels.lex_filter
    res = {}
    try:
        for b in ("compiled", "python"):
            k = kernels.get(b)
            kernels.eliminate, kernels.lex_filter = k.eliminate, k.lex_filter
            t, sol = best_of(lambda: lp.solve(prob), repeat)
            res[b] = (t, sol.x)
    finally:
        kernels.eliminate, kernels.lex_filter = saved
    return res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.compiled_kernels is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")

    rows = []
    for name, res in (("simulate fig1 (%d slots)" % args.slots, bench_sim(args.slots, args.repeat)),
                      ("eliminate 400x1200 x20", bench_eliminate(args.repeat)),
                      ("LP solve fig3", bench_lp(max(1, args.repeat - 2)))):
        (tc, oc), (tp, op) = res["compiled"], res["python"]
        same = np.array_equal(oc, op)
        rows.append((name, tc, tp, tp / tc, same))

    print(f"{'benchmark':<32}{'compiled s':>12}{'python s':>12}{'speedup':>10}  identical")
    for name, tc, tp, sp, same in rows:
        print(f"{name:<32}{tc:>12.4f}{tp:>12.4f}{sp:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
