import csv
import dataclasses

import numpy as np
import pytest

from arqopt import lfp, sweep
from arqopt.lfp import Policy
from arqopt.model import Model
from arqopt.scenario import Axis, SimSpec
from arqopt.sweep import (INFEASIBLE_MARK, evaluate_point, point_seed, policy_map, run_sweep,
                          solve_point, write_objective_map, write_results)

from oracles import single_source


def _with_axes(s, *axes):
    return dataclasses.replace(s, axes=tuple(Axis(c, tuple(v)) for c, v in axes))


@pytest.fixture(scope="module")
def small2d(fig1):
    """Two-axis sweep over the throughput bounds, including an infeasible corner."""
    return _with_axes(fig1, ("throughput_1", [0.2, 0.5]), ("throughput_2", [0.2, 0.7]))


@pytest.fixture(scope="module")
def small2d_rows(small2d):
    return run_sweep(small2d, simulate=False)


def test_single_point_equals_solve(fig1, fig1_model):
    s = _with_axes(fig1, ("throughput_2", [0.3]))
    [row] = run_sweep(s, simulate=False)
    ps = solve_point(fig1, (0.3,), fig1_model)
    assert row.objective == ps.result.objective
    assert row.iterations == ps.result.lp_solution.iterations


def test_sweep_deterministic(small2d, small2d_rows):
    again = run_sweep(small2d, simulate=False)
    assert [r.objective for r in again] == [r.objective for r in small2d_rows]


def test_grid_order_and_infeasible_marker(small2d, small2d_rows, tmp_path):
    assert [r.coords for r in small2d_rows] == small2d.grid()
    assert small2d_rows[-1].status == "infeasible"     # 0.5 + 0.7 exceeds capacity
    assert small2d_rows[0].feasible
    write_results(small2d_rows, small2d, tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[-1]["objective"] == INFEASIBLE_MARK
    assert float(rows[0]["objective"]) == small2d_rows[0].objective
    assert rows[0]["constraints_ok"] == "1"


def test_objective_map(small2d, small2d_rows, tmp_path):
    write_objective_map(small2d_rows, small2d, tmp_path / "m.csv")
    with open(tmp_path / "m.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][1:] == ["0.2", "0.7"]
    assert [r[0] for r in rows[1:]] == ["0.2", "0.5"]
    assert rows[2][2] == INFEASIBLE_MARK
    assert float(rows[1][1]) == small2d_rows[0].objective
    with pytest.raises(ValueError):
        write_objective_map(small2d_rows, _with_axes(small2d, ("throughput_1", [0.2])), "x")


def test_feasible_region_shrinks(small2d_rows):
    """Tightening a bound can only raise the optimum."""
    obj = {r.coords: r.objective for r in small2d_rows if r.feasible}
    assert obj[(0.2, 0.2)] <= obj[(0.5, 0.2)] + 1e-9
    assert obj[(0.2, 0.2)] <= obj[(0.2, 0.7)] + 1e-9


def test_parallel_keeps_order(small2d, small2d_rows):
    rows = run_sweep(small2d, simulate=False, jobs=2)
    assert [r.coords for r in rows] == small2d.grid()
    assert [r.objective for r in rows] == [r.objective for r in small2d_rows]


def test_errors_captured(fig1, monkeypatch):
    s = _with_axes(fig1, ("throughput_2", [0.2, 0.3]))
    real = lfp.solve_lfp
    calls = []

    def flaky(p, **kw):
        calls.append(1)
        if len(calls) == 1:
            raise RuntimeError("boom")
        return real(p, **kw)

    monkeypatch.setattr(lfp, "solve_lfp", flaky)
    rows = run_sweep(s, simulate=False)
    assert rows[0].status == "error" and "boom" in rows[0].error
    assert rows[1].feasible


def test_simulated_point(fig1, fig1_model):
    s = dataclasses.replace(fig1, simulation=SimSpec(True, 50_000, 1000, 20, 1))
    a = evaluate_point(s, (0.3,), index=2, model=fig1_model)
    b = evaluate_point(s, (0.3,), index=2, model=fig1_model)
    assert a.sim["objective"] == b.sim["objective"]
    assert {"objective", "throughput_1", "delay_2"} <= set(a.sim)
    assert a.sim["objective"].within(a.objective, 5)


def test_point_seed():
    assert point_seed(1, 0) == point_seed(1, 0)
    assert len({point_seed(1, i) for i in range(50)}) == 50
    assert point_seed(1, 3) != point_seed(2, 3)


def test_policy_map_idle(fig1_model):
    idle = [0] * fig1_model.n_states      # first legal action never transmits
    rows = policy_map(Policy.deterministic(fig1_model, idle))
    assert len(rows) == fig1_model.n_states
    assert all(r["p_tx1"] == r["p_tx2"] == r["p_both"] == 0.0 for r in rows)


def test_policy_map_rows(fig1_model):
    rows = policy_map(Policy.uniform(fig1_model))
    for r in rows:
        assert 0 <= r["p_both"] <= min(r["p_tx1"], r["p_tx2"]) + 1e-15
        if r["b1"] == 0:
            assert r["p_tx1"] == 0.0


def test_policy_map_needs_two_sources():
    m = Model(single_source(2))
    with pytest.raises(ValueError):
        policy_map(Policy.uniform(m))


def test_fig2_policy_map_symmetric(fig2):
    ps = solve_point(fig2)
    rows = policy_map(ps.result.policy)
    cell = {(r["x1"], r["x2"]): r for r in rows}
    gap = max(abs(r["p_tx1"] - cell[(r["x2"], r["x1"])]["p_tx2"]) for r in rows)
    assert gap <= 1e-6


def test_dump_policy_map(fig2, tmp_path):
    ps = solve_point(fig2)
    sweep.dump_policy_map(ps.result.policy, ps.model, tmp_path / "pm.csv")
    with open(tmp_path / "pm.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == ps.model.n_states
    assert np.isclose(sum(float(r["p_tx1"]) for r in rows),
                      ps.result.policy.transmit_prob(1).sum())
