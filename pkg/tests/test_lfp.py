import csv
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from arqopt import lfp, lp
from arqopt.costs import CostFunction, Metric, named_metric
from arqopt.lfp import (DegenerateTransform, LfpInfeasible, LfpProblem, NotUnichain,
                        OccupancyMeasure, Policy, assemble, brute_force_reference,
                        charnes_cooper, extract_policy, occupancy_from_policy,
                        predicted_metrics, recover, solve_lfp, stationary_distribution)
from arqopt.model import Model, NetworkConfig, SourceConfig, InterferenceModel

from oracles import config, single_source


def _fig1_problem(fig1, model, point=()):
    obj, cons = fig1.metrics(model, point)
    return assemble(model, obj, cons)


def test_fig1_dimensions(fig1, fig1_model):
    p = _fig1_problem(fig1, fig1_model)
    direct = sum(len(fig1_model.actions[i]) for i in range(36))
    assert p.balance.shape == (36, direct)
    assert p.constraint_matrix.shape == (4, direct)
    assert p.n_constraints == 4


def test_unconstrained_problem(fig1_model):
    obj = named_metric("energy_per_throughput", [1, 2], fig1_model)
    p = assemble(fig1_model, obj)
    assert p.constraint_matrix.shape == (0, fig1_model.n_pairs)
    lpp = charnes_cooper(p)
    assert lpp.m_eq == fig1_model.n_states + 1 and lpp.m_ub == 0
    res = solve_lfp(p)
    assert res.feasible
    assert res.policy.randomized_states() == []


def test_throughput_constraint_row(fig1_model):
    c = named_metric("throughput", [2], fig1_model).at_least(0.35)
    p = assemble(fig1_model, named_metric("energy", [1], fig1_model), [c])
    assert np.allclose(p.constraint_matrix[0],
                       -c.numerator.values + 0.35 * np.ones(fig1_model.n_pairs))


def test_constraint_without_bound_rejected(fig1_model):
    m = named_metric("energy", [1], fig1_model)
    with pytest.raises(ValueError, match="no bound"):
        assemble(fig1_model, m, [m])


def test_single_state_chain():
    model = SimpleNamespace(n_states=1, n_pairs=1)
    den = CostFunction("den", [4.0])
    obj = Metric("obj", CostFunction("num", [3.0]), den)
    p = LfpProblem(model, obj, [], np.zeros((0, 1)), np.zeros((1, 1)))
    sol = lp.solve(charnes_cooper(p))
    assert sol.x[0] == pytest.approx(0.25)
    assert sol.objective == pytest.approx(0.75)


def test_recover_normalizes():
    model = SimpleNamespace(n_pairs=4)
    om = recover(lp.LpSolution("optimal", np.full(4, 0.5), 0.0), model)
    assert np.allclose(om.values, 0.25)


def test_recover_degenerate():
    with pytest.raises(DegenerateTransform):
        recover(lp.LpSolution("optimal", np.zeros(3), 0.0), SimpleNamespace(n_pairs=3))
    with pytest.raises(LfpInfeasible):
        recover(lp.LpSolution("infeasible"), SimpleNamespace(n_pairs=3))


def test_infeasible_throughput_targets(fig1_model):
    cons = [named_metric("throughput", [s], fig1_model).at_least(0.9) for s in (1, 2)]
    res = solve_lfp(assemble(fig1_model, named_metric("energy_per_throughput", [1, 2],
                                                      fig1_model), cons))
    assert not res.feasible
    assert res.lp_solution.status == "infeasible"
    assert res.omega is None and res.objective is None


def test_time_sharing_map(fig1_model):
    m = fig1_model
    i = next(k for k in range(m.n_states) if m.n_actions[k] == 2)
    w = np.zeros(m.n_pairs)
    w[list(m.pairs_of(i))] = [0.3, 0.1]
    pol = extract_policy(OccupancyMeasure(m, w))
    assert np.allclose(pol.state_probs(i), [0.75, 0.25])
    assert i not in pol.transient


def test_transient_fallback(fig1_model):
    m = fig1_model
    pol = extract_policy(OccupancyMeasure(m, np.zeros(m.n_pairs)))
    assert len(pol.transient) == m.n_states
    for i, x in enumerate(m.states):
        u = m.actions[i][int(np.argmax(pol.state_probs(i)))]
        for st, a in zip(x.per_source, u.per_source):
            assert a.T == 0
            assert a.D == (1 if st.f == m.config.F else 0)


@pytest.fixture(scope="module")
def fig1_solution(fig1, fig1_model):
    p = _fig1_problem(fig1, fig1_model)
    return p, solve_lfp(p)


def test_fig1_occupancy_and_identity(fig1_solution):
    p, res = fig1_solution
    assert res.omega.normalization_residual() <= 1e-8
    assert res.omega.balance_residual() <= 1e-8
    assert abs(res.objective - res.lp_solution.objective) <= 1e-8
    assert len(res.policy.randomized_states()) <= p.n_constraints


def test_fig1_predicted_metrics(fig1_solution):
    p, res = fig1_solution
    rep = predicted_metrics(res.omega, [p.objective, *p.constraints])
    assert rep["objective"].value == pytest.approx(res.lp_solution.objective, abs=1e-8)
    assert all(rep[c.name].satisfied for c in p.constraints)


def test_predicted_metrics_reports_violation_and_undefined(fig1_model):
    w = np.zeros(fig1_model.n_pairs)
    w[0] = 1.0  # all-Empty state forever
    om = OccupancyMeasure(fig1_model, w)
    thr = named_metric("throughput", [1], fig1_model).at_least(0.1)
    dp = named_metric("delivery_prob", [1], fig1_model)
    rep = predicted_metrics(om, [thr, dp])
    assert rep[thr.name].satisfied is False
    assert rep[dp.name].value is None and "service_start" in rep[dp.name].error


def test_pi_omega_consistency(fig1_solution, fig1_model):
    _, res = fig1_solution
    pi = stationary_distribution(fig1_model, res.policy)
    marg = res.omega.state_marginal()
    rec = marg > 1e-10
    assert np.abs(pi[rec] - marg[rec]).max() <= 1e-8


def test_stationary_point_mass():
    m = Model(single_source(1, alpha=0.0))
    pi = stationary_distribution(m, Policy.deterministic(m, [0, 0]))
    assert np.allclose(pi, [1.0, 0.0])


def test_stationary_two_state_and_not_unichain():
    assert np.allclose(lfp._stationary(np.full((2, 2), 0.5)), [0.5, 0.5])
    with pytest.raises(NotUnichain):
        lfp._stationary(np.eye(2))
    assert lfp.recurrent_class_count(np.eye(3)) == 3


def test_unichain_diagnostic(fig1_model):
    assert lfp.unichain_diagnostic(fig1_model) == 1


def test_brute_force_f1():
    m = Model(single_source(1, 1.0, 0.8))
    pol, val = brute_force_reference(m, named_metric("energy_per_throughput", [1], m))
    assert val == pytest.approx(1.25, abs=1e-12)
    assert pol.state_probs(1)[1] == 1.0  # transmit at the deadline


def test_brute_force_f2_matches_lfp():
    m = Model(single_source(2, 1.0, 0.8))
    obj = named_metric("energy_per_throughput", [1], m)
    _, val = brute_force_reference(m, obj)
    assert solve_lfp(assemble(m, obj)).objective == pytest.approx(val, abs=1e-8)


def test_brute_force_guard(fig1_model):
    with pytest.raises(ValueError, match="exceed"):
        brute_force_reference(fig1_model, named_metric("energy", [1], fig1_model))


def _tiny(F, alpha, rho):
    return Model(NetworkConfig(1, F, (SourceConfig(1, alpha),),
                               InterferenceModel(by_count={(1, 0): rho})))


@given(st.integers(1, 2), st.floats(0.05, 1.0), st.floats(0.05, 1.0),
       st.sampled_from(["energy_per_throughput", "delay", "transmissions_per_packet",
                        "queue_len", "energy"]))
def test_unconstrained_matches_brute_force(F, alpha, rho, kind):
    m = _tiny(F, alpha, rho)
    obj = named_metric(kind, [1], m)
    try:
        _, val = brute_force_reference(m, obj)
    except LfpInfeasible:
        return
    res = solve_lfp(assemble(m, obj))
    assert res.objective == pytest.approx(val, abs=1e-8)


@given(st.integers(0, 2**32 - 1))
def test_constrained_invariants(seed):
    rng = np.random.default_rng(seed)
    F = int(rng.integers(1, 4))
    m = Model(config(2, 1, F, alpha=float(rng.uniform(0.2, 1.0)),
                     fail_alone=float(rng.uniform(0, 0.4)), fail_int=0.5))
    cons = [named_metric("throughput", [1], m).at_least(float(rng.uniform(0, 0.4))),
            named_metric("delay", [1, 2], m).at_most(float(rng.uniform(1, 3)))]
    p = assemble(m, named_metric("energy_per_throughput", [1, 2], m), cons)
    res = solve_lfp(p)
    if not res.feasible:
        return
    om = res.omega
    assert om.normalization_residual() <= 1e-8
    assert om.balance_residual() <= 1e-8
    assert om.values.min() >= 0.0
    assert len(res.policy.randomized_states()) <= p.n_constraints
    assert abs(res.objective - res.lp_solution.objective) <= 1e-8 * max(1, abs(res.objective))
    for c in cons:
        assert c.value(om) <= c.bound + 1e-6
    # a feasible deterministic policy can never beat the optimum
    if np.prod(m.n_actions.astype(float)) > 5000:
        return
    try:
        _, val = brute_force_reference(m, p.objective, cons)
    except LfpInfeasible:
        return
    assert res.objective <= val + 1e-8


def test_policy_helpers(fig1_model):
    m = fig1_model
    pol = Policy.uniform(m)
    assert np.allclose(np.bincount(m.pair_state, pol.probs), 1.0)
    cdf = pol.action_cdf()
    assert np.all(cdf[:, -1] == 1.0)
    assert np.all(np.diff(cdf, axis=1) >= -1e-15)
    t1 = pol.transmit_prob(1)
    assert t1[0] == 0.0 and 0 < t1.max() <= 1
    assert np.all(pol.simultaneous_prob() <= np.minimum(t1, pol.transmit_prob(2)) + 1e-15)


def test_csv_outputs(fig1_solution, tmp_path):
    _, res = fig1_solution
    res.omega.to_csv(tmp_path / "occ.csv")
    res.policy.to_csv(tmp_path / "pol.csv")
    with open(tmp_path / "occ.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == res.omega.model.n_pairs
    assert sum(float(r["omega"]) for r in rows) == pytest.approx(1.0)
    with open(tmp_path / "pol.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:5] == ["state_index", "state", "transient", "action_0", "p_0"]
    assert len(rows) == res.omega.model.n_states + 1


def test_occupancy_from_policy_is_feasible(fig1_model):
    occ = occupancy_from_policy(fig1_model, Policy.uniform(fig1_model))
    assert occ.normalization_residual() <= 1e-12
    assert occ.balance_residual() <= 1e-12
