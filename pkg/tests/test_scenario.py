import copy
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from arqopt.costs import METRIC_KINDS, named_metric
from arqopt.scenario import (ScenarioError, bundled_names, dump_scenario, load_scenario,
                             parse_scenario, scenario_to_dict)

BASE = {
    "network": {"buffer_size": 1, "max_service_time": 3, "arrival_probs": [0.5, 0.5],
                "failure_alone": 0.2, "failure_interfered": 0.4},
    "objective": {"metric": "energy_per_throughput", "sources": [1, 2]},
    "constraints": [{"id": "thr", "metric": "throughput", "sources": [1], "min": 0.2}],
}


def _doc(**changes):
    d = copy.deepcopy(BASE)
    d.update(changes)
    return d


def test_bundled_names():
    assert {"fig1", "fig2", "fig3", "fig4"} <= set(bundled_names())


@pytest.mark.parametrize("name", ["fig1", "fig2", "fig3", "fig4"])
def test_bundled_round_trip(name, tmp_path):
    s = load_scenario(name)
    dump_scenario(s, tmp_path / "s.json")
    assert load_scenario(tmp_path / "s.json") == s
    assert parse_scenario(scenario_to_dict(s)) == s


def test_fig1_contents(fig1):
    assert (fig1.network.S, fig1.network.buffer_size, fig1.network.max_service_time) == (2, 1, 5)
    assert fig1.M_c == 4
    assert fig1.config.interference.by_count[(1, 0)] == pytest.approx(0.8)
    assert fig1.config.interference.by_count[(1, 1)] == pytest.approx(0.6)
    grid = fig1.grid()
    assert len(grid) == 11 and grid[0] == (0.1,) and grid[-1] == (0.6,)


def test_defaults_resolved():
    s = parse_scenario(BASE)
    d = scenario_to_dict(s)
    assert d["simulation"] == {"enabled": False, "n_slots": 1_000_000, "burn_in": 10_000,
                               "n_batches": 20, "seed": 1}
    assert d["constraints"][0]["beta"] == 1.0 and d["constraints"][0]["lambda"] == 0.0
    assert d["network"]["monotone"] is True
    assert s.grid() == [()]
    assert s.jobs == 1


def test_constraints_at_point(fig1):
    cs = fig1.constraints_at((0.42,))
    assert fig1.constraint("throughput_2").bound == 0.35
    assert [c.bound for c in cs if c.id == "throughput_2"] == [0.42]


def test_min_constraint_sign(fig1, fig1_model):
    _, cons = fig1.metrics(fig1_model)
    direct = named_metric("throughput", [1], fig1_model).at_least(0.35)
    assert np.allclose(cons[0].constraint_row(), direct.constraint_row())


def _err(doc):
    with pytest.raises(ScenarioError) as e:
        parse_scenario(doc)
    return str(e.value)


def test_schema_error_names_field():
    d = _doc()
    d["network"]["buffer_size"] = "one"
    assert "$.network.buffer_size" in _err(d)
    d = _doc()
    del d["network"]
    assert "network" in _err(d)


def test_unknown_metric():
    d = _doc()
    d["constraints"][0]["metric"] = "goodput"
    assert "$.constraints[0]" in _err(d)


def test_source_out_of_range():
    d = _doc()
    d["constraints"][0]["sources"] = [3]
    assert "$.constraints[0].sources[0]" in _err(d)


def test_duplicate_constraint_id():
    d = _doc()
    d["constraints"].append(dict(d["constraints"][0]))
    assert "duplicate" in _err(d)


def test_sweep_references_unknown_constraint():
    d = _doc(sweep={"axes": [{"constraint": "nope", "values": [0.1, 0.2]}]})
    assert "$.sweep.axes[0].constraint" in _err(d)


def test_non_monotone_grid():
    d = _doc(sweep={"axes": [{"constraint": "thr", "values": [0.1, 0.3, 0.2]}]})
    assert "monotone" in _err(d)


def test_linspace_axis():
    s = parse_scenario(_doc(sweep={"axes": [{"constraint": "thr", "start": 0.1,
                                             "stop": 0.3, "num": 3}]}))
    assert s.axes[0].values == (0.1, 0.2, 0.3)


def test_burn_in_must_be_smaller():
    assert "burn_in" in _err(_doc(simulation={"n_slots": 100, "burn_in": 100}))


def test_config_error_wrapped():
    d = _doc()
    d["network"]["failure_interfered"] = 0.1    # interference helps: not monotone
    assert _err(d).startswith("$.network")


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ScenarioError, match="no such file"):
        load_scenario(tmp_path / "absent.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(tmp_path / "bad.json")


def test_event_terms(fig1_model):
    d = _doc(objective={
        "numerator": [{"cost": "energy", "source": 1}, {"cost": "energy", "source": 2}],
        "denominator": [{"event": {"name": "ok", "outcomes": [{"source": 1, "y": 1}]}},
                        {"cost": "throughput", "source": 2}],
    })
    d["network"]["max_service_time"] = 5
    s = parse_scenario(d)
    assert parse_scenario(scenario_to_dict(s)) == s
    obj, _ = s.metrics(fig1_model)
    ref = named_metric("energy_per_throughput", [1, 2], fig1_model)
    assert np.allclose(obj.numerator.values, ref.numerator.values)
    assert np.allclose(obj.denominator.values, ref.denominator.values)


def test_event_source_checked():
    d = _doc(objective={"numerator": [{"event": {"outcomes": [{"source": 5, "y": 1}]}}],
                        "denominator": [{"cost": "ones"}]})
    assert "$.objective.numerator[0].event.outcomes[0].source" in _err(d)


def test_success_table_override():
    d = _doc()
    d["network"]["success_table"] = [{"source": 1, "transmitters": [1, 2], "success": 0.5}]
    cfg = parse_scenario(d).config
    assert cfg.interference.by_set[(1, frozenset({1, 2}))] == 0.5


ratio_kinds = sorted(METRIC_KINDS)


@st.composite
def scenario_docs(draw):
    S = draw(st.integers(1, 3))
    fa = draw(st.floats(0, 0.5))
    net = {"buffer_size": draw(st.integers(1, 4)), "max_service_time": draw(st.integers(1, 6)),
           "arrival_probs": draw(st.lists(st.floats(0, 1), min_size=S, max_size=S)),
           "failure_alone": fa, "failure_interfered": draw(st.floats(fa, 1))}
    srcs = st.lists(st.integers(1, S), min_size=1, max_size=S, unique=True)
    cons = []
    for i in range(draw(st.integers(0, 3))):
        c = {"id": f"c{i}", "metric": draw(st.sampled_from(ratio_kinds)), "sources": draw(srcs),
             draw(st.sampled_from(["min", "max"])): draw(st.floats(-10, 10))}
        if draw(st.booleans()):
            c["beta"] = draw(st.floats(-2, 2))
        cons.append(c)
    doc = {"network": net,
           "objective": {"metric": draw(st.sampled_from(ratio_kinds)), "sources": draw(srcs)},
           "constraints": cons,
           "simulation": {"n_slots": draw(st.integers(1000, 10**6)), "burn_in": 10,
                          "seed": draw(st.integers(0, 2**31))}}
    if cons:
        vals = sorted(set(draw(st.lists(st.floats(-5, 5), min_size=1, max_size=4))))
        doc["sweep"] = {"axes": [{"constraint": "c0", "values": vals}]}
    return doc


@given(scenario_docs())
def test_round_trip_property(doc):
    s = parse_scenario(doc)
    d = scenario_to_dict(s)
    assert parse_scenario(json.loads(json.dumps(d))) == s
    assert len(s.grid()) == (len(s.axes[0].values) if s.axes else 1)
