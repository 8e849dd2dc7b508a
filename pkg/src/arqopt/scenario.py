"""Scenario files: network, optimization problem, sweep grid, simulation.

Scenarios are JSON documents checked against ``scenario.schema.json``.  Loading
resolves every default, so ``scenario_to_dict`` echoes a complete document and
``parse_scenario(scenario_to_dict(s)) == s``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

from .costs import (CostFunction, Event, Metric, builtin_cost, event_cost, METRIC_KINDS,
                    named_metric)
from .model import ConfigError, InterferenceModel, Model, NetworkConfig, SourceConfig

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Invalid scenario; the message starts with the offending field path."""


def _schema() -> dict:
    return json.loads(resources.files("arqopt").joinpath("scenario.schema.json").read_text())


def _path(parts: Sequence) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def bundled_names() -> list[str]:
    d = resources.files("arqopt").joinpath("scenarios")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str) -> Path:
    p = resources.files("arqopt").joinpath("scenarios", f"{name}.json")
    if not p.is_file():
        raise ScenarioError(f"no bundled scenario {name!r}; available: {bundled_names()}")
    return Path(str(p))


# -- specs -------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkSpec:
    buffer_size: int
    max_service_time: int
    arrival_probs: tuple[float, ...]
    failure_alone: float | None = None
    failure_interfered: float | None = None
    success_table: tuple[tuple[int, tuple[int, ...], float], ...] = ()
    monotone: bool = True

    @property
    def S(self) -> int:
        return len(self.arrival_probs)

    def to_config(self) -> NetworkConfig:
        """Failure probabilities are converted to success probabilities here."""
        by_count = {}
        if self.failure_alone is not None:
            by_count = InterferenceModel.from_failure_probs(
                self.S, self.failure_alone, self.failure_interfered).by_count
        by_set = {(s, frozenset(t)): p for s, t, p in self.success_table}
        sources = tuple(SourceConfig(i + 1, a) for i, a in enumerate(self.arrival_probs))
        return NetworkConfig(self.buffer_size, self.max_service_time, sources,
                             InterferenceModel(by_count, by_set, self.monotone))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "buffer_size": self.buffer_size,
            "max_service_time": self.max_service_time,
            "arrival_probs": list(self.arrival_probs),
        }
        if self.failure_alone is not None:
            d["failure_alone"] = self.failure_alone
            d["failure_interfered"] = self.failure_interfered
        d["success_table"] = [{"source": s, "transmitters": list(t), "success": p}
                              for s, t, p in self.success_table]
        d["monotone"] = self.monotone
        return d


@dataclass(frozen=True)
class Term:
    weight: float = 1.0
    cost: str | None = None
    source: int | None = None
    event: str | None = None    # canonical JSON of the event conditions

    def build(self, model: Model) -> CostFunction:
        if self.event is not None:
            ev = json.loads(self.event)
            e = Event.from_conditions(ev.get("name", "event"), ev.get("states", ()),
                                      ev.get("outcomes", ()), ev.get("actions", ()))
            return event_cost(e, model).scaled(self.weight)
        return builtin_cost(self.cost, self.source, model).scaled(self.weight)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {}
        if self.event is not None:
            d["event"] = json.loads(self.event)
        else:
            d["cost"] = self.cost
            if self.source is not None:
                d["source"] = self.source
        d["weight"] = self.weight
        return d


@dataclass(frozen=True)
class RatioSpec:
    metric: str | None = None
    sources: tuple[int, ...] = ()
    numerator: tuple[Term, ...] = ()
    denominator: tuple[Term, ...] = ()

    def build(self, model: Model, name: str) -> Metric:
        if self.metric is not None:
            return named_metric(self.metric, self.sources, model, name=name)
        num = _sum_terms(self.numerator, model)
        den = _sum_terms(self.denominator, model)
        return Metric(name, num, den)

    def to_dict(self) -> dict:
        if self.metric is not None:
            return {"metric": self.metric, "sources": list(self.sources)}
        return {"numerator": [t.to_dict() for t in self.numerator],
                "denominator": [t.to_dict() for t in self.denominator]}

    def label(self) -> str:
        if self.metric is not None:
            return f"{self.metric}[{','.join(map(str, self.sources))}]"
        return "ratio"


def _sum_terms(terms: Sequence[Term], model: Model) -> CostFunction:
    out = terms[0].build(model)
    for t in terms[1:]:
        out = out + t.build(model)
    return out


@dataclass(frozen=True)
class ConstraintSpec:
    """``beta * ratio + lambda`` bounded below (``sense == "min"``) or above."""
    id: str
    ratio: RatioSpec
    sense: str
    bound: float
    beta: float = 1.0
    lam: float = 0.0

    def with_bound(self, bound: float) -> "ConstraintSpec":
        return replace(self, bound=float(bound))

    def build(self, model: Model) -> Metric:
        m = self.ratio.build(model, self.id)
        if self.sense == "max":
            return Metric(self.id, m.numerator, m.denominator, self.beta, self.lam, self.bound)
        return Metric(self.id, m.numerator, m.denominator, -self.beta, -self.lam, -self.bound)

    def to_dict(self) -> dict:
        d = {"id": self.id, **self.ratio.to_dict(), self.sense: self.bound}
        d["beta"] = self.beta
        d["lambda"] = self.lam
        return d


@dataclass(frozen=True)
class Axis:
    constraint: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class SimSpec:
    enabled: bool = False
    n_slots: int = 1_000_000
    burn_in: int = 10_000
    n_batches: int = 20
    seed: int = 1


@dataclass(frozen=True)
class Scenario:
    network: NetworkSpec
    objective: RatioSpec
    constraints: tuple[ConstraintSpec, ...] = ()
    axes: tuple[Axis, ...] = ()
    simulation: SimSpec = field(default_factory=SimSpec)
    name: str = "scenario"
    description: str = ""
    jobs: int = 1

    @property
    def config(self) -> NetworkConfig:
        return self.network.to_config()

    def model(self) -> Model:
        return Model(self.config)

    def constraint(self, cid: str) -> ConstraintSpec:
        for c in self.constraints:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def grid(self) -> list[tuple[float, ...]]:
        """Sweep points in grid order (first axis outermost); one empty
        point when there is no sweep."""
        return list(itertools.product(*(a.values for a in self.axes)))

    def constraints_at(self, point: Sequence[float]) -> list[ConstraintSpec]:
        bounds = {a.constraint: v for a, v in zip(self.axes, point)}
        return [c.with_bound(bounds[c.id]) if c.id in bounds else c for c in self.constraints]

    def metrics(self, model: Model, point: Sequence[float] = ()) -> tuple[Metric, list[Metric]]:
        obj = self.objective.build(model, "objective")
        return obj, [c.build(model) for c in self.constraints_at(point)]

    @property
    def M_c(self) -> int:
        return len(self.constraints)


# -- parsing -----------------------------------------------------------------

def _validate(doc: Any) -> None:
    v = jsonschema.Draft202012Validator(_schema())
    errors = sorted(v.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors[:10]:
            lines.append(f"{_path(list(e.absolute_path))}: {_short(e)}")
        raise ScenarioError("scenario does not match the schema:\n  " + "\n  ".join(lines))


def _short(e: jsonschema.ValidationError) -> str:
    if e.validator in ("oneOf", "anyOf") and e.context:
        best = min(e.context, key=lambda c: len(list(c.absolute_path)))
        return f"{e.message.split(' is not valid')[0]} matches no allowed form ({best.message})"
    return e.message


def _term(d: Mapping, path: str, S: int) -> Term:
    w = float(d.get("weight", 1.0))
    if "event" in d:
        ev = d["event"]
        for key in ("states", "outcomes", "actions"):
            for i, c in enumerate(ev.get(key, [])):
                if c["source"] > S:
                    raise ScenarioError(f"{path}.event.{key}[{i}].source: no source {c['source']}")
        return Term(w, event=json.dumps(ev, sort_keys=True))
    kind = d["cost"]
    src = d.get("source")
    if kind == "ones":
        src = None
    elif src is None:
        raise ScenarioError(f"{path}.source: cost {kind!r} needs a source")
    elif src > S:
        raise ScenarioError(f"{path}.source: no source {src}")
    return Term(w, cost=kind, source=src)


def _ratio(d: Mapping, path: str, S: int) -> RatioSpec:
    if "metric" in d:
        if d["metric"] not in METRIC_KINDS:
            raise ScenarioError(f"{path}.metric: unknown metric {d['metric']!r}")
        for i, s in enumerate(d["sources"]):
            if s > S:
                raise ScenarioError(f"{path}.sources[{i}]: no source {s}")
        return RatioSpec(d["metric"], tuple(int(s) for s in d["sources"]))
    num = tuple(_term(t, f"{path}.numerator[{i}]", S) for i, t in enumerate(d["numerator"]))
    den = tuple(_term(t, f"{path}.denominator[{i}]", S) for i, t in enumerate(d["denominator"]))
    return RatioSpec(numerator=num, denominator=den)


def _axis_values(d: Mapping, path: str) -> tuple[float, ...]:
    if "values" in d:
        vals = [float(v) for v in d["values"]]
    else:
        vals = [round(float(v), 12) for v in np.linspace(d["start"], d["stop"], d["num"])]
    if len(vals) > 1:
        diff = np.diff(vals)
        if not (np.all(diff > 0) or np.all(diff < 0)):
            raise ScenarioError(f"{path}.values: sweep grid must be strictly monotone")
    return tuple(vals)


def parse_scenario(doc: Mapping) -> Scenario:
    _validate(doc)
    nd = doc["network"]
    S = len(nd["arrival_probs"])
    table = []
    for i, e in enumerate(nd.get("success_table", [])):
        t = tuple(sorted(set(e["transmitters"])))
        if e["source"] > S or any(x > S for x in t):
            raise ScenarioError(f"$.network.success_table[{i}]: source index above {S}")
        table.append((int(e["source"]), t, float(e["success"])))
    net = NetworkSpec(
        int(nd["buffer_size"]), int(nd["max_service_time"]),
        tuple(float(a) for a in nd["arrival_probs"]),
        None if "failure_alone" not in nd else float(nd["failure_alone"]),
        None if "failure_interfered" not in nd else float(nd["failure_interfered"]),
        tuple(table), bool(nd.get("monotone", True)),
    )
    try:
        net.to_config()
    except ConfigError as e:
        raise ScenarioError(f"$.network: {e}") from None

    objective = _ratio(doc["objective"], "$.objective", S)
    constraints = []
    seen = set()
    for i, c in enumerate(doc.get("constraints", [])):
        path = f"$.constraints[{i}]"
        if c["id"] in seen:
            raise ScenarioError(f"{path}.id: duplicate constraint id {c['id']!r}")
        seen.add(c["id"])
        sense = "min" if "min" in c else "max"
        constraints.append(ConstraintSpec(
            c["id"], _ratio(c, path, S), sense, float(c[sense]),
            float(c.get("beta", 1.0)), float(c.get("lambda", 0.0))))

    axes = []
    for i, a in enumerate(doc.get("sweep", {}).get("axes", [])):
        path = f"$.sweep.axes[{i}]"
        if a["constraint"] not in seen:
            raise ScenarioError(f"{path}.constraint: no constraint with id {a['constraint']!r}")
        if any(ax.constraint == a["constraint"] for ax in axes):
            raise ScenarioError(f"{path}.constraint: axis {a['constraint']!r} repeated")
        axes.append(Axis(a["constraint"], _axis_values(a, path)))

    sd = doc.get("simulation", {})
    sim = SimSpec(bool(sd.get("enabled", False)), int(sd.get("n_slots", 1_000_000)),
                  int(sd.get("burn_in", 10_000)), int(sd.get("n_batches", 20)),
                  int(sd.get("seed", 1)))
    if not sim.burn_in < sim.n_slots:
        raise ScenarioError("$.simulation.burn_in: must be smaller than n_slots")

    return Scenario(net, objective, tuple(constraints), tuple(axes), sim,
                    doc.get("name", "scenario"), doc.get("description", ""),
                    int(doc.get("jobs", 1)))


def load_scenario(path) -> Scenario:
    """Load a scenario file; a bare bundled name such as ``fig1`` also works."""
    p = Path(path)
    if not p.exists() and str(path) in bundled_names():
        p = bundled_path(str(path))
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON ({e})") from None
    return parse_scenario(doc)


def scenario_to_dict(s: Scenario) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "description": s.description,
        "network": s.network.to_dict(),
        "objective": s.objective.to_dict(),
        "constraints": [c.to_dict() for c in s.constraints],
    }
    if s.axes:
        d["sweep"] = {"axes": [{"constraint": a.constraint, "values": list(a.values)}
                               for a in s.axes]}
    sim = s.simulation
    d["simulation"] = {"enabled": sim.enabled, "n_slots": sim.n_slots, "burn_in": sim.burn_in,
                       "n_batches": sim.n_batches, "seed": sim.seed}
    d["jobs"] = s.jobs
    return d


def dump_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n", encoding="utf-8")
