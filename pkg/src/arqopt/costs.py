"""Cost functions over (state, outcome, action) and ratio metrics built from them.

Costs are stored in expected form, ``c(x, u) = sum_y z(x, y, u) P(y | x, u)``,
as dense vectors over the model's state-action pairs.  The built-in kinds and
their per-slot meaning for a source ``s``:

=============== ======================================================
throughput      1 if s delivers its head packet (expected: rho_s * T)
energy          T(s)
success_slot    same indicator as throughput, used as a packet counter
service_start   1 if the head packet of s is in its first service slot
queue_len       number of packets buffered at s
arrival         expected admitted arrivals at s in the slot
arrival_offered alpha_s if b(s) < B else 0 (ignores same-slot removal)
ones            1 in every slot
=============== ======================================================

``arrival`` counts an arrival as admitted when the queue is not full after
this slot's removal, so ``queue_len / arrival`` is the mean sojourn time by
Little's law.  ``arrival_offered`` is the variant that only looks at the
queue at the start of the slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .model import JointAction, Model, NetworkConfig, NetworkState, Outcome

BUILTIN_KINDS = ("throughput", "energy", "success_slot", "service_start",
                 "queue_len", "arrival", "arrival_offered", "ones")

# kinds whose per-slot realization the simulator counts directly
REALIZED_KINDS = ("throughput", "energy", "success_slot", "service_start",
                  "queue_len", "arrival", "ones")


class UndefinedMetricError(ArithmeticError):
    """A ratio metric whose denominator average vanishes."""

    def __init__(self, metric: str, denominator: str, value: float):
        super().__init__(
            f"metric {metric!r} undefined: denominator {denominator!r} averages to {value:.3g}")
        self.metric = metric
        self.denominator = denominator
        self.value = value


class EventError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CostFunction:
    """Expected per-pair cost.

    ``terms`` lists ``(kind, source, weight)`` when the cost is a weighted sum
    of built-in costs, which lets the simulator estimate it from realized
    per-slot counters; it is ``None`` for arbitrary cost vectors.
    """
    name: str
    values: np.ndarray
    terms: tuple[tuple[str, int, float], ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"cost {self.name!r} has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other: "CostFunction") -> "CostFunction":
        terms = None
        if self.terms is not None and other.terms is not None:
            terms = self.terms + other.terms
        return CostFunction(f"{self.name}+{other.name}", self.values + other.values, terms)

    def scaled(self, w: float) -> "CostFunction":
        terms = None if self.terms is None else tuple((k, s, w * c) for k, s, c in self.terms)
        return CostFunction(f"{w:g}*{self.name}", w * self.values, terms)

    def average(self, omega) -> float:
        return float(self.values @ _as_vector(omega))


def _as_vector(omega) -> np.ndarray:
    return np.asarray(getattr(omega, "values", omega), dtype=float)


def z_value(kind: str, s: int, x: NetworkState, y: Outcome, u: JointAction,
            config: NetworkConfig) -> float:
    """Per-slot cost ``z(x, y, u)`` of a built-in kind for source ``s`` (1-based).

    ``throughput`` is read as the delivery indicator; its expectation over
    ``y`` is ``rho_s * T``.
    """
    i = s - 1
    st, a, ys = x.per_source[i], u.per_source[i], y[i]
    if kind in ("throughput", "success_slot"):
        return float(ys)
    if kind == "energy":
        return float(a.T)
    if kind == "service_start":
        return float(st.b > 0 and st.f == 1)
    if kind == "queue_len":
        return float(st.b)
    if kind == "arrival":
        removed = st.b > 0 and (ys or a.D)
        return config.sources[i].arrival_prob if (st.b < config.B or removed) else 0.0
    if kind == "arrival_offered":
        return config.sources[i].arrival_prob if st.b < config.B else 0.0
    if kind == "ones":
        return 1.0
    raise ValueError(f"unknown cost kind {kind!r}")


def builtin_cost(kind: str, source: int | None, model: Model) -> CostFunction:
    if kind not in BUILTIN_KINDS:
        raise ValueError(f"unknown cost kind {kind!r}; expected one of {BUILTIN_KINDS}")
    if kind == "ones":
        return CostFunction("ones", np.ones(model.n_pairs), (("ones", 0, 1.0),))
    if source is None or not 1 <= source <= model.S:
        raise ValueError(f"source {source} out of range 1..{model.S}")
    i = source - 1
    T = model.pair_T[:, i].astype(float)
    D = model.pair_D[:, i].astype(float)
    rho = model.pair_rho[:, i]
    b = model.state_b[model.pair_state, i]
    f = model.state_f[model.pair_state, i]
    alpha = model.config.sources[i].arrival_prob
    B = model.config.B
    if kind in ("throughput", "success_slot"):
        v = rho * T
    elif kind == "energy":
        v = T
    elif kind == "service_start":
        v = ((b > 0) & (f == 1)).astype(float)
    elif kind == "queue_len":
        v = b.astype(float)
    elif kind == "arrival":
        p_removed = np.where(b > 0, D + (1.0 - D) * rho * T, 0.0)
        v = alpha * np.where(b < B, 1.0, p_removed)
    else:  # arrival_offered
        v = alpha * (b < B).astype(float)
    terms = ((kind, source, 1.0),) if kind in REALIZED_KINDS else None
    return CostFunction(f"{kind}[{source}]", v, terms)


def aggregate_cost(kind: str, sources: Iterable[int], model: Model) -> CostFunction:
    """Sum of a built-in cost over several sources."""
    sources = list(sources)
    if not sources:
        raise ValueError("aggregate over an empty source list")
    total = builtin_cost(kind, sources[0], model)
    for s in sources[1:]:
        total = total + builtin_cost(kind, s, model)
    label = ",".join(str(s) for s in sources)
    return CostFunction(f"{kind}[{label}]", total.values, total.terms)


def expected_from_table(kind: str, s: int, model: Model) -> np.ndarray:
    """Expected-form cost computed by explicit summation over outcomes."""
    cfg = model.config
    out = np.zeros(model.n_pairs)
    for p in range(model.n_pairs):
        x, u = model.pair(p)
        for m in range(1 << model.S):
            py = model.outcome_probs[p, m]
            if py == 0.0:
                continue
            y = tuple((m >> k) & 1 for k in range(model.S))
            out[p] += py * z_value(kind, s, x, y, u, cfg)
    return out


# -- events ------------------------------------------------------------------

StatePred = Callable[[NetworkState], bool]
OutcomePred = Callable[[Outcome], bool]
ActionPred = Callable[[JointAction], bool]


def _state_condition(cond: Mapping) -> StatePred:
    i = int(cond["source"]) - 1
    checks = []
    if "empty" in cond:
        want = bool(cond["empty"])
        checks.append(lambda st: st.empty == want)
    for key in ("b", "f"):
        if key in cond:
            allowed = cond[key]
            allowed = set(allowed) if isinstance(allowed, (list, tuple, set)) else {allowed}
            checks.append(lambda st, k=key, al=frozenset(allowed):
                          not st.empty and getattr(st, k) in al)
    return lambda x: all(c(x.per_source[i]) for c in checks)


def _outcome_condition(cond: Mapping) -> OutcomePred:
    i = int(cond["source"]) - 1
    want = int(cond["y"])
    return lambda y: y[i] == want


def _action_condition(cond: Mapping) -> ActionPred:
    i = int(cond["source"]) - 1
    checks = {k: int(cond[k]) for k in ("T", "D") if k in cond}
    return lambda u: all(getattr(u.per_source[i], k) == v for k, v in checks.items())


@dataclass(frozen=True)
class Event:
    """A set ``X_e x Y_e x U_e`` given by membership predicates; ``None`` means
    the whole space."""
    name: str = "event"
    states: StatePred | None = None
    outcomes: OutcomePred | None = None
    actions: ActionPred | None = None
    spec: dict | None = field(default=None, compare=False)

    @classmethod
    def from_conditions(cls, name: str = "event",
                        states: Sequence[Mapping] = (),
                        outcomes: Sequence[Mapping] = (),
                        actions: Sequence[Mapping] = ()) -> "Event":
        """Conjunctions of per-source conditions such as ``{"source": 1, "f": 1}``,
        ``{"source": 2, "y": 1}`` or ``{"source": 1, "T": 1}``."""
        sp = [_state_condition(c) for c in states]
        op = [_outcome_condition(c) for c in outcomes]
        ap = [_action_condition(c) for c in actions]
        return cls(
            name,
            (lambda x: all(p(x) for p in sp)) if sp else None,
            (lambda y: all(p(y) for p in op)) if op else None,
            (lambda u: all(p(u) for p in ap)) if ap else None,
            spec={"states": [dict(c) for c in states],
                  "outcomes": [dict(c) for c in outcomes],
                  "actions": [dict(c) for c in actions]},
        )


def event_table(event: Event, model: Model) -> np.ndarray:
    """Boolean membership over (pair, outcome mask)."""
    n_out = 1 << model.S
    ys = [tuple((m >> k) & 1 for k in range(model.S)) for m in range(n_out)]
    y_in = np.array([event.outcomes is None or bool(event.outcomes(y)) for y in ys])
    x_in = np.array([event.states is None or bool(event.states(x)) for x in model.states])
    if not x_in.any():
        raise EventError(f"event {event.name!r}: empty state set")
    if not y_in.any():
        raise EventError(f"event {event.name!r}: empty outcome set")
    u_in = np.zeros(model.n_pairs, dtype=bool)
    for p in range(model.n_pairs):
        x, u = model.pair(p)
        u_in[p] = event.actions is None or bool(event.actions(u))
    if not u_in.any():
        raise EventError(f"event {event.name!r}: empty action set")
    return (x_in[model.pair_state] & u_in)[:, None] & y_in[None, :]


def event_cost(event: Event, model: Model) -> CostFunction:
    table = event_table(event, model)
    v = (model.outcome_probs * table).sum(axis=1)
    return CostFunction(event.name, v, None)


# -- metrics -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Metric:
    """``beta * (num . w) / (den . w) + offset``, optionally constrained ``<= bound``."""
    name: str
    numerator: CostFunction
    denominator: CostFunction
    beta: float = 1.0
    offset: float = 0.0
    bound: float | None = None

    def ratio(self, omega) -> float:
        w = _as_vector(omega)
        den = self.denominator.values @ w
        if den <= 1e-12:
            raise UndefinedMetricError(self.name, self.denominator.name, float(den))
        return float(self.numerator.values @ w / den)

    def value(self, omega) -> float:
        if self.beta == 0.0:
            return self.offset
        return self.beta * self.ratio(omega) + self.offset

    def at_least(self, target: float) -> "Metric":
        """Constraint ``ratio >= target`` written as ``-ratio <= -target``."""
        return Metric(self.name, self.numerator, self.denominator, -1.0, 0.0, -float(target))

    def at_most(self, target: float) -> "Metric":
        return Metric(self.name, self.numerator, self.denominator, 1.0, 0.0, float(target))

    def constraint_row(self) -> np.ndarray:
        """Linear form ``(beta*num + (offset - bound)*den)`` with ``row . w <= 0``."""
        if self.bound is None:
            raise ValueError(f"metric {self.name!r} has no bound")
        return self.beta * self.numerator.values + (self.offset - self.bound) * self.denominator.values


def metric_value(m: Metric, omega) -> float:
    return m.value(omega)


def _metric(name, model, num_kind, den_kind, sources) -> Metric:
    num = aggregate_cost(num_kind, sources, model)
    den = builtin_cost("ones", None, model) if den_kind == "ones" else aggregate_cost(
        den_kind, sources, model)
    return Metric(name, num, den)


# Named ratio metrics: (numerator kind, denominator kind)
METRIC_KINDS = {
    "throughput": ("throughput", "ones"),
    "energy": ("energy", "ones"),
    "delivery_prob": ("success_slot", "service_start"),
    "delay": ("queue_len", "arrival"),
    "transmissions_per_packet": ("energy", "service_start"),
    "energy_per_throughput": ("energy", "throughput"),
    "queue_len": ("queue_len", "ones"),
}


def named_metric(kind: str, sources: Sequence[int], model: Model,
                 name: str | None = None) -> Metric:
    """Network-level ratio metric; with several sources the numerator and
    denominator are summed over them before the ratio is taken."""
    if kind not in METRIC_KINDS:
        raise ValueError(f"unknown metric kind {kind!r}; expected one of {sorted(METRIC_KINDS)}")
    num, den = METRIC_KINDS[kind]
    label = name or f"{kind}[{','.join(str(s) for s in sources)}]"
    return _metric(label, model, num, den, list(sources))
