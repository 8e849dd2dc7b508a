"""Constrained ratio-cost MDP solved as a linear-fractional program over
occupancy measures.

The decision variable ``w[x,u]`` is the long-run probability of being in
state ``x`` and choosing action ``u``.  Ratio objectives and ratio
constraints become linear in ``w`` after clearing denominators; the ratio
objective is then linearized with the Charnes-Cooper substitution
``k = g * w`` and normalized by ``den . k = 1``.
"""

from __future__ import annotations

import csv
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import lp
from .costs import Metric, UndefinedMetricError
from .model import Model

log = logging.getLogger(__name__)

RANDOMIZATION_TOL = 1e-9
TRANSIENT_TOL = 1e-10
CONSTRAINT_SLACK = 1e-6


class LfpInfeasible(RuntimeError):
    """The constraint set admits no occupancy measure."""


class DegenerateTransform(RuntimeError):
    """The Charnes-Cooper scale vanished: ``den . w <= 0`` on the feasible set."""


class NotUnichain(RuntimeError):
    pass


@dataclass(eq=False)
class LfpProblem:
    model: Model
    objective: Metric
    constraints: list[Metric]
    constraint_matrix: np.ndarray   # (M_c, n_pairs); rows . w <= 0
    balance: np.ndarray             # (n_states, n_pairs); balance . w == 0

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)


@dataclass(eq=False)
class OccupancyMeasure:
    model: Model
    values: np.ndarray

    def state_marginal(self) -> np.ndarray:
        out = np.zeros(self.model.n_states)
        np.add.at(out, self.model.pair_state, self.values)
        return out

    def balance_residual(self) -> float:
        inflow = self.values @ self.model.P
        return float(np.abs(inflow - self.state_marginal()).max())

    def normalization_residual(self) -> float:
        return abs(float(self.values.sum()) - 1.0)

    def to_csv(self, path) -> None:
        m = self.model
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair_index", "state_index", "state", "action_index", "action", "omega"])
            for p in range(m.n_pairs):
                x, u = m.pair(p)
                w.writerow([p, x.index, x.label(), u.index, u.label(), repr(float(self.values[p]))])


@dataclass(eq=False)
class Policy:
    """Randomized stationary policy as per-pair action probabilities."""
    model: Model
    probs: np.ndarray
    transient: frozenset = field(default_factory=frozenset)

    def state_probs(self, state: int) -> np.ndarray:
        return self.probs[list(self.model.pairs_of(state))]

    def randomized_states(self, tol: float = RANDOMIZATION_TOL) -> list[int]:
        out = []
        for i in range(self.model.n_states):
            if self.state_probs(i).max() < 1.0 - tol:
                out.append(i)
        return out

    def action_cdf(self) -> np.ndarray:
        """Cumulative action probabilities per state, padded with 1.0."""
        m = self.model
        cdf = np.ones((m.n_states, int(m.n_actions.max())))
        for i in range(m.n_states):
            c = np.cumsum(self.state_probs(i))
            cdf[i, : len(c)] = c
            cdf[i, len(c) - 1:] = 1.0
        return cdf

    def transmit_prob(self, source: int) -> np.ndarray:
        """Per-state probability that ``source`` (1-based) transmits."""
        out = np.zeros(self.model.n_states)
        np.add.at(out, self.model.pair_state, self.probs * self.model.pair_T[:, source - 1])
        return out

    def simultaneous_prob(self) -> np.ndarray:
        """Per-state probability that at least two sources transmit."""
        both = (self.model.pair_T.sum(axis=1) >= 2).astype(float)
        out = np.zeros(self.model.n_states)
        np.add.at(out, self.model.pair_state, self.probs * both)
        return out

    def to_csv(self, path) -> None:
        m = self.model
        width = int(m.n_actions.max())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["state_index", "state", "transient"]
            for k in range(width):
                head += [f"action_{k}", f"p_{k}"]
            w.writerow(head)
            for i, x in enumerate(m.states):
                row = [i, x.label(), int(i in self.transient)]
                probs = self.state_probs(i)
                for k in range(width):
                    if k < len(probs):
                        row += [m.actions[i][k].label(), repr(float(probs[k]))]
                    else:
                        row += ["", ""]
                w.writerow(row)

    @classmethod
    def deterministic(cls, model: Model, choice: Sequence[int]) -> "Policy":
        probs = np.zeros(model.n_pairs)
        for i, a in enumerate(choice):
            probs[model.pair_index(i, a)] = 1.0
        return cls(model, probs)

    @classmethod
    def uniform(cls, model: Model) -> "Policy":
        return cls(model, 1.0 / model.n_actions[model.pair_state])


def balance_matrix(model: Model) -> np.ndarray:
    """Rows indexed by state ``x``, columns by pair ``(x', u)``:
    ``1{x == x'} - P(x | x', u)``."""
    M = -model.P.T.copy()
    M[model.pair_state, np.arange(model.n_pairs)] += 1.0
    return M


def assemble(model: Model, objective: Metric, constraints: Sequence[Metric] = ()) -> LfpProblem:
    constraints = list(constraints)
    for c in constraints:
        if c.bound is None:
            raise ValueError(f"constraint {c.name!r} has no bound")
    for met in [objective, *constraints]:
        for cf in (met.numerator, met.denominator):
            if cf.values.shape != (model.n_pairs,):
                raise ValueError(f"cost {cf.name!r} is not bound to this model")
    Z = (np.array([c.constraint_row() for c in constraints])
         if constraints else np.zeros((0, model.n_pairs)))
    return LfpProblem(model, objective, constraints, Z, balance_matrix(model))


def charnes_cooper(p: LfpProblem) -> lp.LpProblem:
    """LP in ``k``: ``min num.k  s.t.  Z k <= 0,  balance k = 0,  den.k = 1``."""
    A_eq = np.vstack([p.balance, p.objective.denominator.values[None, :]])
    b_eq = np.concatenate([np.zeros(p.model.n_states), [1.0]])
    return lp.LpProblem(
        c=p.objective.numerator.values,
        A_eq=A_eq, b_eq=b_eq,
        A_ub=p.constraint_matrix if p.n_constraints else None,
        b_ub=np.zeros(p.n_constraints) if p.n_constraints else None,
    )


def recover(sol: lp.LpSolution, model: Model) -> OccupancyMeasure:
    """Invert the substitution: ``w = k / g`` with ``g = sum(k)``."""
    if sol.status == lp.INFEASIBLE:
        raise LfpInfeasible("constraint set is infeasible")
    if sol.status != lp.OPTIMAL:
        raise LfpInfeasible(f"linear program status {sol.status}")
    kappa = np.asarray(sol.x, dtype=float)
    g = float(kappa.sum())
    if g <= 1e-12:
        raise DegenerateTransform(f"transform scale g={g:.3g}; objective denominator vanishes")
    return OccupancyMeasure(model, kappa / g)


def extract_policy(omega: OccupancyMeasure) -> Policy:
    """Time-sharing map ``w[x,u] / sum_u w[x,u]``; states with no occupancy get
    the idle action (T=0, D=0 where legal, else T=0, D=1) for every source."""
    m = omega.model
    probs = np.zeros(m.n_pairs)
    transient = set()
    for i in range(m.n_states):
        pairs = list(m.pairs_of(i))
        w = np.maximum(omega.values[pairs], 0.0)
        tot = w.sum()
        if tot > TRANSIENT_TOL:
            probs[pairs] = w / tot
        else:
            transient.add(i)
            probs[pairs[_fallback_action(m, i)]] = 1.0
    return Policy(m, probs, frozenset(transient))


def _fallback_action(model: Model, state: int) -> int:
    for k, u in enumerate(model.actions[state]):
        if all(a.T == 0 and a.D == (1 if st.f == model.config.F and st.b > 0 else 0)
               for a, st in zip(u.per_source, model.states[state].per_source)):
            return k
    raise AssertionError("no idle action")


@dataclass
class MetricReport:
    name: str
    ratio: float | None
    value: float | None
    bound: float | None
    satisfied: bool | None
    error: str | None = None


def predicted_metrics(omega: OccupancyMeasure, metrics: Sequence[Metric],
                      slack: float = CONSTRAINT_SLACK) -> dict[str, MetricReport]:
    out = {}
    for met in metrics:
        try:
            r = met.ratio(omega)
        except UndefinedMetricError as e:
            out[met.name] = MetricReport(met.name, None, None, met.bound, None, str(e))
            continue
        v = met.beta * r + met.offset
        ok = None if met.bound is None else bool(v <= met.bound + slack)
        out[met.name] = MetricReport(met.name, r, v, met.bound, ok)
    return out


def stationary_distribution(model: Model, policy: Policy) -> np.ndarray:
    K = model.kernel(policy.probs)
    return _stationary(K)


def _stationary(K: np.ndarray) -> np.ndarray:
    n = K.shape[0]
    n_rec = recurrent_class_count(K)
    if n_rec != 1:
        raise NotUnichain(f"chain has {n_rec} recurrent classes under this policy")
    A = np.vstack([K.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    resid = np.abs(pi @ K - pi).max()
    if resid > 1e-10:
        raise NotUnichain(f"stationary solve residual {resid:.3g}")
    return pi


def recurrent_class_count(K: np.ndarray) -> int:
    """Number of closed communicating classes of a stochastic matrix."""
    adj = K > 0
    _, labels = connected_components(adj, directed=True, connection="strong")
    count = 0
    for c in np.unique(labels):
        members = labels == c
        if not adj[members][:, ~members].any():
            count += 1
    return count


def unichain_diagnostic(model: Model) -> int:
    """Recurrent-class count under the uniform random policy; warns if not one."""
    n = recurrent_class_count(model.kernel(Policy.uniform(model).probs))
    if n != 1:
        warnings.warn(f"model has {n} recurrent classes under the uniform policy; "
                      "the unichain assumption may fail", RuntimeWarning)
    return n


@dataclass(eq=False)
class LfpResult:
    problem: LfpProblem
    lp_problem: lp.LpProblem
    lp_solution: lp.LpSolution
    omega: OccupancyMeasure | None = None
    policy: Policy | None = None

    @property
    def feasible(self) -> bool:
        return self.omega is not None

    @property
    def objective(self) -> float | None:
        return None if self.omega is None else self.problem.objective.ratio(self.omega)


def solve_lfp(p: LfpProblem, dump_path: str | None = None) -> LfpResult:
    """assemble -> transform -> simplex -> recover -> extract; infeasible
    problems come back with ``omega is None``."""
    lpp = charnes_cooper(p)
    sol = lp.solve(lpp, dump_path=dump_path)
    res = LfpResult(p, lpp, sol)
    if sol.status == lp.INFEASIBLE:
        return res
    if sol.status == lp.UNBOUNDED:
        raise DegenerateTransform("transformed program is unbounded")
    res.omega = recover(sol, p.model)
    res.policy = extract_policy(res.omega)
    return res


def occupancy_from_policy(model: Model, policy: Policy) -> OccupancyMeasure:
    pi = stationary_distribution(model, policy)
    return OccupancyMeasure(model, pi[model.pair_state] * policy.probs)


def brute_force_reference(model: Model, objective: Metric,
                          constraints: Sequence[Metric] = (),
                          limit: int = 10 ** 6) -> tuple[Policy, float]:
    """Best deterministic stationary policy by exhaustive enumeration.

    Exact for unconstrained problems; with constraints the optimum may need
    randomization and this only returns the best feasible deterministic policy.
    Policies that make a denominator vanish are skipped.
    """
    total = int(np.prod(model.n_actions.astype(object)))
    if total > limit:
        raise ValueError(f"{total} deterministic policies exceed the limit {limit}")
    best: tuple[float, tuple] | None = None
    for choice in itertools.product(*[range(k) for k in model.n_actions]):
        pol = Policy.deterministic(model, choice)
        try:
            occ = occupancy_from_policy(model, pol)
            val = objective.ratio(occ)
            ok = all(c.value(occ) <= c.bound + 1e-12 for c in constraints)
        except (UndefinedMetricError, NotUnichain):
            continue
        if ok and (best is None or val < best[0] - 1e-15):
            best = (val, choice)
    if best is None:
        raise LfpInfeasible("no feasible deterministic policy")
    return Policy.deterministic(model, best[1]), best[0]
