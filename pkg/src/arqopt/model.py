"""State, action and outcome spaces of a slotted multi-source ARQ network.

Each source keeps a FIFO buffer of ``B`` packets.  The head packet has been in
service for ``f`` slots (1..F) and is force-dropped after ``F`` slots.  In
every slot the controller picks, per source, a transmit flag ``T`` and a drop
flag ``D``; the transmission of source ``s`` succeeds with a probability that
depends on which other sources transmit in the same slot.

Within a slot the order of events is:

1. joint action chosen,
2. transmission outcomes realized,
3. head packet removed if it was delivered or dropped,
4. one arrival sampled (prob ``alpha_s``) and admitted if the queue, after
   the removal, holds fewer than ``B`` packets,
5. service counter of the head packet set: a new head starts at ``f=1``,
   a surviving head advances to ``f+1``.

Index conventions
-----------------
Per-source local states are numbered ``0`` for Empty and
``1 + (b-1)*F + (f-1)`` for ``(b, f)`` (``f`` fastest).  Joint states are
numbered lexicographically over sources with source 1 the most significant
digit.  Per-source legal actions are ordered ``(T,D) = (0,0), (0,1), (1,0),
(1,1)`` with the forbidden ones removed; joint actions follow the same
lexicographic rule.  An outcome ``y`` is encoded as the bit mask
``sum(y[s] << s)`` (source 1 in bit 0).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid network configuration."""


class DomainError(ValueError):
    """Inputs outside the domain of a model operation."""


@dataclass(frozen=True)
class SourceConfig:
    id: int
    arrival_prob: float

    def __post_init__(self):
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ConfigError(
                f"source {self.id}: arrival_prob {self.arrival_prob} outside [0, 1]"
            )


class InterferenceModel:
    """Success probability of a source given the set of transmitting sources.

    Two forms are accepted.  The compact form maps ``(source, n_interferers)``
    to a probability; the full form maps ``(source, frozenset(transmitters))``
    to a probability and takes precedence where both define an entry.  Sources
    are 1-based.  A source that does not transmit never succeeds.
    """

    def __init__(
        self,
        by_count: Mapping[tuple[int, int], float] | None = None,
        by_set: Mapping[tuple[int, frozenset], float] | None = None,
        monotone: bool = True,
    ):
        self.by_count = dict(by_count or {})
        self.by_set = {(s, frozenset(t)): p for (s, t), p in (by_set or {}).items()}
        self.monotone = monotone
        for key, p in itertools.chain(self.by_count.items(), self.by_set.items()):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"success probability {p} for {key} outside [0, 1]")
        for (s, t) in self.by_set:
            if s not in t:
                raise ConfigError(
                    f"success table entry for source {s} with transmitters {sorted(t)}: "
                    "source must be in its own transmitting set"
                )

    @classmethod
    def from_failure_probs(
        cls, n_sources: int, failure_alone: float, failure_interfered: float,
        monotone: bool = True,
    ) -> "InterferenceModel":
        """Symmetric compact model: one failure probability when alone,
        another whenever at least one other source transmits."""
        table = {}
        for s in range(1, n_sources + 1):
            table[(s, 0)] = 1.0 - failure_alone
            for k in range(1, n_sources):
                table[(s, k)] = 1.0 - failure_interfered
        return cls(by_count=table, monotone=monotone)

    def success_prob(self, source: int, transmitters: frozenset) -> float:
        if source not in transmitters:
            return 0.0
        key = (source, frozenset(transmitters))
        if key in self.by_set:
            return self.by_set[key]
        ckey = (source, len(transmitters) - 1)
        if ckey in self.by_count:
            return self.by_count[ckey]
        raise ConfigError(
            f"no success probability for source {source} with transmitters "
            f"{sorted(transmitters)}"
        )

    def validate(self, n_sources: int) -> None:
        """Check completeness for ``n_sources`` and, if declared, monotonicity."""
        ids = range(1, n_sources + 1)
        for s in ids:
            others = [o for o in ids if o != s]
            for k in range(len(others) + 1):
                for rest in itertools.combinations(others, k):
                    self.success_prob(s, frozenset((s, *rest)))
        if not self.monotone:
            return
        for s in ids:
            others = [o for o in ids if o != s]
            for k in range(len(others)):
                for rest in itertools.combinations(others, k):
                    base = frozenset((s, *rest))
                    p = self.success_prob(s, base)
                    for extra in others:
                        if extra in base:
                            continue
                        q = self.success_prob(s, base | {extra})
                        if q > p + 1e-15:
                            raise ConfigError(
                                f"interference model not monotone: source {s} succeeds "
                                f"with prob {q} when {extra} joins {sorted(base)} (was {p})"
                            )

    def __eq__(self, other):
        if not isinstance(other, InterferenceModel):
            return NotImplemented
        return (self.by_count, self.by_set, self.monotone) == (
            other.by_count, other.by_set, other.monotone)

    def __hash__(self):
        return hash((frozenset(self.by_count.items()), frozenset(self.by_set.items()),
                     self.monotone))

    def __repr__(self):
        return (f"InterferenceModel(by_count={self.by_count!r}, "
                f"by_set={self.by_set!r}, monotone={self.monotone})")


@dataclass(frozen=True)
class NetworkConfig:
    buffer_size: int
    max_service_time: int
    sources: tuple[SourceConfig, ...]
    interference: InterferenceModel = field(compare=True)

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.buffer_size < 1:
            raise ConfigError(f"buffer_size must be >= 1, got {self.buffer_size}")
        if self.max_service_time < 1:
            raise ConfigError(f"max_service_time must be >= 1, got {self.max_service_time}")
        if len(self.sources) < 1:
            raise ConfigError("at least one source is required")
        for i, src in enumerate(self.sources, start=1):
            if src.id != i:
                raise ConfigError(f"source ids must be 1..S in order, got {src.id} at {i}")
        self.interference.validate(len(self.sources))

    @property
    def S(self) -> int:
        return len(self.sources)

    @property
    def B(self) -> int:
        return self.buffer_size

    @property
    def F(self) -> int:
        return self.max_service_time

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(s.arrival_prob for s in self.sources)

    @classmethod
    def symmetric(cls, n_sources: int, buffer_size: int, max_service_time: int,
                  arrival_probs: Sequence[float] | float,
                  failure_alone: float, failure_interfered: float) -> "NetworkConfig":
        if isinstance(arrival_probs, (int, float)):
            arrival_probs = [float(arrival_probs)] * n_sources
        sources = tuple(SourceConfig(i + 1, float(a)) for i, a in enumerate(arrival_probs))
        return cls(buffer_size, max_service_time, sources,
                   InterferenceModel.from_failure_probs(
                       n_sources, failure_alone, failure_interfered))


class SourceState(NamedTuple):
    """Queue length ``b`` and service time ``f`` of the head packet; (0, 0) is Empty."""
    b: int
    f: int

    @property
    def empty(self) -> bool:
        return self.b == 0

    def label(self) -> str:
        return "0" if self.b == 0 else f"{self.b}:{self.f}"


EMPTY = SourceState(0, 0)


class SourceAction(NamedTuple):
    T: int
    D: int


@dataclass(frozen=True)
class NetworkState:
    index: int
    per_source: tuple[SourceState, ...]

    def label(self) -> str:
        return "(" + ",".join(s.label() for s in self.per_source) + ")"


@dataclass(frozen=True)
class JointAction:
    index: int
    per_source: tuple[SourceAction, ...]

    @property
    def transmitters(self) -> frozenset:
        return frozenset(s + 1 for s, a in enumerate(self.per_source) if a.T)

    def label(self) -> str:
        return "(" + ",".join(f"{a.T}{a.D}" for a in self.per_source) + ")"


Outcome = tuple  # tuple of S ints in {0, 1}


def local_states(config: NetworkConfig) -> list[SourceState]:
    """Per-source states in local index order."""
    out = [EMPTY]
    for b in range(1, config.B + 1):
        for f in range(1, config.F + 1):
            out.append(SourceState(b, f))
    return out


def local_index(state: SourceState, config: NetworkConfig) -> int:
    if state.b == 0:
        return 0
    return 1 + (state.b - 1) * config.F + (state.f - 1)


def state_index(per_source: Sequence[SourceState], config: NetworkConfig) -> int:
    n_local = 1 + config.F * config.B
    idx = 0
    for st in per_source:
        idx = idx * n_local + local_index(st, config)
    return idx


def enumerate_states(config: NetworkConfig) -> list[NetworkState]:
    locs = local_states(config)
    return [NetworkState(i, tuple(combo))
            for i, combo in enumerate(itertools.product(locs, repeat=config.S))]


_ALL_SOURCE_ACTIONS = (SourceAction(0, 0), SourceAction(0, 1),
                       SourceAction(1, 0), SourceAction(1, 1))


def source_actions(state: SourceState, config: NetworkConfig) -> list[SourceAction]:
    if state.empty:
        return [SourceAction(0, 0)]
    if state.f == config.F:
        return [SourceAction(0, 1), SourceAction(1, 1)]
    return list(_ALL_SOURCE_ACTIONS)


def legal_actions(x: NetworkState, config: NetworkConfig) -> list[JointAction]:
    per = [source_actions(st, config) for st in x.per_source]
    return [JointAction(i, tuple(combo))
            for i, combo in enumerate(itertools.product(*per))]


def _check_legal(x: NetworkState, u: JointAction, config: NetworkConfig) -> None:
    if len(u.per_source) != len(x.per_source):
        raise DomainError("action and state have different source counts")
    for s, (st, a) in enumerate(zip(x.per_source, u.per_source), start=1):
        if a not in source_actions(st, config):
            raise DomainError(f"action {a} illegal for source {s} in state {st}")


def success_probs(x: NetworkState, u: JointAction, config: NetworkConfig) -> np.ndarray:
    tx = u.transmitters
    return np.array([config.interference.success_prob(s, tx) for s in range(1, config.S + 1)])


def outcomes(config: NetworkConfig) -> list[Outcome]:
    """All outcomes in mask order."""
    return [tuple((m >> s) & 1 for s in range(config.S)) for m in range(1 << config.S)]


def outcome_mask(y: Outcome) -> int:
    return sum(int(v) << s for s, v in enumerate(y))


def outcome_prob(x: NetworkState, u: JointAction, y: Outcome,
                 config: NetworkConfig) -> float:
    rho = success_probs(x, u, config)
    p = 1.0
    for s, (a, ys) in enumerate(zip(u.per_source, y)):
        if not a.T:
            if ys:
                raise DomainError(f"source {s + 1} cannot succeed while idle")
            continue
        p *= rho[s] if ys else 1.0 - rho[s]
    return p


def source_next(state: SourceState, action: SourceAction, delivered: int,
                alpha: float, config: NetworkConfig) -> list[tuple[SourceState, float]]:
    """Distribution of a single source's next state given its own outcome."""
    b, f = state
    removed = b > 0 and (delivered or action.D)
    b_after = b - 1 if removed else b
    out = []
    for arrived, p in ((1, alpha), (0, 1.0 - alpha)):
        if p == 0.0:
            continue
        nb = b_after + (1 if arrived and b_after < config.B else 0)
        if nb == 0:
            nxt = EMPTY
        elif removed or b == 0:
            nxt = SourceState(nb, 1)
        else:
            nxt = SourceState(nb, f + 1)
        out.append((nxt, p))
    merged: dict[SourceState, float] = {}
    for st, p in out:
        merged[st] = merged.get(st, 0.0) + p
    return list(merged.items())


def next_state_dist(x: NetworkState, u: JointAction, y: Outcome,
                    config: NetworkConfig) -> dict[int, float]:
    """Sparse distribution ``{next state index: prob}``."""
    for s, (a, ys) in enumerate(zip(u.per_source, y)):
        if ys and not a.T:
            raise DomainError(f"source {s + 1} cannot succeed while idle")
    per = [source_next(st, a, ys, src.arrival_prob, config)
           for st, a, ys, src in zip(x.per_source, u.per_source, y, config.sources)]
    dist: dict[int, float] = {}
    for combo in itertools.product(*per):
        idx = state_index([st for st, _ in combo], config)
        p = 1.0
        for _, q in combo:
            p *= q
        dist[idx] = dist.get(idx, 0.0) + p
    return dist


def consistent_outcomes(u: JointAction, config: NetworkConfig) -> list[Outcome]:
    tx = [a.T for a in u.per_source]
    return [y for y in outcomes(config) if all(t or not ys for t, ys in zip(tx, y))]


def transition_dist(x: NetworkState, u: JointAction, config: NetworkConfig) -> dict[int, float]:
    _check_legal(x, u, config)
    dist: dict[int, float] = {}
    for y in consistent_outcomes(u, config):
        py = outcome_prob(x, u, y, config)
        if py == 0.0:
            continue
        for j, p in next_state_dist(x, u, y, config).items():
            dist[j] = dist.get(j, 0.0) + py * p
    return dist


def transition_prob(x_next: NetworkState, x: NetworkState, u: JointAction,
                    config: NetworkConfig) -> float:
    return transition_dist(x, u, config).get(x_next.index, 0.0)


class Model:
    """Dense enumeration of a network, shared by the optimizer and simulator.

    State-action pairs are laid out state by state; ``pair_offset[i]`` is the
    first pair of state ``i`` and its actions follow in legal-action order.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.S = config.S
        self.states = enumerate_states(config)
        self.n_states = len(self.states)
        self.n_local = 1 + config.F * config.B
        self.actions = [legal_actions(x, config) for x in self.states]
        counts = np.array([len(a) for a in self.actions], dtype=np.int64)
        self.n_actions = counts
        self.pair_offset = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        self.n_pairs = int(counts.sum())
        self.pair_state = np.repeat(np.arange(self.n_states), counts)
        self.pair_action = np.concatenate([np.arange(c) for c in counts])

        S = self.S
        self.state_b = np.array([[st.b for st in x.per_source] for x in self.states], dtype=np.int64)
        self.state_f = np.array([[st.f for st in x.per_source] for x in self.states], dtype=np.int64)
        self.pair_T = np.zeros((self.n_pairs, S), dtype=np.int8)
        self.pair_D = np.zeros((self.n_pairs, S), dtype=np.int8)
        self.pair_rho = np.zeros((self.n_pairs, S))
        for p in range(self.n_pairs):
            x, u = self.pair(p)
            self.pair_T[p] = [a.T for a in u.per_source]
            self.pair_D[p] = [a.D for a in u.per_source]
            self.pair_rho[p] = success_probs(x, u, config)

        # P(y | pair) over outcome masks
        n_out = 1 << S
        T = self.pair_T.astype(bool)
        self.outcome_probs = np.ones((self.n_pairs, n_out))
        for m in range(n_out):
            for s in range(S):
                ys = (m >> s) & 1
                if ys:
                    self.outcome_probs[:, m] *= np.where(T[:, s], self.pair_rho[:, s], 0.0)
                else:
                    self.outcome_probs[:, m] *= np.where(T[:, s], 1.0 - self.pair_rho[:, s], 1.0)

        self.P = self._transition_matrix()

    def pair(self, p: int) -> tuple[NetworkState, JointAction]:
        i = int(self.pair_state[p])
        return self.states[i], self.actions[i][int(self.pair_action[p])]

    def pair_index(self, state: int, action: int) -> int:
        return int(self.pair_offset[state]) + action

    def pairs_of(self, state: int) -> range:
        start = int(self.pair_offset[state])
        return range(start, start + int(self.n_actions[state]))

    def state_of(self, per_source: Iterable[SourceState]) -> NetworkState:
        return self.states[state_index(list(per_source), self.config)]

    def _transition_matrix(self) -> np.ndarray:
        """``P[pair, next_state]``, built source by source from outcome-conditional
        local kernels (same semantics as :func:`transition_dist`)."""
        cfg = self.config
        P = np.zeros((self.n_pairs, self.n_states))
        strides = [self.n_local ** (self.S - 1 - s) for s in range(self.S)]
        cache: dict = {}
        for p in range(self.n_pairs):
            x, u = self.pair(p)
            for m in range(1 << self.S):
                py = self.outcome_probs[p, m]
                if py == 0.0:
                    continue
                per = []
                for s in range(self.S):
                    key = (s, x.per_source[s], u.per_source[s], (m >> s) & 1)
                    if key not in cache:
                        cache[key] = [(local_index(st, cfg) * strides[s], q)
                                      for st, q in source_next(
                                          x.per_source[s], u.per_source[s], (m >> s) & 1,
                                          cfg.sources[s].arrival_prob, cfg)]
                    per.append(cache[key])
                for combo in itertools.product(*per):
                    j = 0
                    q = py
                    for off, qq in combo:
                        j += off
                        q *= qq
                    P[p, j] += q
        return P

    def kernel(self, mu: np.ndarray) -> np.ndarray:
        """State transition matrix under per-pair action probabilities ``mu``."""
        weighted = self.P * mu[:, None]
        K = np.zeros((self.n_states, self.n_states))
        np.add.at(K, self.pair_state, weighted)
        return K
