"""Slot-by-slot Monte Carlo simulation of the network under a stationary policy.

Random variates come from three independent PCG64 streams spawned from
``SeedSequence(seed)``: stream 0 draws the action uniform of each slot, stream
1 one uniform per source for the transmission outcomes and stream 2 one
uniform per source for the arrivals.  Every slot consumes the same number of
variates whatever happens in it, so a run is reproducible bit for bit and
does not depend on the kernel backend or the chunk size.

The network starts all-Empty; the first ``burn_in`` slots are simulated but
not accumulated.  The accumulated slots are split into ``n_batches``
contiguous batches for batch-means standard errors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .costs import CostFunction, Event, Metric, UndefinedMetricError, event_table
from .lfp import OccupancyMeasure, Policy
from .model import Model

# per-source counter columns (layout shared with the kernels)
COUNTERS = ("transmissions", "successes", "service_starts", "queue_sum",
            "arrivals", "drops", "departures", "sojourn_sum")
C_TX, C_SUCC, C_START, C_QUEUE, C_ARR, C_DROP, C_DEP, C_SOJ = range(len(COUNTERS))

# built-in cost kind -> realized counter
_REALIZED = {
    "throughput": C_SUCC,
    "success_slot": C_SUCC,
    "energy": C_TX,
    "service_start": C_START,
    "queue_len": C_QUEUE,
    "arrival": C_ARR,
}


class InsufficientData(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_slots: int
    seed: int = 0
    burn_in: int = 10_000
    n_batches: int = 20
    record_trace: bool = False
    chunk: int = 1 << 16

    def __post_init__(self):
        if self.n_slots <= 0:
            raise ValueError("n_slots must be positive")
        if not 0 <= self.burn_in < self.n_slots:
            raise ValueError("need 0 <= burn_in < n_slots")
        if self.n_batches < 2:
            raise ValueError("need at least two batches")
        if self.n_slots - self.burn_in < self.n_batches:
            raise ValueError("fewer accumulated slots than batches")
        if self.chunk <= 0:
            raise ValueError("chunk must be positive")

    @property
    def n_accumulated(self) -> int:
        return self.n_slots - self.burn_in


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def within(self, target: float, k: float) -> bool:
        return abs(self.value - target) <= k * self.se


@dataclass(eq=False)
class MetricsAccumulator:
    model: Model
    config: SimConfig
    visits: np.ndarray          # (n_batches, n_pairs) state-action visit counts
    counters: np.ndarray        # (n_batches, S, len(COUNTERS))
    queue_start: np.ndarray     # buffer occupancy when accumulation starts
    queue_end: np.ndarray
    trace_state: np.ndarray | None = None
    trace_pair: np.ndarray | None = None
    trace_mask: np.ndarray | None = None

    @property
    def n_slots(self) -> int:
        return int(self.visits.sum())

    @property
    def batch_slots(self) -> np.ndarray:
        return self.visits.sum(axis=1)

    def frequencies(self) -> np.ndarray:
        """Empirical state-action frequencies over the accumulated slots."""
        return self.visits.sum(axis=0) / self.n_slots

    def tv_distance(self, omega) -> float:
        w = np.asarray(getattr(omega, "values", omega), dtype=float)
        return 0.5 * float(np.abs(self.frequencies() - w).sum())

    def total(self, counter: str, source: int) -> int:
        return int(self.counters[:, source - 1, COUNTERS.index(counter)].sum())

    def batch_sums(self, cost: CostFunction) -> np.ndarray:
        """Per-batch accumulated cost.

        Weighted sums of built-in costs use the realized per-slot counters;
        other costs fall back to summing their expected value over visits.
        """
        if cost.terms is None:
            return self.visits @ cost.values
        out = np.zeros(self.visits.shape[0])
        for kind, source, weight in cost.terms:
            if kind == "ones":
                out += weight * self.batch_slots
            elif kind in _REALIZED:
                out += weight * self.counters[:, source - 1, _REALIZED[kind]]
            else:
                out += weight * (self.visits @ builtin_values(kind, source, self.model))
        return out

    def to_csv(self, path) -> None:
        """Per-source counter totals over the accumulated slots."""
        tot = self.counters.sum(axis=0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "slots", *COUNTERS])
            for s in range(self.model.S):
                w.writerow([s + 1, self.n_slots, *(int(v) for v in tot[s])])

    def write_trace(self, path) -> None:
        if self.trace_pair is None:
            raise InsufficientData("run was not recorded with record_trace=True")
        action = self.trace_pair - self.model.pair_offset[self.trace_state]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "state_index", "action_index", "outcome_mask"])
            for k in range(len(self.trace_pair)):
                w.writerow([k, int(self.trace_state[k]), int(action[k]), int(self.trace_mask[k])])


def builtin_values(kind: str, source: int, model: Model) -> np.ndarray:
    from .costs import builtin_cost
    return builtin_cost(kind, source, model).values


def simulate(model: Model, policy: Policy, cfg: SimConfig,
             backend: str | None = None) -> MetricsAccumulator:
    """Run ``cfg.n_slots`` slots from the all-Empty state."""
    k = kernels.get(backend)
    S, B, F = model.S, model.config.B, model.config.F
    ss = np.random.SeedSequence(cfg.seed)
    g_act, g_out, g_arr = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(3))

    b = np.zeros(S, dtype=np.int64)
    f = np.zeros(S, dtype=np.int64)
    tags = np.zeros((S, B), dtype=np.int64)
    head = np.zeros(S, dtype=np.int64)
    visits = np.zeros((cfg.n_batches, model.n_pairs), dtype=np.int64)
    counters = np.zeros((cfg.n_batches, S, len(COUNTERS)), dtype=np.int64)
    n_tr = cfg.n_accumulated if cfg.record_trace else 0
    trace = [np.zeros(n_tr, dtype=np.int32) for _ in range(3)]

    cdf = np.ascontiguousarray(policy.action_cdf())
    alpha = np.asarray(model.config.alphas, dtype=float)
    tables = (cdf, model.n_actions, model.pair_offset, model.pair_T, model.pair_D,
              model.pair_rho, alpha)

    edges = sorted(set(range(0, cfg.n_slots, cfg.chunk)) | {cfg.burn_in, cfg.n_slots})
    queue_start = b.copy()
    for k0, k1 in zip(edges[:-1], edges[1:]):
        if k0 == cfg.burn_in:
            queue_start = b.copy()
        n = k1 - k0
        u_act = g_act.random(n)
        u_out = g_out.random((n, S))
        u_arr = g_arr.random((n, S))
        k.run_slots(k0, k1, cfg.burn_in, cfg.n_accumulated, cfg.n_batches,
                    u_act, u_out, u_arr, *tables, B, F,
                    b, f, tags, head, visits, counters, *trace, cfg.record_trace)
    acc = MetricsAccumulator(model, cfg, visits, counters, queue_start, b.copy())
    if cfg.record_trace:
        acc.trace_state, acc.trace_pair, acc.trace_mask = trace
    return acc


def _ratio_estimate(num: np.ndarray, den: np.ndarray, name: str, den_name: str) -> Estimate:
    """Ratio of sums with a batch-means standard error (delta method)."""
    D = den.sum()
    if D <= 0:
        raise UndefinedMetricError(name, den_name, float(D))
    R = num.sum() / D
    nb = len(num)
    resid = num - R * den
    se = np.sqrt((resid ** 2).sum() / (nb * (nb - 1))) / (D / nb)
    return Estimate(float(R), float(se))


def empirical_metric(acc: MetricsAccumulator, m: Metric) -> Estimate:
    """Estimate of ``m.value`` from the run (ratio of accumulated sums)."""
    if m.beta == 0.0:
        return Estimate(m.offset, 0.0)
    est = _ratio_estimate(acc.batch_sums(m.numerator), acc.batch_sums(m.denominator),
                          m.name, m.denominator.name)
    return Estimate(m.beta * est.value + m.offset, abs(m.beta) * est.se)


def mean_sojourn(acc: MetricsAccumulator, source: int) -> Estimate:
    """Mean slots from admission to removal, measured on tagged packets."""
    c = acc.counters[:, source - 1]
    return _ratio_estimate(c[:, C_SOJ].astype(float), c[:, C_DEP].astype(float),
                           f"sojourn[{source}]", "departures")


def littles_law_delay(acc: MetricsAccumulator, source: int) -> Estimate:
    """Queue-length sum over admitted arrivals (the ``queue_len/arrival`` ratio)."""
    c = acc.counters[:, source - 1]
    return _ratio_estimate(c[:, C_QUEUE].astype(float), c[:, C_ARR].astype(float),
                           f"delay[{source}]", "arrival")


# -- renewal statistics ------------------------------------------------------

@dataclass(frozen=True)
class RenewalStats:
    n_slots: int
    n_psi: int                  # occurrences of psi in the run
    n_phi: int                  # occurrences of phi in the run
    V: np.ndarray               # phi count in each complete psi-interval
    tau: np.ndarray             # length of each complete psi-interval

    @property
    def n_intervals(self) -> int:
        return len(self.tau)

    @property
    def mean_V(self) -> Estimate:
        return _iid_mean(self.V)

    @property
    def mean_tau(self) -> Estimate:
        return _iid_mean(self.tau)

    @property
    def psi_rate(self) -> float:
        return self.n_psi / self.n_slots

    @property
    def freq_ratio(self) -> float:
        """Frequency-ratio estimate ``pi(phi) / pi(psi)``."""
        return self.n_phi / self.n_psi


def _iid_mean(x: np.ndarray) -> Estimate:
    x = np.asarray(x, dtype=float)
    se = x.std(ddof=1) / np.sqrt(len(x)) if len(x) > 1 else float("inf")
    return Estimate(float(x.mean()), float(se))


def event_occurrences(acc: MetricsAccumulator, event: Event) -> np.ndarray:
    """Per-slot indicator of ``event`` along the recorded trace."""
    if acc.trace_pair is None:
        raise InsufficientData("run was not recorded with record_trace=True")
    table = event_table(event, acc.model)
    return table[acc.trace_pair, acc.trace_mask]


def renewal_stats(acc: MetricsAccumulator, phi: Event, psi: Event) -> RenewalStats:
    """Split the trace at occurrences of ``psi``; incomplete intervals at both
    ends are dropped."""
    occ_psi = event_occurrences(acc, psi)
    occ_phi = event_occurrences(acc, phi)
    t = np.flatnonzero(occ_psi)
    if len(t) < 2:
        raise InsufficientData(f"fewer than two occurrences of {psi.name!r}")
    cum = np.concatenate([[0], np.cumsum(occ_phi)])
    V = cum[t[1:]] - cum[t[:-1]]
    return RenewalStats(len(occ_psi), int(len(t)), int(occ_phi.sum()), V, np.diff(t))


def renewal_counts(model: Model, policy: Policy, phi: Event, psi: Event,
                   cfg: SimConfig, backend: str | None = None) -> RenewalStats:
    if not cfg.record_trace:
        cfg = SimConfig(cfg.n_slots, cfg.seed, cfg.burn_in, cfg.n_batches, True, cfg.chunk)
    return renewal_stats(simulate(model, policy, cfg, backend), phi, psi)


def compare(acc: MetricsAccumulator, omega: OccupancyMeasure, metrics) -> list[tuple]:
    """``(name, predicted, estimate)`` for each metric."""
    return [(m.name, m.value(omega), empirical_metric(acc, m)) for m in metrics]
