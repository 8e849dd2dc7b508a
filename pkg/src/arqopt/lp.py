"""Dense two-phase primal simplex with Bland's rule.

Problems are ``min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0``.  The
solver returns basic solutions, which the occupancy-measure optimizer relies
on to bound the number of randomized states.  Redundant equality rows are
detected at the end of phase 1 and removed from the basis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8
TIE_TOL = 1e-9
REL_PIVOT_TOL = 1e-7
DRIFT_TOL = 1e-9
DRIFT_CHECK_EVERY = 10
TIE_PIVOT_RATIO = 1e-3
HARRIS_TOL = 1e-10
MAX_ITER = 200_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class DimensionError(ValueError):
    pass


def _matrix(a, ncols: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, ncols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.shape[1] != ncols:
        raise DimensionError(f"{name} has {a.shape[1]} columns, expected {ncols}")
    return a


def _vector(b, n: int, name: str) -> np.ndarray:
    if b is None:
        b = np.zeros(0)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != n:
        raise DimensionError(f"{name} has length {b.shape[0]}, expected {n}")
    return b


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.shape[0]
        A_eq = _matrix(self.A_eq, n, "A_eq")
        A_ub = _matrix(self.A_ub, n, "A_ub")
        b_eq = _vector(self.b_eq, A_eq.shape[0], "b_eq")
        b_ub = _vector(self.b_ub, A_ub.shape[0], "b_ub")
        for name, arr in (("c", c), ("A_eq", A_eq), ("b_eq", b_eq), ("A_ub", A_ub), ("b_ub", b_ub)):
            if not np.all(np.isfinite(arr)):
                raise DimensionError(f"{name} contains non-finite coefficients")
        for name, arr in (("c", c), ("A_eq", A_eq), ("b_eq", b_eq), ("A_ub", A_ub), ("b_ub", b_ub)):
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def m_ub(self) -> int:
        return self.A_ub.shape[0]

    def augmented(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Equality form with one slack per inequality row (slacks after x)."""
        n, mu, me = self.n, self.m_ub, self.m_eq
        A = np.zeros((mu + me, n + mu))
        A[:mu, :n] = self.A_ub
        A[:mu, n:] = np.eye(mu)
        A[mu:, :n] = self.A_eq
        b = np.concatenate([self.b_ub, self.b_eq])
        c = np.concatenate([self.c, np.zeros(mu)])
        return A, b, c


@dataclass(eq=False)
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    basis: tuple[int, ...] = ()
    slack: np.ndarray | None = None
    redundant_rows: tuple[int, ...] = ()
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _equilibrate(A: np.ndarray, passes: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Row and column scale factors from repeated max-norm (Ruiz) passes."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    M = np.abs(A)
    for _ in range(passes):
        rm = (M * r[:, None] * s[None, :]).max(axis=1) if n else np.ones(m)
        rm[rm == 0] = 1.0
        r /= np.sqrt(rm)
        cm = (M * r[:, None] * s[None, :]).max(axis=0) if m else np.ones(n)
        cm[cm == 0] = 1.0
        s /= np.sqrt(cm)
    return r, s


class _Tableau:
    """Simplex tableau ``[A | b | Q]``.

    ``Q`` starts as the identity at the beginning of each phase and undergoes
    the same row operations as ``A``, so its rows are those of the inverse of
    the phase-start basis matrix.  Ties in the ratio test are broken by the
    lexicographic order of the rows of ``[b | Q]``, which is the exact limit of
    a right-hand-side perturbation and rules out degenerate cycling without
    touching the basic values.  Remaining ties fall back to the smallest
    basis index.
    """

    REFACTOR_EVERY = 200

    def __init__(self, A, b, basis, dump=None):
        self.A0 = np.asarray(A, dtype=float)
        self.b0 = np.asarray(b, dtype=float)
        self.ncols = A.shape[1]
        self.basis = list(basis)
        self.dump = dump
        self.iterations = 0
        self.c = None
        self.reset_reference()

    @property
    def m(self):
        return self.T.shape[0]

    @property
    def rhs(self):
        return self.T[:, self.ncols]

    def reset_reference(self):
        self.B0 = self.A0[:, self.basis]
        self.refactor()

    def refactor(self):
        """Rebuild the tableau from the original data and the current basis,
        discarding the rounding error accumulated by successive pivots."""
        self.T = np.ascontiguousarray(np.linalg.solve(
            self.A0[:, self.basis], np.hstack([self.A0, self.b0[:, None], self.B0])))
        self.T[:, self.basis] = np.eye(self.m)
        self.fresh_at = self.iterations
        if self.c is not None:
            self.set_costs(self.c)

    def drop_rows(self, rows, ncols):
        """Keep only ``rows`` and the first ``ncols`` columns of ``A``."""
        self.A0 = self.A0[np.ix_(rows, range(ncols))]
        self.b0 = self.b0[rows]
        self.basis = [self.basis[i] for i in rows]
        self.ncols = ncols
        self.c = None
        self.reset_reference()

    def set_costs(self, c):
        self.c = c
        cb = c[self.basis]
        self.d = c - cb @ self.T[:, : self.ncols]
        self.d[self.basis] = 0.0
        self.z = -(cb @ self.rhs)

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        kernels.eliminate(T, r, col)
        T[:, j] = 0.0
        T[r, j] = 1.0
        dj = self.d[j]
        self.d = self.d - dj * T[r, : self.ncols]
        self.d[j] = 0.0
        self.z -= dj * T[r, self.ncols]
        self.basis[r] = j
        self.iterations += 1
        if self.iterations % self.REFACTOR_EVERY == 0:
            self.refactor()
        if self.dump is not None:
            self._dump(r, j)

    def _dump(self, r, j):
        self.dump.write(f"# pivot {self.iterations}: row {r}, entering {j}\n")
        self.dump.write("basis " + " ".join(map(str, self.basis)) + "\n")
        np.savetxt(self.dump, self.T[:, : self.ncols + 1], fmt="%.6g")
        np.savetxt(self.dump, self.d[None, :], fmt="%.6g")

    def _check_iterations(self):
        if self.iterations > MAX_ITER:
            raise RuntimeError("simplex iteration limit exceeded")

    def stale(self, j) -> bool:
        """True when tableau column ``j`` has drifted from a fresh solve with
        the current basis by more than a small relative amount."""
        fresh = np.linalg.solve(self.A0[:, self.basis], self.A0[:, j])
        return np.abs(fresh - self.T[:, j]).max() > DRIFT_TOL * (1.0 + np.abs(fresh).max())

    def pivot_rows(self, col, sign=1.0):
        """Rows whose entry has the given sign and is not negligible."""
        tol = max(PIVOT_TOL, REL_PIVOT_TOL * np.abs(col).max())
        return np.flatnonzero(sign * col > tol)

    def leaving_row(self, col, rows):
        """Leaving row among ``rows`` (all with ``col > 0``).

        Two-pass ratio test: the step is bounded by ratios relaxed by
        ``HARRIS_TOL``, rows within that bound with a pivot close to the
        largest one are kept, and the rest is decided by the lexicographic
        order of ``[ratio | Q]`` and finally by the smallest basis index.
        """
        piv = col[rows]
        vals = self.rhs[rows]
        bound = ((np.maximum(vals, 0.0) + HARRIS_TOL) / piv).min()
        ratios = np.maximum(vals, 0.0) / piv
        keep = ratios <= bound
        rows, piv, ratios = rows[keep], piv[keep], ratios[keep]
        keep = piv >= TIE_PIVOT_RATIO * piv.max()
        rows, piv, ratios = rows[keep], piv[keep], ratios[keep]
        keep = ratios <= ratios.min() + TIE_TOL * max(1.0, ratios.min())
        rows, piv = rows[keep], piv[keep]
        if rows.size > 1:
            rows = kernels.lex_filter(self.T, rows.astype(np.int64), piv, self.ncols + 1, TIE_TOL)
        return int(min(rows, key=lambda i: self.basis[i]))

    def run(self, allowed: np.ndarray) -> str:
        """Primal simplex with Bland's entering rule until optimal or unbounded."""
        while True:
            self._check_iterations()
            cand = np.flatnonzero((self.d < -PIVOT_TOL) & allowed)
            if cand.size == 0:
                return OPTIMAL
            j = int(cand[0])
            if (self.iterations - self.fresh_at) % DRIFT_CHECK_EVERY == 1 and self.stale(j):
                self.refactor()
                continue
            col = self.T[:, j]
            rows = self.pivot_rows(col)
            if rows.size == 0:
                return UNBOUNDED
            self.pivot(self.leaving_row(col, rows), j)

    def restore_feasibility(self, allowed: np.ndarray) -> bool:
        """Dual simplex on roundoff-level negative basic values, smallest-index
        choices.  Returns False if no pivot can repair a negative row."""
        while True:
            self._check_iterations()
            bad = np.flatnonzero(self.rhs < -FEAS_TOL)
            if bad.size == 0:
                return True
            r = int(min(bad, key=lambda i: self.basis[i]))
            row = self.T[r, : self.ncols]
            cand = np.flatnonzero((row < -PIVOT_TOL) & allowed)
            if cand.size == 0:
                return False
            ratios = np.maximum(self.d[cand], 0.0) / -row[cand]
            best = ratios.min()
            j = int(cand[np.flatnonzero(ratios <= best + TIE_TOL * max(1.0, best))[0]])
            self.pivot(r, j)


def solve(p: LpProblem, dump_path: str | None = None) -> LpSolution:
    """Solve ``p``; status is ``optimal``, ``infeasible`` or ``unbounded``."""
    A0, b0, c0 = p.augmented()
    m, N = A0.shape
    n = p.n
    if m == 0:
        if np.any(c0 < 0):
            return LpSolution(UNBOUNDED)
        return LpSolution(OPTIMAL, np.zeros(n), 0.0, (), np.zeros(0))

    r, s = _equilibrate(A0[:, :n]) if n else (np.ones(m), np.ones(0))
    # slacks keep unit columns: scale them by the row factor's inverse
    s_full = np.concatenate([s, 1.0 / r[: p.m_ub]])
    A = A0 * r[:, None] * s_full[None, :]
    b = b0 * r
    c = c0 * s_full

    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    basis = [-1] * m
    for i in range(p.m_ub):
        if sign[i] > 0:
            basis[i] = n + i
    art_rows = [i for i in range(m) if basis[i] < 0]
    n_art = len(art_rows)
    A1 = np.hstack([A, np.zeros((m, n_art))])
    for k, i in enumerate(art_rows):
        A1[i, N + k] = 1.0
        basis[i] = N + k

    dump = open(dump_path, "w") if dump_path else None
    try:
        tab = _Tableau(A1, b, basis, dump)
        redundant: list[int] = []
        if n_art:
            c1 = np.concatenate([np.zeros(N), np.ones(n_art)])
            tab.set_costs(c1)
            tab.run(np.ones(N + n_art, dtype=bool))
            art_vals = tab.rhs[[i for i in range(tab.m) if tab.basis[i] >= N]]
            if art_vals.sum() > FEAS_TOL * max(1.0, np.abs(b).max()):
                return LpSolution(INFEASIBLE, iterations=tab.iterations)
            redundant = _drive_out_artificials(tab, N)
        keep = [i for i in range(tab.m) if i not in redundant]
        tab.drop_rows(keep, N)
        tab.set_costs(c)
        allowed = np.ones(N, dtype=bool)
        status = tab.run(allowed)
        if status == UNBOUNDED:
            return LpSolution(UNBOUNDED, iterations=tab.iterations)
        if not tab.restore_feasibility(allowed):
            return LpSolution(INFEASIBLE, iterations=tab.iterations)
    finally:
        if dump is not None:
            dump.close()

    # recompute the basic values from the scaled system for accuracy
    rows = np.array(keep, dtype=int)
    bcols = np.array(tab.basis, dtype=int)
    xb = np.linalg.solve(A[np.ix_(rows, bcols)], b[rows])
    xs = np.zeros(N)
    xs[bcols] = np.where(np.abs(xb) < FEAS_TOL * 1e-3, 0.0, xb)
    xs = np.maximum(xs, 0.0)
    x_full = xs * s_full
    x = x_full[:n]
    return LpSolution(
        OPTIMAL, x, float(p.c @ x), tuple(sorted(int(j) for j in bcols)),
        x_full[n:], tuple(int(i) for i in redundant), tab.iterations,
    )


def _drive_out_artificials(tab: _Tableau, N: int) -> list[int]:
    """Pivot zero-valued artificials out of the basis; rows where that is
    impossible are linearly dependent and are reported as redundant."""
    redundant = []
    for i in range(tab.m):
        if tab.basis[i] < N:
            continue
        row = np.abs(tab.T[i, :N])
        j = int(np.argmax(row)) if N else 0
        if N and row[j] > PIVOT_TOL:
            tab.pivot(i, j)
        else:
            redundant.append(i)
    return redundant


@dataclass
class VerifyReport:
    primal_residual: float
    bound_violation: float
    dual_residual: float
    complementarity: float
    objective_gap: float
    tol: float
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def duals(p: LpProblem, sol: LpSolution) -> np.ndarray:
    """Row multipliers ``y`` with ``B^T y = c_B`` (zero on redundant rows)."""
    A, _, c = p.augmented()
    rows = [i for i in range(A.shape[0]) if i not in sol.redundant_rows]
    bcols = list(sol.basis)
    y = np.zeros(A.shape[0])
    if rows:
        y[rows] = np.linalg.solve(A[np.ix_(rows, bcols)].T, c[bcols])
    return y


def verify(p: LpProblem, sol: LpSolution, tol: float = 1e-8) -> VerifyReport:
    """Check primal feasibility, dual feasibility, complementary slackness and
    the primal/dual objective gap of an optimal solution."""
    x = np.asarray(sol.x, dtype=float)
    scale = max(1.0, np.abs(p.b_eq).max(initial=0.0), np.abs(p.b_ub).max(initial=0.0))
    r_eq = np.abs(p.A_eq @ x - p.b_eq).max(initial=0.0)
    r_ub = np.maximum(p.A_ub @ x - p.b_ub, 0.0).max(initial=0.0)
    neg = np.maximum(-x, 0.0).max(initial=0.0)
    y = duals(p, sol)
    A, b, c = p.augmented()
    x_aug = np.concatenate([x, p.b_ub - p.A_ub @ x])
    d = c - A.T @ y
    cscale = max(1.0, np.abs(c).max(initial=0.0))
    dual_res = np.maximum(-d, 0.0).max(initial=0.0) / cscale
    comp = np.abs(x_aug * d).max(initial=0.0) / cscale
    gap = abs(float(c @ x_aug) - float(b @ y)) / max(1.0, abs(float(c @ x_aug)))
    rep = VerifyReport(max(r_eq, r_ub) / scale, neg, dual_res, comp, gap, tol)
    if rep.primal_residual > tol:
        rep.failures.append(f"primal infeasibility {rep.primal_residual:.3g}")
    if rep.bound_violation > tol:
        rep.failures.append(f"negative variable {rep.bound_violation:.3g}")
    if rep.dual_residual > tol:
        rep.failures.append(f"dual infeasibility {rep.dual_residual:.3g}")
    if rep.complementarity > tol:
        rep.failures.append(f"complementary slackness {rep.complementarity:.3g}")
    if rep.objective_gap > tol:
        rep.failures.append(f"duality gap {rep.objective_gap:.3g}")
    return rep
