# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: simplex elimination and the slot-by-slot simulator.

Semantics match ``_kernels_py`` exactly; both consume the same pre-drawn
uniform variates so results are bit-identical across backends.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

# counter layout, shared with the Python kernel
DEF C_TX = 0
DEF C_SUCC = 1
DEF C_START = 2
DEF C_QUEUE = 3
DEF C_ARR = 4
DEF C_DROP = 5
DEF C_DEP = 6
DEF C_SOJ = 7


def eliminate(double[:, ::1] T, Py_ssize_t r, double[::1] col):
    """In-place ``T -= outer(col, T[r])`` skipping zero rows and columns.
    The pivot row must have ``col[r] == 0``."""
    cdef Py_ssize_t m = T.shape[0], n = T.shape[1], i, k, nnz = 0
    cdef double c
    cdef Py_ssize_t *idx = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    if idx == NULL:
        raise MemoryError()
    try:
        for k in range(n):
            if T[r, k] != 0.0:
                idx[nnz] = k
                nnz += 1
        for i in range(m):
            c = col[i]
            if c == 0.0:
                continue
            for k in range(nnz):
                T[i, idx[k]] -= c * T[r, idx[k]]
    finally:
        free(idx)


def lex_filter(const double[:, ::1] T, long[::1] rows, const double[::1] piv, Py_ssize_t k0, double tol):
    """Rows of ``T[rows, k0:] / piv`` that are lexicographically minimal
    (comparisons with relative tolerance ``tol``)."""
    cdef Py_ssize_t n = rows.shape[0], ncol = T.shape[1], k, i, cnt
    cdef double vmin, v, thr
    cdef long[::1] cur = rows.copy()
    cdef double[::1] pv = piv.copy()
    k = k0
    while n > 1 and k < ncol:
        vmin = T[cur[0], k] / pv[0]
        for i in range(1, n):
            v = T[cur[i], k] / pv[i]
            if v < vmin:
                vmin = v
        thr = vmin + tol * (abs(vmin) if abs(vmin) > 1.0 else 1.0)
        cnt = 0
        for i in range(n):
            if T[cur[i], k] / pv[i] <= thr:
                cur[cnt] = cur[i]
                pv[cnt] = pv[i]
                cnt += 1
        n = cnt
        k += 1
    return np.asarray(cur[:n])


def run_slots(long k0, long k1, long burn_in, long n_acc, long n_batches,
              const double[::1] u_act, const double[:, ::1] u_out, const double[:, ::1] u_arr,
              const double[:, ::1] cdf, const long[::1] n_actions, const long[::1] pair_offset,
              const signed char[:, ::1] pair_T, const signed char[:, ::1] pair_D,
              const double[:, ::1] pair_rho, const double[::1] alpha,
              long B, long F,
              long[::1] b, long[::1] f, long[:, ::1] tags, long[::1] head,
              long[:, ::1] visits, long[:, :, ::1] counters,
              int[::1] trace_state, int[::1] trace_pair, int[::1] trace_mask,
              bint record_trace):
    cdef Py_ssize_t S = b.shape[0]
    cdef long n_local = 1 + F * B
    cdef long k, x, a, p, s, batch, na, mask, bb, ff, removed, y, t, arrived, nb, li
    cdef double u
    cdef bint acc
    for k in range(k0, k1):
        x = 0
        for s in range(S):
            li = 0 if b[s] == 0 else 1 + (b[s] - 1) * F + (f[s] - 1)
            x = x * n_local + li
        u = u_act[k - k0]
        na = n_actions[x]
        a = 0
        while a < na - 1 and u >= cdf[x, a]:
            a += 1
        p = pair_offset[x] + a
        acc = k >= burn_in
        batch = 0
        if acc:
            batch = ((k - burn_in) * n_batches) // n_acc
            visits[batch, p] += 1
        mask = 0
        for s in range(S):
            bb = b[s]
            ff = f[s]
            t = pair_T[p, s]
            y = 1 if (t and u_out[k - k0, s] < pair_rho[p, s]) else 0
            mask |= y << s
            removed = 1 if (bb > 0 and (y or pair_D[p, s])) else 0
            if acc:
                counters[batch, s, C_TX] += t
                counters[batch, s, C_SUCC] += y
                counters[batch, s, C_QUEUE] += bb
                if bb > 0 and ff == 1:
                    counters[batch, s, C_START] += 1
            nb = bb
            if removed:
                if acc:
                    counters[batch, s, C_DEP] += 1
                    counters[batch, s, C_SOJ] += k - tags[s, head[s]]
                    if not y:
                        counters[batch, s, C_DROP] += 1
                head[s] = (head[s] + 1) % B
                nb -= 1
            arrived = 1 if u_arr[k - k0, s] < alpha[s] else 0
            if arrived and nb < B:
                tags[s, (head[s] + nb) % B] = k
                nb += 1
                if acc:
                    counters[batch, s, C_ARR] += 1
            if nb == 0:
                f[s] = 0
            elif removed or bb == 0:
                f[s] = 1
            else:
                f[s] = ff + 1
            b[s] = nb
        if acc and record_trace:
            trace_state[k - burn_in] = x
            trace_pair[k - burn_in] = p
            trace_mask[k - burn_in] = mask
