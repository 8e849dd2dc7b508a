"""Pure-Python versions of the compiled kernels (same arguments, same results)."""

import numpy as np

C_TX, C_SUCC, C_START, C_QUEUE, C_ARR, C_DROP, C_DEP, C_SOJ = range(8)
N_COUNTERS = 8


def eliminate(T, r, col):
    """Rank-one elimination ``T -= outer(col, T[r])``; requires ``col[r] == 0``."""
    T -= np.outer(col, T[r])


def lex_filter(T, rows, piv, k0, tol):
    """Rows of ``T[rows, k0:] / piv`` that are lexicographically minimal."""
    k = k0
    while rows.size > 1 and k < T.shape[1]:
        v = T[rows, k] / piv
        vmin = v.min()
        keep = v <= vmin + tol * max(1.0, abs(vmin))
        rows, piv = rows[keep], piv[keep]
        k += 1
    return rows


def run_slots(k0, k1, burn_in, n_acc, n_batches,
              u_act, u_out, u_arr,
              cdf, n_actions, pair_offset, pair_T, pair_D, pair_rho, alpha,
              B, F, b, f, tags, head, visits, counters,
              trace_state, trace_pair, trace_mask, record_trace):
    S = len(b)
    n_local = 1 + F * B
    # plain lists are much faster than numpy scalar indexing in this loop
    ua = u_act.tolist()
    uo = u_out.tolist()
    ur = u_arr.tolist()
    cdf_l = cdf.tolist()
    na_l = n_actions.tolist()
    off_l = pair_offset.tolist()
    T_l = pair_T.tolist()
    D_l = pair_D.tolist()
    rho_l = pair_rho.tolist()
    al = alpha.tolist()
    bl = b.tolist()
    fl = f.tolist()
    tg = tags.tolist()
    hd = head.tolist()
    cnt = counters.tolist()
    vis_batch = []
    vis_pair = []
    tr = []
    for k in range(k0, k1):
        x = 0
        for s in range(S):
            bs = bl[s]
            x = x * n_local + (0 if bs == 0 else 1 + (bs - 1) * F + (fl[s] - 1))
        u = ua[k - k0]
        na = na_l[x]
        row = cdf_l[x]
        a = 0
        while a < na - 1 and u >= row[a]:
            a += 1
        p = off_l[x] + a
        acc = k >= burn_in
        batch = 0
        if acc:
            batch = ((k - burn_in) * n_batches) // n_acc
            vis_batch.append(batch)
            vis_pair.append(p)
        mask = 0
        Tp, Dp, rp = T_l[p], D_l[p], rho_l[p]
        uok, urk = uo[k - k0], ur[k - k0]
        for s in range(S):
            bb = bl[s]
            ff = fl[s]
            t = Tp[s]
            y = 1 if (t and uok[s] < rp[s]) else 0
            mask |= y << s
            removed = bb > 0 and (y or Dp[s])
            if acc:
                c = cnt[batch][s]
                c[C_TX] += t
                c[C_SUCC] += y
                c[C_QUEUE] += bb
                if bb > 0 and ff == 1:
                    c[C_START] += 1
            nb = bb
            if removed:
                if acc:
                    c[C_DEP] += 1
                    c[C_SOJ] += k - tg[s][hd[s]]
                    if not y:
                        c[C_DROP] += 1
                hd[s] = (hd[s] + 1) % B
                nb -= 1
            if urk[s] < al[s] and nb < B:
                tg[s][(hd[s] + nb) % B] = k
                nb += 1
                if acc:
                    c[C_ARR] += 1
            if nb == 0:
                fl[s] = 0
            elif removed or bb == 0:
                fl[s] = 1
            else:
                fl[s] = ff + 1
            bl[s] = nb
        if acc and record_trace:
            tr.append((k - burn_in, x, p, mask))
    if vis_batch:
        np.add.at(visits, (np.array(vis_batch), np.array(vis_pair)), 1)
    counters[...] = cnt
    b[:] = bl
    f[:] = fl
    tags[...] = tg
    head[:] = hd
    if tr:
        idx, xs, ps, ms = (np.array(v) for v in zip(*tr))
        trace_state[idx] = xs
        trace_pair[idx] = ps
        trace_mask[idx] = ms
