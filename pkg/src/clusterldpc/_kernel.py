"""Compiled message-passing loop over a flattened cluster graph.

Layout: cluster ``j`` owns log-belief entries ``ent_off[j]:ent_off[j+1]``
(its even-parity assignments; pruned entries hold -inf). Edge ``e`` owns
sepset states ``sep_off[e]:sep_off[e+1]``. A *port* maps the entries of
one cluster onto the states of one sepset: ``proj[poff:poff + n_entries]``.
Bit ports live in a separate array with two states each.

Marginals that share a source cluster are computed in one pass so each
entry is exponentiated once per group, not once per sepset.
"""

import math

import numpy as np
from numba import njit

from .expfam import bit_log_heights, gamma_mean_log, residual_increment

OK = 0
ERR_ZERO_DIVISION = 1
ERR_UNNORMALIZABLE = 2

NEG_INF = -np.inf


@njit(cache=True)
def _marginal_exact(logpsi, e0, e1, proj, p0, out, o0, size):
    """Per-state log-sum-exp (no shared maximum)."""
    for t in range(size):
        out[o0 + t] = NEG_INF
    acc = np.zeros(size)
    for i in range(e1 - e0):
        v = logpsi[e0 + i]
        if v == NEG_INF:
            continue
        t = proj[p0 + i]
        m = out[o0 + t]
        if v > m:
            acc[t] = acc[t] * math.exp(m - v) + 1.0
            out[o0 + t] = v
        else:
            acc[t] += math.exp(v - m)
    for t in range(size):
        if out[o0 + t] != NEG_INF:
            out[o0 + t] += math.log(acc[t])


@njit(cache=True)
def _refresh_weights(logpsi, ent_off, j, wc, wmax, wstate):
    """Cache exp(logpsi - max) for cluster j; wstate: 0 stale, 1 ok, 2 ok with underflow."""
    if wstate[j] != 0:
        return True
    e0 = ent_off[j]
    e1 = ent_off[j + 1]
    mx = NEG_INF
    for i in range(e0, e1):
        if logpsi[i] > mx:
            mx = logpsi[i]
    if mx == NEG_INF:
        return False
    lost = False
    for i in range(e0, e1):
        v = logpsi[i]
        wc[i] = math.exp(v - mx)
        if wc[i] == 0.0 and v != NEG_INF:
            lost = True
    wmax[j] = mx
    wstate[j] = 2 if lost else 1
    return True


@njit(cache=True)
def _group_marginals(logpsi, ent_off, j, proj, poffs, ooffs, sizes, k0, k1, out, wc, wmax, wstate):
    """Normalized log marginals of cluster j onto ports k0..k1-1.

    Entries are exponentiated once per cluster state against its maximum;
    a state whose sum underflows while it still has live entries is redone
    exactly.
    """
    if not _refresh_weights(logpsi, ent_off, j, wc, wmax, wstate):
        return False
    e0 = ent_off[j]
    e1 = ent_off[j + 1]
    mx = wmax[j]
    lost = wstate[j] == 2
    for k in range(k0, k1):
        o0 = ooffs[k]
        p0 = poffs[k]
        size = sizes[k]
        for t in range(size):
            out[o0 + t] = 0.0
        for i in range(e1 - e0):
            out[o0 + proj[p0 + i]] += wc[e0 + i]
        redo = False
        for t in range(size):
            if out[o0 + t] > 0.0:
                out[o0 + t] = math.log(out[o0 + t]) + mx
            else:
                out[o0 + t] = NEG_INF
                redo = lost
        if redo:
            _marginal_exact(logpsi, e0, e1, proj, p0, out, o0, size)
        _normalize(out, o0, size)
    return True


@njit(cache=True)
def _normalize(v, o0, size):
    mx = NEG_INF
    for t in range(size):
        if v[o0 + t] > mx:
            mx = v[o0 + t]
    if mx == NEG_INF:
        return False
    s = 0.0
    for t in range(size):
        s += math.exp(v[o0 + t] - mx)
    z = mx + math.log(s)
    for t in range(size):
        v[o0 + t] -= z
    return True


@njit(cache=True)
def _sym_kl(a, a0, b, b0, size):
    s = 0.0
    for t in range(size):
        x = a[a0 + t]
        y = b[b0 + t]
        if x == NEG_INF and y == NEG_INF:
            continue
        if x == NEG_INF or y == NEG_INF:
            return np.inf
        s += (math.exp(x) - math.exp(y)) * (x - y)
    return 0.5 * s


@njit(cache=True)
def _absorb(logpsi, e0, e1, proj, p0, new, n0, old, o0, size, lr):
    """logpsi *= new / old over one port; False on nonzero / zero."""
    bad = False
    for t in range(size):
        if new[n0 + t] == NEG_INF:
            lr[t] = NEG_INF
        elif old[o0 + t] == NEG_INF:
            lr[t] = 0.0
            bad = True
        else:
            lr[t] = new[n0 + t] - old[o0 + t]
    if bad:
        for i in range(e1 - e0):
            t = proj[p0 + i]
            if logpsi[e0 + i] != NEG_INF and new[n0 + t] != NEG_INF and old[o0 + t] == NEG_INF:
                return False
    for i in range(e1 - e0):
        logpsi[e0 + i] += lr[proj[p0 + i]]
    return True


@njit(cache=True)
def _lbu_sweep(run_ptr, src, dst, edg, s_poff, d_poff, buf_off, sizes,
               ent_off, proj, sep_off, sep, logpsi, active, changed, buf, wc, wmax, wstate, lr,
               thr, use_deact):
    """Ordered sepset updates; consecutive pairs sharing a source form a run."""
    for r in range(run_ptr.size - 1):
        k0 = run_ptr[r]
        k1 = run_ptr[r + 1]
        s = src[k0]
        if use_deact and not active[s]:
            continue
        if not _group_marginals(logpsi, ent_off, s, proj, s_poff, buf_off, sizes,
                                k0, k1, buf, wc, wmax, wstate):
            return ERR_UNNORMALIZABLE, s
        for k in range(k0, k1):
            d = dst[k]
            e = edg[k]
            size = sizes[k]
            kl = _sym_kl(buf, buf_off[k], sep, sep_off[e], size)
            if use_deact and not active[d] and kl < thr:
                continue
            if not _absorb(logpsi, ent_off[d], ent_off[d + 1], proj, d_poff[k], buf, buf_off[k], sep, sep_off[e],
                           size, lr):
                return ERR_ZERO_DIVISION, d
            wstate[d] = 0
            for t in range(size):
                sep[sep_off[e] + t] = buf[buf_off[k] + t]
            if kl >= thr:
                active[d] = True
                changed[d] = True
    return OK, -1


@njit(cache=True)
def _lbu_gather(run_ptr, src, dst, edg, s_poff, d_poff, buf_off, sizes,
                ent_off, proj, sep_off, sep, logpsi, active, changed, buf, wc, wmax, wstate, lr, take,
                thr, use_deact):
    """Ordered sepset updates where each run shares its destination.

    Sources are distinct from the destination, so every message of a run
    can be formed before any of them is absorbed.
    """
    for r in range(run_ptr.size - 1):
        k0 = run_ptr[r]
        k1 = run_ptr[r + 1]
        d = dst[k0]
        n_take = 0
        for k in range(k0, k1):
            s = src[k]
            if use_deact and not active[s]:
                continue
            if not _group_marginals(logpsi, ent_off, s, proj, s_poff, buf_off, sizes,
                                    k, k + 1, buf, wc, wmax, wstate):
                return ERR_UNNORMALIZABLE, s
            kl = _sym_kl(buf, buf_off[k], sep, sep_off[edg[k]], sizes[k])
            if use_deact and not active[d] and kl < thr:
                continue
            take[n_take] = k
            n_take += 1
            if kl >= thr:
                active[d] = True
                changed[d] = True
        if n_take == 0:
            continue
        for q in range(n_take):
            k = take[q]
            if not _absorb(logpsi, ent_off[d], ent_off[d + 1], proj, d_poff[k], buf, buf_off[k], sep,
                           sep_off[edg[k]], sizes[k], lr):
                return ERR_ZERO_DIVISION, d
            wstate[d] = 0
        for q in range(n_take):
            k = take[q]
            for t in range(sizes[k]):
                sep[sep_off[edg[k]] + t] = buf[buf_off[k] + t]
    return OK, -1


@njit(cache=True)
def decode_packet(ent_off, sep_off, proj,
                  in_run, in_src, in_dst, in_edge, in_spoff, in_dpoff, in_boff, in_size,
                  out_run, out_src, out_dst, out_edge, out_spoff, out_dpoff, out_boff, out_size,
                  att, bit_poff, bitval, bgrp_ptr, bgrp_cl, bgrp_bit, bgrp_poff, bgrp_ooff,
                  cal_ptr, cal_poff, cal_ooff, cal_size, h_ptr, h_idx,
                  x, prior1, prior2, learn, fixed_e, fixed_el,
                  max_iter, cal_tol, thr, use_deact):
    n_cl = ent_off.size - 1
    n_edges = sep_off.size - 1
    n_bits = x.size
    logpsi = np.zeros(ent_off[n_cl])
    sep = np.empty(sep_off[n_edges])
    for e in range(n_edges):
        size = sep_off[e + 1] - sep_off[e]
        for t in range(size):
            sep[sep_off[e] + t] = -math.log(size)
    mu = np.full(2 * n_bits, -math.log(2.0))
    p1 = np.full(n_bits, 0.5)
    bits = np.zeros(n_bits, dtype=np.uint8)
    active = np.ones(n_cl, dtype=np.bool_)
    changed = np.zeros(n_cl, dtype=np.bool_)
    nbuf = 2 * sep_off[n_edges] + 2 * n_bits + 2
    buf = np.empty(nbuf)
    wc = np.empty(ent_off[n_cl])
    wmax = np.zeros(n_cl)
    wstate = np.zeros(n_cl, dtype=np.int8)
    lr = np.empty(np.max(np.diff(sep_off)) if n_edges else 2)
    two = np.empty(2)
    take = np.empty(max(in_src.size, 1), dtype=np.int64)
    bsizes = np.full(bgrp_bit.size, 2, dtype=np.int64)
    tr_active = np.zeros(max_iter, dtype=np.int64)
    tr_mean = np.zeros(max_iter)
    tr_synd = np.zeros(max_iter, dtype=np.bool_)
    eta1 = prior1
    eta2 = prior2
    post1 = prior1
    post2 = prior2
    converged = False
    it = 0
    while it < max_iter and not converged:
        # gamma -> bit nodes
        if learn:
            eg, elg = gamma_mean_log(eta1, eta2)
        else:
            eg, elg = fixed_e, fixed_el
        for j in range(n_cl):
            if active[j] or not use_deact:
                tr_active[it] += 1
        # bit nodes -> attached parity clusters
        for n in range(n_bits):
            l0, l1 = bit_log_heights(x[n], eg, elg)
            two[0] = l0
            two[1] = l1
            _normalize(two, 0, 2)
            kl = _sym_kl(two, 0, mu, 2 * n, 2)
            j = att[n]
            if use_deact and not active[j] and kl < thr:
                continue
            if not _absorb(logpsi, ent_off[j], ent_off[j + 1], bitval, bit_poff[n], two, 0, mu, 2 * n, 2, lr):
                return ERR_ZERO_DIVISION, j, it, False, bits, p1, post1, post2, tr_active, tr_mean, tr_synd
            wstate[j] = 0
            mu[2 * n] = two[0]
            mu[2 * n + 1] = two[1]
            if kl >= thr:
                active[j] = True
                changed[j] = True
        # inward then outward LBU sweeps
        status, where = _lbu_gather(in_run, in_src, in_dst, in_edge, in_spoff, in_dpoff, in_boff, in_size,
                                    ent_off, proj, sep_off, sep, logpsi, active, changed, buf, wc, wmax, wstate,
                                    lr, take,
                                    thr, use_deact)
        if status != OK:
            return status, where, it, False, bits, p1, post1, post2, tr_active, tr_mean, tr_synd
        status, where = _lbu_sweep(out_run, out_src, out_dst, out_edge, out_spoff, out_dpoff, out_boff,
                                   out_size, ent_off, proj, sep_off, sep, logpsi, active, changed, buf,
                                   wc, wmax, wstate, lr, thr, use_deact)
        if status != OK:
            return status, where, it, False, bits, p1, post1, post2, tr_active, tr_mean, tr_synd
        # parity clusters -> bit nodes, grouped by attached cluster
        for g in range(bgrp_ptr.size - 1):
            j = bgrp_cl[g]
            if not _group_marginals(logpsi, ent_off, j, bitval, bgrp_poff, bgrp_ooff,
                                    bsizes, bgrp_ptr[g], bgrp_ptr[g + 1], buf, wc, wmax, wstate):
                return ERR_UNNORMALIZABLE, j, it, False, bits, p1, post1, post2, tr_active, tr_mean, tr_synd
            for k in range(bgrp_ptr[g], bgrp_ptr[g + 1]):
                n = bgrp_bit[k]
                q0 = math.exp(buf[bgrp_ooff[k]])
                q1 = math.exp(buf[bgrp_ooff[k] + 1])
                p1[n] = q1 / (q0 + q1)
        # rebuild gamma from the stored prior
        inc1 = 0.0
        for n in range(n_bits):
            inc1 += residual_increment(x[n], 1.0 - p1[n], p1[n])
            bits[n] = 1 if p1[n] > 0.5 else 0
        post1 = prior1 + inc1
        post2 = prior2 + 0.5 * n_bits
        if learn:
            eta1 = post1
            eta2 = post2
        tr_mean[it] = (post2 + 1.0) / (-post1)
        # keep beliefs bounded; constants do not matter
        for j in range(n_cl):
            mx = NEG_INF
            for i in range(ent_off[j], ent_off[j + 1]):
                if logpsi[i] > mx:
                    mx = logpsi[i]
            for i in range(ent_off[j], ent_off[j + 1]):
                logpsi[i] -= mx
            wmax[j] -= mx  # cached weights are shift-invariant
        it += 1
        synd = True
        for r in range(h_ptr.size - 1):
            par = 0
            for q in range(h_ptr[r], h_ptr[r + 1]):
                par ^= bits[h_idx[q]]
            if par:
                synd = False
                break
        tr_synd[it - 1] = synd
        if synd:
            for j in range(n_cl):
                if cal_ptr[j + 1] > cal_ptr[j]:
                    _group_marginals(logpsi, ent_off, j, proj, cal_poff, cal_ooff,
                                     cal_size, cal_ptr[j], cal_ptr[j + 1], buf, wc, wmax, wstate)
            converged = True
            for e in range(n_edges):
                size = sep_off[e + 1] - sep_off[e]
                if _sym_kl(buf, 2 * sep_off[e], buf, 2 * sep_off[e] + size, size) > cal_tol:
                    converged = False
                    break
        if use_deact:
            for j in range(n_cl):
                active[j] = changed[j]
                changed[j] = False
    return OK, -1, it, converged, bits, p1, post1, post2, tr_active[:it], tr_mean[:it], tr_synd[:it]
