"""Event-loop kernels for the market simulator.

The Gillespie loop dominates runtime, so it is compiled with numba's
``@njit``.  Setting the environment variable ``SPIMARKET_NO_NUMBA=1``
selects a pure-Python/numpy fallback: the same functions run uncompiled and
produce bit-identical event streams (the RNG is a hand-rolled splitmix64 on
a uint64 state array, which behaves the same in both paths).
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("SPIMARKET_NO_NUMBA", "") != "1"

if USE_NUMBA:
    from numba import njit
else:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(func):
            return func
        return deco

# splitmix64 constants; np.uint64 scalars so the fallback path wraps the
# same way compiled code does
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, nogil=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _rand(state):
    """Uniform double in [0, 1)."""
    return float(_next_u64(state) >> _S11) * _INV53


@njit(cache=True, nogil=True)
def _accumulate(t0, t1, warmup, win_len, nw, batch_len, nb,
                present, avail, saved,
                win_pres, win_time, bt_time, bt_pres, bt_avail, bt_saved):
    """Add the state over [t0, t1) to warm-up-window and batch integrals."""
    n = present.size
    t = t0
    while t < t1 - 1e-15:
        if t < warmup:
            k = int(t / win_len)
            if k >= nw:
                k = nw - 1
            seg_end = (k + 1) * win_len
            if seg_end > warmup:
                seg_end = warmup
            if seg_end > t1:
                seg_end = t1
            if seg_end <= t:
                seg_end = t1
            dt = seg_end - t
            win_time[k] += dt
            for i in range(n):
                if present[i] > 0:
                    win_pres[k, i] += dt
        else:
            k = int((t - warmup) / batch_len)
            if k >= nb:
                k = nb - 1
            seg_end = warmup + (k + 1) * batch_len
            if seg_end > t1:
                seg_end = t1
            if seg_end <= t:
                seg_end = t1
            dt = seg_end - t
            bt_time[k] += dt
            for i in range(n):
                if present[i] > 0:
                    bt_pres[k, i] += dt
                if avail[i] > 0:
                    bt_avail[k, i] += dt
                if saved[i] > 0:
                    bt_saved[k, i] += dt
        t = seg_end


@njit(cache=True, nogil=True)
def simulate(seed, horizon, warmup, nb, nw,
             lam, mu, gamma, q, propose_avail, greedy, prune_flag,
             sel_start, sel_count, sub_masks, sub_cum,
             best_mask, val_table, feas_table, v_pair,
             collect_rhist, max_trace):
    """Run one market path; see sim.run for the argument layout.

    RNG draws happen in a fixed order per event: holding time, event pick,
    then (perish) the item class or (arrival) one proposal coin per good
    with a nonempty pool in index order followed by one selection draw.
    """
    n = lam.size
    m = gamma.size
    nsets = 1 << n

    state = np.zeros(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    for _ in range(8):  # warm the mixer so small seeds decorrelate
        _next_u64(state)

    present = np.zeros(n, dtype=np.int64)
    avail = np.zeros(n, dtype=np.int64)
    saved = np.zeros(n, dtype=np.int64)

    win_len = warmup / nw if warmup > 0 else 1.0
    batch_len = (horizon - warmup) / nb

    win_pres = np.zeros((nw, n))
    win_time = np.zeros(nw)
    bt_time = np.zeros(nb)
    bt_pres = np.zeros((nb, n))
    bt_avail = np.zeros((nb, n))
    bt_saved = np.zeros((nb, n))
    bt_reward = np.zeros(nb)
    bt_sold = np.zeros((nb, n, m))
    bt_sel = np.zeros((nb, n, m))
    bt_arr = np.zeros((nb, m))
    bt_seen = np.zeros((nb, n, m))
    bt_prop = np.zeros((nb, n))
    bt_prop_saved = np.zeros((nb, n))
    rhist = np.zeros((m, nsets if collect_rhist else 1), dtype=np.int64)
    event_counts = np.zeros(3, dtype=np.int64)  # supply, perish, arrival
    fallback_count = 0
    error_flag = 0

    tr_time = np.zeros(max_trace)
    tr_kind = np.zeros(max_trace, dtype=np.int64)
    tr_idx = np.zeros(max_trace, dtype=np.int64)
    tr_rmask = np.zeros(max_trace, dtype=np.int64)
    tr_sold = np.zeros(max_trace, dtype=np.int64)
    tr_count = 0

    sum_lam = lam.sum()
    sum_gamma = gamma.sum()

    t = 0.0
    while True:
        total = sum_lam + sum_gamma
        for i in range(n):
            total += present[i] * mu[i]
        u = _rand(state)
        dt = -np.log(1.0 - u) / total
        t_next = t + dt
        seg_end = t_next if t_next < horizon else horizon
        _accumulate(t, seg_end, warmup, win_len, nw, batch_len, nb,
                    present, avail, saved,
                    win_pres, win_time, bt_time, bt_pres, bt_avail, bt_saved)
        if t_next >= horizon:
            break
        t = t_next
        post = t >= warmup
        kb = 0
        if post:
            kb = int((t - warmup) / batch_len)
            if kb >= nb:
                kb = nb - 1

        pick = _rand(state) * total
        kind = -1
        idx = -1
        acc = 0.0
        for i in range(n):
            acc += lam[i]
            if pick < acc:
                kind, idx = 0, i
                break
        if kind < 0:
            for i in range(n):
                acc += present[i] * mu[i]
                if pick < acc:
                    kind, idx = 1, i
                    break
        if kind < 0:
            for j in range(m):
                acc += gamma[j]
                if pick < acc:
                    kind, idx = 2, j
                    break
        if kind < 0:  # guard against roundoff at the top edge
            kind, idx = 2, m - 1

        event_counts[kind] += 1
        rmask = 0
        sold_mask = 0

        if kind == 0:
            present[idx] += 1
            avail[idx] += 1
            saved[idx] += 1
        elif kind == 1:
            r = _rand(state) * present[idx]
            if r < saved[idx]:
                saved[idx] -= 1
                avail[idx] -= 1
            elif r < avail[idx]:
                avail[idx] -= 1
            present[idx] -= 1
        else:
            j = idx
            if post:
                bt_arr[kb, j] += 1.0
                for i in range(n):
                    if present[i] > 0:
                        bt_seen[kb, i, j] += 1.0
            if greedy == 1:
                amask = 0
                for i in range(n):
                    if avail[i] > 0:
                        amask |= 1 << i
                sold_mask = best_mask[j, amask]
            else:
                for i in range(n):
                    pool = avail[i] if propose_avail == 1 else present[i]
                    if pool > 0 and _rand(state) < q[i, j]:
                        rmask |= 1 << i
                        if post:
                            bt_prop[kb, i] += 1.0
                            if saved[i] > 0:
                                bt_prop_saved[kb, i] += 1.0
                        if saved[i] > 0:
                            saved[i] -= 1
                if post and collect_rhist == 1:
                    rhist[j, rmask] += 1
                sel_mask = 0
                if rmask != 0:
                    s = sel_start[j, rmask]
                    k = sel_count[j, rmask]
                    if k == 0:
                        # unseen active set: take the best-value singleton
                        fallback_count += 1
                        best_v = -1.0
                        for i in range(n):
                            if (rmask >> i) & 1 and v_pair[i, j] > best_v:
                                best_v = v_pair[i, j]
                                sel_mask = 1 << i
                    else:
                        usel = _rand(state)
                        lo = 0
                        while lo < k - 1 and sub_cum[s + lo] <= usel:
                            lo += 1
                        sel_mask = sub_masks[s + lo]
                if post:
                    for i in range(n):
                        if (sel_mask >> i) & 1:
                            bt_sel[kb, i, j] += 1.0
                sold_mask = 0
                for i in range(n):
                    if (sel_mask >> i) & 1 and avail[i] > 0:
                        sold_mask |= 1 << i
            if prune_flag == 1 and sold_mask != 0:
                kept = 0
                for i in range(n):
                    if (sold_mask >> i) & 1:
                        if val_table[j, kept | (1 << i)] >= val_table[j, kept]:
                            kept |= 1 << i
                sold_mask = kept
            if sold_mask != 0:
                if feas_table[j, sold_mask] == 0:
                    error_flag = 1
                for i in range(n):
                    if (sold_mask >> i) & 1:
                        avail[i] -= 1
                        if saved[i] > avail[i]:
                            saved[i] = avail[i]
                if post:
                    bt_reward[kb] += val_table[j, sold_mask]
                    for i in range(n):
                        if (sold_mask >> i) & 1:
                            bt_sold[kb, i, j] += 1.0

        for i in range(n):
            if saved[i] < 0 or saved[i] > avail[i] or avail[i] > present[i]:
                error_flag = 2

        if tr_count < max_trace:
            tr_time[tr_count] = t
            tr_kind[tr_count] = kind
            tr_idx[tr_count] = idx
            tr_rmask[tr_count] = rmask
            tr_sold[tr_count] = sold_mask
            tr_count += 1

    return (bt_time, bt_reward, bt_sold, bt_sel, bt_arr, bt_seen,
            bt_pres, bt_avail, bt_saved, bt_prop, bt_prop_saved,
            win_time, win_pres, rhist, event_counts,
            fallback_count, error_flag,
            tr_time[:tr_count], tr_kind[:tr_count], tr_idx[:tr_count],
            tr_rmask[:tr_count], tr_sold[:tr_count])
