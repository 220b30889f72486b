"""Event-loop kernel of the packet simulator.

Everything is flat integer arrays so the same source runs compiled under
numba or interpreted under the numpy backend.  Times are int64 nanoseconds.
Routers are dense indices; ``link_index[a, b]`` is the directed link a->b.
"""

import numpy as np

from ._jit import kernel

INF_NS = np.int64(1) << 60

FORWARD = 0
FORWARD_DEV = 1
DELIVER = 2
DROP = 3

R_DETECTION = 0
R_SECOND = 1
R_GUARD = 2
R_UNREACH = 3
R_OVERFLOW = 4
N_REASONS = 5

EV_EMIT = 0
EV_ARRIVE = 1

ERR_POOL = 1


@kernel(inline=True)
def link_up(link_index, link_fail, det, r, y, now):
    """Whether router r believes its link to y is usable at ``now``."""
    l = link_index[r, y]
    if l < 0:
        return False
    return now < link_fail[l] + det


@kernel(inline=True)
def decide(r, d, v, now, link_index, link_fail, det, nh_old, nh_new, conv,
           dev_start, dev_end, ref, vec_nr, transit):
    """Forwarding decision: (kind, next router, vector id, drop reason).

    ``v`` is the vector id the packet is marked with, -1 if unmarked.
    FORWARD_DEV is a forward on deviation state, subject to the guard.
    """
    if r == d:
        return DELIVER, -1, v, -1
    if now >= conv[r, d]:
        y = nh_new[r, d]
    else:
        y = nh_old[r, d]
    if v >= 0:
        t = transit[r, v]
        if t >= 0:
            if not link_up(link_index, link_fail, det, r, t, now):
                return DROP, -1, v, R_SECOND
            return FORWARD_DEV, t, v, -1
        if y < 0 or not link_up(link_index, link_fail, det, r, y, now):
            return DROP, -1, v, R_SECOND
        return FORWARD, y, v, -1
    if y < 0:
        return DROP, -1, v, R_UNREACH
    if link_up(link_index, link_fail, det, r, y, now):
        return FORWARD, y, v, -1
    if now < dev_start[r] or now >= dev_end[r]:
        return DROP, -1, v, R_UNREACH
    w = ref[r, d]
    if w < 0:
        return DROP, -1, v, R_UNREACH
    y = vec_nr[w]
    if not link_up(link_index, link_fail, det, r, y, now):
        return DROP, -1, v, R_UNREACH
    return FORWARD_DEV, y, w, -1


# Heap keys pack (time << SEQ_BITS) | (seq mod 2**SEQ_BITS); payloads pack
# (id << 1) | kind.  Equal-time events keep insertion order within a
# 2**SEQ_BITS window, which is all determinism needs.
SEQ_BITS = 20
SEQ_MASK = (1 << SEQ_BITS) - 1
MAX_TIME_NS = np.int64(1) << (62 - SEQ_BITS)


@kernel
def heap_push(h_key, h_val, size, key, val):
    """Insert into a 4-ary min-heap; returns the new size."""
    i = size
    while i > 0:
        parent = (i - 1) >> 2
        if h_key[parent] <= key:
            break
        h_key[i] = h_key[parent]
        h_val[i] = h_val[parent]
        i = parent
    h_key[i] = key
    h_val[i] = val
    return size + 1


@kernel
def heap_pop(h_key, h_val, size):
    """Remove the root; returns (key, payload, new size)."""
    k0 = h_key[0]
    v0 = h_val[0]
    size -= 1
    if size > 0:
        key = h_key[size]
        val = h_val[size]
        i = 0
        while True:
            c = 4 * i + 1
            if c >= size:
                break
            best = c
            bk = h_key[c]
            last = c + 4 if c + 4 <= size else size
            for j in range(c + 1, last):
                kj = h_key[j]
                if kj < bk:
                    bk = kj
                    best = j
            if key <= bk:
                break
            h_key[i] = bk
            h_val[i] = h_val[best]
            i = best
        h_key[i] = key
        h_val[i] = val
    return k0, v0, size


@kernel
def simulate(link_index, link_dst, link_cap, link_prop, link_fail, router_fail, det,
             nh_old, nh_new, conv, dev_start, dev_end, ref, vec_nr, transit,
             guard, qcap, f_src, f_dst, f_size, f_rate, f_start, f_stop,
             win_lo, win_hi, budget, pool, trace_limit):
    n_links = link_dst.shape[0]
    n_flows = f_src.shape[0]

    p_flow = np.zeros(pool, dtype=np.int64)
    p_vid = np.zeros(pool, dtype=np.int64)
    p_hops = np.zeros(pool, dtype=np.int64)
    p_emit = np.zeros(pool, dtype=np.int64)
    p_link = np.zeros(pool, dtype=np.int64)
    p_at = np.zeros(pool, dtype=np.int64)
    p_marked = np.zeros(pool, dtype=np.bool_)
    free = np.arange(pool - 1, -1, -1).astype(np.int64)
    n_free = pool

    cap_h = pool + n_flows + 1
    h_key = np.zeros(cap_h, dtype=np.int64)
    h_val = np.zeros(cap_h, dtype=np.int64)
    h_size = 0
    seq = 0

    ring = np.zeros((n_links, qcap), dtype=np.int64)
    r_head = np.zeros(n_links, dtype=np.int64)
    r_count = np.zeros(n_links, dtype=np.int64)
    last_fin = np.zeros(n_links, dtype=np.int64)
    max_occ = np.zeros(n_links, dtype=np.int64)

    # counters: [flow, 0] = in window, [flow, 1] = whole run
    sent = np.zeros((n_flows, 2), dtype=np.int64)
    delivered = np.zeros((n_flows, 2), dtype=np.int64)
    dropped = np.zeros((n_flows, 2, N_REASONS), dtype=np.int64)
    ttl = np.zeros(n_flows, dtype=np.int64)
    marked_delivered = np.zeros(n_flows, dtype=np.int64)

    tr_time = np.zeros(trace_limit, dtype=np.int64)
    tr_router = np.zeros(trace_limit, dtype=np.int64)
    tr_flow = np.zeros(trace_limit, dtype=np.int64)
    tr_reason = np.zeros(trace_limit, dtype=np.int64)
    n_trace = 0
    n_trace_total = 0

    gap_q = np.zeros(n_flows, dtype=np.int64)
    gap_r = np.zeros(n_flows, dtype=np.int64)
    acc = np.zeros(n_flows, dtype=np.int64)
    tx_ns = np.zeros((n_flows, n_links), dtype=np.int64)
    for f in range(n_flows):
        bits_ns = f_size[f] * 8 * 1_000_000_000
        gap_q[f] = bits_ns // f_rate[f]
        gap_r[f] = bits_ns % f_rate[f]
        for l in range(n_links):
            tx_ns[f, l] = (bits_ns + link_cap[l] - 1) // link_cap[l]
        if f_start[f] < f_stop[f]:
            h_size = heap_push(h_key, h_val, h_size, (f_start[f] << SEQ_BITS) | (seq & SEQ_MASK), (f << 1) | EV_EMIT)
            seq += 1

    error = 0
    while h_size > 0:
        key, val, h_size = heap_pop(h_key, h_val, h_size)
        now = key >> SEQ_BITS
        kind = val & 1
        ident = val >> 1
        if kind == EV_EMIT:
            f = ident
            nxt = now + gap_q[f]
            acc[f] += gap_r[f]
            if acc[f] >= f_rate[f]:
                acc[f] -= f_rate[f]
                nxt += 1
            if nxt < f_stop[f]:
                h_size = heap_push(h_key, h_val, h_size, (nxt << SEQ_BITS) | (seq & SEQ_MASK), (f << 1) | EV_EMIT)
                seq += 1
            if n_free == 0:
                error = ERR_POOL
                break
            n_free -= 1
            pid = free[n_free]
            p_flow[pid] = f
            p_vid[pid] = -1
            p_hops[pid] = 0
            p_emit[pid] = now
            p_link[pid] = -1
            p_at[pid] = f_src[f]
            p_marked[pid] = False
            inw = 1 if (now >= win_lo and now < win_hi) else 0
            sent[f, 1] += 1
            if inw:
                sent[f, 0] += 1
        else:
            pid = ident
            f = p_flow[pid]
            l = p_link[pid]
            r = p_at[pid]
            if router_fail[r] <= now or link_fail[l] <= now:
                reason = R_DETECTION
                inw = 1 if (p_emit[pid] >= win_lo and p_emit[pid] < win_hi) else 0
                dropped[f, 1, reason] += 1
                if inw:
                    dropped[f, 0, reason] += 1
                if n_trace < trace_limit:
                    tr_time[n_trace] = now
                    tr_router[n_trace] = r
                    tr_flow[n_trace] = f
                    tr_reason[n_trace] = reason
                    n_trace += 1
                n_trace_total += 1
                free[n_free] = pid
                n_free += 1
                continue

        # forwarding decision for packet pid at router p_at[pid]
        f = p_flow[pid]
        r = p_at[pid]
        d = f_dst[f]
        inw = 1 if (p_emit[pid] >= win_lo and p_emit[pid] < win_hi) else 0
        act, y, w, reason = decide(r, d, p_vid[pid], now, link_index, link_fail, det,
                                   nh_old, nh_new, conv, dev_start, dev_end, ref, vec_nr, transit)
        if act == DELIVER:
            delivered[f, 1] += 1
            if inw:
                delivered[f, 0] += 1
            if p_marked[pid]:
                marked_delivered[f] += 1
            free[n_free] = pid
            n_free += 1
            continue
        if act != DROP:
            l = link_index[r, y]
            if p_hops[pid] >= budget:
                act = DROP
                reason = R_UNREACH
                ttl[f] += 1
            else:
                while r_count[l] > 0 and ring[l, r_head[l]] <= now:
                    r_head[l] += 1
                    if r_head[l] == qcap:
                        r_head[l] = 0
                    r_count[l] -= 1
                if link_fail[l] <= now:
                    # sent into a dead link the router has not noticed yet
                    act = DROP
                    reason = R_DETECTION
                elif act == FORWARD_DEV and guard and r_count[l] * 5 >= qcap * 4:
                    act = DROP
                    reason = R_GUARD
                elif r_count[l] >= qcap:
                    act = DROP
                    reason = R_OVERFLOW
        if act == DROP:
            dropped[f, 1, reason] += 1
            if inw:
                dropped[f, 0, reason] += 1
            if n_trace < trace_limit:
                tr_time[n_trace] = now
                tr_router[n_trace] = r
                tr_flow[n_trace] = f
                tr_reason[n_trace] = reason
                n_trace += 1
            n_trace_total += 1
            free[n_free] = pid
            n_free += 1
            continue
        start = now if now > last_fin[l] else last_fin[l]
        fin = start + tx_ns[f, l]
        last_fin[l] = fin
        slot = r_head[l] + r_count[l]
        if slot >= qcap:
            slot -= qcap
        ring[l, slot] = fin
        r_count[l] += 1
        if r_count[l] > max_occ[l]:
            max_occ[l] = r_count[l]
        if w >= 0:
            p_marked[pid] = True
        p_vid[pid] = w
        p_hops[pid] += 1
        p_link[pid] = l
        p_at[pid] = y
        h_size = heap_push(h_key, h_val, h_size, ((fin + link_prop[l]) << SEQ_BITS) | (seq & SEQ_MASK),
                           (pid << 1) | EV_ARRIVE)
        seq += 1

    return (error, sent, delivered, dropped, ttl, marked_delivered, max_occ,
            tr_time[:n_trace], tr_router[:n_trace], tr_flow[:n_trace], tr_reason[:n_trace],
            n_trace_total)
