"""Compiled core of the slotted simulator.

The loop is event driven: a binary heap holds each UE's next transmission
TTI, so only TTIs in which somebody transmits cost anything. Every UE owns a
SplitMix64 stream derived from (seed, uid); churn draws use a separate
stream. Arrivals are generated lazily per UE: a Poisson process is a sum of
exponential gaps, and FIFO service means only the head-of-line arrival time
has to be stored.
"""

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_CHURN_SALT = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0

ERR_OK = 0
ERR_TABLE_MISS = 1

# counters layout
C_ARRIVED = 0
C_DELIVERED = 1
C_QUEUED_END = 2
C_CHURNED = 3
C_LATE = 4
C_OVERFLOW = 5
C_TX_TTIS = 6
C_JOINS = 7
C_LEAVES = 8
N_COUNTERS = 9


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_seed(seed, uid):
    return mix64(np.uint64(seed) + mix64(np.uint64(uid) * _GOLDEN + _GOLDEN))


@njit(cache=True)
def _next_u(state, i):
    """Uniform on [0, 1) from stream ``i`` of ``state``."""
    s = state[i] + _GOLDEN
    state[i] = s
    return float(mix64(s) >> _S11) * _TWO53


@njit(cache=True)
def _exp(state, i):
    return -math.log1p(-_next_u(state, i))


# ------------------------------------------------------------------ heap

@njit(cache=True)
def _heap_push(ht, hs, hv, n, t, s, v):
    if n == ht.shape[0]:
        cap = 2 * n + 16
        nt = np.empty(cap, np.int64)
        ns = np.empty(cap, np.int64)
        nv = np.empty(cap, np.int64)
        nt[:n] = ht[:n]
        ns[:n] = hs[:n]
        nv[:n] = hv[:n]
        ht, hs, hv = nt, ns, nv
    i = n
    ht[i] = t
    hs[i] = s
    hv[i] = v
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] < ht[i] or (ht[p] == ht[i] and hs[p] <= hs[i]):
            break
        ht[p], ht[i] = ht[i], ht[p]
        hs[p], hs[i] = hs[i], hs[p]
        hv[p], hv[i] = hv[i], hv[p]
        i = p
    return ht, hs, hv, n + 1


@njit(cache=True)
def _heap_pop(ht, hs, hv, n):
    n -= 1
    ht[0] = ht[n]
    hs[0] = hs[n]
    hv[0] = hv[n]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        c = l
        r = l + 1
        if r < n and (ht[r] < ht[l] or (ht[r] == ht[l] and hs[r] < hs[l])):
            c = r
        if ht[i] < ht[c] or (ht[i] == ht[c] and hs[i] <= hs[c]):
            break
        ht[c], ht[i] = ht[i], ht[c]
        hs[c], hs[i] = hs[i], hs[c]
        hv[c], hv[i] = hv[i], hv[c]
        i = c
    return n


@njit(cache=True)
def _grow2d(a, n):
    if n < a.shape[0]:
        return a
    b = np.empty((2 * a.shape[0] + 16, a.shape[1]), a.dtype)
    b[: a.shape[0]] = a
    return b


# ------------------------------------------------------------------ churn draws

@njit(cache=True)
def _binomial_ge1(state, n, p, p_ge1):
    u = _next_u(state, 0) * p_ge1
    log_q = math.log1p(-p)
    cum = 0.0
    for k in range(1, n + 1):
        lp = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
              + k * math.log(p) + (n - k) * log_q)
        cum += math.exp(lp)
        if u <= cum:
            return k
    return n


@njit(cache=True)
def _poisson(state, m, at_least_one):
    if m <= 0.0:
        return 0
    u = _next_u(state, 0)
    if at_least_one:
        # pmf(k) = m^k / k! / (e^m - 1), k >= 1
        norm = math.expm1(m)
        k = 1
        pk = m / norm
    else:
        k = 0
        pk = math.exp(-m)
    cum = pk
    while u > cum and k < 100000:
        k += 1
        pk *= m / k
        cum += pk
    return k


# ------------------------------------------------------------------ main loop

@njit(cache=True)
def simulate(n0, lam, inv_rho, mu, horizon, warmup, seed, p_leave, n_bar, btable,
             hist_bins, hist_step, r_max, record_limit, late_tti):
    """Run one replication.

    ``btable[n]`` is the RB count used while n UEs are present (-1 if
    undefined). With ``p_leave == 0`` the population stays at ``n0``.
    """
    cap = n0 if p_leave == 0.0 else btable.shape[0] + 1
    rng = np.empty(cap + 1, np.uint64)
    rng[0] = mix64(np.uint64(seed) ^ _CHURN_SALT)
    cur_a = np.full(cap, np.inf)
    start = np.zeros(cap, np.int64)
    rnd = np.zeros(cap, np.int64)
    ver = np.zeros(cap, np.int64)
    active = np.empty(cap, np.int64)
    pos = np.full(cap, -1, np.int64)
    free = np.empty(cap, np.int64)
    n_free = 0
    for s in range(cap - 1, n0 - 1, -1):
        free[n_free] = s
        n_free += 1

    hist = np.zeros(hist_bins, np.int64)
    counters = np.zeros(N_COUNTERS, np.int64)
    attempts = np.zeros(r_max, np.int64)
    successes = np.zeros(r_max, np.int64)
    others = np.zeros(r_max, np.int64)
    others_sq = np.zeros(r_max, np.int64)
    b_max = 1
    for v in btable:
        b_max = max(b_max, v)
    rb_counts = np.zeros(b_max, np.int64)
    churn_log = np.empty((64, 3), np.int64)
    n_log = 0
    records = np.empty((min(record_limit, 1 << 16), 3), np.float64)
    n_rec = 0
    max_delay = 0.0

    ht = np.empty(max(16, 2 * n0), np.int64)
    hs = np.empty(max(16, 2 * n0), np.int64)
    hv = np.empty(max(16, 2 * n0), np.int64)
    nh = 0

    n_act = 0
    uid = 0
    n_cur = n0
    if n0 >= btable.shape[0] or btable[n0] < 1:
        return (hist, counters, attempts, successes, others, others_sq, rb_counts,
                churn_log[:0], records[:0], max_delay, ERR_TABLE_MISS, n0)
    b_cur = btable[n0]
    for s in range(n0):
        rng[s + 1] = stream_seed(seed, uid)
        uid += 1
        active[n_act] = s
        pos[s] = n_act
        n_act += 1
        if lam > 0.0:
            a = _exp(rng, s + 1) / lam
            cur_a[s] = a
            if warmup <= a < horizon:
                counters[C_ARRIVED] += 1
            t0 = np.int64(math.floor(a)) + 1
            start[s] = t0
            if t0 < horizon:
                ht, hs, hv, nh = _heap_push(ht, hs, hv, nh, t0, s, ver[s])

    # churn schedule
    churn = p_leave > 0.0
    log_keep = math.log1p(-p_leave) if churn else 0.0
    t_churn = horizon
    if churn:
        churn_log = _grow2d(churn_log, n_log)
        churn_log[n_log, 0] = 0
        churn_log[n_log, 1] = n_cur
        churn_log[n_log, 2] = b_cur
        n_log += 1

    need_gap = True
    tx_slot = np.empty(cap, np.int64)
    tx_rb = np.empty(cap, np.int64)
    tx_fade = np.empty(cap, np.float64)
    t_prev = 0
    err = ERR_OK
    err_n = 0

    while True:
        if churn and need_gap:
            j_mean = max(0.0, 2.0 * n_bar - n_cur) * p_leave
            log_q0 = n_cur * log_keep - j_mean
            if log_q0 < 0.0:
                u = 1.0 - _next_u(rng, 0)
                gap = 1 + np.int64(math.floor(math.log(u) / log_q0))
                t_churn = t_prev + gap if gap < horizon else horizon
            else:
                t_churn = horizon
            need_gap = False
        t_tx = ht[0] if nh > 0 else horizon
        if t_churn <= t_tx and t_churn < horizon:
            # churn happens at the start of TTI t_churn, before transmissions
            t = t_churn
            t_prev = t
            need_gap = True
            j_mean = max(0.0, 2.0 * n_bar - n_cur) * p_leave
            log_l0 = n_cur * log_keep
            p_l_ge1 = -math.expm1(log_l0)
            p_change = -math.expm1(log_l0 - j_mean)
            if _next_u(rng, 0) * p_change < p_l_ge1:
                n_leave = _binomial_ge1(rng, n_cur, p_leave, p_l_ge1)
                n_join = _poisson(rng, j_mean, False)
            else:
                n_leave = 0
                n_join = _poisson(rng, j_mean, True)
            for _ in range(n_leave):
                i = np.int64(_next_u(rng, 0) * n_act)
                s = active[i]
                last = active[n_act - 1]
                active[i] = last
                pos[last] = i
                n_act -= 1
                pos[s] = -1
                ver[s] += 1
                counters[C_LEAVES] += 1
                # queued packets leave with the UE; future arrivals never happen
                a = cur_a[s]
                while a < t:
                    if warmup <= a < horizon:
                        counters[C_CHURNED] += 1
                    a += _exp(rng, s + 1) / lam
                    if warmup <= a < horizon:
                        counters[C_ARRIVED] += 1
                if warmup <= a < horizon:
                    counters[C_ARRIVED] -= 1
                cur_a[s] = np.inf
                free[n_free] = s
                n_free += 1
            n_new = n_cur - n_leave + n_join
            if n_new >= btable.shape[0] or n_new < 0 or btable[n_new] < 1:
                err = ERR_TABLE_MISS
                err_n = n_new
                break
            for _ in range(n_join):
                n_free -= 1
                s = free[n_free]
                rng[s + 1] = stream_seed(seed, uid)
                uid += 1
                active[n_act] = s
                pos[s] = n_act
                n_act += 1
                rnd[s] = 0
                counters[C_JOINS] += 1
                if lam > 0.0:
                    a = t + _exp(rng, s + 1) / lam
                    cur_a[s] = a
                    if warmup <= a < horizon:
                        counters[C_ARRIVED] += 1
                    t0 = np.int64(math.floor(a)) + 1
                    start[s] = t0
                    if t0 < horizon:
                        ht, hs, hv, nh = _heap_push(ht, hs, hv, nh, t0, s, ver[s])
            n_cur = n_new
            b_cur = btable[n_cur]
            churn_log = _grow2d(churn_log, n_log)
            churn_log[n_log, 0] = t
            churn_log[n_log, 1] = n_cur
            churn_log[n_log, 2] = b_cur
            n_log += 1
            continue

        if nh == 0 or t_tx >= horizon:
            break
        t = t_tx
        m = 0
        while nh > 0 and ht[0] == t:
            s = hs[0]
            v = hv[0]
            nh = _heap_pop(ht, hs, hv, nh)
            if v != ver[s]:
                continue
            tx_slot[m] = s
            tx_rb[m] = np.int64(_next_u(rng, s + 1) * b_cur)
            tx_fade[m] = -math.log1p(-_next_u(rng, s + 1))
            m += 1
        if m == 0:
            continue
        counters[C_TX_TTIS] += 1
        measured = t >= warmup
        for k in range(m):
            rb = tx_rb[k]
            interf = 0.0
            for j in range(m):
                if j != k and tx_rb[j] == rb:
                    interf += tx_fade[j]
            ok = tx_fade[k] >= mu * (inv_rho + interf)
            s = tx_slot[k]
            r = min(rnd[s], r_max - 1)
            if measured:
                attempts[r] += 1
                others[r] += m - 1
                others_sq[r] += (m - 1) * (m - 1)
                rb_counts[rb] += 1
                if ok:
                    successes[r] += 1
            if ok:
                a = cur_a[s]
                if a >= warmup:
                    d = t + 2.0 - a
                    counters[C_DELIVERED] += 1
                    if d > late_tti:
                        counters[C_LATE] += 1
                    if d > max_delay:
                        max_delay = d
                    b = np.int64(math.ceil(d / hist_step - 1e-9)) - 1
                    if b < 0:
                        b = 0
                    if b < hist_bins:
                        hist[b] += 1
                    else:
                        counters[C_OVERFLOW] += 1
                    if n_rec < record_limit:
                        records = _grow2d(records, n_rec)
                        records[n_rec, 0] = a
                        records[n_rec, 1] = start[s]
                        records[n_rec, 2] = t
                        n_rec += 1
                a = a + _exp(rng, s + 1) / lam
                cur_a[s] = a
                if warmup <= a < horizon:
                    counters[C_ARRIVED] += 1
                rnd[s] = 0
                # ACK processing ends at t + 4; a queued packet may go then
                t0 = max(np.int64(math.floor(a)) + 1, t + 4)
                start[s] = t0
                if t0 < horizon:
                    ht, hs, hv, nh = _heap_push(ht, hs, hv, nh, t0, s, ver[s])
            else:
                rnd[s] += 1
                if t + 4 < horizon:
                    ht, hs, hv, nh = _heap_push(ht, hs, hv, nh, t + 4, s, ver[s])

    if err == ERR_OK:
        for i in range(n_act):
            s = active[i]
            a = cur_a[s]
            while a < horizon:
                if a >= warmup:
                    counters[C_QUEUED_END] += 1
                a += _exp(rng, s + 1) / lam
                if warmup <= a < horizon:
                    counters[C_ARRIVED] += 1
    return (hist, counters, attempts, successes, others, others_sq, rb_counts,
            churn_log[:n_log], records[:n_rec], max_delay, err, err_n)
