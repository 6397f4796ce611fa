# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled event engines. Mirrors ``_kernels_py`` operation for operation."""

import numpy as np
from libc.math cimport log, isinf
from libc.stdint cimport uint64_t, int64_t
from libcpp.vector cimport vector

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t STREAM_MULT = 0xD1B54A32D192ED03ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0

cdef enum:
    TIME = 0
    SITE = 1
    KIND = 2
    MARK = 3


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef struct Stream:
    uint64_t key
    uint64_t counter


cdef inline void stream_init(Stream* s, uint64_t seed, int stream) nogil:
    s.key = mix64(seed + <uint64_t>(stream + 1) * STREAM_MULT)
    s.counter = 0


cdef inline double uniform(Stream* s) nogil:
    cdef uint64_t z
    s.counter += 1
    z = mix64(s.key + s.counter * GAMMA)
    return <double>(((z >> 12) << 1) + 1) * TWO_M53


cdef inline int tree_size(int n) nogil:
    cdef int p = 1
    while p < n:
        p <<= 1
    if p < 2:
        p = 2
    return p


cdef inline void sum_set(double* t, int P, int leaf, double w) nogil:
    cdef int i = P + leaf
    t[i] = w
    i >>= 1
    while i >= 1:
        t[i] = t[2 * i] + t[2 * i + 1]
        i >>= 1


cdef inline int sum_find(double* t, int P, double u) nogil:
    cdef double v = u * t[1]
    cdef double left
    cdef int i = 1
    while i < P:
        left = t[2 * i]
        if v < left or t[2 * i + 1] <= 0.0:
            i = 2 * i
        else:
            v = v - left
            i = 2 * i + 1
    return i - P


cdef inline int64_t cnt(int64_t* c, int n, int a) nogil:
    if a < n:
        return c[a]
    return -1


cdef inline void amax_update(int* w, int64_t* c, int n, int P, int leaf) nogil:
    cdef int i = (P + leaf) >> 1
    cdef int a, b
    while i >= 1:
        a = w[2 * i]
        b = w[2 * i + 1]
        if cnt(c, n, a) >= cnt(c, n, b):
            w[i] = a
        else:
            w[i] = b
        i >>= 1


cdef inline void amax_build(int* w, int64_t* c, int n, int P) nogil:
    cdef int i, a, b
    for i in range(P):
        w[P + i] = i
    for i in range(P - 1, 0, -1):
        a = w[2 * i]
        b = w[2 * i + 1]
        if cnt(c, n, a) >= cnt(c, n, b):
            w[i] = a
        else:
            w[i] = b


cdef inline int pick_kind(double v, const double* rates_x, int ndir) nogil:
    cdef int i
    cdef double ri
    for i in range(ndir):
        ri = rates_x[i]
        if ri > 0.0:
            if v < ri:
                return i
            v = v - ri
    return ndir


def trimmed_run(counts_in, r_eff_in, nbr_in, tot_in, double T, seed, snap_times,
                bint post_birth, bint record_intervals, bint record_removals):
    cdef int64_t[::1] counts = np.ascontiguousarray(counts_in, dtype=np.int64).copy()
    cdef const double[:, ::1] rates = np.ascontiguousarray(r_eff_in, dtype=np.float64)
    cdef const int64_t[:, ::1] nb = np.ascontiguousarray(nbr_in, dtype=np.int64)
    cdef const double[::1] tot = np.ascontiguousarray(tot_in, dtype=np.float64)
    cdef const double[::1] snaps = np.ascontiguousarray(snap_times, dtype=np.float64)
    cdef int S = counts.shape[0]
    cdef int ndir = rates.shape[1]
    cdef int n_snaps = snaps.shape[0]
    snap_arr = np.zeros((n_snaps, S), dtype=np.int64)
    cdef int64_t[:, ::1] snap_out = snap_arr
    cdef int P = tree_size(S)
    cdef double[::1] tree = np.zeros(2 * P)
    cdef int[::1] win = np.zeros(2 * P, dtype=np.intc)
    cdef double[::1] occ = np.zeros(S)
    cdef vector[int64_t] iv_site, rm_site
    cdef vector[double] iv_t0, iv_t1, rm_t
    cdef Stream s_time, s_site, s_kind
    cdef uint64_t useed = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef double t = 0.0, t_last = 0.0, R
    cdef int x, y, a, kind, cur, top, k_snap = 0, j
    cdef long long n_events = 0, n_jumps = 0, n_branches = 0, n_changes = 0

    stream_init(&s_time, useed, TIME)
    stream_init(&s_site, useed, SITE)
    stream_init(&s_kind, useed, KIND)
    for x in range(S):
        tree[P + x] = counts[x] * tot[x]
    for x in range(P - 1, 0, -1):
        tree[x] = tree[2 * x] + tree[2 * x + 1]
    amax_build(&win[0], &counts[0], S, P)
    cur = win[1]

    with nogil:
        while True:
            R = tree[1]
            if not (R > 0.0) or isinf(R):
                break
            t = t - log(uniform(&s_time)) / R
            while k_snap < n_snaps and snaps[k_snap] < t:
                for j in range(S):
                    snap_out[k_snap, j] = counts[j]
                k_snap += 1
            if t >= T:
                break
            x = sum_find(&tree[0], P, uniform(&s_site))
            kind = pick_kind(uniform(&s_kind) * tot[x], &rates[x, 0], ndir)
            n_events += 1
            if kind < ndir:
                y = <int>nb[x, kind]
                counts[x] -= 1
                counts[y] += 1
                sum_set(&tree[0], P, x, counts[x] * tot[x])
                sum_set(&tree[0], P, y, counts[y] * tot[y])
                amax_update(&win[0], &counts[0], S, P, x)
                amax_update(&win[0], &counts[0], S, P, y)
                n_jumps += 1
            else:
                n_branches += 1
                if post_birth:
                    counts[x] += 1
                    amax_update(&win[0], &counts[0], S, P, x)
                    a = win[1]
                else:
                    a = win[1]
                    counts[x] += 1
                    amax_update(&win[0], &counts[0], S, P, x)
                counts[a] -= 1
                amax_update(&win[0], &counts[0], S, P, a)
                sum_set(&tree[0], P, x, counts[x] * tot[x])
                sum_set(&tree[0], P, a, counts[a] * tot[a])
                if record_removals:
                    rm_site.push_back(a)
                    rm_t.push_back(t)
            top = win[1]
            if top != cur:
                occ[cur] += t - t_last
                if record_intervals:
                    iv_site.push_back(cur)
                    iv_t0.push_back(t_last)
                    iv_t1.push_back(t)
                cur = top
                t_last = t
                n_changes += 1

    R = tree[1]
    if not (R > 0.0) or isinf(R):
        raise OverflowError(f"total event rate is not finite and positive: {R}")
    while k_snap < n_snaps:
        for j in range(S):
            snap_out[k_snap, j] = counts[j]
        k_snap += 1
    occ[cur] += T - t_last
    if record_intervals:
        iv_site.push_back(cur)
        iv_t0.push_back(t_last)
        iv_t1.push_back(T)
    return {
        "counts": np.asarray(counts),
        "snapshots": snap_arr,
        "n_events": n_events,
        "n_jumps": n_jumps,
        "n_branches": n_branches,
        "n_argmax_changes": n_changes,
        "occupation": np.asarray(occ),
        "interval_site": np.asarray(iv_site, dtype=np.int64),
        "interval_t0": np.asarray(iv_t0, dtype=float),
        "interval_t1": np.asarray(iv_t1, dtype=float),
        "removal_site": np.asarray(rm_site, dtype=np.int64),
        "removal_t": np.asarray(rm_t, dtype=float),
    }


def coupled_run(counts_in, r_eff_in, nbr_in, tot_in, double T, seed, snap_times, bint post_birth):
    cdef int64_t[::1] ct = np.ascontiguousarray(counts_in, dtype=np.int64).copy()
    cdef int64_t[::1] cb = np.ascontiguousarray(counts_in, dtype=np.int64).copy()
    cdef const double[:, ::1] rates = np.ascontiguousarray(r_eff_in, dtype=np.float64)
    cdef const int64_t[:, ::1] nb = np.ascontiguousarray(nbr_in, dtype=np.int64)
    cdef const double[::1] tot = np.ascontiguousarray(tot_in, dtype=np.float64)
    cdef const double[::1] snaps = np.ascontiguousarray(snap_times, dtype=np.float64)
    cdef int S = ct.shape[0]
    cdef int ndir = rates.shape[1]
    cdef int n_snaps = snaps.shape[0]
    snap_t_arr = np.zeros((n_snaps, S), dtype=np.int64)
    snap_b_arr = np.zeros((n_snaps, S), dtype=np.int64)
    cdef int64_t[:, ::1] snap_t = snap_t_arr
    cdef int64_t[:, ::1] snap_b = snap_b_arr
    cdef int P = tree_size(S)
    cdef double[::1] tree = np.zeros(2 * P)
    cdef int[::1] win = np.zeros(2 * P, dtype=np.intc)
    cdef Stream s_time, s_site, s_kind, s_mark
    cdef uint64_t useed = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef double t = 0.0, R, theta, t_violation = -1.0
    cdef int x, y, a, kind, k_snap = 0, j, q, s
    cdef int64_t m
    cdef bint fire_t, fire_b, ok = True
    cdef int changed[3]
    cdef long long n_events = 0, n_trim = 0, n_free = 0

    stream_init(&s_time, useed, TIME)
    stream_init(&s_site, useed, SITE)
    stream_init(&s_kind, useed, KIND)
    stream_init(&s_mark, useed, MARK)
    for x in range(S):
        m = ct[x] if ct[x] >= cb[x] else cb[x]
        tree[P + x] = m * tot[x]
    for x in range(P - 1, 0, -1):
        tree[x] = tree[2 * x] + tree[2 * x + 1]
    amax_build(&win[0], &ct[0], S, P)

    with nogil:
        while True:
            R = tree[1]
            if not (R > 0.0) or isinf(R):
                break
            t = t - log(uniform(&s_time)) / R
            while k_snap < n_snaps and snaps[k_snap] < t:
                for j in range(S):
                    snap_t[k_snap, j] = ct[j]
                    snap_b[k_snap, j] = cb[j]
                k_snap += 1
            if t >= T:
                break
            x = sum_find(&tree[0], P, uniform(&s_site))
            kind = pick_kind(uniform(&s_kind) * tot[x], &rates[x, 0], ndir)
            m = ct[x] if ct[x] >= cb[x] else cb[x]
            theta = uniform(&s_mark) * m
            fire_t = theta < ct[x]
            fire_b = theta < cb[x]
            n_events += 1
            y = -1
            a = -1
            if kind < ndir:
                y = <int>nb[x, kind]
                if fire_t:
                    ct[x] -= 1
                    ct[y] += 1
                    amax_update(&win[0], &ct[0], S, P, x)
                    amax_update(&win[0], &ct[0], S, P, y)
                    n_trim += 1
                if fire_b:
                    cb[x] -= 1
                    cb[y] += 1
                    n_free += 1
            else:
                if fire_t:
                    if post_birth:
                        ct[x] += 1
                        amax_update(&win[0], &ct[0], S, P, x)
                        a = win[1]
                    else:
                        a = win[1]
                        ct[x] += 1
                        amax_update(&win[0], &ct[0], S, P, x)
                    ct[a] -= 1
                    amax_update(&win[0], &ct[0], S, P, a)
                    n_trim += 1
                if fire_b:
                    cb[x] += 1
                    n_free += 1
            changed[0] = x
            changed[1] = y
            changed[2] = a
            for q in range(3):
                s = changed[q]
                if s >= 0:
                    m = ct[s] if ct[s] >= cb[s] else cb[s]
                    sum_set(&tree[0], P, s, m * tot[s])
                    if ok and ct[s] > cb[s]:
                        ok = False
                        t_violation = t

    R = tree[1]
    if not (R > 0.0) or isinf(R):
        raise OverflowError(f"total event rate is not finite and positive: {R}")
    while k_snap < n_snaps:
        for j in range(S):
            snap_t[k_snap, j] = ct[j]
            snap_b[k_snap, j] = cb[j]
        k_snap += 1
    return {
        "trimmed": np.asarray(ct),
        "untrimmed": np.asarray(cb),
        "snapshots_trimmed": snap_t_arr,
        "snapshots_untrimmed": snap_b_arr,
        "domination_ok": bool(ok),
        "t_violation": t_violation,
        "n_events": n_events,
        "n_trimmed_events": n_trim,
        "n_untrimmed_events": n_free,
    }


def walkers_run(x0, y0, rho_eff_in, nbr_in, double T, seed):
    cdef const double[:, ::1] rho = np.ascontiguousarray(rho_eff_in, dtype=np.float64)
    cdef const int64_t[:, ::1] nb = np.ascontiguousarray(nbr_in, dtype=np.int64)
    env_arr = np.ascontiguousarray(np.asarray(rho_eff_in, dtype=np.float64).max(axis=0))
    cdef const double[::1] env = env_arr
    cdef int ndir = rho.shape[1]
    cdef double E = 0.0, t = 0.0, theta
    cdef int i, flag
    cdef int xs = int(x0), ys = int(y0)
    cdef Stream s_time, s_kind, s_mark
    cdef uint64_t useed = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef vector[double] out_t
    cdef vector[int64_t] out_x, out_y
    cdef vector[int] out_f
    for i in range(ndir):
        E = E + env[i]
    stream_init(&s_time, useed, TIME)
    stream_init(&s_kind, useed, KIND)
    stream_init(&s_mark, useed, MARK)
    with nogil:
        while True:
            t = t - log(uniform(&s_time)) / E
            if t >= T:
                break
            i = pick_kind(uniform(&s_kind) * E, &env[0], ndir)
            if i >= ndir:
                i = ndir - 1
                while env[i] <= 0.0:
                    i -= 1
            theta = uniform(&s_mark) * env[i]
            flag = 0
            if theta < rho[xs, i]:
                xs = <int>nb[xs, i]
                flag |= 1
            if theta < rho[ys, i]:
                ys = <int>nb[ys, i]
                flag |= 2
            if flag:
                out_t.push_back(t)
                out_x.push_back(xs)
                out_y.push_back(ys)
                out_f.push_back(flag)
    return (np.asarray(out_t, dtype=float), np.asarray(out_x, dtype=np.int64),
            np.asarray(out_y, dtype=np.int64), np.asarray(out_f, dtype=np.int8))
