"""Pure-Python event engines; the reference twin of ``_kernels.pyx``.

Arithmetic is kept in the same order as the compiled version so that both
produce bit-identical trajectories from the same seed.
"""
from __future__ import annotations

import math

import numpy as np

from ._rng import KIND, MARK, SITE, TIME, Stream


def _tree_size(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return max(p, 2)


class _SumTree:
    """Binary tree of non-negative weights; parents are recomputed, never patched."""

    def __init__(self, weights):
        n = len(weights)
        self.P = P = _tree_size(n)
        self.t = t = [0.0] * (2 * P)
        for i, w in enumerate(weights):
            t[P + i] = w
        for i in range(P - 1, 0, -1):
            t[i] = t[2 * i] + t[2 * i + 1]

    def set(self, leaf: int, w: float):
        t = self.t
        i = self.P + leaf
        t[i] = w
        i >>= 1
        while i >= 1:
            t[i] = t[2 * i] + t[2 * i + 1]
            i >>= 1

    def find(self, u: float) -> int:
        t = self.t
        v = u * t[1]
        i = 1
        P = self.P
        while i < P:
            left = t[2 * i]
            if v < left or t[2 * i + 1] <= 0.0:
                i = 2 * i
            else:
                v = v - left
                i = 2 * i + 1
        return i - P


class _ArgmaxTree:
    """Tournament tree: root holds the most populated site, lowest index on ties."""

    def __init__(self, counts):
        n = len(counts)
        self.n = n
        self.P = P = _tree_size(n)
        self.c = counts  # shared list
        self.w = w = [0] * (2 * P)
        for i in range(P):
            w[P + i] = i
        for i in range(P - 1, 0, -1):
            w[i] = self._winner(w[2 * i], w[2 * i + 1])

    def _winner(self, a: int, b: int) -> int:
        ca = self.c[a] if a < self.n else -1
        cb = self.c[b] if b < self.n else -1
        return a if ca >= cb else b

    def update(self, leaf: int):
        w = self.w
        i = (self.P + leaf) >> 1
        while i >= 1:
            w[i] = self._winner(w[2 * i], w[2 * i + 1])
            i >>= 1

    @property
    def top(self) -> int:
        return self.w[1]


def _pick_kind(v: float, rates_x, ndir: int) -> int:
    """Return a direction index, or ``ndir`` for a branch event."""
    for i in range(ndir):
        ri = rates_x[i]
        if ri > 0.0:
            if v < ri:
                return i
            v = v - ri
    return ndir


def trimmed_run(counts, r_eff, nbr, tot, T, seed, snap_times, post_birth,
                record_intervals, record_removals):
    counts = [int(c) for c in counts]
    S = len(counts)
    ndir = r_eff.shape[1]
    rates = r_eff.tolist()
    nb = nbr.tolist()
    tot = [float(v) for v in tot]
    snaps = list(snap_times)
    snap_out = np.zeros((len(snaps), S), dtype=np.int64)

    tree = _SumTree([counts[x] * tot[x] for x in range(S)])
    amax = _ArgmaxTree(counts)
    s_time, s_site, s_kind = Stream(seed, TIME), Stream(seed, SITE), Stream(seed, KIND)

    t = 0.0
    cur = amax.top
    t_last = 0.0
    occ = [0.0] * S
    iv_site, iv_t0, iv_t1 = [], [], []
    rm_site, rm_t = [], []
    n_events = n_jumps = n_branches = n_changes = 0
    k_snap = 0

    while True:
        R = tree.t[1]
        if not (R > 0.0) or math.isinf(R):
            raise OverflowError(f"total event rate is not finite and positive: {R}")
        t = t - math.log(s_time.uniform()) / R
        while k_snap < len(snaps) and snaps[k_snap] < t:
            snap_out[k_snap, :] = counts
            k_snap += 1
        if t >= T:
            break
        x = tree.find(s_site.uniform())
        kind = _pick_kind(s_kind.uniform() * tot[x], rates[x], ndir)
        n_events += 1
        if kind < ndir:
            y = nb[x][kind]
            counts[x] -= 1
            counts[y] += 1
            tree.set(x, counts[x] * tot[x])
            tree.set(y, counts[y] * tot[y])
            amax.update(x)
            amax.update(y)
            n_jumps += 1
        else:
            n_branches += 1
            if post_birth:
                counts[x] += 1
                amax.update(x)
                a = amax.top
            else:
                a = amax.top
                counts[x] += 1
                amax.update(x)
            counts[a] -= 1
            amax.update(a)
            tree.set(x, counts[x] * tot[x])
            tree.set(a, counts[a] * tot[a])
            if record_removals:
                rm_site.append(a)
                rm_t.append(t)
        top = amax.top
        if top != cur:
            occ[cur] += t - t_last
            if record_intervals:
                iv_site.append(cur)
                iv_t0.append(t_last)
                iv_t1.append(t)
            cur = top
            t_last = t
            n_changes += 1

    while k_snap < len(snaps):
        snap_out[k_snap, :] = counts
        k_snap += 1
    occ[cur] += T - t_last
    if record_intervals:
        iv_site.append(cur)
        iv_t0.append(t_last)
        iv_t1.append(T)
    return {
        "counts": np.asarray(counts, dtype=np.int64),
        "snapshots": snap_out,
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


def coupled_run(counts, r_eff, nbr, tot, T, seed, snap_times, post_birth):
    ct = [int(c) for c in counts]
    cb = list(ct)
    S = len(ct)
    ndir = r_eff.shape[1]
    rates = r_eff.tolist()
    nb = nbr.tolist()
    tot = [float(v) for v in tot]
    snaps = list(snap_times)
    snap_t = np.zeros((len(snaps), S), dtype=np.int64)
    snap_b = np.zeros((len(snaps), S), dtype=np.int64)

    tree = _SumTree([max(ct[x], cb[x]) * tot[x] for x in range(S)])
    amax = _ArgmaxTree(ct)
    s_time, s_site, s_kind, s_mark = (Stream(seed, k) for k in (TIME, SITE, KIND, MARK))

    t = 0.0
    ok = True
    t_violation = -1.0
    n_events = n_trim = n_free = 0
    k_snap = 0
    while True:
        R = tree.t[1]
        if not (R > 0.0) or math.isinf(R):
            raise OverflowError(f"total event rate is not finite and positive: {R}")
        t = t - math.log(s_time.uniform()) / R
        while k_snap < len(snaps) and snaps[k_snap] < t:
            snap_t[k_snap, :] = ct
            snap_b[k_snap, :] = cb
            k_snap += 1
        if t >= T:
            break
        x = tree.find(s_site.uniform())
        kind = _pick_kind(s_kind.uniform() * tot[x], rates[x], ndir)
        m = ct[x] if ct[x] >= cb[x] else cb[x]
        theta = s_mark.uniform() * m
        fire_t = theta < ct[x]
        fire_b = theta < cb[x]
        n_events += 1
        y = -1
        a = -1
        if kind < ndir:
            y = nb[x][kind]
            if fire_t:
                ct[x] -= 1
                ct[y] += 1
                amax.update(x)
                amax.update(y)
                n_trim += 1
            if fire_b:
                cb[x] -= 1
                cb[y] += 1
                n_free += 1
        else:
            if fire_t:
                if post_birth:
                    ct[x] += 1
                    amax.update(x)
                    a = amax.top
                else:
                    a = amax.top
                    ct[x] += 1
                    amax.update(x)
                ct[a] -= 1
                amax.update(a)
                n_trim += 1
            if fire_b:
                cb[x] += 1
                n_free += 1
        for s in (x, y, a):
            if s >= 0:
                m = ct[s] if ct[s] >= cb[s] else cb[s]
                tree.set(s, m * tot[s])
                if ok and ct[s] > cb[s]:
                    ok = False
                    t_violation = t
    while k_snap < len(snaps):
        snap_t[k_snap, :] = ct
        snap_b[k_snap, :] = cb
        k_snap += 1
    return {
        "trimmed": np.asarray(ct, dtype=np.int64),
        "untrimmed": np.asarray(cb, dtype=np.int64),
        "snapshots_trimmed": snap_t,
        "snapshots_untrimmed": snap_b,
        "domination_ok": ok,
        "t_violation": t_violation,
        "n_events": n_events,
        "n_trimmed_events": n_trim,
        "n_untrimmed_events": n_free,
    }


def walkers_run(x0, y0, rho_eff, nbr, T, seed):
    ndir = rho_eff.shape[1]
    rho = rho_eff.tolist()
    nb = nbr.tolist()
    env = [float(v) for v in rho_eff.max(axis=0)]
    E = 0.0
    for v in env:
        E = E + v
    s_time, s_kind, s_mark = Stream(seed, TIME), Stream(seed, KIND), Stream(seed, MARK)
    xs, ys = int(x0), int(y0)
    out_t, out_x, out_y, out_f = [], [], [], []
    t = 0.0
    while True:
        t = t - math.log(s_time.uniform()) / E
        if t >= T:
            break
        i = _pick_kind(s_kind.uniform() * E, env, ndir)
        if i >= ndir:
            i = ndir - 1
            while env[i] <= 0.0:
                i -= 1
        theta = s_mark.uniform() * env[i]
        flag = 0
        if theta < rho[xs][i]:
            xs = nb[xs][i]
            flag |= 1
        if theta < rho[ys][i]:
            ys = nb[ys][i]
            flag |= 2
        if flag:
            out_t.append(t)
            out_x.append(xs)
            out_y.append(ys)
            out_f.append(flag)
    return (np.asarray(out_t, dtype=float), np.asarray(out_x, dtype=np.int64),
            np.asarray(out_y, dtype=np.int64), np.asarray(out_f, dtype=np.int8))
