"""Event-loop kernels for the exclusion / zero-range simulators.

Everything here is numba-compatible and compiled when numba is available
(the import falls back to plain Python, same semantics, ~100x slower).
Rates are read from cumulative per-gap menu tables built by sim.py for gaps
up to the cache size; larger gaps get exact rows rebuilt on the fly.  Jump
sizes are drawn by inverse CDF (binary search) on the same rows that define
the total rates, so menus and totals cannot drift apart.
"""

import math

import numpy as np

try:
    import numba as nb

    _njit = nb.njit(cache=True, nogil=True, fastmath=False)
    HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is a declared dependency
    def _njit(f):
        return f

    HAVE_NUMBA = False

STATUS_OK = 0
STATUS_MARGIN = 1
STATUS_SCRATCH = 2
STATUS_WINDOW = 3

SCRATCH_CAP = 1 << 14


@_njit
def _fenwick_build(tree, vals):
    n = vals.shape[0]
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(n):
        j = i + 1
        while j <= n:
            tree[j] += vals[i]
            j += j & (-j)


@_njit
def _fenwick_update(tree, i, delta):
    n = tree.shape[0] - 1
    j = i + 1
    while j <= n:
        tree[j] += delta
        j += j & (-j)


@_njit
def _fenwick_total(tree):
    n = tree.shape[0] - 1
    s = 0.0
    j = n
    while j > 0:
        s += tree[j]
        j -= j & (-j)
    return s


@_njit
def _fenwick_find(tree, u):
    """Largest index i with prefix_{i-1} <= u < prefix_i; returns (i, residual)."""
    n = tree.shape[0] - 1
    pos = 0
    bit = 1
    while bit * 2 <= n:
        bit *= 2
    rest = u
    while bit > 0:
        nxt = pos + bit
        if nxt <= n and tree[nxt] <= rest:
            rest -= tree[nxt]
            pos = nxt
        bit //= 2
    if pos >= n:  # float roundoff at u ~ total
        pos = n - 1
        rest = 0.0
    return pos, rest


@_njit
def _qint(j, q):
    qj = q**j
    return (1.0 - qj) / (1.0 - q)


@_njit
def _build_right_row(q, nu, R, m, out):
    """Cumulative right menu for gap m into out[0:m]; returns (count, total).

    phi^R(j|m) = R nu^{j-1}/[j]_q * prod_{d<j} (1-q^{m-d})/(1-nu q^{m-1-d});
    stops early once the geometric nu-tail is below 1e-17 of the total.
    """
    acc = 0.0
    ratio = 1.0
    nu_pow = 1.0
    count = 0
    for j in range(1, m + 1):
        ratio *= (1.0 - q ** (m - j + 1)) / (1.0 - nu * q ** (m - j))
        phi = R * nu_pow / _qint(j, q) * ratio
        acc += phi
        out[j - 1] = acc
        count = j
        nu_pow *= nu
        if nu_pow < 1e-17 * acc * (1.0 - nu):
            break
    return count, acc


@_njit
def _build_left_row(q, nu, L, m, out):
    """Cumulative left menu for gap m into out[0:m]; returns (m, total)."""
    acc = 0.0
    ratio = 1.0
    for j in range(1, m + 1):
        ratio *= (1.0 - q ** (m - j + 1)) / (1.0 - nu * q ** (m - j))
        acc += L / _qint(j, q) * ratio
        out[j - 1] = acc
    return m, acc


@_njit
def _total_right(gap, q, nu, R, totR, scratch):
    GC = totR.shape[0] - 1
    if gap <= 0:
        return 0.0
    if gap <= GC:
        return totR[gap]
    cnt, tot = _build_right_row(q, nu, R, gap, scratch)
    return tot


@_njit
def _total_left(gap, q, nu, L, totL, scratch):
    GC = totL.shape[0] - 1
    if gap <= 0:
        return 0.0
    if gap <= GC:
        return totL[gap]
    cnt, tot = _build_left_row(q, nu, L, gap, scratch)
    return tot


@_njit
def _sample_row(row, count, u):
    """Smallest j (1-based) with cumulative row[j-1] > u, clamped to count."""
    lo = 0
    hi = count - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo + 1


@_njit
def _sample_jump(gap, u, q, nu, RL, cum, tot, scratch, right):
    """Jump size for a finite gap, drawing position u in [0, total)."""
    GC = tot.shape[0] - 1
    if gap <= GC:
        return _sample_row(cum[gap], gap, u)
    if right:
        cnt, _t = _build_right_row(q, nu, RL, gap, scratch)
    else:
        cnt, _t = _build_left_row(q, nu, RL, gap, scratch)
    return _sample_row(scratch, cnt, u)


@_njit
def aep_run(pos, t_start, t_end, frontier_in, margin, gen,
            cumR, totR, cumL, totL, cumRinf, totRinf,
            q, nu, R, Lscaled,
            obs_times, tracked, out_tracked, record_full, out_full,
            rate_r, rate_l, tree, scratch, rebuild_every):
    """Gillespie loop for the exclusion process.  Mutates pos/rate arrays.

    Returns (status, t_final, frontier, n_events).  pos[0] is the lead
    particle (infinite right menu); margin < 0 disables the frontier abort.
    """
    N = pos.shape[0]
    n_obs = obs_times.shape[0]
    n_tracked = tracked.shape[0]

    for i in range(N):
        if i == 0:
            rate_r[0] = totRinf
        else:
            gap = pos[i - 1] - pos[i] - 1
            if gap > SCRATCH_CAP:
                return STATUS_SCRATCH, t_start, frontier_in, 0
            rate_r[i] = _total_right(gap, q, nu, R, totR, scratch)
        if i < N - 1:
            gap = pos[i] - pos[i + 1] - 1
            if gap > SCRATCH_CAP:
                return STATUS_SCRATCH, t_start, frontier_in, 0
            rate_l[i] = _total_left(gap, q, nu, Lscaled, totL, scratch)
        else:
            rate_l[i] = 0.0
    tot_vec = rate_r + rate_l
    _fenwick_build(tree, tot_vec)

    t = t_start
    frontier = frontier_in
    k_obs = 0
    n_events = 0
    while k_obs < n_obs and obs_times[k_obs] < t:
        k_obs += 1

    while True:
        total = _fenwick_total(tree)
        if total <= 0.0:
            t = t_end
            break
        dt = gen.exponential(1.0 / total)
        t_next = t + dt
        if t_next >= t_end:
            t = t_end
            break
        while k_obs < n_obs and obs_times[k_obs] < t_next:
            for a in range(n_tracked):
                out_tracked[k_obs, a] = pos[tracked[a]]
            if record_full:
                for a in range(N):
                    out_full[k_obs, a] = pos[a]
            k_obs += 1
        t = t_next

        u = gen.random() * total
        i, rest = _fenwick_find(tree, u)
        # fenwick roundoff can land on a zero-rate particle; renormalize
        if rate_r[i] + rate_l[i] <= 0.0:
            tot_vec = rate_r + rate_l
            _fenwick_build(tree, tot_vec)
            continue
        if rest >= rate_r[i] + rate_l[i]:
            rest = (rate_r[i] + rate_l[i]) * 0.999999999999
        if rest < rate_r[i]:
            # right jump
            if i == 0:
                j = _sample_row(cumRinf, cumRinf.shape[0], rest)
            else:
                gap = pos[i - 1] - pos[i] - 1
                j = _sample_jump(gap, rest, q, nu, R, cumR, totR, scratch, True)
            pos[i] += j
        else:
            gap = pos[i] - pos[i + 1] - 1 if i < N - 1 else 0
            j = _sample_jump(gap, rest - rate_r[i], q, nu, Lscaled, cumL, totL,
                             scratch, False)
            pos[i] -= j
        n_events += 1
        if i > frontier:
            frontier = i
            if margin >= 0 and N - 1 - frontier < margin:
                return STATUS_MARGIN, t, frontier, n_events

        # refresh the jumper and both neighbors
        lo = i - 1 if i > 0 else 0
        hi = i + 1 if i < N - 1 else N - 1
        for b in range(lo, hi + 1):
            old = rate_r[b] + rate_l[b]
            if b == 0:
                rate_r[0] = totRinf
            else:
                gap = pos[b - 1] - pos[b] - 1
                if gap > SCRATCH_CAP:
                    return STATUS_SCRATCH, t, frontier, n_events
                rate_r[b] = _total_right(gap, q, nu, R, totR, scratch)
            if b < N - 1:
                gap = pos[b] - pos[b + 1] - 1
                if gap > SCRATCH_CAP:
                    return STATUS_SCRATCH, t, frontier, n_events
                rate_l[b] = _total_left(gap, q, nu, Lscaled, totL, scratch)
            else:
                rate_l[b] = 0.0
            _fenwick_update(tree, b, rate_r[b] + rate_l[b] - old)

        if rebuild_every > 0 and n_events % rebuild_every == 0:
            tot_vec = rate_r + rate_l
            _fenwick_build(tree, tot_vec)

    while k_obs < n_obs and obs_times[k_obs] <= t_end:
        for a in range(n_tracked):
            out_tracked[k_obs, a] = pos[tracked[a]]
        if record_full:
            for a in range(N):
                out_full[k_obs, a] = pos[a]
        k_obs += 1
    return STATUS_OK, t, frontier, n_events


@_njit
def azrp_run(occ, t_start, t_end, gen,
             cumR, totR, cumL, totL,
             q, nu, R, L,
             obs_times, out_occ,
             rate_site, tree, scratch, rebuild_every):
    """Gillespie loop for the zero-range process on sites 0..S-1.

    Site 0 never emits; j particles move from site i to i-1 at the right
    rates and to i+1 at the left rates.  A left move out of the window is a
    window error (caller must size the site array).
    Returns (status, t_final, n_events).
    """
    S = occ.shape[0]
    n_obs = obs_times.shape[0]

    for i in range(S):
        if i == 0 or occ[i] == 0:
            rate_site[i] = 0.0
        else:
            y = occ[i]
            if y > SCRATCH_CAP:
                return STATUS_SCRATCH, t_start, 0
            rate_site[i] = (_total_right(y, q, nu, R, totR, scratch)
                            + _total_left(y, q, nu, L, totL, scratch))
    _fenwick_build(tree, rate_site)

    t = t_start
    k_obs = 0
    n_events = 0
    while k_obs < n_obs and obs_times[k_obs] < t:
        k_obs += 1

    while True:
        total = _fenwick_total(tree)
        if total <= 0.0:
            t = t_end
            break
        dt = gen.exponential(1.0 / total)
        t_next = t + dt
        if t_next >= t_end:
            t = t_end
            break
        while k_obs < n_obs and obs_times[k_obs] < t_next:
            for a in range(S):
                out_occ[k_obs, a] = occ[a]
            k_obs += 1
        t = t_next

        u = gen.random() * total
        i, rest = _fenwick_find(tree, u)
        if rate_site[i] <= 0.0:
            _fenwick_build(tree, rate_site)
            continue
        y = occ[i]
        rr = _total_right(y, q, nu, R, totR, scratch)
        if rest >= rate_site[i]:
            rest = rate_site[i] * 0.999999999999
        if rest < rr:
            j = _sample_jump(y, rest, q, nu, R, cumR, totR, scratch, True)
            dst = i - 1
        else:
            j = _sample_jump(y, rest - rr, q, nu, L, cumL, totL, scratch, False)
            dst = i + 1
            if dst >= S:
                return STATUS_WINDOW, t, n_events
        occ[i] -= j
        occ[dst] += j
        n_events += 1

        for b in (i, dst):
            old = rate_site[b]
            if b == 0 or occ[b] == 0:
                rate_site[b] = 0.0
            else:
                y2 = occ[b]
                if y2 > SCRATCH_CAP:
                    return STATUS_SCRATCH, t, n_events
                rate_site[b] = (_total_right(y2, q, nu, R, totR, scratch)
                                + _total_left(y2, q, nu, L, totL, scratch))
            _fenwick_update(tree, b, rate_site[b] - old)

        if rebuild_every > 0 and n_events % rebuild_every == 0:
            _fenwick_build(tree, rate_site)

    while k_obs < n_obs and obs_times[k_obs] <= t_end:
        for a in range(S):
            out_occ[k_obs, a] = occ[a]
        k_obs += 1
    return STATUS_OK, t, n_events
