"""Compiled inner loops for the single-flip heat-bath chain.

All kernels share one update rule.  At site (i, x) with equal neighbours
``m`` the new height is ``m+1`` if allowed and ``u <= p_high`` (or if
``m-1`` is not allowed), else ``m-1``.  Feeding the same ``(i, x, u)`` to
several configurations is the grand coupling; it preserves the pointwise
order.

Randomness comes from numba's internal generator, seeded per call.
"""
from __future__ import annotations

import numba as nb
import numpy as np

_NOCAP = np.iinfo(np.int64).max


@nb.njit(cache=True)
def heat_bath_update(H, i, x, u, p_high, xi, sigma):
    """Update site (i, x) of ``H`` in place; returns the signed height change."""
    left = H[i, x - 1]
    if left != H[i, x + 1]:
        return 0
    k = H.shape[0]
    above = xi[x] if i == 0 else H[i - 1, x]
    below = sigma[x] if i == k - 1 else H[i + 1, x]
    hi_ok = left + 1 <= above
    lo_ok = left - 1 >= below
    if hi_ok and (u <= p_high or not lo_ok):
        new = left + 1
    else:
        new = left - 1
    d = new - H[i, x]
    H[i, x] = new
    return d


@nb.njit(cache=True)
def heat_bath_update_capped(H, i, x, u, p_high, xi, sigma, cap):
    """As :func:`heat_bath_update` with an extra per-site upper limit ``cap``."""
    left = H[i, x - 1]
    if left != H[i, x + 1]:
        return 0
    k = H.shape[0]
    above = xi[x] if i == 0 else H[i - 1, x]
    if cap[i, x] < above:
        above = cap[i, x]
    below = sigma[x] if i == k - 1 else H[i + 1, x]
    hi_ok = left + 1 <= above
    lo_ok = left - 1 >= below
    if hi_ok and (u <= p_high or not lo_ok):
        new = left + 1
    else:
        new = left - 1
    d = new - H[i, x]
    H[i, x] = new
    return d


@nb.njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@nb.njit(cache=True)
def simulate_path(H, xi, sigma, p_high, horizon, seed, record):
    """Run one trajectory up to ``horizon``; optionally log every clock ring.

    Returns (n_events, times, polymers, sites, heights); the log arrays are
    empty when ``record`` is False.
    """
    np.random.seed(seed)
    k = H.shape[0]
    n = H.shape[1] - 1
    nsites = n - 1
    rate = k * nsites
    cap_log = 1024 if record else 0
    times = np.empty(cap_log, np.float64)
    pol = np.empty(cap_log, np.int64)
    site = np.empty(cap_log, np.int64)
    hts = np.empty(cap_log, np.int64)
    count = 0
    if nsites <= 0 or horizon <= 0.0:
        return count, times[:0], pol[:0], site[:0], hts[:0]
    t = 0.0
    while True:
        t += np.random.exponential(1.0 / rate)
        if t > horizon:
            break
        i = np.random.randint(0, k)
        x = 1 + np.random.randint(0, nsites)
        u = np.random.random()
        heat_bath_update(H, i, x, u, p_high, xi, sigma)
        if record:
            if count == times.size:
                times = np.concatenate((times, np.empty(times.size, np.float64)))
                pol = np.concatenate((pol, np.empty(pol.size, np.int64)))
                site = np.concatenate((site, np.empty(site.size, np.int64)))
                hts = np.concatenate((hts, np.empty(hts.size, np.int64)))
            times[count] = t
            pol[count] = i
            site[count] = x
            hts[count] = H[i, x]
        count += 1
    if record:
        return count, times[:count], pol[:count], site[:count], hts[:count]
    return count, times[:0], pol[:0], site[:0], hts[:0]


@nb.njit(cache=True)
def simulate_batch(H0, xi, sigma, p_high, horizon, n_rep, seed):
    """Final states of ``n_rep`` independent trajectories from ``H0``."""
    np.random.seed(seed)
    k = H0.shape[0]
    n = H0.shape[1] - 1
    nsites = n - 1
    out = np.empty((n_rep, k, n + 1), np.int64)
    rate = k * nsites
    for r in range(n_rep):
        H = H0.copy()
        if nsites > 0:
            t = np.random.exponential(1.0 / rate)
            while t <= horizon:
                i = np.random.randint(0, k)
                x = 1 + np.random.randint(0, nsites)
                heat_bath_update(H, i, x, np.random.random(), p_high, xi, sigma)
                t += np.random.exponential(1.0 / rate)
        out[r] = H
    return out


@nb.njit(cache=True)
def evolve_coupled(Hs, xis, sigmas, p_high, horizon, max_events, seed, pairs):
    """Evolve stacked members on shared clocks, sites and uniforms.

    ``pairs`` lists (upper, lower) member indices whose order is checked at
    the updated site after every event.  Stops at ``horizon`` or after
    ``max_events`` events.  Returns (events, elapsed time, violations).
    """
    np.random.seed(seed)
    m = Hs.shape[0]
    k = Hs.shape[1]
    n = Hs.shape[2] - 1
    nsites = n - 1
    rate = k * nsites
    t = 0.0
    ev = 0
    bad = 0
    if nsites <= 0:
        return 0, 0.0, 0
    while ev < max_events:
        dt = np.random.exponential(1.0 / rate)
        if t + dt > horizon:
            break
        t += dt
        i = np.random.randint(0, k)
        x = 1 + np.random.randint(0, nsites)
        u = np.random.random()
        for a in range(m):
            heat_bath_update(Hs[a], i, x, u, p_high, xis[a], sigmas[a])
        for p in range(pairs.shape[0]):
            if Hs[pairs[p, 0], i, x] < Hs[pairs[p, 1], i, x]:
                bad += 1
        ev += 1
    return ev, t, bad


@nb.njit(cache=True)
def coalescence_times(Htop, Hbot, xi, sigma, p_high, horizon, n_rep, seed):
    """Coalescence time of the (top, bottom) pair per replica; inf if censored.

    Because the coupling is monotone the pair is equal exactly when their
    height sums agree.
    """
    np.random.seed(seed)
    k = Htop.shape[0]
    n = Htop.shape[1] - 1
    nsites = n - 1
    rate = k * nsites
    out = np.empty(n_rep, np.float64)
    for r in range(n_rep):
        A = Htop.copy()
        B = Hbot.copy()
        gap = np.sum(A) - np.sum(B)
        t = 0.0
        if gap == 0:
            out[r] = 0.0
            continue
        out[r] = np.inf
        while True:
            t += np.random.exponential(1.0 / rate)
            if t > horizon:
                break
            i = np.random.randint(0, k)
            x = 1 + np.random.randint(0, nsites)
            u = np.random.random()
            gap += heat_bath_update(A, i, x, u, p_high, xi, sigma)
            gap -= heat_bath_update(B, i, x, u, p_high, xi, sigma)
            if gap == 0:
                out[r] = t
                break
    return out


@nb.njit(cache=True)
def hitting_times(H0, xi, sigma, p_high, horizon, n_rep, seed):
    """First time each replica from ``H0`` equals the all-ceiling configuration.

    The excess volume is tracked incrementally; it is zero only at the
    maximal configuration.  Censored replicas report inf.
    """
    np.random.seed(seed)
    k = H0.shape[0]
    n = H0.shape[1] - 1
    nsites = n - 1
    rate = k * nsites
    vol0 = 0
    for i in range(k):
        for x in range(n + 1):
            vol0 += xi[x] - H0[i, x]
    out = np.empty(n_rep, np.float64)
    for r in range(n_rep):
        H = H0.copy()
        vol = vol0
        t = 0.0
        out[r] = np.inf
        if vol == 0:
            out[r] = 0.0
            continue
        while True:
            t += np.random.exponential(1.0 / rate)
            if t > horizon:
                break
            i = np.random.randint(0, k)
            x = 1 + np.random.randint(0, nsites)
            vol -= heat_bath_update(H, i, x, np.random.random(), p_high, xi, sigma)
            if vol == 0:
                out[r] = t
                break
    return out


@nb.njit(cache=True)
def cftp_batch(k, xi, sigma, p_high, n_samples, seed, max_events):
    """Exact samples by monotone coupling from the past on the jump chain.

    Randomness for an epoch is stored in reverse-time order so that doubling
    the look-back only appends fresh draws; earlier draws are reused.
    Returns (samples, events used per sample); a sample whose look-back
    exceeded ``max_events`` is flagged with -1 events.
    """
    np.random.seed(seed)
    n = xi.size - 1
    nsites = n - 1
    out = np.empty((n_samples, k, n + 1), np.int64)
    used = np.empty(n_samples, np.int64)
    top0 = np.empty((k, n + 1), np.int64)
    bot0 = np.empty((k, n + 1), np.int64)
    for i in range(k):
        top0[i] = xi
        bot0[i] = sigma
    for s in range(n_samples):
        if nsites <= 0:
            out[s] = top0
            used[s] = 0
            continue
        T = max(1, k * nsites)
        ri = np.empty(T, np.int64)
        rx = np.empty(T, np.int64)
        ru = np.empty(T, np.float64)
        filled = 0
        while True:
            if ri.size < T:
                ri = np.concatenate((ri[:filled], np.empty(T - filled, np.int64)))
                rx = np.concatenate((rx[:filled], np.empty(T - filled, np.int64)))
                ru = np.concatenate((ru[:filled], np.empty(T - filled, np.float64)))
            for j in range(filled, T):
                ri[j] = np.random.randint(0, k)
                rx[j] = 1 + np.random.randint(0, nsites)
                ru[j] = np.random.random()
            filled = T
            A = top0.copy()
            B = bot0.copy()
            for j in range(T - 1, -1, -1):
                heat_bath_update(A, ri[j], rx[j], ru[j], p_high, xi, sigma)
                heat_bath_update(B, ri[j], rx[j], ru[j], p_high, xi, sigma)
            same = True
            for i in range(k):
                for x in range(n + 1):
                    if A[i, x] != B[i, x]:
                        same = False
                        break
                if not same:
                    break
            if same:
                out[s] = A
                used[s] = T
                break
            if 2 * T > max_events:
                out[s] = A
                used[s] = -1
                break
            T *= 2
    return out, used


@nb.njit(cache=True)
def snapshots(H, xi, sigma, p_high, times, seed):
    """States at the (sorted) ``times`` of one trajectory started from ``H``."""
    np.random.seed(seed)
    k = H.shape[0]
    n = H.shape[1] - 1
    nsites = n - 1
    rate = k * nsites
    out = np.empty((times.size, k, n + 1), np.int64)
    nxt = np.random.exponential(1.0 / rate) if nsites > 0 else np.inf
    for s in range(times.size):
        while nxt <= times[s]:
            i = np.random.randint(0, k)
            x = 1 + np.random.randint(0, nsites)
            heat_bath_update(H, i, x, np.random.random(), p_high, xi, sigma)
            nxt += np.random.exponential(1.0 / rate)
        out[s] = H
    return out


@nb.njit(cache=True)
def envelope_run(Hc, Hu, xi, sigma, p_high, caps, plus, tau, horizon, seed):
    """Censored and free copies on shared randomness, checked against envelopes.

    During slab ``s`` (times in (s tau, (s+1) tau], clamped to the last
    slab) the censored copy ``Hc`` may not rise above ``caps[s]`` and is
    compared with the lower envelope ``plus[s]``.  Returns (time of the
    first excursion below ``plus``, per-slab worst excess in cubes, number
    of events where the censored copy rose above the free one).
    """
    np.random.seed(seed)
    k = Hc.shape[0]
    n = Hc.shape[1] - 1
    nsites = n - 1
    rate = k * nsites
    ns = caps.shape[0]
    worst = np.zeros(ns, np.int64)
    first = np.inf
    dom_bad = 0
    slab = 0
    excess = 0
    for i in range(k):
        for x in range(n + 1):
            if plus[0, i, x] > Hc[i, x]:
                excess += plus[0, i, x] - Hc[i, x]
    if excess > 0:
        first = 0.0
        worst[0] = excess // 2
    t = 0.0
    while True:
        t += np.random.exponential(1.0 / rate)
        if t > horizon:
            break
        s = int(t / tau)
        if s > ns - 1:
            s = ns - 1
        if s != slab:
            slab = s
            excess = 0
            for i in range(k):
                for x in range(n + 1):
                    if plus[s, i, x] > Hc[i, x]:
                        excess += plus[s, i, x] - Hc[i, x]
        i = np.random.randint(0, k)
        x = 1 + np.random.randint(0, nsites)
        u = np.random.random()
        before = plus[s, i, x] - Hc[i, x]
        heat_bath_update_capped(Hc, i, x, u, p_high, xi, sigma, caps[s])
        heat_bath_update(Hu, i, x, u, p_high, xi, sigma)
        after = plus[s, i, x] - Hc[i, x]
        excess += max(after, 0) - max(before, 0)
        if Hc[i, x] > Hu[i, x]:
            dom_bad += 1
        if excess > 0:
            if t < first:
                first = t
            if excess // 2 > worst[s]:
                worst[s] = excess // 2
    return first, worst, dom_bad


@nb.njit(cache=True)
def post_hit_volume(H, xi, sigma, p_high, horizon, threshold, seed):
    """After the first visit to the all-ceiling state, time fraction with
    excess volume (in cubes) above ``threshold`` and its running maximum.

    Returns (hit time or inf, fraction, max volume after hit).
    """
    np.random.seed(seed)
    k = H.shape[0]
    n = H.shape[1] - 1
    nsites = n - 1
    rate = k * nsites
    vol = 0
    for i in range(k):
        for x in range(n + 1):
            vol += xi[x] - H[i, x]
    hit = 0.0 if vol == 0 else np.inf
    above = 0.0
    vmax = 0
    t = 0.0
    while True:
        dt = np.random.exponential(1.0 / rate)
        if t + dt > horizon:
            if hit < np.inf and vol // 2 > threshold:
                above += horizon - t
            break
        if hit < np.inf and vol // 2 > threshold:
            above += dt
        t += dt
        i = np.random.randint(0, k)
        x = 1 + np.random.randint(0, nsites)
        vol -= heat_bath_update(H, i, x, np.random.random(), p_high, xi, sigma)
        if hit == np.inf and vol == 0:
            hit = t
        if hit < np.inf and vol // 2 > vmax:
            vmax = vol // 2
    frac = above / (horizon - hit) if hit < horizon else np.nan
    return hit, frac, vmax
