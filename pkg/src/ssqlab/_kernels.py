"""Jit-compiled event loop for the SSQ continuous-time Markov chain.

The kernel is resumable: it simulates at most ``max_events`` transitions per
call and reports why it returned, so the Python wrapper can enforce budgets
and collect event logs in bounded-memory chunks.  Arrival/service intensities
(``lam_rate``/``mu_rate``) are deliberately separate from the workload
geometry (``mu_geom``/``steps``) so a path can be simulated under one
measure while the policy and stopping sets are evaluated under another.
"""

from numba import njit

# stop-condition bits
STOP_TIME = 1
STOP_RADIAL_HI = 2
STOP_RADIAL_ZERO = 4
STOP_DIST = 8

# return reasons
CHUNK_FULL = 0
HIT_TIME = 1
HIT_RADIAL_HI = 2
HIT_RADIAL_ZERO = 3
HIT_DIST = 4


@njit(cache=True, nogil=True)
def run_chain(Q, A, D, T_eff, t_in,
              lam_rate, mu_rate, mu_geom, steps, pk,
              stop_mask, t_max, radial_hi, dist2_max,
              max_events, ev_t, ev_cls, ev_kind, record, rng):
    """Advance the chain in place; return ``(t, n_events, reason)``.

    Stop conditions are evaluated on the current state at the top of every
    iteration, so a state that already satisfies one stops immediately.
    """
    n = Q.shape[0]
    t = t_in
    nev = 0
    while True:
        qsum = 0
        for i in range(n):
            qsum += Q[i]
        if stop_mask & STOP_RADIAL_ZERO and qsum == 0:
            return t, nev, HIT_RADIAL_ZERO
        if stop_mask & STOP_RADIAL_HI:
            radial = 0.0
            for i in range(n):
                radial += Q[i] * steps[i]
            if radial >= radial_hi:
                return t, nev, HIT_RADIAL_HI
        if stop_mask & STOP_DIST:
            s2 = 0.0
            mx = 0.0
            for i in range(n):
                xi = Q[i] * steps[i]
                s2 += xi * xi
                if xi > mx:
                    mx = xi
            if s2 - mx * mx > dist2_max:
                return t, nev, HIT_DIST
        if nev >= max_events:
            return t, nev, CHUNK_FULL

        # tied shortest set as a bitmask; cross-multiplied comparisons are
        # exact for lattice states (integer counts below 2**53)
        mask = 0
        best = -1
        for i in range(n):
            if Q[i] > 0:
                if best < 0:
                    best = i
                    mask = 1 << i
                else:
                    lhs = Q[i] * mu_geom[best]
                    rhs = Q[best] * mu_geom[i]
                    if lhs < rhs:
                        best = i
                        mask = 1 << i
                    elif lhs == rhs:
                        mask |= 1 << i

        tot = 0.0
        for i in range(n):
            tot += lam_rate[i]
        for i in range(n):
            tot += pk[mask, i] * mu_rate[i]

        dt = rng.exponential(1.0 / tot)
        if stop_mask & STOP_TIME and t + dt > t_max:
            rem = t_max - t
            for i in range(n):
                T_eff[i] += pk[mask, i] * rem
            return t_max, nev, HIT_TIME
        for i in range(n):
            T_eff[i] += pk[mask, i] * dt
        t = t + dt

        u = rng.random() * tot
        acc = 0.0
        cls = -1
        kind = 0
        last_cls = -1
        last_kind = 0
        for i in range(n):
            if lam_rate[i] > 0.0:
                last_cls = i
                last_kind = 0
            acc += lam_rate[i]
            if u < acc:
                cls = i
                kind = 0
                break
        if cls < 0:
            for i in range(n):
                sr = pk[mask, i] * mu_rate[i]
                if sr > 0.0:
                    last_cls = i
                    last_kind = 1
                acc += sr
                if u < acc:
                    cls = i
                    kind = 1
                    break
        if cls < 0:
            # u landed on the rounded-off tail of the rate sum
            cls = last_cls
            kind = last_kind

        if kind == 0:
            Q[cls] += 1
            A[cls] += 1
        else:
            Q[cls] -= 1
            D[cls] += 1
        if record:
            ev_t[nev] = t
            ev_cls[nev] = cls
            ev_kind[nev] = kind
        nev += 1
