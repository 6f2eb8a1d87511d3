"""Pure-Python simulation kernels.

These are the reference implementations of the hot loops; ``lodsim._kernels``
is a compiled mirror. Both consume random draws from the supplied
``numpy.random.Generator`` in exactly the same order, so for a given stream
the two backends produce bit-identical output.

Draw protocol (shared with the compiled kernels):

* line-count chains: per executed or horizon-crossing event one standard
  exponential (holding time) followed by one uniform (jump target via a
  cumulative scan of the rate list in canonical order: up, down, kill,
  block drops by ascending drop size);
* stationary samplers: the holding-time exponential is drawn first, then one
  exponential per sample that falls before the proposed event, then the
  target uniform;
* level-resolved lookdown graph: per event one exponential, one uniform for
  the event kind, one uniform for the level / pair index;
* Moran event stream: per event one exponential, then one uniform for the
  kind and two uniforms (lines, or line + mutant type), none of them drawn
  for the horizon-crossing event;
* Euler-Maruyama: one standard normal per replicate per step, replicates
  innermost within a step.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

# chain ids
R_DET, R_DIFF, L_DET, L_DIFF = 0, 1, 2, 3
# terminal statuses
ST_ABSORBED, ST_DONE, ST_EVENT_CAP, ST_DIVERGED = 0, 1, 2, 3
# state encoding for the cemetery
DELTA_CODE = -1

_INF = math.inf


def _rates(chain: int, n: int, s1: float, s2: float, nu0: float, nu1: float):
    """Outgoing rates at state ``n``: (up, down, kill, drop, ndrops).

    ``drop`` is the per-target rate of the block drops to n-2, ..., 1
    (lookdown chains only). s1 is the selection rate (s or sigma), s2 the
    total mutation rate (u or theta).
    """
    if chain == R_DET:
        return n * s1, n * s2 * nu1, n * s2 * nu0, 0.0, 0
    if chain == R_DIFF:
        return n * s1, 0.5 * n * (n - 1.0) + n * s2 * nu1, n * s2 * nu0, 0.0, 0
    if chain == L_DET:
        down = (n - 1.0) * s2 * nu1 + (s2 * nu0 if n > 1 else 0.0)
        return n * s1, down, 0.0, s2 * nu0, max(n - 2, 0)
    if chain == L_DIFF:
        down = 0.5 * n * (n - 1.0) + (n - 1.0) * s2 * nu1 + (s2 * nu0 if n > 1 else 0.0)
        return n * s1, down, 0.0, s2 * nu0, max(n - 2, 0)
    raise ValueError(f"unknown chain id {chain}")


def _choose(n, up, down, kill, drop, ndrops, u):
    """Jump target for a uniform ``u`` on [0, total), cumulative scan.

    Zero-rate trailing segments are unreachable because the cumulative sums
    reproduce the sub-expressions of the total.
    """
    if u < up:
        return n + 1
    c = up + down
    if u < c:
        return n - 1
    c = c + kill
    if u < c:
        return DELTA_CODE
    ell = 2 + int((u - c) / drop) if drop > 0.0 else 2
    if ell > n - 1:
        ell = n - 1
    return n - ell


def _is_absorbing(chain, n):
    if n == DELTA_CODE:
        return True
    if chain == R_DET or chain == R_DIFF:
        return n == 0
    return False  # L-chains have no absorbing states


def linecount_run(chain, s1, s2, nu0, nu1, n0, t_max, event_cap, state_cap, gen):
    """Run one path; returns (status, state, time, nevents).

    A state with no outgoing rate (e.g. the lookdown chain at 1 with s = 0)
    reports ST_ABSORBED.
    """
    n = n0
    t = 0.0
    for k in range(event_cap):
        if _is_absorbing(chain, n):
            return ST_ABSORBED, n, t, k
        if n >= state_cap:
            return ST_DIVERGED, n, t, k
        up, down, kill, drop, ndrops = _rates(chain, n, s1, s2, nu0, nu1)
        total = up + down + kill + ndrops * drop
        if total <= 0.0:
            return ST_ABSORBED, n, t, k
        dt = gen.standard_exponential() / total
        u = gen.random() * total
        if t + dt > t_max:
            return ST_DONE, n, t_max, k
        t += dt
        n = _choose(n, up, down, kill, drop, ndrops, u)
    return ST_EVENT_CAP, n, t, event_cap


def linecount_path(chain, s1, s2, nu0, nu1, n0, t_max, event_cap, state_cap, gen):
    """Like linecount_run but records the full path (status, times, states)."""
    times = [0.0]
    states = [n0]
    n = n0
    t = 0.0
    status = ST_EVENT_CAP
    for _ in range(event_cap):
        if _is_absorbing(chain, n):
            status = ST_ABSORBED
            break
        if n >= state_cap:
            status = ST_DIVERGED
            break
        up, down, kill, drop, ndrops = _rates(chain, n, s1, s2, nu0, nu1)
        total = up + down + kill + ndrops * drop
        if total <= 0.0:
            status = ST_ABSORBED
            break
        dt = gen.standard_exponential() / total
        u = gen.random() * total
        if t + dt > t_max:
            status = ST_DONE
            break
        t += dt
        n = _choose(n, up, down, kill, drop, ndrops, u)
        times.append(t)
        states.append(n)
    return status, np.asarray(times), np.asarray(states, dtype=np.int64)


def linecount_batch_absorb(chain, s1, s2, nu0, nu1, n0, reps,
                           event_cap, state_cap, gen):
    """Absorption tally over replicates: (n_zero, n_delta, n_diverged, n_capped)."""
    nz = nd = ndiv = ncap = 0
    for _ in range(reps):
        status, n, _, _ = linecount_run(chain, s1, s2, nu0, nu1, n0,
                                        _INF, event_cap, state_cap, gen)
        if status == ST_ABSORBED:
            if n == DELTA_CODE:
                nd += 1
            else:
                nz += 1
        elif status == ST_DIVERGED:
            ndiv += 1
        else:
            ncap += 1
    return nz, nd, ndiv, ncap


def linecount_batch_value(chain, s1, s2, nu0, nu1, n0, t, reps,
                          event_cap, state_cap, gen):
    """States at fixed time ``t`` per replicate (DELTA_CODE for killed paths).

    Paths that hit the state cap keep the capped state; event-cap censoring
    is encoded as -2 and must be handled by the caller.
    """
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        status, n, _, _ = linecount_run(chain, s1, s2, nu0, nu1, n0,
                                        t, event_cap, state_cap, gen)
        out[r] = -2 if status == ST_EVENT_CAP else n
    return out


def linecount_stationary_sample(chain, s1, s2, nu0, nu1, n0, burn_in,
                                nsamples, spacing, event_cap, state_cap, gen):
    """Time-sampled states after burn-in, spacing ~ Exp(mean ``spacing``).

    Returns (status, samples); ST_DONE when all samples were collected. On
    divergence, absorption or event-cap exhaustion the remaining slots are
    left at -2. A state with no outgoing rate holds forever and fills the
    remaining samples.
    """
    out = np.full(nsamples, -2, dtype=np.int64)
    n = n0
    t = 0.0
    next_sample = burn_in + gen.standard_exponential() * spacing
    got = 0
    for _ in range(event_cap):
        if n >= state_cap:
            return ST_DIVERGED, out
        if _is_absorbing(chain, n):
            return ST_ABSORBED, out
        up, down, kill, drop, ndrops = _rates(chain, n, s1, s2, nu0, nu1)
        total = up + down + kill + ndrops * drop
        if total <= 0.0:
            while got < nsamples:
                out[got] = n
                got += 1
            return ST_DONE, out
        dt = gen.standard_exponential() / total
        while t + dt > next_sample:
            out[got] = n
            got += 1
            if got == nsamples:
                return ST_DONE, out
            next_sample += gen.standard_exponential() * spacing
        t += dt
        u = gen.random() * total
        n = _choose(n, up, down, kill, drop, ndrops, u)
    return ST_EVENT_CAP, out


# ---------------------------------------------------------------------------
# Level-resolved pruned lookdown ASG
# ---------------------------------------------------------------------------

LD_BRANCH, LD_COAL, LD_DEL, LD_BEN = 0, 1, 2, 3
MODE_FECUNDITY, MODE_VIABILITY = 0, 1


def _unrank_pair(k, top):
    """k-th unordered pair (i, j), 1 <= i < j <= top, lexicographic order."""
    i = 1
    count = top - 1
    while k >= count:
        k -= count
        i += 1
        count = top - i
    return i, i + 1 + k


def _ldasg_apply(limit_diff, mode, L, M, kind, u2, n_window):
    """Apply one event; returns (L, M, level_i, level_j, was_real).

    ``u2`` selects the level (pair index for coalescences) within a window
    widened to ``n_window`` levels (``n_window + 1`` for pairs) when the
    proof-structure harness is active; marks at levels above L are phantoms
    and leave the state unchanged. In the deterministic limit the M argument
    is ignored (the immune line is the top line) and L is returned for it.
    """
    if kind == LD_COAL:
        top = max(L, n_window + 1) if n_window > 0 else L
        npairs = top * (top - 1) // 2
        k = int(u2 * npairs)
        if k > npairs - 1:
            k = npairs - 1
        i, j = _unrank_pair(k, top)
        if j > L:
            return L, M, i, j, False
        if M == j:
            M = i
        elif M > j:
            M -= 1
        return L - 1, M, i, j, True
    span = max(L, n_window)
    i = 1 + int(u2 * span)
    if i > span:
        i = span
    if i > L:
        return L, M, i, 0, False
    if kind == LD_BRANCH:
        if mode == MODE_FECUNDITY:
            if M >= i:
                M += 1
        else:
            if M > i:
                M += 1
        return L + 1, (M if limit_diff else L + 1), i, 0, True
    if kind == LD_DEL:
        if limit_diff:
            if i == M:
                return L, L, i, 0, True  # immune line relocated to the top
            if M > i:
                M -= 1
            return L - 1, M, i, 0, True
        if i == L:
            return L, L, i, 0, True  # top line immune: nothing happens
        return L - 1, L - 1, i, 0, True
    # beneficial mutation: prune everything above level i, immune moves to i
    return i, i, i, 0, True


def ldasg_levels_path(limit_diff, mode, s1, s2, nu0, nu1, r_max, max_events, gen):
    """Event record of the level-resolved pruned lookdown ASG from one line.

    Returns (status, times, L_after, M_after, kinds, level_i, level_j); in
    the deterministic limit M_after equals L_after.
    """
    times = np.empty(max_events)
    Ls = np.empty(max_events, dtype=np.int64)
    Ms = np.empty(max_events, dtype=np.int64)
    kinds = np.empty(max_events, dtype=np.int8)
    lvl_i = np.empty(max_events, dtype=np.int64)
    lvl_j = np.empty(max_events, dtype=np.int64)
    L, M = 1, 1
    t = 0.0
    m = 0
    status = ST_EVENT_CAP
    while m < max_events:
        b_tot = L * s1
        c_tot = 0.5 * L * (L - 1.0) if limit_diff else 0.0
        d_tot = L * s2 * nu1
        g_tot = L * s2 * nu0
        total = b_tot + c_tot + d_tot + g_tot
        if total <= 0.0:
            status = ST_ABSORBED
            break
        dt = gen.standard_exponential() / total
        if t + dt > r_max:
            status = ST_DONE
            break
        t += dt
        u = gen.random() * total
        if u < b_tot:
            kind = LD_BRANCH
        elif u < b_tot + c_tot:
            kind = LD_COAL
        elif u < b_tot + c_tot + d_tot:
            kind = LD_DEL
        else:
            kind = LD_BEN
        u2 = gen.random()
        L, M, i, j, _ = _ldasg_apply(limit_diff, mode, L, M, kind, u2, 0)
        times[m] = t
        Ls[m] = L
        Ms[m] = M
        kinds[m] = kind
        lvl_i[m] = i
        lvl_j[m] = j
        m += 1
    return (status, times[:m], Ls[:m], Ms[:m], kinds[:m], lvl_i[:m], lvl_j[:m])


def ldasg_stationary_levels(limit_diff, mode, s1, s2, nu0, nu1, burn_in,
                            nsamples, spacing, event_cap, state_cap, gen):
    """(status, L_samples, M_samples) from the level-resolved simulation."""
    Lout = np.full(nsamples, -2, dtype=np.int64)
    Mout = np.full(nsamples, -2, dtype=np.int64)
    L, M = 1, 1
    t = 0.0
    next_sample = burn_in + gen.standard_exponential() * spacing
    got = 0
    for _ in range(event_cap):
        if L >= state_cap:
            return ST_DIVERGED, Lout, Mout
        b_tot = L * s1
        c_tot = 0.5 * L * (L - 1.0) if limit_diff else 0.0
        d_tot = L * s2 * nu1
        g_tot = L * s2 * nu0
        total = b_tot + c_tot + d_tot + g_tot
        if total <= 0.0:
            while got < nsamples:
                Lout[got] = L
                Mout[got] = M
                got += 1
            return ST_DONE, Lout, Mout
        dt = gen.standard_exponential() / total
        while t + dt > next_sample:
            Lout[got] = L
            Mout[got] = M
            got += 1
            if got == nsamples:
                return ST_DONE, Lout, Mout
            next_sample += gen.standard_exponential() * spacing
        t += dt
        u = gen.random() * total
        if u < b_tot:
            kind = LD_BRANCH
        elif u < b_tot + c_tot:
            kind = LD_COAL
        elif u < b_tot + c_tot + d_tot:
            kind = LD_DEL
        else:
            kind = LD_BEN
        u2 = gen.random()
        L, M, _, _, _ = _ldasg_apply(limit_diff, mode, L, M, kind, u2, 0)
    return ST_EVENT_CAP, Lout, Mout


def ldasg_proof_samples(mode, sigma, theta, nu0, nu1, n, burn_in,
                        nsamples, spacing, event_cap, state_cap, gen):
    """Stationary samples for the tail-probability event decomposition.

    Marks are attached to levels: branching/mutation marks on levels
    1..max(L, n) and coalescence marks on pairs within 1..max(L, n+1), so
    marks on the first n levels (pairs within the first n+1) arrive at
    constant rate even while those levels are unoccupied.

    Per sample: C = class of the most recent mark on the first n levels
    (LD_* code, -1 before the first one), B = 1 if L > n held just before
    that mark, G = 1 if L > n at the sampling time.
    Returns (status, C, B, G).
    """
    Cout = np.full(nsamples, -1, dtype=np.int8)
    Bout = np.zeros(nsamples, dtype=np.int8)
    Gout = np.zeros(nsamples, dtype=np.int8)
    L, M = 1, 1
    lastC, lastB = -1, 0
    t = 0.0
    next_sample = burn_in + gen.standard_exponential() * spacing
    got = 0
    for _ in range(event_cap):
        if L >= state_cap:
            return ST_DIVERGED, Cout, Bout, Gout
        span = max(L, n)
        top = max(L, n + 1)
        b_tot = span * sigma
        c_tot = 0.5 * top * (top - 1.0)
        d_tot = span * theta * nu1
        g_tot = span * theta * nu0
        total = b_tot + c_tot + d_tot + g_tot
        dt = gen.standard_exponential() / total
        while t + dt > next_sample:
            Cout[got] = lastC
            Bout[got] = lastB
            Gout[got] = 1 if L > n else 0
            got += 1
            if got == nsamples:
                return ST_DONE, Cout, Bout, Gout
            next_sample += gen.standard_exponential() * spacing
        t += dt
        u = gen.random() * total
        if u < b_tot:
            kind = LD_BRANCH
        elif u < b_tot + c_tot:
            kind = LD_COAL
        elif u < b_tot + c_tot + d_tot:
            kind = LD_DEL
        else:
            kind = LD_BEN
        u2 = gen.random()
        L_before = L
        L, M, i, j, _ = _ldasg_apply(True, mode, L, M, kind, u2, n)
        on_first_n = (j <= n + 1) if kind == LD_COAL else (i <= n)
        if on_first_n:
            lastC = kind
            lastB = 1 if L_before > n else 0
    return ST_EVENT_CAP, Cout, Bout, Gout


# ---------------------------------------------------------------------------
# Finite-N Moran model
# ---------------------------------------------------------------------------

EV_NEUTRAL, EV_SELECTIVE, EV_MUTATION = 0, 1, 2


def moran_stream(N, s, u, nu0, t_max, max_events, gen):
    """Untyped graphical representation on [0, t_max].

    Neutral arrows at rate 1/(2N) and selective arrows at rate s/N per
    ordered pair (self-pairs included), mutation marks at rate u per line.
    Returns (status, kinds, times, src, dst); dst is the target line for
    arrows and the drawn type for mutation marks.
    """
    kinds = np.empty(max_events, dtype=np.int8)
    times = np.empty(max_events)
    src = np.empty(max_events, dtype=np.int64)
    dst = np.empty(max_events, dtype=np.int64)
    r_neutral = 0.5 * N
    r_selective = float(N) * s
    r_mutation = float(N) * u
    total = r_neutral + r_selective + r_mutation
    t = 0.0
    m = 0
    while True:
        dt = gen.standard_exponential() / total
        if t + dt > t_max:
            return ST_DONE, kinds[:m], times[:m], src[:m], dst[:m]
        if m == max_events:
            return ST_EVENT_CAP, kinds[:m], times[:m], src[:m], dst[:m]
        t += dt
        u1 = gen.random() * total
        ua = gen.random()
        ub = gen.random()
        i = int(ua * N)
        if i > N - 1:
            i = N - 1
        if u1 < r_neutral + r_selective:
            kind = EV_NEUTRAL if u1 < r_neutral else EV_SELECTIVE
            j = int(ub * N)
            if j > N - 1:
                j = N - 1
        else:
            kind = EV_MUTATION
            j = 0 if ub < nu0 else 1
        kinds[m] = kind
        times[m] = t
        src[m] = i
        dst[m] = j
        m += 1


def _moran_apply(kind, i, j, types, count0, fecundity):
    """Apply one event to the type vector; returns the new type-0 count."""
    if kind == EV_NEUTRAL:
        if types[i] != types[j]:
            count0 += 1 if types[i] == 0 else -1
            types[j] = types[i]
    elif kind == EV_SELECTIVE:
        if fecundity:
            # used by a type-0 parent, ignored otherwise
            if types[i] == 0 and types[j] != 0:
                count0 += 1
                types[j] = 0
        else:
            # the individual at the tip dies only if it is of type 1
            if types[j] == 1 and types[i] == 0:
                count0 += 1
                types[j] = 0
    else:  # mutation mark; j is the drawn type
        if types[i] != j:
            count0 += 1 if j == 0 else -1
            types[i] = j
    return count0


def moran_propagate(kinds, times, src, dst, types0, fecundity):
    """Type propagation through an event stream.

    Returns (jump_times, jump_values) of the type-0 frequency path; the
    initial value sits at time 0 in the first slot.
    """
    types = np.array(types0, dtype=np.int8)
    N = len(types)
    count0 = int(np.sum(types == 0))
    jt = [0.0]
    jv = [count0 / N]
    for m in range(len(kinds)):
        new = _moran_apply(int(kinds[m]), int(src[m]), int(dst[m]),
                           types, count0, fecundity)
        if new != count0:
            count0 = new
            jt.append(float(times[m]))
            jv.append(count0 / N)
    return np.asarray(jt), np.asarray(jv)


def moran_grid(N, s, u, nu0, t_max, types0, fecundity, grid, gen):
    """Fused stream generation + propagation, evaluated on ``grid``.

    Consumes draws exactly like moran_stream. ``grid`` must be sorted within
    [0, t_max]; values are right-continuous (a grid point equal to an event
    time sees the post-event state).
    """
    types = np.array(types0, dtype=np.int8)
    count0 = int(np.sum(types == 0))
    out = np.empty(len(grid))
    g = 0
    r_neutral = 0.5 * N
    r_selective = float(N) * s
    r_mutation = float(N) * u
    total = r_neutral + r_selective + r_mutation
    t = 0.0
    while True:
        dt = gen.standard_exponential() / total
        te = t + dt
        while g < len(grid) and grid[g] < te:
            out[g] = count0 / N
            g += 1
        if te > t_max:
            while g < len(grid):
                out[g] = count0 / N
                g += 1
            return out
        t = te
        u1 = gen.random() * total
        ua = gen.random()
        ub = gen.random()
        i = int(ua * N)
        if i > N - 1:
            i = N - 1
        if u1 < r_neutral + r_selective:
            kind = EV_NEUTRAL if u1 < r_neutral else EV_SELECTIVE
            j = int(ub * N)
            if j > N - 1:
                j = N - 1
        else:
            kind = EV_MUTATION
            j = 0 if ub < nu0 else 1
        count0 = _moran_apply(kind, i, j, types, count0, fecundity)


# ---------------------------------------------------------------------------
# Wright-Fisher diffusion (Euler-Maruyama, clamped to [0, 1])
# ---------------------------------------------------------------------------


def wf_em_batch(sigma, theta, nu0, nu1, x0, t, dt, reps, gen):
    """Terminal values X_t for ``reps`` independent paths.

    Full steps of length dt plus one final partial step landing on t. The
    infinitesimal variance is x(1-x), matching the generator
    (1/2) x (1-x) d^2/dx^2 of the pair-coalescence-rate-one scaling. With
    theta*nu0 == 0 the state 0 is exactly absorbing (drift and noise both
    vanish there), symmetrically for 1 when theta*nu1 == 0.
    """
    nfull = int(t / dt)
    last = t - nfull * dt
    x = np.full(reps, float(x0))
    for _ in range(nfull):
        z = gen.standard_normal(reps)
        alpha = sigma * x * (1.0 - x) + theta * nu0 * (1.0 - x) - theta * nu1 * x
        var = x * (1.0 - x)
        x = np.clip(x + alpha * dt + np.sqrt(var * dt) * z, 0.0, 1.0)
    if last > 0.0:
        z = gen.standard_normal(reps)
        alpha = sigma * x * (1.0 - x) + theta * nu0 * (1.0 - x) - theta * nu1 * x
        var = x * (1.0 - x)
        x = np.clip(x + alpha * last + np.sqrt(var * last) * z, 0.0, 1.0)
    return x
