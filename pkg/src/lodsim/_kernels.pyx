#cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernels.

Mirrors ``lodsim._pykernels`` function by function; both backends consume
random draws in exactly the same order (see the draw protocol documented
there), so paths are bit-identical across backends for a given stream.
"""
import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport HUGE_VAL, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_exponential,
    random_standard_normal,
    random_standard_uniform,
)

BACKEND = "compiled"

R_DET, R_DIFF, L_DET, L_DIFF = 0, 1, 2, 3
ST_ABSORBED, ST_DONE, ST_EVENT_CAP, ST_DIVERGED = 0, 1, 2, 3
DELTA_CODE = -1

LD_BRANCH, LD_COAL, LD_DEL, LD_BEN = 0, 1, 2, 3
MODE_FECUNDITY, MODE_VIABILITY = 0, 1
EV_NEUTRAL, EV_SELECTIVE, EV_MUTATION = 0, 1, 2

cdef enum:
    C_R_DET = 0
    C_R_DIFF = 1
    C_L_DET = 2
    C_L_DIFF = 3

cdef enum:
    C_ABSORBED = 0
    C_DONE = 1
    C_EVENT_CAP = 2
    C_DIVERGED = 3

cdef enum:
    C_DELTA = -1

cdef enum:
    C_LD_BRANCH = 0
    C_LD_COAL = 1
    C_LD_DEL = 2
    C_LD_BEN = 3

cdef enum:
    C_MODE_FECUNDITY = 0
    C_MODE_VIABILITY = 1

cdef enum:
    C_EV_NEUTRAL = 0
    C_EV_SELECTIVE = 1
    C_EV_MUTATION = 2


cdef bitgen_t* _bitgen(object gen):
    capsule = gen.bit_generator.capsule
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


# ---------------------------------------------------------------------------
# Line-counting chains
# ---------------------------------------------------------------------------

cdef inline void _rates(int chain, long n, double s1, double s2,
                        double nu0, double nu1, double* up, double* down,
                        double* kill, double* drop, long* ndrops) noexcept nogil:
    if chain == C_R_DET:
        up[0] = n * s1
        down[0] = n * s2 * nu1
        kill[0] = n * s2 * nu0
        drop[0] = 0.0
        ndrops[0] = 0
    elif chain == C_R_DIFF:
        up[0] = n * s1
        down[0] = 0.5 * n * (n - 1.0) + n * s2 * nu1
        kill[0] = n * s2 * nu0
        drop[0] = 0.0
        ndrops[0] = 0
    elif chain == C_L_DET:
        up[0] = n * s1
        down[0] = (n - 1.0) * s2 * nu1 + (s2 * nu0 if n > 1 else 0.0)
        kill[0] = 0.0
        drop[0] = s2 * nu0
        ndrops[0] = n - 2 if n > 2 else 0
    else:
        up[0] = n * s1
        down[0] = (0.5 * n * (n - 1.0) + (n - 1.0) * s2 * nu1
                   + (s2 * nu0 if n > 1 else 0.0))
        kill[0] = 0.0
        drop[0] = s2 * nu0
        ndrops[0] = n - 2 if n > 2 else 0


cdef inline long _choose(long n, double up, double down, double kill,
                         double drop, long ndrops, double u) noexcept nogil:
    cdef double c
    cdef long ell
    if u < up:
        return n + 1
    c = up + down
    if u < c:
        return n - 1
    c = c + kill
    if u < c:
        return C_DELTA
    ell = 2 + <long>((u - c) / drop) if drop > 0.0 else 2
    if ell > n - 1:
        ell = n - 1
    return n - ell


cdef inline bint _is_absorbing(int chain, long n) noexcept nogil:
    if n == C_DELTA:
        return True
    if chain == C_R_DET or chain == C_R_DIFF:
        return n == 0
    return False


cdef int _lc_run(bitgen_t* rng, int chain, double s1, double s2, double nu0,
                 double nu1, long n0, double t_max, long event_cap,
                 long state_cap, long* n_out, double* t_out,
                 long* k_out) noexcept nogil:
    cdef long n = n0, k
    cdef double t = 0.0, dt, u, up, down, kill, drop, total
    cdef long ndrops
    for k in range(event_cap):
        if _is_absorbing(chain, n):
            n_out[0] = n; t_out[0] = t; k_out[0] = k
            return C_ABSORBED
        if n >= state_cap:
            n_out[0] = n; t_out[0] = t; k_out[0] = k
            return C_DIVERGED
        _rates(chain, n, s1, s2, nu0, nu1, &up, &down, &kill, &drop, &ndrops)
        total = up + down + kill + ndrops * drop
        if total <= 0.0:
            n_out[0] = n; t_out[0] = t; k_out[0] = k
            return C_ABSORBED
        dt = random_standard_exponential(rng) / total
        u = random_standard_uniform(rng) * total
        if t + dt > t_max:
            n_out[0] = n; t_out[0] = t_max; k_out[0] = k
            return C_DONE
        t += dt
        n = _choose(n, up, down, kill, drop, ndrops, u)
    n_out[0] = n; t_out[0] = t; k_out[0] = event_cap
    return C_EVENT_CAP


def linecount_run(int chain, double s1, double s2, double nu0, double nu1,
                  long n0, double t_max, long event_cap, long state_cap, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    cdef long n, k
    cdef double t
    cdef int status
    with gen.bit_generator.lock:
        with nogil:
            status = _lc_run(rng, chain, s1, s2, nu0, nu1, n0, t_max,
                             event_cap, state_cap, &n, &t, &k)
    return status, n, t, k


def linecount_path(int chain, double s1, double s2, double nu0, double nu1,
                   long n0, double t_max, long event_cap, long state_cap, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    times_arr = np.empty(event_cap + 1)
    states_arr = np.empty(event_cap + 1, dtype=np.int64)
    cdef double[::1] times = times_arr
    cdef long[::1] states = states_arr
    cdef long n = n0, m = 1, ndrops
    cdef double t = 0.0, dt, u, up, down, kill, drop, total
    cdef int status = C_EVENT_CAP
    times[0] = 0.0
    states[0] = n0
    with gen.bit_generator.lock:
        with nogil:
            while m <= event_cap:
                if _is_absorbing(chain, n):
                    status = C_ABSORBED
                    break
                if n >= state_cap:
                    status = C_DIVERGED
                    break
                _rates(chain, n, s1, s2, nu0, nu1, &up, &down, &kill, &drop, &ndrops)
                total = up + down + kill + ndrops * drop
                if total <= 0.0:
                    status = C_ABSORBED
                    break
                dt = random_standard_exponential(rng) / total
                u = random_standard_uniform(rng) * total
                if t + dt > t_max:
                    status = C_DONE
                    break
                t += dt
                n = _choose(n, up, down, kill, drop, ndrops, u)
                times[m] = t
                states[m] = n
                m += 1
    return status, times_arr[:m], states_arr[:m]


def linecount_batch_absorb(int chain, double s1, double s2, double nu0,
                           double nu1, long n0, long reps, long event_cap,
                           long state_cap, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    cdef long nz = 0, nd = 0, ndiv = 0, ncap = 0, r, n, k
    cdef double t
    cdef int status
    with gen.bit_generator.lock:
        with nogil:
            for r in range(reps):
                status = _lc_run(rng, chain, s1, s2, nu0, nu1, n0, HUGE_VAL,
                                 event_cap, state_cap, &n, &t, &k)
                if status == C_ABSORBED:
                    if n == C_DELTA:
                        nd += 1
                    else:
                        nz += 1
                elif status == C_DIVERGED:
                    ndiv += 1
                else:
                    ncap += 1
    return nz, nd, ndiv, ncap


def linecount_batch_value(int chain, double s1, double s2, double nu0,
                          double nu1, long n0, double t, long reps,
                          long event_cap, long state_cap, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    out_arr = np.empty(reps, dtype=np.int64)
    cdef long[::1] out = out_arr
    cdef long r, n, k
    cdef double tt
    cdef int status
    with gen.bit_generator.lock:
        with nogil:
            for r in range(reps):
                status = _lc_run(rng, chain, s1, s2, nu0, nu1, n0, t,
                                 event_cap, state_cap, &n, &tt, &k)
                out[r] = -2 if status == C_EVENT_CAP else n
    return out_arr


def linecount_stationary_sample(int chain, double s1, double s2, double nu0,
                                double nu1, long n0, double burn_in,
                                long nsamples, double spacing, long event_cap,
                                long state_cap, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    out_arr = np.full(nsamples, -2, dtype=np.int64)
    cdef long[::1] out = out_arr
    cdef long n = n0, got = 0, k, ndrops
    cdef double t = 0.0, next_sample, dt, u, up, down, kill, drop, total
    cdef int status = C_EVENT_CAP
    with gen.bit_generator.lock:
        with nogil:
            next_sample = burn_in + random_standard_exponential(rng) * spacing
            for k in range(event_cap):
                if n >= state_cap:
                    status = C_DIVERGED
                    break
                if _is_absorbing(chain, n):
                    status = C_ABSORBED
                    break
                _rates(chain, n, s1, s2, nu0, nu1, &up, &down, &kill, &drop, &ndrops)
                total = up + down + kill + ndrops * drop
                if total <= 0.0:
                    while got < nsamples:
                        out[got] = n
                        got += 1
                    status = C_DONE
                    break
                dt = random_standard_exponential(rng) / total
                while t + dt > next_sample:
                    out[got] = n
                    got += 1
                    if got == nsamples:
                        status = C_DONE
                        break
                    next_sample += random_standard_exponential(rng) * spacing
                if status == C_DONE:
                    break
                t += dt
                u = random_standard_uniform(rng) * total
                n = _choose(n, up, down, kill, drop, ndrops, u)
    return status, out_arr


# ---------------------------------------------------------------------------
# Level-resolved pruned lookdown ASG
# ---------------------------------------------------------------------------

cdef inline void _unrank_pair(long k, long top, long* i_out, long* j_out) noexcept nogil:
    cdef long i = 1
    cdef long count = top - 1
    while k >= count:
        k -= count
        i += 1
        count = top - i
    i_out[0] = i
    j_out[0] = i + 1 + k


cdef inline bint _ldasg_apply(bint limit_diff, int mode, long* L, long* M,
                              int kind, double u2, long n_window,
                              long* i_out, long* j_out) noexcept nogil:
    cdef long top, npairs, k, i, j, span
    if kind == C_LD_COAL:
        top = max(L[0], n_window + 1) if n_window > 0 else L[0]
        npairs = top * (top - 1) // 2
        k = <long>(u2 * npairs)
        if k > npairs - 1:
            k = npairs - 1
        _unrank_pair(k, top, &i, &j)
        i_out[0] = i
        j_out[0] = j
        if j > L[0]:
            return False
        if M[0] == j:
            M[0] = i
        elif M[0] > j:
            M[0] -= 1
        L[0] -= 1
        return True
    span = max(L[0], n_window)
    i = 1 + <long>(u2 * span)
    if i > span:
        i = span
    i_out[0] = i
    j_out[0] = 0
    if i > L[0]:
        return False
    if kind == C_LD_BRANCH:
        if mode == C_MODE_FECUNDITY:
            if M[0] >= i:
                M[0] += 1
        else:
            if M[0] > i:
                M[0] += 1
        L[0] += 1
        if not limit_diff:
            M[0] = L[0]
        return True
    if kind == C_LD_DEL:
        if limit_diff:
            if i == M[0]:
                M[0] = L[0]  # immune line relocated to the top
                return True
            if M[0] > i:
                M[0] -= 1
            L[0] -= 1
            return True
        if i == L[0]:
            M[0] = L[0]  # top line immune: nothing happens
            return True
        L[0] -= 1
        M[0] = L[0]
        return True
    L[0] = i
    M[0] = i
    return True


def ldasg_levels_path(bint limit_diff, int mode, double s1, double s2,
                      double nu0, double nu1, double r_max, long max_events, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    times_arr = np.empty(max_events)
    Ls_arr = np.empty(max_events, dtype=np.int64)
    Ms_arr = np.empty(max_events, dtype=np.int64)
    kinds_arr = np.empty(max_events, dtype=np.int8)
    li_arr = np.empty(max_events, dtype=np.int64)
    lj_arr = np.empty(max_events, dtype=np.int64)
    cdef double[::1] times = times_arr
    cdef long[::1] Ls = Ls_arr
    cdef long[::1] Ms = Ms_arr
    cdef signed char[::1] kinds = kinds_arr
    cdef long[::1] li = li_arr
    cdef long[::1] lj = lj_arr
    cdef long L = 1, M = 1, m = 0, i, j
    cdef double t = 0.0, dt, u, u2, b_tot, c_tot, d_tot, g_tot, total
    cdef int status = C_EVENT_CAP, kind
    with gen.bit_generator.lock:
        with nogil:
            while m < max_events:
                b_tot = L * s1
                c_tot = 0.5 * L * (L - 1.0) if limit_diff else 0.0
                d_tot = L * s2 * nu1
                g_tot = L * s2 * nu0
                total = b_tot + c_tot + d_tot + g_tot
                if total <= 0.0:
                    status = C_ABSORBED
                    break
                dt = random_standard_exponential(rng) / total
                if t + dt > r_max:
                    status = C_DONE
                    break
                t += dt
                u = random_standard_uniform(rng) * total
                if u < b_tot:
                    kind = C_LD_BRANCH
                elif u < b_tot + c_tot:
                    kind = C_LD_COAL
                elif u < b_tot + c_tot + d_tot:
                    kind = C_LD_DEL
                else:
                    kind = C_LD_BEN
                u2 = random_standard_uniform(rng)
                _ldasg_apply(limit_diff, mode, &L, &M, kind, u2, 0, &i, &j)
                times[m] = t
                Ls[m] = L
                Ms[m] = M
                kinds[m] = kind
                li[m] = i
                lj[m] = j
                m += 1
    return (status, times_arr[:m], Ls_arr[:m], Ms_arr[:m], kinds_arr[:m],
            li_arr[:m], lj_arr[:m])


def ldasg_stationary_levels(bint limit_diff, int mode, double s1, double s2,
                            double nu0, double nu1, double burn_in,
                            long nsamples, double spacing, long event_cap,
                            long state_cap, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    Lout_arr = np.full(nsamples, -2, dtype=np.int64)
    Mout_arr = np.full(nsamples, -2, dtype=np.int64)
    cdef long[::1] Lout = Lout_arr
    cdef long[::1] Mout = Mout_arr
    cdef long L = 1, M = 1, got = 0, k, i, j
    cdef double t = 0.0, next_sample, dt, u, u2, b_tot, c_tot, d_tot, g_tot, total
    cdef int status = C_EVENT_CAP, kind
    with gen.bit_generator.lock:
        with nogil:
            next_sample = burn_in + random_standard_exponential(rng) * spacing
            for k in range(event_cap):
                if L >= state_cap:
                    status = C_DIVERGED
                    break
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
                    status = C_DONE
                    break
                dt = random_standard_exponential(rng) / total
                while t + dt > next_sample:
                    Lout[got] = L
                    Mout[got] = M
                    got += 1
                    if got == nsamples:
                        status = C_DONE
                        break
                    next_sample += random_standard_exponential(rng) * spacing
                if status == C_DONE:
                    break
                t += dt
                u = random_standard_uniform(rng) * total
                if u < b_tot:
                    kind = C_LD_BRANCH
                elif u < b_tot + c_tot:
                    kind = C_LD_COAL
                elif u < b_tot + c_tot + d_tot:
                    kind = C_LD_DEL
                else:
                    kind = C_LD_BEN
                u2 = random_standard_uniform(rng)
                _ldasg_apply(limit_diff, mode, &L, &M, kind, u2, 0, &i, &j)
    return status, Lout_arr, Mout_arr


def ldasg_proof_samples(int mode, double sigma, double theta, double nu0,
                        double nu1, long n, double burn_in, long nsamples,
                        double spacing, long event_cap, long state_cap, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    Cout_arr = np.full(nsamples, -1, dtype=np.int8)
    Bout_arr = np.zeros(nsamples, dtype=np.int8)
    Gout_arr = np.zeros(nsamples, dtype=np.int8)
    cdef signed char[::1] Cout = Cout_arr
    cdef signed char[::1] Bout = Bout_arr
    cdef signed char[::1] Gout = Gout_arr
    cdef long L = 1, M = 1, got = 0, k, i, j, span, top, L_before
    cdef int lastC = -1
    cdef signed char lastB = 0
    cdef double t = 0.0, next_sample, dt, u, u2, b_tot, c_tot, d_tot, g_tot, total
    cdef int status = C_EVENT_CAP, kind
    cdef bint on_first_n
    with gen.bit_generator.lock:
        with nogil:
            next_sample = burn_in + random_standard_exponential(rng) * spacing
            for k in range(event_cap):
                if L >= state_cap:
                    status = C_DIVERGED
                    break
                span = L if L > n else n
                top = L if L > n + 1 else n + 1
                b_tot = span * sigma
                c_tot = 0.5 * top * (top - 1.0)
                d_tot = span * theta * nu1
                g_tot = span * theta * nu0
                total = b_tot + c_tot + d_tot + g_tot
                dt = random_standard_exponential(rng) / total
                while t + dt > next_sample:
                    Cout[got] = lastC
                    Bout[got] = lastB
                    Gout[got] = 1 if L > n else 0
                    got += 1
                    if got == nsamples:
                        status = C_DONE
                        break
                    next_sample += random_standard_exponential(rng) * spacing
                if status == C_DONE:
                    break
                t += dt
                u = random_standard_uniform(rng) * total
                if u < b_tot:
                    kind = C_LD_BRANCH
                elif u < b_tot + c_tot:
                    kind = C_LD_COAL
                elif u < b_tot + c_tot + d_tot:
                    kind = C_LD_DEL
                else:
                    kind = C_LD_BEN
                u2 = random_standard_uniform(rng)
                L_before = L
                _ldasg_apply(True, mode, &L, &M, kind, u2, n, &i, &j)
                on_first_n = (j <= n + 1) if kind == C_LD_COAL else (i <= n)
                if on_first_n:
                    lastC = kind
                    lastB = 1 if L_before > n else 0
    return status, Cout_arr, Bout_arr, Gout_arr


# ---------------------------------------------------------------------------
# Finite-N Moran model
# ---------------------------------------------------------------------------

def moran_stream(long N, double s, double u_rate, double nu0, double t_max,
                 long max_events, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    kinds_arr = np.empty(max_events, dtype=np.int8)
    times_arr = np.empty(max_events)
    src_arr = np.empty(max_events, dtype=np.int64)
    dst_arr = np.empty(max_events, dtype=np.int64)
    cdef signed char[::1] kinds = kinds_arr
    cdef double[::1] times = times_arr
    cdef long[::1] src = src_arr
    cdef long[::1] dst = dst_arr
    cdef double r_neutral = 0.5 * N
    cdef double r_selective = <double>N * s
    cdef double r_mutation = <double>N * u_rate
    cdef double total = r_neutral + r_selective + r_mutation
    cdef double t = 0.0, dt, u1, ua, ub
    cdef long m = 0, i, j
    cdef int kind, status = C_DONE
    with gen.bit_generator.lock:
        with nogil:
            while True:
                dt = random_standard_exponential(rng) / total
                if t + dt > t_max:
                    status = C_DONE
                    break
                if m == max_events:
                    status = C_EVENT_CAP
                    break
                t += dt
                u1 = random_standard_uniform(rng) * total
                ua = random_standard_uniform(rng)
                ub = random_standard_uniform(rng)
                i = <long>(ua * N)
                if i > N - 1:
                    i = N - 1
                if u1 < r_neutral + r_selective:
                    kind = C_EV_NEUTRAL if u1 < r_neutral else C_EV_SELECTIVE
                    j = <long>(ub * N)
                    if j > N - 1:
                        j = N - 1
                else:
                    kind = C_EV_MUTATION
                    j = 0 if ub < nu0 else 1
                kinds[m] = kind
                times[m] = t
                src[m] = i
                dst[m] = j
                m += 1
    return status, kinds_arr[:m], times_arr[:m], src_arr[:m], dst_arr[:m]


cdef inline long _moran_apply(int kind, long i, long j, signed char* types,
                              long count0, bint fecundity) noexcept nogil:
    if kind == C_EV_NEUTRAL:
        if types[i] != types[j]:
            count0 += 1 if types[i] == 0 else -1
            types[j] = types[i]
    elif kind == C_EV_SELECTIVE:
        if fecundity:
            if types[i] == 0 and types[j] != 0:
                count0 += 1
                types[j] = 0
        else:
            if types[j] == 1 and types[i] == 0:
                count0 += 1
                types[j] = 0
    else:
        if types[i] != <signed char>j:
            count0 += 1 if j == 0 else -1
            types[i] = <signed char>j
    return count0


def moran_propagate(kinds, times, src, dst, types0, bint fecundity):
    cdef signed char[::1] kv = np.ascontiguousarray(kinds, dtype=np.int8)
    cdef double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef long[::1] sv = np.ascontiguousarray(src, dtype=np.int64)
    cdef long[::1] dv = np.ascontiguousarray(dst, dtype=np.int64)
    types_arr = np.array(types0, dtype=np.int8)
    cdef signed char[::1] types = types_arr
    cdef long N = types.shape[0]
    cdef long nev = kv.shape[0]
    jt_arr = np.empty(nev + 1)
    jv_arr = np.empty(nev + 1)
    cdef double[::1] jt = jt_arr
    cdef double[::1] jv = jv_arr
    cdef long count0 = 0, m, nj = 1, c2
    cdef long k
    for k in range(N):
        if types[k] == 0:
            count0 += 1
    jt[0] = 0.0
    jv[0] = <double>count0 / N
    with nogil:
        for m in range(nev):
            c2 = _moran_apply(kv[m], sv[m], dv[m], &types[0], count0, fecundity)
            if c2 != count0:
                count0 = c2
                jt[nj] = tv[m]
                jv[nj] = <double>count0 / N
                nj += 1
    return jt_arr[:nj], jv_arr[:nj]


def moran_grid(long N, double s, double u_rate, double nu0, double t_max,
               types0, bint fecundity, grid, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    types_arr = np.array(types0, dtype=np.int8)
    cdef signed char[::1] types = types_arr
    cdef double[::1] gv = np.ascontiguousarray(grid, dtype=np.float64)
    cdef long ng = gv.shape[0]
    out_arr = np.empty(ng)
    cdef double[::1] out = out_arr
    cdef long g = 0, count0 = 0, i, j, k
    cdef double r_neutral = 0.5 * N
    cdef double r_selective = <double>N * s
    cdef double r_mutation = <double>N * u_rate
    cdef double total = r_neutral + r_selective + r_mutation
    cdef double t = 0.0, dt, te, u1, ua, ub
    cdef int kind
    for k in range(N):
        if types[k] == 0:
            count0 += 1
    with gen.bit_generator.lock:
        with nogil:
            while True:
                dt = random_standard_exponential(rng) / total
                te = t + dt
                while g < ng and gv[g] < te:
                    out[g] = <double>count0 / N
                    g += 1
                if te > t_max:
                    while g < ng:
                        out[g] = <double>count0 / N
                        g += 1
                    break
                t = te
                u1 = random_standard_uniform(rng) * total
                ua = random_standard_uniform(rng)
                ub = random_standard_uniform(rng)
                i = <long>(ua * N)
                if i > N - 1:
                    i = N - 1
                if u1 < r_neutral + r_selective:
                    kind = C_EV_NEUTRAL if u1 < r_neutral else C_EV_SELECTIVE
                    j = <long>(ub * N)
                    if j > N - 1:
                        j = N - 1
                else:
                    kind = C_EV_MUTATION
                    j = 0 if ub < nu0 else 1
                count0 = _moran_apply(kind, i, j, &types[0], count0, fecundity)
    return out_arr


# ---------------------------------------------------------------------------
# Wright-Fisher diffusion (Euler-Maruyama, clamped to [0, 1])
# ---------------------------------------------------------------------------

def wf_em_batch(double sigma, double theta, double nu0, double nu1,
                double x0, double t, double dt, long reps, gen):
    cdef bitgen_t* rng = _bitgen(gen)
    x_arr = np.full(reps, x0)
    cdef double[::1] x = x_arr
    cdef long nfull = <long>(t / dt)
    cdef double last = t - nfull * dt
    cdef long step, r
    cdef double z, alpha, var, xi, h
    with gen.bit_generator.lock:
        with nogil:
            for step in range(nfull + 1):
                h = dt if step < nfull else last
                if h <= 0.0:
                    break
                for r in range(reps):
                    z = random_standard_normal(rng)
                    xi = x[r]
                    alpha = sigma * xi * (1.0 - xi) + theta * nu0 * (1.0 - xi) - theta * nu1 * xi
                    var = xi * (1.0 - xi)
                    xi = xi + alpha * h + sqrt(var * h) * z
                    if xi < 0.0:
                        xi = 0.0
                    elif xi > 1.0:
                        xi = 1.0
                    x[r] = xi
    return x_arr
