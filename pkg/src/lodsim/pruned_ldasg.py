"""Pruned lookdown ancestral selection graph and the ancestral type law.

Lines live on consecutive levels 1..L. Branchings insert the incoming
branch below (fecundity) or above (viability) the continuing one;
deleterious mutations prune non-immune lines; beneficial mutations truncate
the graph above the mutated level. In the deterministic limit the immune
line is always the top line; in the diffusion limit coalescence events move
it around and its level M is explicit state.

The stationary line count L_inf yields the ancestral type distribution

    h(x) = sum_{n >= 0} x (1-x)^n a_n,    a_n = P(L_inf > n),

with a_n = p^n (geometric) in the deterministic limit and a_n solving the
three-term boundary-value recursion in the diffusion limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import chisquare

from ._backend import kernels
from ._pykernels import L_DET, L_DIFF, MODE_FECUNDITY, MODE_VIABILITY, ST_DIVERGED
from .ctmc import GeneratorSpec, linecount_spec
from .deterministic import z_infinity
from .errors import ConvergenceError, ParameterRegimeError
from .model import DetParams, DiffusionParams, validate
from .rng import RngStream

__all__ = [
    "ldasg_generator",
    "simulate_ldasg_levels",
    "LdasgPath",
    "geometric_parameter",
    "fearnhead_solve",
    "fearnhead_residual",
    "TailProbabilities",
    "geometric_tails",
    "LdasgState",
    "stationary_tail_empirical",
    "geometric_gof",
    "ancestral_h",
    "AncestralResult",
    "ancestral_scan",
    "proof_structure_check",
    "ProofStructureReport",
]

EVENT_NAMES = {0: "branching", 1: "coalescence", 2: "deleterious", 3: "beneficial"}
_MODES = {"fecundity": MODE_FECUNDITY, "viability": MODE_VIABILITY}


def _split_params(limit: str, params) -> tuple[str, float, float, float, float]:
    if limit in ("deterministic", "det"):
        p = validate(params)
        if not isinstance(p, DetParams):
            raise TypeError("deterministic limit expects DetParams")
        return "l_det", p.s, p.u, p.nu0, p.nu1
    if limit in ("diffusion", "diff"):
        p = validate(params)
        if not isinstance(p, DiffusionParams):
            raise TypeError("diffusion limit expects DiffusionParams")
        return "l_diff", p.sigma, p.theta, p.nu0, p.nu1
    raise ValueError(f"unknown limit {limit!r}")


def ldasg_generator(limit: str, params) -> GeneratorSpec:
    """Generator of the lookdown line-count process L in the given limit.

    Block drops (beneficial mutations below the second-highest level) reach
    down to state 1 only: L never empties.
    """
    chain, s1, s2, nu0, nu1 = _split_params(limit, params)
    return linecount_spec(chain, s1, s2, nu0, nu1)


@dataclass(frozen=True)
class LdasgState:
    """Level-resolved state: line count and the immune line's level."""

    L: int
    M: int


@dataclass
class LdasgPath:
    """Event record of the level-resolved graph (started from one line)."""

    times: np.ndarray
    L: np.ndarray
    M: np.ndarray
    kinds: np.ndarray    # 0 branching, 1 coalescence, 2 deleterious, 3 beneficial
    level_i: np.ndarray  # mutated/branching level, or lower coalescing level
    level_j: np.ndarray  # upper coalescing level (0 otherwise)
    status: str

    def state_at(self, r: float) -> LdasgState:
        """State at backward time r (right-continuous; one line at r = 0)."""
        idx = int(np.searchsorted(self.times, r, side="right")) - 1
        if idx < 0:
            return LdasgState(L=1, M=1)
        return LdasgState(L=int(self.L[idx]), M=int(self.M[idx]))


def simulate_ldasg_levels(limit: str, params, r_max: float, rng: RngStream,
                          mode: str = "fecundity",
                          max_events: int = 1_000_000) -> LdasgPath:
    """Level-resolved simulation until backward time ``r_max``."""
    chain, s1, s2, nu0, nu1 = _split_params(limit, params)
    code, times, L, M, kinds, li, lj = kernels.ldasg_levels_path(
        chain == "l_diff", _MODES[mode], s1, s2, nu0, nu1, r_max,
        max_events, rng.generator())
    status = {0: "absorbed", 1: "done", 2: "event-cap", 3: "diverged"}[code]
    return LdasgPath(times=times, L=L, M=M, kinds=kinds, level_i=li,
                     level_j=lj, status=status)


def geometric_parameter(s: float, u: float, nu0: float, nu1: float) -> float:
    """Parameter p of the stationary law Geo(1-p) of L in the deterministic
    limit: P(L_inf > n) = p^n.

    Closed form for nu1 > 0, s/(u+s) for nu1 = 0; degenerate cases p = 0
    (s = 0, a single line) and p = 1 (s > 0, u <= s, nu0 = 0, where the
    line count diverges).
    """
    if s < 0.0 or u < 0.0:
        raise ValueError("rates must be >= 0")
    if s == 0.0:
        return 0.0
    if nu0 == 0.0 and u <= s:
        return 1.0
    if nu1 == 0.0:
        return s / (u + s)
    eta = (u + s) / (u * nu1)
    disc = eta * eta - 4.0 * s / (u * nu1)
    return 2.0 * (s / (u * nu1)) / (eta + math.sqrt(max(disc, 0.0)))


@dataclass
class TailProbabilities:
    """Stationary tail probabilities a(n) = P(L_inf > n)."""

    a: np.ndarray
    source: str                 # "closed-form-geometric", "recursion", "empirical"
    se: np.ndarray | None = None
    n_max: int | None = None    # truncation level of the recursion solve
    max_delta: float | None = None
    nsamples: int | None = None


def geometric_tails(s: float, u: float, nu0: float, nu1: float,
                    n_max: int = 20) -> TailProbabilities:
    """Deterministic-limit tails a(n) = p^n from the closed form."""
    p = geometric_parameter(s, u, nu0, nu1)
    if p >= 1.0:
        raise ParameterRegimeError("no stationary law at p = 1")
    return TailProbabilities(a=p ** np.arange(n_max + 1, dtype=float),
                             source="closed-form-geometric")


def _fearnhead_truncated(sigma: float, theta: float, nu1: float, N: int) -> np.ndarray:
    """Tridiagonal solve of Fearnhead's recursion with a(0)=1, a(N)=0."""
    # rows n = 1..N-1:
    #   [ (n+1)/2 + s + t ] a(n) - [ (n+1)/2 + t*nu1 ] a(n+1) - s a(n-1) = 0
    ab = np.zeros((3, N - 1))
    rhs = np.zeros(N - 1)
    for k in range(N - 1):
        n = k + 1
        ab[1, k] = 0.5 * (n + 1.0) + sigma + theta
        if k + 1 <= N - 2:
            ab[0, k + 1] = -(0.5 * (n + 1.0) + theta * nu1)
        if k - 1 >= 0:
            ab[2, k - 1] = -sigma
        if n == 1:
            rhs[k] = sigma * 1.0
    sol = solve_banded((1, 1), ab, rhs)
    return np.concatenate([[1.0], sol, [0.0]])


def fearnhead_solve(sigma: float, theta: float, nu1: float, n_max: int = 64,
                    tol: float = 1e-12, n_ceiling: int = 2 ** 21) -> TailProbabilities:
    """Decaying solution of

        [ (n+1)/2 + sigma + theta ] a(n)
            = [ (n+1)/2 + theta*nu1 ] a(n+1) + sigma a(n-1),   n >= 1,

    with a(0) = 1 and a(n) -> 0, via truncation (a(n_max) = 0) doubled until
    the head of the solution is stable to ``tol``. For sigma = 0 the only
    decaying solution is a(n) = 0 for n >= 1 (a single line at stationarity).
    """
    if sigma < 0.0 or theta < 0.0 or not 0.0 <= nu1 <= 1.0:
        raise ValueError("need sigma, theta >= 0 and nu1 in [0, 1]")
    if sigma == 0.0:
        a = np.zeros(n_max + 1)
        a[0] = 1.0
        return TailProbabilities(a=a, source="recursion", n_max=n_max, max_delta=0.0)
    N = max(n_max, 32)
    prev = _fearnhead_truncated(sigma, theta, nu1, N)
    while N <= n_ceiling:
        N *= 2
        cur = _fearnhead_truncated(sigma, theta, nu1, N)
        head = min(20, len(prev) - 1)
        delta = float(np.max(np.abs(cur[1:head + 1] - prev[1:head + 1])))
        if delta < tol:
            return TailProbabilities(a=cur, source="recursion", n_max=N,
                                     max_delta=delta)
        prev = cur
    raise ConvergenceError(f"recursion not stable below n_max={n_ceiling}")


def fearnhead_residual(a: np.ndarray, sigma: float, theta: float,
                       nu1: float) -> np.ndarray:
    """Residuals of the recursion at interior n = 1..len(a)-2."""
    n = np.arange(1, len(a) - 1, dtype=float)
    return ((0.5 * (n + 1.0) + sigma + theta) * a[1:-1]
            - (0.5 * (n + 1.0) + theta * nu1) * a[2:]
            - sigma * a[:-2])


def has_stationary_line_count(limit: str, params) -> bool:
    """Whether L attains a stationary law (it diverges only in the
    deterministic limit with s > 0, u <= s and nu0 = 0)."""
    chain, s1, s2, nu0, _ = _split_params(limit, params)
    if chain == "l_diff":
        return True
    return s1 == 0.0 or nu0 > 0.0 or s2 > s1


def _batch_mean_se(indicator: np.ndarray, blocks: int = 100) -> float:
    """Batch-means standard error for a (possibly autocorrelated) 0/1 series."""
    nper = len(indicator) // blocks
    if nper < 2:
        p = float(np.mean(indicator))
        return math.sqrt(max(p * (1.0 - p), 0.0) / len(indicator))
    trimmed = indicator[:nper * blocks].reshape(blocks, nper)
    means = trimmed.mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(blocks))


def stationary_tail_empirical(limit: str, params, samples: int,
                              rng: RngStream, burn_in: float | None = None,
                              spacing: float = 1.0, n_report: int = 20,
                              event_cap: int = 100_000_000,
                              state_cap: int = 10_000) -> TailProbabilities:
    """Empirical tails of L from time-sampled values after burn-in.

    Sampling times are exponentially spaced (mean ``spacing``) to keep
    autocorrelation low; standard errors use batch means over contiguous
    blocks. Default burn-in is 100 over the smallest positive rate at
    state 1 (the branching rate).
    """
    chain, s1, s2, nu0, nu1 = _split_params(limit, params)
    if not has_stationary_line_count(limit, params):
        raise ParameterRegimeError(
            "line count diverges (deterministic limit with s > 0, u <= s, nu0 = 0)")
    if burn_in is None:
        burn_in = 100.0 / s1 if s1 > 0.0 else 0.0
    cid = L_DET if chain == "l_det" else L_DIFF
    status, vals = kernels.linecount_stationary_sample(
        cid, s1, s2, nu0, nu1, 1, burn_in, samples, spacing, event_cap,
        state_cap, rng.generator())
    if status == ST_DIVERGED:
        raise ParameterRegimeError("line count hit the divergence cap")
    if np.any(vals < 0):
        raise ConvergenceError("event cap exhausted before all samples were taken")
    a = np.empty(n_report + 1)
    se = np.empty(n_report + 1)
    for n in range(n_report + 1):
        ind = (vals > n).astype(float)
        a[n] = float(ind.mean())
        se[n] = _batch_mean_se(ind)
    return TailProbabilities(a=a, source="empirical", se=se, nsamples=samples)


def geometric_gof(samples: np.ndarray, p: float, min_expected: float = 5.0):
    """Chi-square goodness of fit of L-samples against Geo(1-p) on {1,2,...}.

    Returns (statistic, pvalue). Bins k = 1, 2, ... are pooled into a tail
    bin once the expected count drops below ``min_expected``.
    """
    samples = np.asarray(samples)
    nsamples = len(samples)
    if p <= 0.0:
        ok = bool(np.all(samples == 1))
        return 0.0 if ok else math.inf, 1.0 if ok else 0.0
    if p >= 1.0:
        raise ParameterRegimeError("no stationary law at p = 1")
    K = 1
    while nsamples * (1.0 - p) * p ** K >= min_expected:
        K += 1
    # bins: {1}, ..., {K}, tail {> K}
    obs = np.array([np.sum(samples == k) for k in range(1, K + 1)]
                   + [np.sum(samples > K)], dtype=float)
    exp = np.array([nsamples * (1.0 - p) * p ** (k - 1) for k in range(1, K + 1)]
                   + [nsamples * p ** K])
    stat, pvalue = chisquare(obs, exp)
    return float(stat), float(pvalue)


@dataclass
class AncestralResult:
    """Probability that the ancestral line carries the beneficial type."""

    h: float
    limit: str
    x: float
    tail_bound: float = 0.0  # truncation bound of the series (diffusion limit)


def _h_series(a: np.ndarray, x) -> np.ndarray:
    """h(x) = sum_n x (1-x)^n a(n), vectorised over x, truncated at len(a)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pw = np.ones_like(x)
    one_minus = 1.0 - x
    for n in range(len(a)):
        if a[n] == 0.0 and n > 0:
            break
        out = out + pw * a[n]
        pw = pw * one_minus
    return x * out


def ancestral_h(limit: str, params, x: float) -> AncestralResult:
    """Stationary ancestral type distribution h(x).

    Deterministic limit: closed form x / (1 - p(1-x)) from the geometric
    law; at p = 1 (divergent line count) h jumps to 1 for every x > 0.
    Diffusion limit: truncated series over the recursion tails, with the
    geometric tail bound a(K) (1-x)^(K+1) reported.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    chain, s1, s2, nu0, nu1 = _split_params(limit, params)
    if chain == "l_det":
        p = geometric_parameter(s1, s2, nu0, nu1)
        if p >= 1.0:
            return AncestralResult(h=1.0 if x > 0.0 else 0.0,
                                   limit="deterministic", x=x)
        return AncestralResult(h=x / (1.0 - p * (1.0 - x)),
                               limit="deterministic", x=x)
    tails = fearnhead_solve(s1, s2, nu1)
    h = float(_h_series(tails.a, x))
    k = len(tails.a) - 2
    bound = float(tails.a[k] * (1.0 - x) ** (k + 1)) if k >= 0 else 0.0
    return AncestralResult(h=h, limit="diffusion", x=x, tail_bound=bound)


def ancestral_scan(limit: str, s: float, u_grid, nu0: float, nu1: float,
                   x_rule: str = "zinf", x: float | None = None,
                   scale_N: float | None = None) -> list[tuple[float, float]]:
    """h along a mutation-rate grid: [(u, h), ...].

    ``x_rule`` is 'fixed' (use ``x``), 'zinf' (start from the deterministic
    equilibrium z_infinity(u)), or 'wright' (diffusion limit only:
    expectation of h(X) under the stationary diffusion law). For the
    diffusion limit the rates are rescaled as sigma = scale_N * s,
    theta = scale_N * u.
    """
    if x_rule not in ("fixed", "zinf", "wright"):
        raise ValueError(f"unknown x_rule {x_rule!r}")
    if x_rule == "fixed" and x is None:
        raise ValueError("x_rule 'fixed' needs x")
    det = limit in ("deterministic", "det")
    if not det and scale_N is None:
        raise ValueError("diffusion scan needs scale_N")
    if det and x_rule == "wright":
        raise ParameterRegimeError("the Wright law lives in the diffusion limit")
    out = []
    for u in np.atleast_1d(np.asarray(u_grid, dtype=float)):
        u = float(u)
        det_params = DetParams(s=s, u=u, nu0=nu0, nu1=nu1)
        if det:
            xv = x if x_rule == "fixed" else z_infinity(det_params).value
            out.append((u, ancestral_h("deterministic", det_params, xv).h))
            continue
        dpar = DiffusionParams(sigma=scale_N * s, theta=scale_N * u, nu0=nu0, nu1=nu1)
        if x_rule == "wright":
            from .diffusion import wright_expectation
            tails = fearnhead_solve(dpar.sigma, dpar.theta, dpar.nu1)
            out.append((u, wright_expectation(dpar, lambda xs: _h_series(tails.a, xs))))
        else:
            xv = x if x_rule == "fixed" else z_infinity(det_params).value
            out.append((u, ancestral_h("diffusion", dpar, xv).h))
    return out


@dataclass
class ProofStructureReport:
    """Event-type decomposition behind the tail-probability recursion.

    ``frequencies`` maps each event class to (empirical, expected, se):
    the law of the class of the most recent mark on the first n levels,
    conditional on the line count exceeding n just before that mark, is
    (sigma, (n+1)/2, theta*nu1, theta*nu0) / ((n+1)/2 + sigma + theta).
    ``beneficial_cooccurrence`` counts samples where the most recent such
    mark was a beneficial mutation while L_r > n still held: there are none.
    """

    n: int
    nsamples: int
    conditioning_count: int
    frequencies: dict
    beneficial_cooccurrence: int
    passed: bool


def proof_structure_check(params: DiffusionParams, n: int, nsamples: int,
                          rng: RngStream, mode: str = "fecundity",
                          burn_in: float | None = None, spacing: float = 0.25,
                          event_cap: int = 200_000_000,
                          blocks: int = 100) -> ProofStructureReport:
    """Sample the stationary lookdown graph and test the event decomposition
    used to derive the tail recursion (see ProofStructureReport).
    """
    params = validate(params)
    if n < 1:
        raise ValueError("n must be >= 1")
    if burn_in is None:
        burn_in = 100.0 / params.sigma if params.sigma > 0.0 else 0.0
    status, C, B, G = kernels.ldasg_proof_samples(
        _MODES[mode], params.sigma, params.theta, params.nu0, params.nu1,
        n, burn_in, nsamples, spacing, event_cap, 10_000, rng.generator())
    if status != 1:  # ST_DONE
        raise ConvergenceError("proof-structure sampler did not finish")
    sel = B == 1
    count = int(np.sum(sel))
    if count == 0:
        raise ConvergenceError("no conditioning samples collected")
    D = 0.5 * (n + 1.0) + params.sigma + params.theta
    expected = {
        "branching": params.sigma / D,
        "coalescence": 0.5 * (n + 1.0) / D,
        "deleterious": params.theta * params.nu1 / D,
        "beneficial": params.theta * params.nu0 / D,
    }
    freqs = {}
    passed = True
    nper = max(len(C) // blocks, 1)
    for code, name in EVENT_NAMES.items():
        emp = float(np.mean(C[sel] == code))
        # block-wise conditional frequencies for an autocorrelation-robust SE
        bm = []
        for b in range(0, len(C) - nper + 1, nper):
            bsel = sel[b:b + nper]
            if np.sum(bsel) > 0:
                bm.append(float(np.mean(C[b:b + nper][bsel] == code)))
        se = float(np.std(bm, ddof=1) / math.sqrt(len(bm))) if len(bm) > 1 else 0.0
        freqs[name] = (emp, expected[name], se)
        if name in ("branching", "coalescence", "deleterious"):
            if se == 0.0 or abs(emp - expected[name]) > 3.0 * se:
                passed = False
    cooccur = int(np.sum((C == 3) & (G == 1)))
    if cooccur > 0:
        passed = False
    return ProofStructureReport(n=n, nsamples=nsamples, conditioning_count=count,
                                frequencies=freqs,
                                beneficial_cooccurrence=cooccur, passed=passed)
