"""Killed ancestral selection graph: line counting, absorption, duality.

The line-count process R lives on {0, 1, 2, ...} plus the cemetery DELTA.
In the diffusion limit lines branch at rate sigma, coalesce pairwise at
rate 1 and are pruned at rate theta*nu1, while beneficial marks kill the
whole process at rate theta*nu0 per line; the deterministic limit drops the
coalescence term (rates s, u*nu1, u*nu0). Absorption at 0 means the sampled
individuals are all of the deleterious type, which links R to the forward
frequency process through the moment duality

    E[(1 - X_t)^n | X_0 = x] = E[(1 - x)^{R_t} | R_0 = n],  (1-x)^DELTA := 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ._backend import kernels
from ._pykernels import DELTA_CODE, R_DET, R_DIFF
from .ctmc import DELTA, GeneratorSpec, linecount_spec, run_blocks
from .deterministic import z_at, z_infinity
from .errors import ConvergenceError, ParameterRegimeError
from .model import DetParams, DiffusionParams, validate
from .rng import RngStream

__all__ = [
    "killed_asg_generator",
    "absorption_profile",
    "AbsorptionProfile",
    "sampling_recursion_solve",
    "sampling_recursion_residual",
    "SamplingRecursionSolution",
    "first_step_w",
    "duality_check",
    "DualityReport",
]


def _split_params(limit: str, params) -> tuple[str, float, float, float, float]:
    if limit in ("deterministic", "det"):
        p = validate(params)
        if not isinstance(p, DetParams):
            raise TypeError("deterministic limit expects DetParams")
        return "r_det", p.s, p.u, p.nu0, p.nu1
    if limit in ("diffusion", "diff"):
        p = validate(params)
        if not isinstance(p, DiffusionParams):
            raise TypeError("diffusion limit expects DiffusionParams")
        return "r_diff", p.sigma, p.theta, p.nu0, p.nu1
    raise ValueError(f"unknown limit {limit!r}")


def killed_asg_generator(limit: str, params) -> GeneratorSpec:
    """Generator of the killed-ASG line-count process in the given limit."""
    chain, s1, s2, nu0, nu1 = _split_params(limit, params)
    return linecount_spec(chain, s1, s2, nu0, nu1)


@dataclass
class AbsorptionProfile:
    p_zero: float
    p_delta: float
    p_diverged: float
    se_zero: float
    se_delta: float
    se_diverged: float
    censored: int
    replicates: int


def absorption_profile(limit: str, params, n: int, replicates: int,
                       rng: RngStream, event_cap: int = 1_000_000,
                       state_cap: int = 10_000, threads: int = 1) -> AbsorptionProfile:
    """Monte Carlo absorption frequencies of R started from ``n`` lines."""
    if n < 1:
        raise ValueError("start from at least one line")
    from .ctmc import estimate_absorption

    spec = killed_asg_generator(limit, params)
    rep = estimate_absorption(spec, n, replicates, rng, event_cap=event_cap,
                              state_cap=state_cap, threads=threads)
    return AbsorptionProfile(
        p_zero=rep.frequency(0), p_delta=rep.frequency(DELTA),
        p_diverged=rep.diverged_fraction,
        se_zero=rep.se(0), se_delta=rep.se(DELTA),
        se_diverged=math.sqrt(rep.diverged_fraction * (1 - rep.diverged_fraction) / replicates),
        censored=rep.censored, replicates=replicates)


@dataclass
class SamplingRecursionSolution:
    """Absorption probabilities b(n) = P(R hits 0 | R_0 = n), n = 0..n_max.

    Solved as a boundary-value problem (b(0) = 1, b(n_max) = 0 by
    truncation); ``max_delta`` is the change of b(1..20) in the final
    truncation doubling.
    """

    b: np.ndarray
    n_max: int
    max_delta: float
    sigma: float
    theta: float
    nu1: float


def _solve_truncated(sigma: float, theta: float, nu1: float, N: int) -> np.ndarray:
    """Tridiagonal solve of the sampling recursion with b(0)=1, b(N)=0."""
    # rows n = 1..N-1:  (n-1+2s+2t) b(n) - 2s b(n+1) - (n-1+2t*nu1) b(n-1) = 0
    ab = np.zeros((3, N - 1))
    rhs = np.zeros(N - 1)
    for k in range(N - 1):
        n = k + 1
        ab[1, k] = n - 1.0 + 2.0 * sigma + 2.0 * theta
        if k + 1 <= N - 2:
            ab[0, k + 1] = -2.0 * sigma
        if k - 1 >= 0:
            ab[2, k - 1] = -(n - 1.0 + 2.0 * theta * nu1)
        if n == 1:
            rhs[k] = (n - 1.0 + 2.0 * theta * nu1) * 1.0
    sol = solve_banded((1, 1), ab, rhs)
    return np.concatenate([[1.0], sol, [0.0]])


def sampling_recursion_solve(sigma: float, theta: float, nu1: float,
                             n_max: int = 64, tol: float = 1e-10,
                             n_ceiling: int = 2 ** 21) -> SamplingRecursionSolution:
    """Decaying solution of the sampling recursion

        b(n) = 2s/(n-1+2s+2t) * b(n+1) + (n-1+2t*nu1)/(n-1+2s+2t) * b(n-1)

    with b(0) = 1 and b(n) -> 0, by truncation at n_max (doubled until the
    head of the solution is stable to ``tol``). Requires theta > 0. For
    sigma = 0 the recursion degenerates to the one-step product form, which
    is returned directly. Values for nu0 in {0, 1} are computed with the
    same formulas even though the genealogical reading needs 0 < nu0 < 1.
    """
    if theta <= 0.0:
        raise ParameterRegimeError("sampling recursion requires theta > 0")
    if sigma < 0.0 or not 0.0 <= nu1 <= 1.0:
        raise ValueError("need sigma >= 0 and nu1 in [0, 1]")
    if sigma == 0.0:
        n = np.arange(n_max + 1, dtype=float)
        factors = np.ones(n_max + 1)
        factors[1:] = (n[1:] - 1.0 + 2.0 * theta * nu1) / (n[1:] - 1.0 + 2.0 * theta)
        return SamplingRecursionSolution(b=np.cumprod(factors), n_max=n_max,
                                         max_delta=0.0, sigma=sigma,
                                         theta=theta, nu1=nu1)
    N = max(n_max, 32)
    prev = _solve_truncated(sigma, theta, nu1, N)
    while N <= n_ceiling:
        N *= 2
        cur = _solve_truncated(sigma, theta, nu1, N)
        head = min(20, len(prev) - 1)
        delta = float(np.max(np.abs(cur[1:head + 1] - prev[1:head + 1])))
        if delta < tol:
            return SamplingRecursionSolution(b=cur, n_max=N, max_delta=delta,
                                             sigma=sigma, theta=theta, nu1=nu1)
        prev = cur
    raise ConvergenceError(f"sampling recursion not stable below n_max={n_ceiling}")


def sampling_recursion_residual(b: np.ndarray, sigma: float, theta: float,
                                nu1: float) -> np.ndarray:
    """Residuals of the three-term recursion at interior n = 1..len(b)-2."""
    n = np.arange(1, len(b) - 1, dtype=float)
    return ((n - 1.0 + 2.0 * sigma + 2.0 * theta) * b[1:-1]
            - 2.0 * sigma * b[2:]
            - (n - 1.0 + 2.0 * theta * nu1) * b[:-2])


def first_step_w(s: float, u: float, nu1: float) -> float:
    """Extinction probability w of R from one line, deterministic limit.

    Unique [0, 1] root of w = u*nu1/(u+s) + s/(u+s) * w^2; equals
    1 - z_infinity. For s = 0 this is nu1.
    """
    if s < 0.0 or u < 0.0 or s + u <= 0.0:
        raise ValueError("need s, u >= 0 with s + u > 0")
    if not 0.0 <= nu1 <= 1.0:
        raise ValueError("nu1 must lie in [0, 1]")
    if s == 0.0:
        return nu1
    disc = (u + s) * (u + s) - 4.0 * s * u * nu1
    root = math.sqrt(max(disc, 0.0))
    return 2.0 * u * nu1 / ((u + s) + root)


@dataclass
class DualityReport:
    """Two-sided estimate of the moment duality at one (x, t, n) point."""

    limit: str
    x: float
    t: float
    n: int
    replicates: int
    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float
    z_score: float
    passed: bool
    censored: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "limit": self.limit, "x": self.x, "t": self.t, "n": self.n,
            "replicates": self.replicates,
            "lhs": self.lhs, "rhs": self.rhs,
            "se_lhs": self.se_lhs, "se_rhs": self.se_rhs,
            "z_score": self.z_score, "pass": self.passed,
            "censored": self.censored,
        }, indent=2, sort_keys=True)


_EXACT_TOL = 1e-12


def _weights_from_states(states: np.ndarray, x: float) -> tuple[np.ndarray, int]:
    """(1-x)^state with DELTA contributing 0; censored (-2) entries dropped
    from the weights but counted."""
    censored = int(np.sum(states == -2))
    valid = states[states != -2]
    w = np.where(valid == DELTA_CODE, 0.0, (1.0 - x) ** np.maximum(valid, 0))
    return w, censored


def duality_check(limit: str, params, x: float, t: float, n: int,
                  replicates: int, rng: RngStream, dt: float | None = None,
                  event_cap: int = 1_000_000, state_cap: int = 10_000,
                  threads: int = 1) -> DualityReport:
    """Compare E[(1-X_t)^n | X_0=x] against E[(1-x)^{R_t} | R_0=n].

    Deterministic limit: the forward side is exact, (1 - z(t; x))^n; the
    backward side is Monte Carlo over killed-ASG paths (killed paths
    contribute 0 to the estimator, they are never dropped). Diffusion limit:
    both sides are Monte Carlo. Passes at |lhs - rhs| <= 3 combined SE, or
    at 1e-12 when both sides are exact.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if n < 0 or t < 0.0:
        raise ValueError("need n >= 0 and t >= 0")
    chain, s1, s2, nu0, nu1 = _split_params(limit, params)
    cid = R_DET if chain == "r_det" else R_DIFF

    def backward_worker(block_rng: RngStream, size: int):
        gen = block_rng.generator()
        return kernels.linecount_batch_value(cid, s1, s2, nu0, nu1, n, t,
                                             size, event_cap, state_cap, gen)

    states = np.concatenate(run_blocks(backward_worker, replicates, rng.child(1), threads))
    weights, censored = _weights_from_states(states, x)
    rhs = float(np.mean(weights))
    se_rhs = float(np.std(weights, ddof=1) / math.sqrt(len(weights))) if len(weights) > 1 else 0.0

    if chain == "r_det":
        lhs = (1.0 - z_at(params, x, t)) ** n
        se_lhs = 0.0
    else:
        from .diffusion import wf_terminal_batch
        xs = wf_terminal_batch(params, x, t, replicates, dt=dt,
                               rng=rng.child(0), threads=threads)
        vals = (1.0 - xs) ** n
        lhs = float(np.mean(vals))
        se_lhs = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))

    combined = math.hypot(se_lhs, se_rhs)
    diff = abs(lhs - rhs)
    if diff <= _EXACT_TOL:
        z = 0.0
        passed = True
    elif combined == 0.0:
        z = math.inf
        passed = False
    else:
        z = diff / combined
        passed = z <= 3.0
    return DualityReport(limit="deterministic" if chain == "r_det" else "diffusion",
                         x=x, t=t, n=n, replicates=replicates, lhs=lhs, rhs=rhs,
                         se_lhs=se_lhs, se_rhs=se_rhs, z_score=z, passed=passed,
                         censored=censored)


def stationary_duality_residual(params: DetParams) -> float:
    """|w + z_infinity - 1| for the deterministic first-step identity."""
    w = first_step_w(params.s, params.u, params.nu1)
    return abs(w + z_infinity(params).value - 1.0)
