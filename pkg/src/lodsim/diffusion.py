"""Wright-Fisher diffusion: simulation, fixation probability, stationary law.

The diffusion on [0, 1] has drift
    alpha(x) = sigma*x*(1-x) + theta*nu0*(1-x) - theta*nu1*x
and generator alpha(x) d/dx + (1/2) x (1-x) d^2/dx^2 (the scaling with pair
coalescence rate one, so the infinitesimal variance is x(1-x)). For
theta > 0 and 0 < nu0 < 1 its stationary density is

    pi(x) = C * x**(2*theta*nu0 - 1) * (1-x)**(2*theta*nu1 - 1) * exp(2*sigma*x),

whose descending-factorial-free moments m(n) = E[(1-X)**n] are computed by
Gauss-Jacobi quadrature with the endpoint singularities folded into the
quadrature weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from ._backend import kernels
from .ctmc import run_blocks
from .errors import ConvergenceError, ParameterRegimeError
from .model import DiffusionParams, validate
from .rng import RngStream

__all__ = [
    "default_dt",
    "simulate_wf",
    "wf_terminal_batch",
    "fixation_probability",
    "wright_moments",
    "wright_expectation",
    "DiffusionPath",
    "WrightMoments",
]


def default_dt(params: DiffusionParams) -> float:
    return 1e-3 / max(1.0, params.sigma, params.theta)


@dataclass
class DiffusionPath:
    t: np.ndarray
    x: np.ndarray
    dt: float
    rng: RngStream


@dataclass
class WrightMoments:
    C: float
    m: np.ndarray  # m[n] = E[(1-X)^n], n = 0..n_max
    quadrature_order: int
    max_delta: float  # self-consistency gap between the last two orders

    @property
    def mean(self) -> float:
        """E[X] at stationarity."""
        return 1.0 - float(self.m[1])


def simulate_wf(params: DiffusionParams, x: float, t: float,
                dt: float | None = None, rng: RngStream | None = None,
                return_path: bool = False):
    """Euler-Maruyama sample of X_t (optionally the full path).

    Post-step values are clamped to [0, 1]; with theta*nu0 = 0 the state 0
    is exactly absorbing (drift and noise vanish there), symmetrically for 1
    when theta*nu1 = 0.
    """
    params = validate(params)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"initial frequency must lie in [0, 1], got {x}")
    if t < 0.0:
        raise ValueError("time horizon must be >= 0")
    dt = dt if dt is not None else default_dt(params)
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    rng = rng or RngStream(0)
    gen = rng.generator()
    if not return_path:
        out = kernels.wf_em_batch(params.sigma, params.theta, params.nu0,
                                  params.nu1, x, t, dt, 1, gen)
        return float(out[0])
    nfull = int(t / dt)
    last = t - nfull * dt
    steps = nfull + (1 if last > 0.0 else 0)
    ts = np.empty(steps + 1)
    xs = np.empty(steps + 1)
    ts[0], xs[0] = 0.0, x
    xi = float(x)
    sigma, theta, nu0, nu1 = params.sigma, params.theta, params.nu0, params.nu1
    for k in range(steps):
        h = dt if k < nfull else last
        z = float(gen.standard_normal())
        alpha = sigma * xi * (1.0 - xi) + theta * nu0 * (1.0 - xi) - theta * nu1 * xi
        var = xi * (1.0 - xi)
        xi = xi + alpha * h + math.sqrt(var * h) * z
        if xi < 0.0:
            xi = 0.0
        elif xi > 1.0:
            xi = 1.0
        ts[k + 1] = min((k + 1) * dt, t)
        xs[k + 1] = xi
    return DiffusionPath(t=ts, x=xs, dt=dt, rng=rng)


def wf_terminal_batch(params: DiffusionParams, x: float, t: float, reps: int,
                      dt: float | None = None, rng: RngStream | None = None,
                      threads: int = 1) -> np.ndarray:
    """Terminal values X_t over independent replicates (blocked sub-streams)."""
    params = validate(params)
    dt = dt if dt is not None else default_dt(params)
    rng = rng or RngStream(0)

    def worker(block_rng: RngStream, size: int):
        gen = block_rng.generator()
        return kernels.wf_em_batch(params.sigma, params.theta, params.nu0,
                                   params.nu1, x, t, dt, size, gen)

    parts = run_blocks(worker, reps, rng, threads)
    return np.concatenate(parts)


def fixation_probability(sigma: float, x: float) -> float:
    """P(absorption at 1 | X_0 = x) for the mutation-free diffusion,

        h(x) = (1 - exp(-2*sigma*x)) / (1 - exp(-2*sigma)),

    with the neutral limit h(x) = x at sigma = 0.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return x
    return math.expm1(-2.0 * sigma * x) / math.expm1(-2.0 * sigma)


@lru_cache(maxsize=64)
def _jacobi_rule(order: int, theta: float, nu0: float, nu1: float):
    """Nodes in (0,1) and weights absorbing x^(2*theta*nu0-1) * (1-x)^(2*theta*nu1-1).

    Built from the Gauss-Jacobi rule on [-1, 1]; sum(W * f(x)) approximates
    the weighted integral of a smooth f over (0, 1).
    """
    alpha = 2.0 * theta * nu1 - 1.0  # (1-t) exponent
    beta = 2.0 * theta * nu0 - 1.0   # (1+t) exponent
    t, w = roots_jacobi(order, alpha, beta)
    x = 0.5 * (1.0 + t)
    W = w * 2.0 ** (-(alpha + beta + 1.0))
    return x, W


def _raw_moments(params: DiffusionParams, n_max: int, order: int):
    """Weighted integrals I_n = int x^(2tn0-1) (1-x)^(2tn1-1) (1-x)^n e^(2sx) dx."""
    x, W = _jacobi_rule(order, params.theta, params.nu0, params.nu1)
    base = W * np.exp(2.0 * params.sigma * x)
    one_minus = 1.0 - x
    out = np.empty(n_max + 1)
    pw = np.ones_like(x)
    for n in range(n_max + 1):
        out[n] = float(np.sum(base * pw))
        pw = pw * one_minus
    return out


def wright_moments(params: DiffusionParams, n_max: int = 20, tol: float = 1e-8,
                   order: int = 200, max_order: int = 12800) -> WrightMoments:
    """Moments m(n) = E[(1-X)^n], n = 0..n_max, of the stationary law.

    Requires theta > 0 and 0 < nu0 < 1 (otherwise no interior stationary
    law exists). The quadrature order is doubled until two consecutive
    orders agree to ``tol`` on every moment.
    """
    params = validate(params)
    if params.theta <= 0.0 or not 0.0 < params.nu0 < 1.0:
        raise ParameterRegimeError(
            "stationary moments require theta > 0 and 0 < nu0 < 1 "
            f"(got theta={params.theta}, nu0={params.nu0})")
    prev = _raw_moments(params, n_max, order)
    prev_m = prev / prev[0]
    while order < max_order:
        order *= 2
        cur = _raw_moments(params, n_max, order)
        cur_m = cur / cur[0]
        delta = float(np.max(np.abs(cur_m - prev_m)))
        if delta <= tol:
            return WrightMoments(C=1.0 / cur[0], m=cur_m,
                                 quadrature_order=order, max_delta=delta)
        prev_m = cur_m
    raise ConvergenceError(
        f"quadrature did not self-stabilise to {tol} below order {max_order}")


def wright_expectation(params: DiffusionParams, fn, tol: float = 1e-8,
                       order: int = 200, max_order: int = 12800) -> float:
    """E[fn(X)] under the stationary law, fn smooth and vectorised on (0,1)."""
    params = validate(params)
    if params.theta <= 0.0 or not 0.0 < params.nu0 < 1.0:
        raise ParameterRegimeError(
            "stationary expectation requires theta > 0 and 0 < nu0 < 1")

    def value(q):
        x, W = _jacobi_rule(q, params.theta, params.nu0, params.nu1)
        base = W * np.exp(2.0 * params.sigma * x)
        return float(np.sum(base * fn(x)) / np.sum(base))

    prev = value(order)
    while order < max_order:
        order *= 2
        cur = value(order)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise ConvergenceError(
        f"quadrature did not self-stabilise to {tol} below order {max_order}")
