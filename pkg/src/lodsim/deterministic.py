"""Deterministic limit: mutation-selection ODE, equilibria, error threshold.

The type-0 frequency z(t) solves the Riccati equation

    dz/dt = s*z*(1-z) + u*nu0*(1-z) - u*nu1*z

whose globally stable equilibrium has a closed form; for nu0 = 0 it
degenerates to max(0, 1 - u/s), dropping to zero once the mutation rate
exceeds the selective advantage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ToleranceError
from .model import DetParams, validate

__all__ = [
    "rhs",
    "solve_ode",
    "z_at",
    "z_infinity",
    "error_threshold_curve",
    "OdeSolution",
    "EquilibriumValue",
]

# local error target is 1e-9 per unit time; integrator tolerances sit below
_RTOL = 1e-12
_ATOL = 1e-14
_OVERSHOOT_TOL = 1e-8


def rhs(params: DetParams, z: float) -> float:
    """Right-hand side of the mutation-selection ODE at frequency z."""
    return params.s * z * (1.0 - z) + params.u * params.nu0 * (1.0 - z) - params.u * params.nu1 * z


@dataclass
class OdeSolution:
    t: np.ndarray
    z: np.ndarray
    params: DetParams
    x: float


@dataclass(frozen=True)
class EquilibriumValue:
    value: float
    regime: str  # "interior" or "threshold-zero"


def solve_ode(params: DetParams, x: float, t_grid) -> OdeSolution:
    """Numerical solution on ``t_grid`` (sorted, starting at >= 0).

    Raises ToleranceError if the solver fails or the solution overshoots
    [0, 1] by more than the solver tolerance; smaller overshoots are clamped.
    """
    params = validate(params)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"initial frequency must lie in [0, 1], got {x}")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    t_end = float(t_grid[-1])
    if t_end == 0.0:
        return OdeSolution(t=t_grid, z=np.full_like(t_grid, x), params=params, x=x)

    def f(_t, y):
        z = y[0]
        return (params.s * z * (1.0 - z)
                + params.u * params.nu0 * (1.0 - z)
                - params.u * params.nu1 * z,)

    sol = solve_ivp(f, (0.0, t_end), [x], t_eval=t_grid, method="DOP853",
                    rtol=_RTOL, atol=_ATOL)
    if not sol.success:
        raise ToleranceError(f"ODE solver failed: {sol.message}")
    z = sol.y[0]
    if z.min() < -_OVERSHOOT_TOL or z.max() > 1.0 + _OVERSHOOT_TOL:
        raise ToleranceError(
            f"solution left [0,1] by more than {_OVERSHOOT_TOL}: "
            f"range [{z.min()}, {z.max()}]")
    return OdeSolution(t=t_grid, z=np.clip(z, 0.0, 1.0), params=params, x=x)


def z_at(params: DetParams, x: float, t: float) -> float:
    """Solution value z(t; x)."""
    return float(solve_ode(params, x, [t]).z[-1])


def z_infinity(params: DetParams) -> EquilibriumValue:
    """Globally stable equilibrium of the mutation-selection ODE.

    For s > 0 and nu0 = 0 this is exactly max(0, 1 - u/s); for s = 0 it is
    nu0 (meaningful for u > 0; with u = 0 as well every point is stationary
    and nu0 is returned by convention).
    """
    params = validate(params)
    s, u, nu0 = params.s, params.u, params.nu0
    if s == 0.0:
        value = nu0
    elif nu0 == 0.0:
        value = max(0.0, 1.0 - u / s)
    else:
        r = 1.0 - u / s
        value = 0.5 * (r + math.sqrt(r * r + 4.0 * (u / s) * nu0))
    regime = "threshold-zero" if value == 0.0 else "interior"
    return EquilibriumValue(value=value, regime=regime)


def error_threshold_curve(s: float, u_grid, nu0: float = 0.0, nu1: float | None = None):
    """Equilibrium frequency along a mutation-rate grid, [(u, z_inf), ...].

    With nu0 = 0 the values are exactly max(0, 1 - u/s); s must be positive.
    """
    if s <= 0.0:
        raise ValueError("error threshold curve requires s > 0")
    if nu1 is None:
        nu1 = 1.0 - nu0
    out = []
    for u in np.atleast_1d(np.asarray(u_grid, dtype=float)):
        eq = z_infinity(DetParams(s=s, u=float(u), nu0=nu0, nu1=nu1))
        out.append((float(u), eq.value))
    return out
