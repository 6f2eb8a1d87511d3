"""Parameter records for the three model regimes.

A two-type mutation-selection model is parameterised by a selective
advantage, a total mutation rate and the mutation target probabilities
(nu0, nu1) with nu0 + nu1 = 1. The finite-N record carries the population
size; the deterministic record drops it; the diffusion record carries the
rescaled rates sigma = N*s and theta = N*u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

from .errors import ConstraintViolationError

__all__ = [
    "MoranParams",
    "DetParams",
    "DiffusionParams",
    "Params",
    "validate",
    "scale_to_diffusion",
    "read_param_file",
]

_NU_SUM_TOL = 1e-12


@dataclass(frozen=True)
class MoranParams:
    N: int
    s: float
    u: float
    nu0: float
    nu1: float
    selection_mode: str = "fecundity"

    @property
    def r0(self) -> float:
        """Reproduction rate of the beneficial type."""
        return 0.5 + self.s

    @property
    def r1(self) -> float:
        return 0.5

    @property
    def d0(self) -> float:
        """Death rate of the beneficial type under viability selection."""
        return 0.5

    @property
    def d1(self) -> float:
        return 0.5 + self.s


@dataclass(frozen=True)
class DetParams:
    s: float
    u: float
    nu0: float
    nu1: float


@dataclass(frozen=True)
class DiffusionParams:
    sigma: float
    theta: float
    nu0: float
    nu1: float


Params = Union[MoranParams, DetParams, DiffusionParams]


def _check_nu(nu0: float, nu1: float) -> tuple[float, float]:
    for name, v in (("nu0", nu0), ("nu1", nu1)):
        if not math.isfinite(v) or v < 0.0 or v > 1.0:
            raise ConstraintViolationError(name, f"must lie in [0, 1], got {v}")
    if abs(nu0 + nu1 - 1.0) > _NU_SUM_TOL:
        raise ConstraintViolationError("nu0", f"nu0 + nu1 must equal 1, got {nu0 + nu1}")
    # user-supplied decimals rarely sum exactly; normalise within tolerance
    if nu0 + nu1 != 1.0:
        total = nu0 + nu1
        nu0, nu1 = nu0 / total, nu1 / total
    return nu0, nu1


def _check_nonneg(name: str, v: float) -> None:
    if not math.isfinite(v) or v < 0.0:
        raise ConstraintViolationError(name, f"must be a finite number >= 0, got {v}")


def validate(params: Params) -> Params:
    """Check all invariants; returns the record (nu pair normalised).

    Raises ConstraintViolationError naming the offending field. Idempotent:
    validating a validated record returns an equal record.
    """
    nu0, nu1 = _check_nu(params.nu0, params.nu1)
    if isinstance(params, MoranParams):
        if not isinstance(params.N, int) or params.N < 1:
            raise ConstraintViolationError("N", f"must be an integer >= 1, got {params.N}")
        _check_nonneg("s", params.s)
        _check_nonneg("u", params.u)
        if params.selection_mode not in ("fecundity", "viability"):
            raise ConstraintViolationError(
                "selection_mode", f"must be 'fecundity' or 'viability', got {params.selection_mode!r}")
    elif isinstance(params, DetParams):
        _check_nonneg("s", params.s)
        _check_nonneg("u", params.u)
    elif isinstance(params, DiffusionParams):
        _check_nonneg("sigma", params.sigma)
        _check_nonneg("theta", params.theta)
    else:
        raise ConstraintViolationError("params", f"unknown parameter record {type(params)!r}")
    if (nu0, nu1) != (params.nu0, params.nu1):
        return replace(params, nu0=nu0, nu1=nu1)
    return params


def scale_to_diffusion(moran: MoranParams) -> DiffusionParams:
    """Diffusion-scale record with sigma = N*s, theta = N*u; nu pair copied."""
    moran = validate(moran)
    return DiffusionParams(sigma=moran.N * moran.s, theta=moran.N * moran.u,
                           nu0=moran.nu0, nu1=moran.nu1)


def read_param_file(path: str | Path) -> dict[str, float | int | str]:
    """Parse a flat key=value parameter file.

    Accepted keys: N, s, u, nu0, nu1, sigma, theta, selection_mode. Blank
    lines and lines starting with '#' are ignored.
    """
    out: dict[str, float | int | str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConstraintViolationError("file", f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "selection_mode":
            out[key] = value
        elif key == "N":
            out[key] = int(value)
        elif key in ("s", "u", "nu0", "nu1", "sigma", "theta"):
            out[key] = float(value)
        else:
            raise ConstraintViolationError("file", f"{path}:{lineno}: unknown key {key!r}")
    return out
