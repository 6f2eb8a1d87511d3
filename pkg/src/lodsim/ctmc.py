"""Generic continuous-time Markov chain engine on countable state spaces.

States are arbitrary hashable objects; the cemetery state is the module
singleton ``DELTA``. A ``GeneratorSpec`` describes the chain through a rate
function mapping a state to a finite list of (target, rate) pairs; a state
with an empty list is absorbing.

Specs for the built-in line-counting chains carry a kernel hint so that
replicate-heavy estimators run on the compiled backend; paths simulated
through a hint use the same draw protocol as the generic engine, so for
hint-free specs with the same rate-list order the two routes coincide
bit-exactly.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from ._backend import kernels
from ._pykernels import DELTA_CODE, L_DET, L_DIFF, R_DET, R_DIFF, _rates
from .errors import InvalidGeneratorError
from .rng import RngStream

__all__ = [
    "DELTA",
    "GeneratorSpec",
    "StopRule",
    "CtmcPath",
    "AbsorptionReport",
    "simulate_ctmc",
    "estimate_absorption",
    "linecount_spec",
]

#: replicates are dispatched to RNG sub-streams in fixed-size blocks, so the
#: result is independent of the worker-thread count
REPLICATE_BLOCK = 4096

_STATUS = {0: "absorbed", 1: "done", 2: "event-cap", 3: "diverged"}


class _Cemetery:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "DELTA"


DELTA = _Cemetery()

_CHAIN_IDS = {"r_det": R_DET, "r_diff": R_DIFF, "l_det": L_DET, "l_diff": L_DIFF}


@dataclass(frozen=True)
class GeneratorSpec:
    """CTMC description: state -> finite list of (target, rate >= 0)."""

    rate_fn: Callable[[Hashable], Sequence[tuple[Hashable, float]]]
    cemetery: Hashable = DELTA
    kernel: tuple | None = None  # ("linecount", chain_id, s1, s2, nu0, nu1)

    def is_absorbing(self, state: Hashable) -> bool:
        return len(self.rate_fn(state)) == 0


@dataclass(frozen=True)
class StopRule:
    """Stopping rule: time horizon, event cap, and divergence cap.

    Integer states >= state_cap stop the run with status 'diverged'; the
    event cap censors runaway runs with status 'event-cap'.
    """

    t_max: float = math.inf
    event_cap: int = 1_000_000
    state_cap: int = 10_000


@dataclass
class CtmcPath:
    times: np.ndarray
    states: list
    status: str

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


def linecount_spec(chain: str, s1: float, s2: float, nu0: float, nu1: float) -> GeneratorSpec:
    """Spec for one of the built-in line-counting chains.

    ``chain`` is one of 'r_det', 'r_diff' (killed-ASG line counts, absorbing
    at 0 and DELTA) or 'l_det', 'l_diff' (pruned lookdown line counts, floor
    at 1). Rate lists are emitted in canonical order: up, down by one, kill,
    then block drops by ascending drop size.
    """
    cid = _CHAIN_IDS[chain]

    def rate_fn(state):
        if state is DELTA:
            return []
        n = int(state)
        if n < 0:
            raise InvalidGeneratorError(f"negative state {n}")
        if cid in (R_DET, R_DIFF) and n == 0:
            return []
        up, down, kill, drop, ndrops = _rates(cid, n, s1, s2, nu0, nu1)
        out = []
        if up > 0.0:
            out.append((n + 1, up))
        if down > 0.0:
            out.append((n - 1, down))
        if kill > 0.0:
            out.append((DELTA, kill))
        for ell in range(2, 2 + ndrops):
            if drop > 0.0:
                out.append((n - ell, drop))
        return out

    return GeneratorSpec(rate_fn=rate_fn, kernel=("linecount", cid, s1, s2, nu0, nu1))


def _simulate_generic(spec: GeneratorSpec, start, stop: StopRule, gen) -> tuple:
    """Reference engine for arbitrary specs; one exponential + one uniform
    per event, jump target by cumulative scan of the rate list."""
    times = [0.0]
    states = [start]
    state = start
    t = 0.0
    status = "event-cap"
    for _ in range(stop.event_cap):
        if isinstance(state, (int, np.integer)) and state >= stop.state_cap:
            status = "diverged"
            break
        transitions = spec.rate_fn(state)
        total = 0.0
        for _, r in transitions:
            if r < 0.0 or not math.isfinite(r):
                raise InvalidGeneratorError(f"invalid rate {r} at state {state!r}")
            total += r
        if total <= 0.0:
            status = "absorbed"
            break
        dt = gen.standard_exponential() / total
        u = gen.random() * total
        if t + dt > stop.t_max:
            status = "done"
            break
        t += dt
        cum = 0.0
        target = transitions[-1][0]
        for tgt, r in transitions:
            cum += r
            if u < cum:
                target = tgt
                break
        state = target
        times.append(t)
        states.append(state)
    return np.asarray(times), states, status


def simulate_ctmc(spec: GeneratorSpec, start, stop: StopRule | None = None,
                  rng: RngStream | None = None) -> CtmcPath:
    """Exact event-by-event simulation of ``spec`` from ``start``.

    The path is right-continuous piecewise-constant; holding times are
    exponential with the total exit rate and jump targets are chosen with
    probability proportional to their rates. Identical (spec, start, stop,
    rng) reproduce the identical path bit-exactly.
    """
    stop = stop or StopRule()
    rng = rng or RngStream(0)
    gen = rng.generator()
    if spec.kernel is not None and spec.kernel[0] == "linecount":
        _, cid, s1, s2, nu0, nu1 = spec.kernel
        n0 = DELTA_CODE if start is DELTA else int(start)
        code, times, states = kernels.linecount_path(
            cid, s1, s2, nu0, nu1, n0, stop.t_max, stop.event_cap,
            stop.state_cap, gen)
        state_list = [DELTA if s == DELTA_CODE else int(s) for s in states]
        return CtmcPath(times=times, states=state_list, status=_STATUS[code])
    times, states, status = _simulate_generic(spec, start, stop, gen)
    return CtmcPath(times=times, states=states, status=status)


@dataclass
class AbsorptionReport:
    """Empirical absorption frequencies with binomial standard errors.

    ``counts`` maps each observed terminal state to its replicate count;
    censored runs (event cap) and diverged runs (state cap) are tallied
    separately. Frequencies plus the censored and diverged fractions sum
    to one. Reports merge associatively and independently of order.
    """

    replicates: int
    counts: dict = field(default_factory=dict)
    diverged: int = 0
    censored: int = 0

    def frequency(self, target) -> float:
        return self.counts.get(target, 0) / self.replicates

    def se(self, target) -> float:
        p = self.frequency(target)
        return math.sqrt(p * (1.0 - p) / self.replicates)

    @property
    def diverged_fraction(self) -> float:
        return self.diverged / self.replicates

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.replicates

    def merge(self, other: "AbsorptionReport") -> "AbsorptionReport":
        counts = dict(self.counts)
        for k, v in other.counts.items():
            counts[k] = counts.get(k, 0) + v
        return AbsorptionReport(
            replicates=self.replicates + other.replicates,
            counts=counts,
            diverged=self.diverged + other.diverged,
            censored=self.censored + other.censored,
        )


def blocked_replicates(replicates: int) -> list[tuple[int, int]]:
    """(block_index, block_size) pairs covering ``replicates``."""
    out = []
    b = 0
    left = replicates
    while left > 0:
        size = min(REPLICATE_BLOCK, left)
        out.append((b, size))
        left -= size
        b += 1
    return out


def run_blocks(worker, replicates: int, rng: RngStream, threads: int = 1) -> list:
    """Run ``worker(block_rng, size)`` over replicate blocks.

    Results are collected by block index, so the outcome does not depend on
    the number of worker threads.
    """
    blocks = blocked_replicates(replicates)
    results = [None] * len(blocks)
    if threads <= 1 or len(blocks) == 1:
        for b, size in blocks:
            results[b] = worker(rng.child(b), size)
        return results
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futures = {ex.submit(worker, rng.child(b), size): b for b, size in blocks}
        for fut, b in futures.items():
            results[b] = fut.result()
    return results


def estimate_absorption(spec: GeneratorSpec, start, replicates: int,
                        rng: RngStream, event_cap: int = 1_000_000,
                        state_cap: int = 10_000, threads: int = 1) -> AbsorptionReport:
    """Monte Carlo absorption profile of ``spec`` started from ``start``.

    Each replicate runs on its own RNG sub-stream block; SE(target) is the
    binomial standard error sqrt(p(1-p)/replicates).
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    use_kernel = spec.kernel is not None and spec.kernel[0] == "linecount"

    if use_kernel:
        _, cid, s1, s2, nu0, nu1 = spec.kernel
        n0 = DELTA_CODE if start is DELTA else int(start)

        def worker(block_rng: RngStream, size: int):
            gen = block_rng.generator()
            return kernels.linecount_batch_absorb(
                cid, s1, s2, nu0, nu1, n0, size, event_cap, state_cap, gen)

        parts = run_blocks(worker, replicates, rng, threads)
        report = AbsorptionReport(replicates=0)
        for nz, nd, ndiv, ncap in parts:
            part = AbsorptionReport(replicates=nz + nd + ndiv + ncap,
                                    counts={}, diverged=ndiv, censored=ncap)
            if nz:
                part.counts[0] = nz
            if nd:
                part.counts[DELTA] = nd
            report = report.merge(part)
        return report

    stop = StopRule(event_cap=event_cap, state_cap=state_cap)

    def worker(block_rng: RngStream, size: int):
        gen = block_rng.generator()
        part = AbsorptionReport(replicates=size)
        for _ in range(size):
            _, states, status = _simulate_generic(spec, start, stop, gen)
            if status == "absorbed":
                final = states[-1]
                part.counts[final] = part.counts.get(final, 0) + 1
            elif status == "diverged":
                part.diverged += 1
            else:
                part.censored += 1
        return part

    parts = run_blocks(worker, replicates, rng, threads)
    report = AbsorptionReport(replicates=0)
    for part in parts:
        report = report.merge(part)
    return report
