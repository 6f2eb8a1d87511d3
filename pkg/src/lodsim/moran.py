"""Finite-N Moran model via its untyped graphical representation.

Events are laid out at type-independent rates (neutral arrows at 1/(2N) and
selective arrows at s/N per ordered pair of lines, self-pairs included;
mutation marks at rate u per line) and types are propagated through the
stream afterwards, under either fecundity or viability selection. Both
selection modes read off the same typed picture: the frequency path is
identical realisation by realisation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from ._backend import kernels
from ._pykernels import ST_EVENT_CAP
from .errors import LodsimError
from .model import MoranParams, validate
from .rng import RngStream

__all__ = [
    "EventStream",
    "FrequencyPath",
    "generate_event_stream",
    "propagate_types",
    "sample_initial_types",
    "frequency_on_grid",
    "event_stream_to_text",
    "event_stream_from_text",
    "frequency_path_to_csv",
]

_KIND_NAMES = {0: "neutral", 1: "selective", 2: "mutation"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}


@dataclass
class EventStream:
    """Untyped event record: arrow/mark kinds, times, and line indices.

    ``dst`` holds the target line for arrows and the drawn type (0/1) for
    mutation marks. Times are strictly increasing.
    """

    N: int
    horizon: float
    kinds: np.ndarray
    times: np.ndarray
    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        if len(self.times) and np.any(np.diff(self.times) <= 0.0):
            raise LodsimError("event times must be strictly increasing")

    def count(self, kind: str) -> int:
        return int(np.sum(self.kinds == _KIND_CODES[kind]))


@dataclass
class FrequencyPath:
    """Piecewise-constant type-0 frequency path t -> X_t."""

    N: int
    horizon: float
    times: np.ndarray   # jump times, first entry 0.0
    values: np.ndarray  # frequency after each jump

    def at(self, t) -> np.ndarray:
        """Right-continuous evaluation at time(s) t in [0, horizon]."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]


def _max_events(params: MoranParams, T: float) -> int:
    mean = (0.5 * params.N + params.N * params.s + params.N * params.u) * T
    return int(mean + 10.0 * math.sqrt(mean + 1.0) + 1000.0)


def generate_event_stream(params: MoranParams, T: float,
                          rng: RngStream | None = None, *,
                          gen: np.random.Generator | None = None,
                          max_events: int | None = None) -> EventStream:
    """Sample the graphical representation on [0, T]."""
    params = validate(params)
    if T <= 0.0:
        raise ValueError("horizon T must be > 0")
    if gen is None:
        gen = (rng or RngStream(0)).generator()
    cap = max_events if max_events is not None else _max_events(params, T)
    status, kinds, times, src, dst = kernels.moran_stream(
        params.N, params.s, params.u, params.nu0, T, cap, gen)
    if status == ST_EVENT_CAP:
        raise LodsimError(f"event cap {cap} exhausted before reaching T={T}")
    return EventStream(N=params.N, horizon=T, kinds=kinds, times=times,
                       src=src, dst=dst)


def sample_initial_types(N: int, x: float, gen: np.random.Generator) -> np.ndarray:
    """i.i.d. initial types, P(type 0) = x; consumes N uniforms."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    u = gen.random(N)
    return np.where(u < x, 0, 1).astype(np.int8)


def propagate_types(stream: EventStream, initial_types: Iterable[int],
                    mode: str = "fecundity") -> FrequencyPath:
    """Propagate types through the stream; returns the frequency path.

    Neutral arrows always copy the tail type to the head. Selective arrows
    are used by type-0 tails under fecundity selection and kill type-1 heads
    under viability selection; mutation marks overwrite the line's type.
    """
    types0 = np.asarray(initial_types, dtype=np.int8)
    if types0.shape != (stream.N,):
        raise ValueError(f"initial type vector must have length N={stream.N}")
    if np.any((types0 != 0) & (types0 != 1)):
        raise ValueError("types must be 0 or 1")
    if mode not in ("fecundity", "viability"):
        raise ValueError(f"unknown selection mode {mode!r}")
    jt, jv = kernels.moran_propagate(stream.kinds, stream.times, stream.src,
                                     stream.dst, types0, mode == "fecundity")
    return FrequencyPath(N=stream.N, horizon=stream.horizon, times=jt, values=jv)


def frequency_on_grid(params: MoranParams, T: float, grid,
                      rng: RngStream | None = None, *,
                      x: float | None = None,
                      initial_types: Iterable[int] | None = None,
                      mode: str = "fecundity",
                      gen: np.random.Generator | None = None) -> np.ndarray:
    """Frequency path evaluated on ``grid`` without materialising the stream.

    Draw-compatible with sample_initial_types (when ``x`` is given) followed
    by generate_event_stream + propagate_types on the same generator.
    """
    params = validate(params)
    if gen is None:
        gen = (rng or RngStream(0)).generator()
    if initial_types is None:
        if x is None:
            raise ValueError("provide either x or initial_types")
        types0 = sample_initial_types(params.N, x, gen)
    else:
        types0 = np.asarray(initial_types, dtype=np.int8)
        if types0.shape != (params.N,):
            raise ValueError(f"initial type vector must have length N={params.N}")
    grid = np.ascontiguousarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0.0):
        raise ValueError("grid must be sorted")
    return kernels.moran_grid(params.N, params.s, params.u, params.nu0, T,
                              types0, mode == "fecundity", grid, gen)


def event_stream_to_text(stream: EventStream, fh: IO[str]) -> None:
    """Line-oriented serialisation: kind time i j (replay format)."""
    fh.write(f"# moran-events N={stream.N} horizon={float(stream.horizon)!r}\n")
    for k, t, i, j in zip(stream.kinds, stream.times, stream.src, stream.dst):
        fh.write(f"{_KIND_NAMES[int(k)]} {float(t)!r} {i} {j}\n")


def event_stream_from_text(fh: IO[str]) -> EventStream:
    header = fh.readline().strip()
    if not header.startswith("# moran-events"):
        raise LodsimError("not an event-stream file")
    fields = dict(part.split("=", 1) for part in header.split()[2:])
    N = int(fields["N"])
    horizon = float(fields["horizon"])
    kinds, times, src, dst = [], [], [], []
    for line in fh:
        if not line.strip():
            continue
        k, t, i, j = line.split()
        kinds.append(_KIND_CODES[k])
        times.append(float(t))
        src.append(int(i))
        dst.append(int(j))
    return EventStream(N=N, horizon=horizon,
                       kinds=np.asarray(kinds, dtype=np.int8),
                       times=np.asarray(times),
                       src=np.asarray(src, dtype=np.int64),
                       dst=np.asarray(dst, dtype=np.int64))


def frequency_path_to_csv(path: FrequencyPath, fh: IO[str]) -> None:
    fh.write("time,frequency\n")
    for t, v in zip(path.times, path.values):
        fh.write(f"{t:.12g},{v:.12g}\n")
