import io
import math

import numpy as np
import pytest

from lodsim import (
    DetParams,
    LodsimError,
    MoranParams,
    RngStream,
    frequency_on_grid,
    generate_event_stream,
    propagate_types,
    sample_initial_types,
    solve_ode,
)
from lodsim.moran import (
    EventStream,
    event_stream_from_text,
    event_stream_to_text,
    frequency_path_to_csv,
)


def test_no_selective_arrows_when_s_zero():
    p = MoranParams(N=40, s=0.0, u=0.1, nu0=0.5, nu1=0.5)
    st = generate_event_stream(p, 20.0, RngStream(1))
    assert st.count("selective") == 0
    assert st.count("mutation") > 0


def test_no_mutation_marks_when_u_zero():
    p = MoranParams(N=40, s=0.1, u=0.0, nu0=0.5, nu1=0.5)
    st = generate_event_stream(p, 20.0, RngStream(2))
    assert st.count("mutation") == 0


def test_selective_count_mean():
    # total selective rate is N^2 * (s/N) = N*s (self-pairs included), so the
    # count over [0, T] is Poisson with mean N*s*T
    p = MoranParams(N=100, s=0.001, u=0.002, nu0=0.5, nu1=0.5)
    counts = [generate_event_stream(p, 100.0, RngStream(3, (k,))).count("selective")
              for k in range(1000)]
    mean = np.mean(counts)
    target = p.N * p.s * 100.0
    se = np.std(counts, ddof=1) / math.sqrt(len(counts))
    assert abs(mean - target) <= 3 * se


def test_neutral_and_mutation_count_means():
    p = MoranParams(N=50, s=0.01, u=0.04, nu0=0.2, nu1=0.8)
    neutral = []
    mutation = []
    for k in range(500):
        st = generate_event_stream(p, 10.0, RngStream(4, (k,)))
        neutral.append(st.count("neutral"))
        mutation.append(st.count("mutation"))
    for counts, target in ((neutral, 0.5 * p.N * 10.0), (mutation, p.N * p.u * 10.0)):
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(np.mean(counts) - target) <= 3 * se


def test_all_deleterious_stays_zero_without_beneficial_mutation():
    p = MoranParams(N=30, s=0.2, u=0.3, nu0=0.0, nu1=1.0)
    st = generate_event_stream(p, 30.0, RngStream(5))
    path = propagate_types(st, np.ones(30, dtype=int), "fecundity")
    assert np.all(path.values == 0.0)


def test_all_beneficial_stays_one_without_mutation():
    p = MoranParams(N=30, s=0.2, u=0.0, nu0=0.5, nu1=0.5)
    st = generate_event_stream(p, 30.0, RngStream(6))
    path = propagate_types(st, np.zeros(30, dtype=int), "viability")
    assert np.all(path.values == 1.0)


def test_fecundity_viability_paths_identical():
    p = MoranParams(N=100, s=0.05, u=0.02, nu0=0.3, nu1=0.7)
    for k in range(20):
        gen = RngStream(7, (k,)).generator()
        types0 = sample_initial_types(p.N, 0.4, gen)
        st = generate_event_stream(p, 25.0, gen=gen)
        pf = propagate_types(st, types0, "fecundity")
        pv = propagate_types(st, types0, "viability")
        assert np.array_equal(pf.times, pv.times)
        assert np.array_equal(pf.values, pv.values)


def test_jump_structure():
    p = MoranParams(N=25, s=0.1, u=0.1, nu0=0.5, nu1=0.5)
    gen = RngStream(8).generator()
    types0 = sample_initial_types(p.N, 0.5, gen)
    st = generate_event_stream(p, 40.0, gen=gen)
    path = propagate_types(st, types0, "fecundity")
    # jumps only at event times, each of size 1/N; values within [0, 1]
    assert set(np.round(path.times[1:], 12)) <= set(np.round(st.times, 12))
    steps = np.abs(np.diff(path.values))
    assert np.allclose(steps, 1.0 / p.N)
    assert path.values.min() >= 0.0 and path.values.max() <= 1.0


def test_self_arrow_is_frequency_noop():
    st = EventStream(N=4, horizon=1.0,
                     kinds=np.array([0], dtype=np.int8),
                     times=np.array([0.5]),
                     src=np.array([2]), dst=np.array([2]))
    path = propagate_types(st, [0, 1, 0, 1], "fecundity")
    assert list(path.values) == [0.5]


def test_duplicate_timestamps_rejected():
    with pytest.raises(LodsimError):
        EventStream(N=3, horizon=1.0,
                    kinds=np.array([0, 0], dtype=np.int8),
                    times=np.array([0.5, 0.5]),
                    src=np.array([0, 1]), dst=np.array([1, 2]))


def test_initial_vector_length_checked():
    p = MoranParams(N=10, s=0.0, u=0.1, nu0=0.5, nu1=0.5)
    st = generate_event_stream(p, 1.0, RngStream(9))
    with pytest.raises(ValueError):
        propagate_types(st, [0, 1], "fecundity")


def test_event_stream_text_roundtrip():
    p = MoranParams(N=12, s=0.05, u=0.1, nu0=0.25, nu1=0.75)
    st = generate_event_stream(p, 5.0, RngStream(10))
    buf = io.StringIO()
    event_stream_to_text(st, buf)
    buf.seek(0)
    st2 = event_stream_from_text(buf)
    assert st2.N == st.N and st2.horizon == st.horizon
    assert np.array_equal(st2.kinds, st.kinds)
    assert np.array_equal(st2.times, st.times)  # repr round-trip is exact
    assert np.array_equal(st2.src, st.src)
    assert np.array_equal(st2.dst, st.dst)
    # replay produces the identical path
    types0 = np.zeros(12, dtype=int)
    a = propagate_types(st, types0, "viability")
    b = propagate_types(st2, types0, "viability")
    assert np.array_equal(a.values, b.values)


def test_frequency_on_grid_matches_unfused_path():
    p = MoranParams(N=60, s=0.02, u=0.03, nu0=0.4, nu1=0.6)
    grid = np.linspace(0.0, 15.0, 40)
    gen = RngStream(11).generator()
    types0 = sample_initial_types(p.N, 0.3, gen)
    st = generate_event_stream(p, 15.0, gen=gen)
    path = propagate_types(st, types0, "fecundity")
    vals_unfused = path.at(grid)
    vals_fused = frequency_on_grid(p, 15.0, grid, RngStream(11), x=0.3)
    assert np.array_equal(vals_fused, vals_unfused)


def test_frequency_path_csv(tmp_path):
    p = MoranParams(N=10, s=0.0, u=0.5, nu0=0.5, nu1=0.5)
    st = generate_event_stream(p, 2.0, RngStream(12))
    path = propagate_types(st, np.zeros(10, dtype=int), "fecundity")
    f = tmp_path / "path.csv"
    with open(f, "w") as fh:
        frequency_path_to_csv(path, fh)
    lines = f.read_text().splitlines()
    assert lines[0] == "time,frequency"
    assert len(lines) == len(path.times) + 1


def test_law_of_large_numbers_smoke():
    # sup-distance of the replicate-mean path to the ODE solution shrinks
    # with N (full-scale version in the acceptance suite)
    s, u, nu0, x, T, reps = 0.05, 0.02, 0.1, 0.3, 10.0, 200
    grid = np.linspace(0.0, T, 60)
    ode = solve_ode(DetParams(s=s, u=u, nu0=nu0, nu1=1 - nu0), x, grid).z
    sup = {}
    for N in (50, 1000):
        p = MoranParams(N=N, s=s, u=u, nu0=nu0, nu1=1 - nu0)
        acc = np.zeros_like(grid)
        for k in range(reps):
            acc += frequency_on_grid(p, T, grid, RngStream(13, (N, k)), x=x)
        sup[N] = np.max(np.abs(acc / reps - ode))
    assert sup[1000] < sup[50]
