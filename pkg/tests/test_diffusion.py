import math

import numpy as np
import pytest

from lodsim import (
    DiffusionParams,
    ParameterRegimeError,
    RngStream,
    fixation_probability,
    simulate_wf,
    wf_terminal_batch,
    wright_expectation,
    wright_moments,
)
from lodsim.killed_asg import sampling_recursion_residual


def beta_moment(theta, nu1, n):
    # E[(1-X)^n] for sigma = 0: (1-X) ~ Beta(2 theta nu1, 2 theta nu0)
    out = 1.0
    for k in range(n):
        out *= (2 * theta * nu1 + k) / (2 * theta + k)
    return out


def test_fixation_neutral_limit():
    assert fixation_probability(0.0, 0.37) == 0.37
    assert abs(fixation_probability(1e-12, 0.37) - 0.37) < 1e-9


def test_fixation_boundaries_and_spot_value():
    assert fixation_probability(2.3, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert fixation_probability(2.3, 0.0) == 0.0
    assert fixation_probability(1.0, 0.5) == pytest.approx(0.7310585786300049, abs=1e-12)


def test_fixation_monotone_in_x():
    xs = np.linspace(0, 1, 21)
    hs = [fixation_probability(3.0, float(x)) for x in xs]
    assert np.all(np.diff(hs) > 0)


def test_absorbing_boundaries_exact():
    p = DiffusionParams(sigma=5.0, theta=2.0, nu0=0.0, nu1=1.0)
    path = simulate_wf(p, 0.0, 1.0, dt=1e-3, rng=RngStream(1), return_path=True)
    assert np.all(path.x == 0.0)
    p = DiffusionParams(sigma=5.0, theta=2.0, nu0=1.0, nu1=0.0)
    path = simulate_wf(p, 1.0, 1.0, dt=1e-3, rng=RngStream(2), return_path=True)
    assert np.all(path.x == 1.0)


def test_path_and_batch_share_draws():
    p = DiffusionParams(sigma=2.0, theta=1.0, nu0=0.3, nu1=0.7)
    path = simulate_wf(p, 0.4, 0.25, dt=1e-3, rng=RngStream(3), return_path=True)
    term = simulate_wf(p, 0.4, 0.25, dt=1e-3, rng=RngStream(3))
    assert float(path.x[-1]) == term


def test_neutral_mean_is_initial_value():
    # zero drift; clamping biases cancel by symmetry at x = 1/2
    p = DiffusionParams(sigma=0.0, theta=0.0, nu0=0.5, nu1=0.5)
    xs = wf_terminal_batch(p, 0.5, 0.5, reps=100_000, dt=1e-3, rng=RngStream(4))
    se = np.std(xs, ddof=1) / math.sqrt(len(xs))
    assert abs(np.mean(xs) - 0.5) <= 3 * se
    assert xs.min() >= 0.0 and xs.max() <= 1.0


def test_wright_moments_normalisation_and_monotonicity():
    p = DiffusionParams(sigma=10.0, theta=20.0, nu0=0.005, nu1=0.995)
    mom = wright_moments(p, n_max=30)
    assert mom.m[0] == 1.0
    assert np.all(np.diff(mom.m) <= 0)
    assert np.all((mom.m >= 0) & (mom.m <= 1))
    assert mom.max_delta <= 1e-8


def test_wright_moments_beta_case():
    p = DiffusionParams(sigma=0.0, theta=0.5, nu0=0.5, nu1=0.5)
    mom = wright_moments(p, n_max=10)
    assert mom.m[1] == pytest.approx(0.5, abs=1e-10)
    for n in range(11):
        assert mom.m[n] == pytest.approx(beta_moment(0.5, 0.5, n), abs=1e-10)


def test_wright_symmetric_mean():
    p = DiffusionParams(sigma=0.0, theta=1.7, nu0=0.5, nu1=0.5)
    mom = wright_moments(p, n_max=2)
    assert mom.mean == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("params", [
    DiffusionParams(sigma=1.0, theta=0.0, nu0=0.5, nu1=0.5),
    DiffusionParams(sigma=1.0, theta=2.0, nu0=0.0, nu1=1.0),
    DiffusionParams(sigma=1.0, theta=2.0, nu0=1.0, nu1=0.0),
])
def test_wright_moments_regime_errors(params):
    with pytest.raises(ParameterRegimeError):
        wright_moments(params)


def test_moments_solve_sampling_recursion():
    # quadrature moments satisfy the three-term recursion, n = 1..50
    p = DiffusionParams(sigma=10.0, theta=20.0, nu0=0.005, nu1=0.995)
    mom = wright_moments(p, n_max=51)
    res = sampling_recursion_residual(mom.m, p.sigma, p.theta, p.nu1)
    assert np.max(np.abs(res[:50])) < 1e-7


def test_wright_expectation_consistency():
    p = DiffusionParams(sigma=4.0, theta=3.0, nu0=0.2, nu1=0.8)
    mom = wright_moments(p, n_max=1)
    e = wright_expectation(p, lambda x: 1.0 - x)
    assert e == pytest.approx(mom.m[1], abs=1e-10)


def test_vanishing_mutation_pressure_pushes_mean_to_one():
    # sigma fixed and positive, theta -> 0: the stationary mean approaches 1
    prev = 0.0
    for theta in (1.0, 0.1, 0.01):
        p = DiffusionParams(sigma=10.0, theta=theta, nu0=0.005, nu1=0.995)
        mean = wright_moments(p, n_max=1).mean
        assert mean > prev
        prev = mean
    assert prev > 0.995


def test_batch_reproducible():
    p = DiffusionParams(sigma=3.0, theta=1.0, nu0=0.4, nu1=0.6)
    a = wf_terminal_batch(p, 0.3, 0.2, reps=500, rng=RngStream(9))
    b = wf_terminal_batch(p, 0.3, 0.2, reps=500, rng=RngStream(9))
    assert np.array_equal(a, b)
