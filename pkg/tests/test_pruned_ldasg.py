import math

import numpy as np
import pytest

from lodsim import (
    DetParams,
    DiffusionParams,
    ParameterRegimeError,
    RngStream,
    ancestral_h,
    ancestral_scan,
    fearnhead_solve,
    geometric_gof,
    geometric_parameter,
    ldasg_generator,
    proof_structure_check,
    simulate_ldasg_levels,
    stationary_tail_empirical,
    z_infinity,
)
from lodsim.pruned_ldasg import fearnhead_residual


def rates_of(spec, state):
    return dict(spec.rate_fn(state))


def test_det_generator_single_line_only_branches():
    spec = ldasg_generator("deterministic", DetParams(0.9, 2.0, 0.5, 0.5))
    assert spec.rate_fn(1) == [(2, 0.9)]


def test_det_generator_termwise():
    spec = ldasg_generator("deterministic", DetParams(1.0, 1.0, 0.5, 0.5))
    r = rates_of(spec, 3)
    assert r[4] == 3.0
    assert r[2] == pytest.approx(2 * 0.5 + 0.5)  # (n-1) u nu1 + u nu0
    assert r[1] == pytest.approx(0.5)            # block drop to level 1


def test_diff_generator_termwise():
    spec = ldasg_generator("diffusion", DiffusionParams(10.0, 20.0, 0.005, 0.995))
    r = rates_of(spec, 2)
    assert r[3] == 20.0
    assert r[1] == pytest.approx(1.0 + 19.9 + 0.1)
    assert set(r) == {3, 1}  # drops need n >= 3; L never reaches 0


def test_drop_targets_capped_above_zero():
    spec = ldasg_generator("diffusion", DiffusionParams(1.0, 1.0, 0.5, 0.5))
    r = rates_of(spec, 5)
    assert set(r) == {6, 4, 3, 2, 1}
    assert r[3] == r[2] == r[1] == pytest.approx(0.5)


def test_neutral_line_count_is_one():
    path = simulate_ldasg_levels("deterministic", DetParams(0.0, 1.0, 0.3, 0.7),
                                 r_max=200.0, rng=RngStream(1))
    assert np.all(path.L == 1)


def test_det_immune_is_top_line():
    path = simulate_ldasg_levels("deterministic", DetParams(1.0, 1.5, 0.3, 0.7),
                                 r_max=500.0, rng=RngStream(2))
    assert np.array_equal(path.M, path.L)


def _replay_levels(path, limit_diff, mode):
    """Re-derive every (L, M) transition from the event record."""
    L, M = 1, 1
    for idx in range(len(path.kinds)):
        kind = int(path.kinds[idx])
        i = int(path.level_i[idx])
        j = int(path.level_j[idx])
        if kind == 0:  # branching at line i <= L
            assert 1 <= i <= L
            if mode == "fecundity":
                M = M + 1 if M >= i else M
            else:
                M = M + 1 if M > i else M
            L += 1
        elif kind == 1:  # coalescence of pair i < j <= L
            assert 1 <= i < j <= L
            if M == j:
                M = i
            elif M > j:
                M -= 1
            L -= 1
        elif kind == 2:  # deleterious mark at line i
            assert 1 <= i <= L
            if limit_diff:
                if i == M:
                    M = L  # immune line relocated to the top level
                else:
                    M = M - 1 if M > i else M
                    L -= 1
            else:
                if i != L:  # the top line is immune
                    L -= 1
        else:  # beneficial mark at line i truncates the graph above i
            assert 1 <= i <= L
            L, M = i, i
        if not limit_diff:
            M = L
        assert L >= 1 and 1 <= M <= L
        assert path.L[idx] == L
        assert path.M[idx] == M


@pytest.mark.parametrize("limit,limit_diff", [("deterministic", False),
                                              ("diffusion", True)])
@pytest.mark.parametrize("mode", ["fecundity", "viability"])
def test_level_transitions_follow_definition(limit, limit_diff, mode):
    params = (DetParams(1.0, 1.5, 0.3, 0.7) if not limit_diff
              else DiffusionParams(2.0, 1.5, 0.3, 0.7))
    path = simulate_ldasg_levels(limit, params, r_max=2000.0,
                                 rng=RngStream(3, (limit_diff, mode == "viability")),
                                 mode=mode, max_events=50_000)
    assert len(path.kinds) > 1000
    _replay_levels(path, limit_diff, mode)


def test_beneficial_mutation_truncates_to_its_level():
    path = simulate_ldasg_levels("diffusion", DiffusionParams(3.0, 2.0, 0.4, 0.6),
                                 r_max=2000.0, rng=RngStream(4), max_events=60_000)
    ben = np.flatnonzero(path.kinds == 3)
    assert len(ben) > 50
    for idx in ben:
        assert path.L[idx] == path.level_i[idx]
        assert path.M[idx] == path.level_i[idx]


def test_geometric_parameter_cases():
    assert geometric_parameter(0.0, 2.0, 0.3, 0.7) == 0.0
    assert geometric_parameter(1.0, 1.0, 1.0, 0.0) == 0.5       # nu1 = 0, s = u
    assert geometric_parameter(1.0, 2.0, 0.0, 1.0) == pytest.approx(0.5, abs=1e-14)
    assert geometric_parameter(1.0, 0.5, 0.0, 1.0) == 1.0       # divergent regime
    assert geometric_parameter(1.0, 3.0, 0.0, 1.0) == pytest.approx(1 / 3, abs=1e-14)


@pytest.mark.parametrize("s,u,nu0", [(1.0, 2.0, 0.3), (0.5, 0.4, 0.005),
                                     (2.0, 2.0, 0.5), (1e-3, 2e-3, 0.005)])
def test_geometric_parameter_identity(s, u, nu0):
    nu1 = 1.0 - nu0
    p = geometric_parameter(s, u, nu0, nu1)
    z = z_infinity(DetParams(s=s, u=u, nu0=nu0, nu1=nu1)).value
    assert abs(p - (s / (u * nu1)) * (1.0 - z)) <= 1e-12


def test_fearnhead_boundary_and_neutral():
    t = fearnhead_solve(0.0, 5.0, 0.5)
    assert t.a[0] == 1.0
    assert np.all(t.a[1:] == 0.0)


def test_fearnhead_residual_small():
    t = fearnhead_solve(10.0, 20.0, 0.995)
    res = fearnhead_residual(t.a, 10.0, 20.0, 0.995)
    assert np.max(np.abs(res)) < 1e-10
    assert np.all(np.diff(t.a[:20]) < 0)


def test_fearnhead_matches_stationary_simulation():
    sigma, theta, nu1 = 2.0, 1.0, 0.7
    t = fearnhead_solve(sigma, theta, nu1)
    emp = stationary_tail_empirical(
        "diffusion", DiffusionParams(sigma, theta, 1 - nu1, nu1),
        samples=40_000, rng=RngStream(5), spacing=0.5, n_report=6)
    for n in range(7):
        assert abs(emp.a[n] - t.a[n]) <= 3 * max(emp.se[n], 1e-12)


def test_stationary_neutral_mass_on_one():
    emp = stationary_tail_empirical("deterministic", DetParams(0.0, 1.0, 0.3, 0.7),
                                    samples=2000, rng=RngStream(6), n_report=3)
    assert emp.a[0] == 1.0
    assert np.all(emp.a[1:] == 0.0)


def test_stationary_divergent_regime_rejected():
    with pytest.raises(ParameterRegimeError):
        stationary_tail_empirical("deterministic", DetParams(1.0, 0.5, 0.0, 1.0),
                                  samples=100, rng=RngStream(7))


def test_stationary_geometric_tails_and_gof():
    params = DetParams(1.0, 2.0, 0.0, 1.0)
    emp = stationary_tail_empirical("deterministic", params, samples=50_000,
                                    rng=RngStream(8), n_report=8)
    for n in range(9):
        assert abs(emp.a[n] - 0.5 ** n) <= 3 * max(emp.se[n], 1e-12)

    from lodsim._backend import kernels
    from lodsim._pykernels import L_DET
    _, vals = kernels.linecount_stationary_sample(
        L_DET, 1.0, 2.0, 0.0, 1.0, 1, 100.0, 50_000, 4.0, 10 ** 8, 10_000,
        RngStream(8).generator())
    stat, pvalue = geometric_gof(vals, 0.5)
    assert pvalue > 0.001


def test_mode_does_not_change_line_count_law():
    # the L-marginal rates are insensitive to the immune level, hence to the
    # branching insertion side
    params = DiffusionParams(3.0, 2.0, 0.3, 0.7)
    tails = {}
    for mode_code, mode in ((0, "fecundity"), (1, "viability")):
        from lodsim._backend import kernels
        _, L, _ = kernels.ldasg_stationary_levels(
            True, mode_code, params.sigma, params.theta, params.nu0, params.nu1,
            30.0, 40_000, 0.5, 10 ** 8, 10_000, RngStream(9, (mode_code,)).generator())
        tails[mode] = L
    for n in range(1, 6):
        pa = np.mean(tails["fecundity"] > n)
        pb = np.mean(tails["viability"] > n)
        se = math.sqrt(pa * (1 - pa) / 40_000 + pb * (1 - pb) / 40_000)
        assert abs(pa - pb) <= 4 * max(se, 1e-4)


def test_rate_consistency_of_level_simulation():
    # empirical per-state transition split of the level-resolved simulation
    # against the line-count generator rates
    params = DiffusionParams(2.0, 3.0, 0.3, 0.7)
    spec = ldasg_generator("diffusion", params)
    path = simulate_ldasg_levels("diffusion", params, r_max=1e9,
                                 rng=RngStream(10), max_events=100_000)
    L = np.concatenate([[1], path.L])
    for n in (1, 2, 3, 4):
        idx = np.flatnonzero(L[:-1] == n)
        moves = L[idx + 1] - n
        changed = moves[moves != 0]
        if len(changed) < 200:
            continue
        rates = dict(spec.rate_fn(n))
        total = sum(rates.values())
        for target, rate in rates.items():
            emp = np.mean(changed == (target - n))
            pth = rate / total
            se = math.sqrt(pth * (1 - pth) / len(changed))
            assert abs(emp - pth) <= 4 * max(se, 1e-4), (n, target)


def test_ancestral_neutral_is_identity():
    res = ancestral_h("deterministic", DetParams(0.0, 1.0, 0.3, 0.7), 0.42)
    assert res.h == pytest.approx(0.42, abs=1e-14)


def test_ancestral_threshold_jump():
    below = DetParams(0.001, 0.0005, 0.0, 1.0)
    assert ancestral_h("deterministic", below, z_infinity(below).value).h == 1.0
    above = DetParams(0.001, 0.002, 0.0, 1.0)
    assert ancestral_h("deterministic", above, z_infinity(above).value).h == 0.0


def test_ancestral_boundaries():
    p = DetParams(1.0, 2.0, 0.3, 0.7)
    assert ancestral_h("deterministic", p, 1.0).h == 1.0
    assert ancestral_h("deterministic", p, 0.0).h == 0.0
    d = DiffusionParams(2.0, 1.0, 0.3, 0.7)
    assert ancestral_h("diffusion", d, 1.0).h == 1.0
    assert ancestral_h("diffusion", d, 0.0).h == 0.0


def test_ancestral_geometric_closed_form_vs_partial_sum():
    p = DetParams(1.0, 2.0, 0.0, 1.0)  # p = 1/2
    h = ancestral_h("deterministic", p, 0.5).h
    assert h == pytest.approx(2.0 / 3.0, abs=1e-12)
    partial = sum(0.5 * 0.5 ** n * 0.5 ** n for n in range(200))
    assert h == pytest.approx(partial, abs=1e-12)


@pytest.mark.parametrize("x", [0.05, 0.3, 0.8])
def test_ancestral_bias_toward_beneficial(x):
    det = ancestral_h("deterministic", DetParams(1.0, 2.0, 0.3, 0.7), x)
    assert det.h >= x
    diff = ancestral_h("diffusion", DiffusionParams(2.0, 1.0, 0.3, 0.7), x)
    assert diff.h >= x
    assert diff.tail_bound < 1e-12


def test_ancestral_series_vs_stationary_line_count():
    # h(x) = 1 - E[(1-x)^{L_inf}]: check the recursion series against the
    # simulated stationary law
    params = DiffusionParams(3.0, 2.0, 0.25, 0.75)
    x = 0.3
    h = ancestral_h("diffusion", params, x).h
    from lodsim._backend import kernels
    from lodsim._pykernels import L_DIFF
    _, vals = kernels.linecount_stationary_sample(
        L_DIFF, params.sigma, params.theta, params.nu0, params.nu1, 1,
        30.0, 60_000, 0.5, 10 ** 8, 10_000, RngStream(11).generator())
    w = 1.0 - (1.0 - x) ** vals.astype(float)
    blocks = w[:60_000 - 60_000 % 100].reshape(100, -1).mean(axis=1)
    se = np.std(blocks, ddof=1) / 10.0
    assert abs(h - np.mean(w)) <= 3 * se


def test_ancestral_scan_threshold_step():
    s = 0.001
    rows = dict(ancestral_scan("deterministic", s, [0.25 * s, 0.5 * s, 0.75 * s,
                                                    s, 1.5 * s, 2 * s],
                               nu0=0.0, nu1=1.0, x_rule="zinf"))
    for u, h in rows.items():
        assert h == (1.0 if u < s else 0.0)


def test_ancestral_scan_small_mutation_limit():
    s = 0.001
    rows = dict(ancestral_scan("deterministic", s, [1e-6 * s], nu0=0.005,
                               nu1=0.995, x_rule="zinf"))
    assert rows[1e-6 * s] > 1.0 - 1e-6


def test_ancestral_scan_neutral():
    rows = dict(ancestral_scan("deterministic", 0.0, [0.5], nu0=0.5, nu1=0.5,
                               x_rule="zinf"))
    assert rows[0.5] == pytest.approx(0.5, abs=1e-14)


def test_ancestral_scan_wright_rule():
    rows = dict(ancestral_scan("diffusion", 0.001, [0.001], nu0=0.005,
                               nu1=0.995, x_rule="wright", scale_N=1e4))
    assert 0.0 < rows[0.001] < 1.0


def test_proof_structure_smoke():
    rep = proof_structure_check(DiffusionParams(1.0, 0.8, 0.3, 0.7), n=2,
                                nsamples=30_000, rng=RngStream(12))
    assert rep.passed
    assert rep.beneficial_cooccurrence == 0
    total = sum(emp for emp, _, _ in rep.frequencies.values())
    assert total == pytest.approx(1.0, abs=1e-9)
