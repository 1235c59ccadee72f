import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from cqedtomo.calibration import (
    CalibrationInput,
    empirical_cdf,
    fit_mu,
    integrated_pdf_gaussian,
    integrated_pmf_bernoulli,
    kolmogorov_bound,
    ks_statistic,
    nu,
    p_bar,
    sigma,
    sigma_s,
    sigma_s_vs_n_sweep,
    theoretical_cdf_m,
)
from cqedtomo.errors import (
    EmptySample,
    NoAcceptableMu,
    NonpositiveInstrumentVariance,
    NonpositiveNu,
    OutOfRange,
)

PHI, PHASE = -3 * math.pi / 4, math.pi / 4


def test_nu_values():
    assert nu(0.04, 0.76) == pytest.approx(0.049780, abs=5e-7)
    assert nu(0.04, 0.36) == pytest.approx(0.038467, abs=5e-7)
    with pytest.raises(NonpositiveNu):
        nu(0.04, -1.0)
    with pytest.raises(NonpositiveNu):
        nu(0.04, 0.5, gamma=-1.0)


def test_mean_click_probability():
    assert p_bar(0.0, PHASE, PHI, 0.04, 0.76) == 0.5
    assert p_bar(3.0, PHASE, PHI, 0.04, 0.76) == pytest.approx(0.39440, abs=5e-6)
    assert p_bar(3.0, PHI + math.pi / 2, PHI, 0.04, 0.76) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(OutOfRange):
        p_bar(30.0, 0.0, 0.0, 0.04, 0.9)


def test_series_mode_uses_gamma():
    unity = p_bar(3.0, 0.0, 0.0, 0.04, 0.5)
    series = p_bar(3.0, 0.0, 0.0, 0.04, 0.5, gamma_mode="series")
    assert series < unity
    assert p_bar(3.0, 0.0, 0.0, 0.04, 0.5, "series", gamma_beta=0.0) > series


def test_binomial_pmf():
    assert np.allclose(integrated_pmf_bernoulli(1, 0.3), [0.7, 0.3])
    pmf = integrated_pmf_bernoulli(300, 0.39440)
    assert math.fsum(pmf) == pytest.approx(1.0, abs=1e-12)
    assert float(np.dot(np.arange(301), pmf)) == pytest.approx(118.32, abs=1e-6)
    sym = integrated_pmf_bernoulli(51, 0.5)
    assert np.allclose(sym, sym[::-1], rtol=1e-12, atol=0)
    with pytest.raises(OutOfRange):
        integrated_pmf_bernoulli(5, 1.0)


def test_gaussian_density():
    n, p = 300, 0.39440
    var = n * p * (1 - p)
    m = np.arange(n + 1)
    dens = integrated_pdf_gaussian(n, p, m)
    assert m[np.argmax(dens)] == round(n * p)
    fine = np.linspace(0, n, 30001)
    assert np.trapezoid(integrated_pdf_gaussian(n, p, fine), fine) == pytest.approx(1.0, abs=1e-3)
    assert np.abs(dens - integrated_pmf_bernoulli(n, p)).max() < 0.1 / math.sqrt(var)
    with pytest.warns(RuntimeWarning):
        integrated_pdf_gaussian(10, 0.5, 5)


def test_binomial_cdf():
    assert theoretical_cdf_m(7, 0.3, 7) == 1.0
    assert theoretical_cdf_m(7, 0.3, 12.5) == 1.0
    assert theoretical_cdf_m(7, 0.3, -0.5) == 0.0
    assert theoretical_cdf_m(2, 0.5, 1) == pytest.approx(0.75)
    assert theoretical_cdf_m(2, 0.5, 1.7) == pytest.approx(0.75)


def test_empirical_cdf():
    assert empirical_cdf([5], 5) == 1.0
    assert empirical_cdf([1, 2, 3], 2) == pytest.approx(2 / 3)
    assert empirical_cdf([1, 2, 3], 0.5) == 0.0
    with pytest.raises(EmptySample):
        empirical_cdf([], 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40))
def test_empirical_cdf_is_a_right_continuous_step(samples):
    s = np.array(samples)
    xs = np.sort(np.concatenate([s, s - 1e-9, s + 1e-9, [-1e9, 1e9]]))
    f = empirical_cdf(s, xs)
    assert np.all(np.diff(f) >= 0)
    assert f[0] == 0.0 and f[-1] == 1.0
    assert np.array_equal(empirical_cdf(s, s), [np.mean(s <= v) for v in s])


def test_kolmogorov_bound():
    b = kolmogorov_bound(0.95, 1000)
    assert b == pytest.approx(0.042947, abs=1e-6)
    assert kolmogorov_bound(0.95, 4000) == pytest.approx(b / 2, rel=1e-14)
    assert kolmogorov_bound(0.99, 1000) > b
    with pytest.raises(ValueError):
        kolmogorov_bound(1.0, 10)


def dense_ks(samples, n, p):
    # sup over a fine real grid plus left limits, as an independent check
    xs = np.concatenate([np.linspace(-1, n + 1, 20 * n + 41), np.arange(n + 1) - 1e-9])
    emp = np.array([np.mean(np.asarray(samples) <= x) for x in xs])
    return np.abs(emp - binom.cdf(np.floor(xs), n, p)).max()


def test_ks_statistic_against_dense_grid():
    rng = np.random.default_rng(0)
    for n, p in ((10, 0.3), (25, 0.6)):
        s = rng.binomial(n, p, 60)
        assert ks_statistic(s, n, p) == pytest.approx(dense_ks(s, n, p), abs=1e-12)


def test_ks_statistic_single_sample_by_hand():
    n, p, s = 20, 0.4, 8
    f_below, f_at = binom.cdf(s - 1, n, p), binom.cdf(s, n, p)
    assert ks_statistic([s], n, p) == pytest.approx(max(f_below, 1 - f_at), abs=1e-15)


def test_ks_statistic_shrinks_with_sample_size():
    rng = np.random.default_rng(1)
    small = ks_statistic(rng.binomial(300, 0.4, 1000), 300, 0.4)
    large = ks_statistic(rng.binomial(300, 0.4, 100_000), 300, 0.4)
    assert large < small
    assert large < 0.01


def test_sigma_anchors():
    s300 = sigma(300, nu(0.04, 0.76))
    assert s300 == pytest.approx(1.345, abs=1e-3)
    assert sigma_s(s300) == pytest.approx(0.845, abs=1e-3)
    s1000 = sigma(1000, nu(0.04, 0.36))
    assert s1000 == pytest.approx(0.6758, abs=1e-4)
    assert sigma_s(s1000) == pytest.approx(0.176, abs=1e-3)
    with pytest.raises(NonpositiveInstrumentVariance):
        sigma_s(0.5)
    with pytest.raises(NonpositiveNu):
        sigma(300, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 0.2), st.floats(-0.99, 1.0), st.integers(1, 5000))
def test_defining_identities(lt, mu, n):
    v = nu(lt, mu)
    assert abs(v - lt * (1 + mu) / math.sqrt(2)) <= 1e-12 * v
    sg = sigma(n, v)
    assert abs(sg * n * v * v - 1) < 1e-12


def synthetic(mu0, n=300, N=20_000, seed=0):
    p = p_bar(3.0, PHASE, PHI, 0.04, mu0)
    return np.random.default_rng(seed).binomial(n, p, N)


@pytest.mark.parametrize("mu0", [0.76, 0.36, -0.2])
def test_fit_recovers_generating_mu(mu0):
    res = fit_mu(synthetic(mu0), CalibrationInput(N=20_000))
    assert abs(res.mu - mu0) <= 0.01 + 1e-12
    assert res.accepted
    assert res.nu == pytest.approx(nu(0.04, res.mu))
    assert res.sigma_s == pytest.approx(res.sigma - 0.5)
    assert res.ks_profile[np.searchsorted(res.mu_grid, res.mu)] == res.ks_statistic


@settings(max_examples=15, deadline=None)
@given(st.randoms(use_true_random=False))
def test_fit_is_permutation_invariant(rnd):
    m = list(synthetic(0.76, N=500, seed=2))
    base = fit_mu(m, CalibrationInput())
    rnd.shuffle(m)
    again = fit_mu(m, CalibrationInput())
    assert (again.mu, again.ks_statistic) == (base.mu, base.ks_statistic)


def test_ties_prefer_small_mu_magnitude():
    # at a quarter turn every mu gives p = 1/2, so the whole profile is flat
    inp = CalibrationInput(Phi=PHI + math.pi / 2)
    res = fit_mu(np.random.default_rng(0).binomial(300, 0.5, 200), inp)
    assert np.ptp(res.ks_profile[np.isfinite(res.ks_profile)]) == 0
    assert res.mu == 0.0


def test_unacceptable_fit():
    bimodal = np.concatenate([np.full(500, 40), np.full(500, 250)])
    res = fit_mu(bimodal, CalibrationInput())
    assert not res.accepted
    with pytest.raises(NoAcceptableMu) as info:
        fit_mu(bimodal, CalibrationInput(), strict=True)
    assert info.value.result.mu == res.mu


def test_fit_input_validation():
    with pytest.raises(EmptySample):
        fit_mu([], CalibrationInput())
    with pytest.raises(ValueError):
        fit_mu([1.5, 3], CalibrationInput())
    with pytest.raises(ValueError):
        CalibrationInput(mu_lo=-1.5)
    with pytest.raises(ValueError):
        CalibrationInput(alpha=1.0)


def test_model_data_passes_its_own_test():
    p = p_bar(3.0, PHASE, PHI, 0.04, 0.76)
    bound = kolmogorov_bound(0.95, 1000)
    rng = np.random.default_rng(123)
    passed = [ks_statistic(rng.binomial(300, p, 1000), 300, p) < bound for _ in range(200)]
    assert np.mean(passed) >= 0.95 - 0.03


def test_sweep_flags_rows_without_instrument_width():
    # mu held at >= 0.5 so nu cannot shrink with n; then sigma drops below 1/2
    table = sigma_s_vs_n_sweep(CalibrationInput(N=200, mu_lo=0.5), [3000], [1])
    assert table.flagged.tolist() == [True]
    assert table.sigma_s[0] <= 0


@pytest.mark.slow
def test_sweep_trend_and_endpoints():
    ns = [300, 500, 700, 1000]
    table = sigma_s_vs_n_sweep(CalibrationInput(), ns, seeds=range(5))
    n_sorted, mu_med, ss_med = table.median_by_n()
    assert list(n_sorted) == ns
    assert np.all(np.diff(ss_med) < 0)
    assert ss_med[0] == pytest.approx(0.845, abs=0.03)
    assert ss_med[-1] == pytest.approx(0.176, abs=0.03)
    assert mu_med[-1] == pytest.approx(0.36, abs=0.03)
