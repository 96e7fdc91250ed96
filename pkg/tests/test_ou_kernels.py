import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ouspot.errors import ParameterDomainError, StepSizeError
from ouspot.ou_kernels import (
    EXACT_KINDS,
    GaussianOuParams,
    GouParams,
    GouSamplerKind,
    StepwiseIntensity,
    SymBgouParams,
    euler_step_chf,
    factor_path_moments,
    gaussian_ou_chf,
    gaussian_ou_step,
    gou_chf,
    gou_increments,
    gou_step,
    intensity_on_grid,
    polya_erlang_mixture_chf,
    sample_gou_euler,
    sample_gou_jumptime,
    sample_gou_polya,
    sample_gou_randomrate,
    sample_sym_bgou_jumptime,
    sample_sym_bgou_polya,
    sample_sym_bgou_randomrate,
    seasonal_intensity,
    simulate_factor,
    sym_bgou_chf,
    sym_bgou_increments,
)
from ouspot.validation import U_POINTS, chf_deviation
from ouspot.variates import RngStream

GOU = GouParams(50.0, 20.0, 10.0)
SYM = SymBgouParams(50.0, 40.0, 20.0)


def levy_khintchine_log_chf(u, t, k, lam, beta):
    """Independent oracle: lam * int_0^t (beta / (beta - i u e^{-k s}) - 1) ds by quadrature."""
    def f(s):
        return beta / (beta - 1j * u * math.exp(-k * s)) - 1.0
    re = integrate.quad(lambda s: f(s).real, 0.0, t, epsabs=1e-13, epsrel=1e-13)[0]
    im = integrate.quad(lambda s: f(s).imag, 0.0, t, epsabs=1e-13, epsrel=1e-13)[0]
    return lam * complex(re, im)


# --- closed forms ------------------------------------------------------------

def test_gou_chf_at_zero_is_one():
    assert gou_chf(0.0, 0.7, GOU) == pytest.approx(1.0)
    assert sym_bgou_chf(0.0, 0.7, SYM) == pytest.approx(1.0)


@pytest.mark.parametrize("params,t", [((1.0, 1.0, 1.0), 1.0), ((50.0, 20.0, 10.0), 0.1),
                                      ((3.0, 0.5, 2.0), 2.0)])
def test_gou_chf_matches_quadrature(params, t):
    for u in (0.3, 1.0, 4.0):
        exact = gou_chf(u, t, GouParams(*params))
        oracle = np.exp(levy_khintchine_log_chf(u, t, *params))
        assert abs(exact - oracle) < 1e-10


def test_gou_chf_trivial_scale_value():
    # frozen from the quadrature oracle at u=1, t=1, (k, lam, beta)=(1, 1, 1);
    # it equals (1 - i/e) / (1 - i)
    value = complex(gou_chf(1.0, 1.0, GouParams(1.0, 1.0, 1.0)))
    assert value.real == pytest.approx(0.6839397205857212, abs=1e-12)
    assert value.imag == pytest.approx(0.31606027941427883, abs=1e-12)


def test_gou_chf_long_horizon_is_gamma():
    u = np.array([0.5, 2.0, 7.0])
    stationary = (GOU.beta / (GOU.beta - 1j * u)) ** (GOU.lam / GOU.k)
    np.testing.assert_allclose(gou_chf(u, 10.0, GOU), stationary, atol=1e-12)


def test_gou_chf_carries_starting_point():
    p = GouParams(2.0, 1.0, 3.0, y0=1.5)
    u, t = 0.8, 0.4
    expected = np.exp(1j * u * 1.5 * math.exp(-2.0 * t)) * gou_chf(u, t, GouParams(2.0, 1.0, 3.0))
    assert abs(gou_chf(u, t, p) - expected) < 1e-14


@settings(max_examples=50, deadline=None)
@given(u=st.floats(-30, 30), t=st.floats(1e-3, 2.0), k=st.floats(0.5, 80), lam=st.floats(0, 60),
       beta=st.floats(1.5, 30))
def test_sym_chf_is_product_of_legs(u, t, k, lam, beta):
    sym = sym_bgou_chf(u, t, SymBgouParams(k, lam, beta))
    leg = GouParams(k, lam / 2.0, beta)
    product = gou_chf(u, t, leg) * gou_chf(-u, t, leg)
    assert abs(sym - product) < 1e-10
    assert abs(complex(sym).imag) < 1e-12


def test_polya_erlang_identity():
    for a in (0.05, 0.5, 0.95):
        for alpha in (0.3, 1.0, 6.0):
            u = np.array([0.5, 3.0, 10.0])
            exact = ((4.0 - 1j * a * u) / (4.0 - 1j * u)) ** alpha
            np.testing.assert_allclose(polya_erlang_mixture_chf(u, a, alpha, 4.0, terms=600), exact,
                                       atol=1e-8)


def test_gaussian_ou_chf_moments():
    p = GaussianOuParams(67.0, 0.25, 0.1)
    t, u = 0.05, 1.3
    a = math.exp(-67.0 * t)
    var = 0.0625 * (1 - a * a) / 134.0
    assert abs(gaussian_ou_chf(u, t, p) - np.exp(1j * u * 0.1 * a - 0.5 * u * u * var)) < 1e-15


# --- Gaussian OU step ------------------------------------------------------------

def test_gaussian_step_without_noise_is_deterministic():
    rng = RngStream(1)
    x = gaussian_ou_step(GaussianOuParams(67.0, 0.0), 0.3, 0.01, rng)
    assert x == pytest.approx(0.3 * math.exp(-0.67), rel=1e-15)


def test_gaussian_step_innovation_variance():
    p = GaussianOuParams(67.0, 0.25)
    dt = 1 / 365
    x = np.array([gaussian_ou_step(p, 0.0, dt, RngStream(2, i)) for i in range(40_000)])
    var = 0.0625 * (1 - math.exp(-2 * 67 * dt)) / (2 * 67)
    assert abs(x.var() - var) < 5 * var * math.sqrt(2 / x.size)
    assert stats.kstest(x / math.sqrt(var), "norm").pvalue > 0.001


def test_gaussian_step_rejects_bad_dt():
    with pytest.raises(ParameterDomainError):
        gaussian_ou_step(GaussianOuParams(1.0, 1.0), 0.0, 0.0, RngStream(0))


# --- GOU samplers: boundaries -----------------------------------------------

@pytest.mark.parametrize("sampler", [sample_gou_jumptime, sample_gou_polya, sample_gou_randomrate])
def test_zero_intensity_gives_zero_increment(sampler):
    assert sampler(GouParams(5.0, 0.0, 2.0), 0.5, RngStream(1)) == 0.0


@pytest.mark.parametrize("sampler", [sample_sym_bgou_jumptime, sample_sym_bgou_polya,
                                     sample_sym_bgou_randomrate])
def test_zero_intensity_gives_zero_sym_increment(sampler):
    assert sampler(SymBgouParams(5.0, 0.0, 2.0), 0.5, RngStream(1)) == 0.0


def test_polya_tiny_step_is_almost_surely_zero():
    x = gou_increments("polya", GouParams(1.0, 1.0, 1.0), 1e-12, 10_000, seed=3)
    assert np.all(x == 0.0)


@pytest.mark.parametrize("kind", EXACT_KINDS)
def test_increments_are_nonnegative(kind):
    x = gou_increments(kind, GOU, 0.1, 50_000, seed=5)
    assert x.min() >= 0.0


def test_polya_probability_of_no_jump_contribution():
    # P(Y=0) = a**alpha for a Polya count with p = 1 - a
    k, lam, beta, dt = 1.0, 2.0, 5.0, 0.5
    n = 200_000
    x = gou_increments("polya", GouParams(k, lam, beta), dt, n, seed=6)
    p0 = math.exp(-k * dt) ** (lam / k)
    assert abs(np.mean(x == 0) - p0) < 5 * math.sqrt(p0 * (1 - p0) / n)


def test_jumptime_mean_trivial_scale():
    n = 400_000
    x = gou_increments("jumptime", GouParams(1.0, 1.0, 1.0), 1.0, n, seed=7)
    assert abs(x.mean() - (1 - math.exp(-1))) < 5 * x.std() / math.sqrt(n)


def test_randomrate_mean_per_jump():
    # with lam dt jumps on average, E[Y] / (lam dt) = (1 - e^{-k dt}) / (beta k dt)
    k, lam, beta, dt = 5.0, 3.0, 2.0, 0.4
    n = 400_000
    x = gou_increments("randomrate", GouParams(k, lam, beta), dt, n, seed=8)
    per_jump = (1 - math.exp(-k * dt)) / (beta * k * dt)
    assert abs(x.mean() / (lam * dt) - per_jump) < 5 * x.std() / math.sqrt(n) / (lam * dt)


def test_sorting_jump_times_keeps_the_law():
    # the sorted variant consumes variates in another order, so compare laws
    p = GouParams(1.0, 30.0, 2.0)
    assert sample_gou_jumptime(p, 1.0, RngStream(9), sort_times=True) > 0.0
    n = 100_000
    a = gou_increments("jumptime", p, 1.0, n, seed=9)
    b = gou_increments("jumptime", p, 1.0, n, seed=10, sort_times=True)
    assert stats.ks_2samp(a, b).pvalue > 0.01
    assert chf_deviation(b, gou_chf(U_POINTS, 1.0, p)) < 4 / math.sqrt(n)


@pytest.mark.parametrize("kind", EXACT_KINDS)
def test_moments_from_chf_derivatives(kind):
    # mean and variance from finite differences of the log chf at u = 0
    params, dt, h = GouParams(3.0, 4.0, 2.0), 0.5, 1e-4
    logphi = [np.log(gou_chf(u, dt, params)) for u in (-h, 0.0, h)]
    mean = ((logphi[2] - logphi[0]) / (2 * h) / 1j).real
    var = (-(logphi[2] - 2 * logphi[1] + logphi[0]) / h**2).real
    n = 400_000
    x = gou_increments(kind, params, dt, n, seed=10)
    assert abs(x.mean() - mean) < 5 * math.sqrt(var / n)
    m4 = np.mean((x - x.mean()) ** 4)
    assert abs(x.var() - var) < 5 * math.sqrt((m4 - var**2) / n)


@pytest.mark.parametrize("kind", EXACT_KINDS)
def test_gou_chf_small_sample(kind):
    n = 200_000
    x = gou_increments(kind, GOU, 0.1, n, seed=11)
    assert chf_deviation(x, gou_chf(U_POINTS, 0.1, GOU)) < 4 / math.sqrt(n)


@pytest.mark.parametrize("kind", EXACT_KINDS)
def test_sym_chf_small_sample(kind):
    n = 200_000
    x = sym_bgou_increments(kind, SYM, 0.1, n, seed=12)
    assert chf_deviation(x, sym_bgou_chf(U_POINTS, 0.1, SYM)) < 4 / math.sqrt(n)
    assert abs(x.mean()) < 5 * x.std() / math.sqrt(n)


@pytest.mark.parametrize("dt", [1.0, 20.0])
def test_polya_long_step_follows_the_law(dt):
    # k*dt large enough that exp(-k*dt) is below 1e-12, or underflows to 0
    n = 200_000
    gou = GouParams(50.0, 20.0, 10.0)
    x = gou_increments(GouSamplerKind.POLYA, gou, dt, n, seed=13)
    assert chf_deviation(x, gou_chf(U_POINTS, dt, gou)) < 4 / math.sqrt(n)
    sym = SymBgouParams(50.0, 40.0, 20.0)
    x = sym_bgou_increments(GouSamplerKind.POLYA, sym, dt, n, seed=14)
    assert chf_deviation(x, sym_bgou_chf(U_POINTS, dt, sym)) < 4 / math.sqrt(n)


def test_independent_rate_variant_has_wrong_law():
    # drawing separate uniforms for the two legs breaks the joint law
    n = 400_000
    p = SymBgouParams(1.0, 4.0, 1.0)
    good = sym_bgou_increments("randomrate", p, 2.0, n, seed=13)
    bad = sym_bgou_increments("randomrate", p, 2.0, n, seed=13, shared_rate=False)
    u = np.array([0.5, 1.0, 2.0])
    exact = sym_bgou_chf(u, 2.0, p)
    assert chf_deviation(good, exact, u) < 4 / math.sqrt(n)
    assert chf_deviation(bad, exact, u) > 10 / math.sqrt(n)


def test_scalar_and_batch_increments_agree():
    batch = gou_increments("polya", GOU, 0.1, 20, seed=14)
    single = [sample_gou_polya(GOU, 0.1, RngStream(14, i)) for i in range(20)]
    np.testing.assert_allclose(batch, single, rtol=1e-15)


# --- chained steps -----------------------------------------------------------

def test_gou_step_from_zero_is_the_increment():
    for kind in EXACT_KINDS:
        a = gou_step(kind, GOU, 0.0, 0.1, RngStream(15, 0))
        b = gou_increments(kind, GOU, 0.1, 1, seed=15)[0]
        assert a == pytest.approx(b, rel=1e-14)


def test_gou_step_without_jumps_decays():
    p = GouParams(3.0, 0.0, 2.0)
    for kind in EXACT_KINDS:
        assert gou_step(kind, p, 2.0, 0.1, RngStream(1)) == pytest.approx(2.0 * math.exp(-0.3))
    # the Euler update decays linearly
    assert gou_step("euler", p, 2.0, 0.1, RngStream(1)) == pytest.approx(2.0 * (1 - 0.3))


@pytest.mark.parametrize("kind", EXACT_KINDS)
def test_two_half_steps_equal_one_step(kind):
    n = 200_000
    y = simulate_factor(kind, GOU, [0.05, 0.05], n, seed=16)
    assert chf_deviation(y, gou_chf(U_POINTS, 0.1, GOU)) < 4 / math.sqrt(n)


def test_stepwise_intensity_is_additive():
    # Y(t) with piecewise intensity: product of per-piece chfs propagated to t
    k, beta = 4.0, 2.0
    intensity = StepwiseIntensity([0.0, 0.3, 0.7, 1.0], [5.0, 20.0, 1.0])
    u = np.array([0.5, 1.0, 3.0])
    exact = np.ones(u.size, complex)
    for s0, s1, lam in intensity.segments(0.0, 1.0):
        exact *= gou_chf(u * math.exp(-k * (1.0 - s1)), s1 - s0, GouParams(k, lam, beta))
    n = 200_000
    y = simulate_factor("polya", GouParams(k, 0.0, beta), [0.3, 0.4, 0.3], n, seed=17,
                        intensity=intensity)
    assert chf_deviation(y, exact, u) < 4 / math.sqrt(n)


# --- Euler --------------------------------------------------------------------

def test_euler_step_chf_matches_samples():
    p, dt = GouParams(50.0, 20.0, 10.0), 0.01
    n = 200_000
    x = np.array([sample_gou_euler(p, 0.0, dt, RngStream(18, i)) for i in range(20_000)])
    u = np.array([1.0, 5.0, 20.0])
    assert chf_deviation(x, euler_step_chf(u, dt, p), u) < 4 / math.sqrt(x.size)
    y = gou_increments("euler", p, dt, n, seed=18)
    assert chf_deviation(y, euler_step_chf(u, dt, p), u) < 4 / math.sqrt(n)


def test_euler_rejects_large_steps():
    with pytest.raises(StepSizeError):
        sample_gou_euler(GouParams(1.0, 10.0, 1.0), 0.0, 0.1, RngStream(0))
    with pytest.raises(StepSizeError):
        gou_step("euler", GouParams(1.0, 10.0, 1.0), 0.0, 0.2, RngStream(0))
    with pytest.raises(StepSizeError):
        simulate_factor("euler", GouParams(1.0, 10.0, 1.0), [0.05, 0.2], 10, seed=0)


def test_euler_is_biased_on_paths():
    mean, var = factor_path_moments("euler", GOU, np.full(365, 1 / 365), 200_000, seed=19)
    t = np.arange(1, 366) / 365
    exact = GOU.lam / (GOU.k * GOU.beta) * (1 - np.exp(-GOU.k * t))
    assert np.max(np.abs(mean - exact) / np.sqrt(var / 200_000)) > 5


@pytest.mark.parametrize("kind", EXACT_KINDS)
def test_exact_path_moments_are_unbiased(kind):
    n = 100_000
    mean, var = factor_path_moments(kind, GOU, np.full(365, 1 / 365), n, seed=20)
    t = np.arange(1, 366) / 365
    exact = GOU.lam / (GOU.k * GOU.beta) * (1 - np.exp(-GOU.k * t))
    # 365 correlated checks: 5 SE is a loose family-wise bound
    assert np.max(np.abs(mean - exact) / np.sqrt(var / n)) < 5


# --- parameters and intensities ---------------------------------------------------

@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
def test_gou_params_domain(args):
    with pytest.raises(ParameterDomainError):
        GouParams(*args)


def test_gaussian_params_domain():
    with pytest.raises(ParameterDomainError):
        GaussianOuParams(0.0, 0.1)
    with pytest.raises(ParameterDomainError):
        GaussianOuParams(1.0, -0.1)


def test_sampler_kind_codes():
    assert [k.value for k in EXACT_KINDS] == ["jumptime", "polya", "randomrate"]
    assert not GouSamplerKind.EULER.exact
    with pytest.raises(ValueError):
        GouSamplerKind("milstein")


@settings(max_examples=50, deadline=None)
@given(values=st.lists(st.floats(0, 100), min_size=1, max_size=8), t=st.floats(0, 1.5))
def test_stepwise_integral_matches_quadrature(values, t):
    grid = np.linspace(0.0, 1.0, len(values) + 1)
    lam = StepwiseIntensity(grid, values)
    edges = np.unique(np.clip(np.append(grid, t), 0.0, t))
    oracle = sum(integrate.quad(lam.value_at, a, b)[0] for a, b in zip(edges[:-1], edges[1:]))
    assert lam.integral(t) == pytest.approx(oracle, abs=1e-9)


def test_stepwise_validation():
    with pytest.raises(ParameterDomainError):
        StepwiseIntensity([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ParameterDomainError):
        StepwiseIntensity([0.0, 0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ParameterDomainError):
        StepwiseIntensity([0.0, 1.0], [-1.0])


def test_seasonal_intensity_peak_and_integral():
    assert seasonal_intensity(0.25, 32.0, 2.0, 0.25) == pytest.approx(64.0)
    total, _ = integrate.quad(lambda s: float(seasonal_intensity(s, 32.0, 2.0, 0.25)), 0.0, 1.0,
                              limit=200)
    assert abs(total - 40.0) <= 2.0
    daily = intensity_on_grid(32.0, 2.0, 0.25, np.arange(366) / 365)
    assert daily.integral(1.0) == pytest.approx(total, rel=2e-3)
