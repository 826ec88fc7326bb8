import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sparsepred.errors import DomainError, UsageError
from sparsepred.priors import (
    SLAB_DENOM,
    SPIKE_DENOM,
    SSL,
    DiracLaplaceSS,
    DiracSpike,
    HierarchicalSS,
    Laplace,
    PredictionContext,
    component_moment,
    log_N,
    marginal_likelihood,
    mixing_weight,
    prior_moment,
    slab_exp_moment,
    ssl_log_ratio,
)

# mpmath quadrature of the defining integrals, 30 digits
LOG_R1 = -0.42208311180459076
SLAB_2_3_HALF = 0.65079104609412505
LOG_N_SLAB_DENOM = 0.5483402806137717
LOG_N_SPIKE_DENOM = 0.86253240628716092


def _slab_moment_quad(lam, c, v):
    # adaptive quadrature of the defining integral, split at the kink
    f = lambda mu: math.exp(mu * c - mu ** 2 / (2 * v) - lam * abs(mu)) * lam / 2
    total = sum(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13)[0]
                for lo, hi in [(-np.inf, 0.0), (0.0, np.inf)])
    return math.log(total)


def test_context_rejects_bad_values():
    with pytest.raises(DomainError):
        PredictionContext(0.0)
    with pytest.raises(DomainError):
        PredictionContext(1.0, n=5, s_n=6)
    assert PredictionContext(2.0).v == pytest.approx(2 / 3)


def test_context_rate():
    ctx = PredictionContext(1.0, n=100, s_n=10)
    assert ctx.rate == pytest.approx(10 * math.log(10) / 2)
    assert PredictionContext(1.0, n=100).rate == 0.0


@pytest.mark.parametrize("make", [
    lambda: Laplace(0.0),
    lambda: DiracLaplaceSS(1.0, 1.5),
    lambda: SSL(1.0, 2.0, 0.5),
    lambda: HierarchicalSS(1.0, -1.0, 2.0),
])
def test_prior_validation(make):
    with pytest.raises(DomainError):
        make()


def test_slab_moment_at_zero_is_log_mills():
    assert slab_exp_moment(1.0, 0.0, 1.0) == pytest.approx(LOG_R1, abs=1e-14)


def test_slab_moment_oracle():
    assert slab_exp_moment(2.0, 3.0, 0.5) == pytest.approx(SLAB_2_3_HALF, abs=1e-9)


@pytest.mark.parametrize("lam, c, v", [(0.3, -2.0, 1.0), (4.0, 7.5, 0.2), (1.0, 0.0, 2 / 3)])
def test_slab_moment_matches_quadrature(lam, c, v):
    assert slab_exp_moment(lam, c, v) == pytest.approx(_slab_moment_quad(lam, c, v), abs=1e-8)


@given(st.floats(0.05, 20.0), st.floats(-50.0, 50.0), st.floats(0.01, 1.0))
def test_slab_moment_symmetric(lam, c, v):
    assert slab_exp_moment(lam, c, v) == pytest.approx(slab_exp_moment(lam, -c, v), abs=1e-12)


def test_slab_moment_large_argument_finite():
    vals = slab_exp_moment(1.0, np.array([-3000.0, 3000.0]), 0.5)
    assert np.all(np.isfinite(vals))


@pytest.mark.parametrize("v", [0.0, 1.5])
def test_slab_moment_rejects_bad_v(v):
    with pytest.raises(DomainError):
        slab_exp_moment(1.0, 0.0, v)


def test_marginal_of_spike_at_zero():
    assert marginal_likelihood(DiracSpike(), 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_marginal_of_laplace_at_zero():
    expected = -0.5 * math.log(2 * math.pi) + LOG_R1
    assert marginal_likelihood(Laplace(1.0), 0.0) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("lam", [0.1, 1.0, 5.0])
def test_laplace_marginal_integrates_to_one(lam):
    x = np.linspace(-80 - 20 / lam, 80 + 20 / lam, 200_001)
    mass = np.trapezoid(np.exp(marginal_likelihood(Laplace(lam), x)), x)
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_marginal_composes_slab_moment():
    x = np.linspace(-10, 10, 41)
    lhs = marginal_likelihood(Laplace(0.7), x)
    rhs = -0.5 * x ** 2 - 0.5 * math.log(2 * math.pi) + slab_exp_moment(0.7, x, 1.0)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_component_moment_rejects_mixture():
    with pytest.raises(UsageError):
        component_moment(DiracLaplaceSS(1.0, 0.5), 0.0)


def test_prior_moment_mixture_extremes():
    c = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(prior_moment(DiracLaplaceSS(1.3, 1.0), c), slab_exp_moment(1.3, c))
    np.testing.assert_allclose(prior_moment(DiracLaplaceSS(1.3, 0.0), c), 0.0)


@pytest.mark.parametrize("eta, d, expected", [
    (0.3, 0.0, 0.3),
    (1.0, -5.0, 1.0),
    (0.0, 5.0, 0.0),
    (0.5, math.log(3), 0.75),
])
def test_mixing_weight_values(eta, d, expected):
    assert mixing_weight(eta, d, 0.0) == pytest.approx(expected, abs=1e-15)


@given(st.floats(0.01, 0.99), st.floats(-30, 30), st.floats(0.0, 5.0))
def test_mixing_weight_monotone(eta, d, step):
    assert mixing_weight(eta, d + step, 0.0) >= mixing_weight(eta, d, 0.0)
    assert mixing_weight(min(eta + 0.005, 1.0), d, 0.0) >= mixing_weight(eta, d, 0.0)


def test_log_N_laplace_is_slab_moment():
    c = 0.3 / math.sqrt(0.5) + 1.0 / 0.5
    assert log_N(Laplace(1.0), 1.0, 0.5, 0.3) == pytest.approx(slab_exp_moment(1.0, c, 0.5))
    with pytest.raises(UsageError):
        log_N(Laplace(1.0), 1.0, 0.5, 0.3, SPIKE_DENOM)


@pytest.mark.parametrize("orientation, expected", [
    (SLAB_DENOM, LOG_N_SLAB_DENOM),
    (SPIKE_DENOM, LOG_N_SPIKE_DENOM),
])
def test_log_N_dirac_oracle(orientation, expected):
    val = log_N(DiracLaplaceSS(1.0, 0.5), 1.0, 0.5, 0.3, orientation)
    assert val == pytest.approx(expected, abs=1e-9)


def test_log_N_degenerate_eta():
    z = np.linspace(-3, 3, 7)
    np.testing.assert_array_equal(log_N(DiracLaplaceSS(1.0, 1.0), 0.5, 0.5, z), 0.0)
    np.testing.assert_array_equal(log_N(DiracLaplaceSS(1.0, 0.0), 0.5, 0.5, z, SPIKE_DENOM), 0.0)
    with pytest.raises(DomainError):
        log_N(DiracLaplaceSS(1.0, 0.0), 0.5, 0.5, z)
    with pytest.raises(DomainError):
        log_N(DiracLaplaceSS(1.0, 1.0), 0.5, 0.5, z, SPIKE_DENOM)


def test_log_N_rejects_hierarchical():
    with pytest.raises(UsageError):
        log_N(HierarchicalSS(1.0, 2.0, 3.0), 0.0, 0.5, 0.0)


@settings(max_examples=50)
@given(st.floats(0.1, 10.0), st.floats(0.01, 0.99), st.floats(-8, 8), st.floats(0.05, 1.0),
       st.floats(-6, 6))
def test_spike_denominator_form_at_least_one(lam, eta, theta, v, z):
    for prior in (DiracLaplaceSS(lam, eta), SSL(lam + 5.0, lam, eta)):
        assert log_N(prior, theta, v, z, SPIKE_DENOM) >= 0.0
        assert log_N(prior, theta, v, z, SLAB_DENOM) >= 0.0


@pytest.mark.parametrize("lam0, lam1, v", [(10.0, 0.5, 1.0), (20.0, 0.1, 2 / 3), (5.0, 1.0, 0.3)])
def test_ssl_ratio_peaks_at_zero_and_is_even(lam0, lam1, v):
    x = np.linspace(-10, 10, 2001)
    ratio = ssl_log_ratio(lam0, lam1, x, v)
    assert x[np.argmax(ratio)] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(ratio, ratio[::-1], atol=1e-12)
