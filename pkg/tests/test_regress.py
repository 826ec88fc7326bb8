import itertools
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.linalg import hadamard

from sparsepred.errors import CapabilityError, DomainError
from sparsepred.numcore import SeededStream
from sparsepred.priors import slab_exp_moment
from sparsepred.regress import (
    GaussianMixture,
    LaplaceSlab,
    ModelSizePrior,
    RegressionPrior,
    RegressionProblem,
    UniformSlab,
    bound_lemma13,
    design_diagnostics,
    direct_log_predictive,
    evaluate_draw,
    kl_moment_bound,
    kl_pred_regression,
    load_design_csv,
    marginal_bound_audit,
    max_feasible_R,
    normalize_design,
    phi_tilde,
    point_mass_predictive,
    point_posterior,
    random_problem,
    regression_predictive,
    subset_log_marginal,
    subset_posterior,
    theorem7_rate_check,
    tv_distance_1d,
    tv_risk,
    uniform_slab_bound,
)
from sparsepred.regress.marginal import laplace_log_marginal, uniform_log_marginal

# scipy dblquad over the four quadrants of the defining integral, relative tolerance 1e-13
X_2D = np.array([[1.0, 0.3], [-0.5, 1.2], [0.8, -0.4], [1.5, 0.9], [-1.1, 0.2]])
Y_2D = np.array([0.7, 1.9, -0.3, 2.2, -0.8])
LAPLACE_2D = -7.633850130629723


def _prior(p, slab, R=None, a=1.0):
    R = p if R is None else R
    return RegressionPrior(slab, ModelSizePrior.complexity(p, R, a, 1.0))


def test_normalize_design_postcondition():
    X = np.random.default_rng(0).normal(size=(30, 5)) * np.arange(1, 6)
    Z = normalize_design(X)
    np.testing.assert_allclose(np.linalg.norm(Z, axis=0), math.sqrt(30), rtol=0, atol=1e-12)
    np.testing.assert_allclose(normalize_design(Z), Z, atol=1e-14)


def test_normalize_design_ones_column_unchanged():
    np.testing.assert_array_equal(normalize_design(np.ones((4, 1))), np.ones((4, 1)))


@pytest.mark.parametrize("X", [np.zeros((3, 2)), np.ones(3)])
def test_normalize_design_rejects(X):
    with pytest.raises(DomainError):
        normalize_design(X)


def test_load_design_csv(tmp_path):
    path = tmp_path / "design.csv"
    path.write_text("a,b\n1,2\n3,4.5\n", encoding="utf-8")
    header, X = load_design_csv(path)
    assert header == ["a", "b"]
    np.testing.assert_array_equal(X, [[1, 2], [3, 4.5]])
    path.write_text("a,b\n1,x\n", encoding="utf-8")
    with pytest.raises(DomainError):
        load_design_csv(path)


def test_problem_shapes_checked():
    with pytest.raises(DomainError):
        RegressionProblem(np.ones((4, 2)), np.ones((1, 3)), np.zeros(2))


def test_complexity_prior_sandwich():
    size = ModelSizePrior.complexity(20, 6, a=2.0, c=1.0)
    assert np.exp(size.log_pmf).sum() == pytest.approx(1.0)
    assert size.satisfies_sandwich(20, 1.0, 1.0, 2.0, 2.0)
    assert not size.satisfies_sandwich(20, 1.0, 1.0, 3.0, 3.0)
    assert size.tail_mass_beyond(6) == 0.0


def test_empty_support_marginal():
    Y = np.array([0.5, -1.0, 2.0])
    expected = float(np.sum(-0.5 * Y ** 2 - 0.5 * math.log(2 * math.pi)))
    for slab in (UniformSlab(1.0), LaplaceSlab(1.0)):
        assert subset_log_marginal(Y, np.ones((3, 2)), (), slab) == pytest.approx(expected, abs=1e-13)


@pytest.mark.parametrize("lam", [0.2, 1.0, 4.0])
def test_single_column_reduces_to_univariate_moment(lam):
    prob = random_problem(40, 3, 1, 1, SeededStream(4), magnitude=1.0)
    Y = prob.draw_y(np.random.default_rng(1))
    x = prob.X[:, 1]
    n = len(Y)
    gap = (subset_log_marginal(Y, prob.X, (1,), LaplaceSlab(lam))
           - subset_log_marginal(Y, prob.X, (), LaplaceSlab(lam)))
    assert gap == pytest.approx(slab_exp_moment(lam / math.sqrt(n), x @ Y / math.sqrt(n), 1.0), abs=1e-8)


def test_two_dimensional_laplace_oracle():
    val = laplace_log_marginal(Y_2D, X_2D, (0, 1), 1.3)
    assert val == pytest.approx(LAPLACE_2D, rel=1e-9)


def test_two_dimensional_laplace_against_dblquad_in_test():
    lam = 0.8
    X, Y = X_2D, Y_2D - 0.5
    A, b = X.T @ X, X.T @ Y
    f = lambda u, v: math.exp(-0.5 * np.array([u, v]) @ A @ np.array([u, v]) + b @ [u, v]
                              - lam * (abs(u) + abs(v)))
    total = sum(integrate.dblquad(f, lo0, hi0, lo1, hi1, epsabs=0, epsrel=1e-11)[0]
                for lo0, hi0 in [(-12, 0), (0, 12)] for lo1, hi1 in [(-12, 0), (0, 12)])
    ref = math.log(total) + 2 * math.log(lam / 2) - 0.5 * Y @ Y - 0.5 * len(Y) * math.log(2 * math.pi)
    assert laplace_log_marginal(Y, X, (0, 1), lam) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("s", [2, 4])
def test_laplace_below_uniform_and_converges_as_lambda_shrinks(s):
    prob = random_problem(50, 6, s, 1, SeededStream(12), magnitude=1.5)
    Y = prob.draw_y(np.random.default_rng(3))
    S = tuple(range(s))
    gaps = []
    for lam in (1.0, 1e-2, 1e-4):
        lap = laplace_log_marginal(Y, prob.X, S, lam)
        uni = uniform_log_marginal(Y, prob.X, S, lam)
        assert lap <= uni + 1e-10
        gaps.append(abs(uni - lap) / abs(uni))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_laplace_marginal_size_cap():
    X = np.random.default_rng(0).normal(size=(40, 13))
    with pytest.raises(CapabilityError):
        laplace_log_marginal(np.zeros(40), X, tuple(range(13)), 1.0)


def test_rank_deficient_support():
    X = np.random.default_rng(0).normal(size=(10, 2))
    X = np.c_[X, X[:, 0]]
    with pytest.raises(DomainError):
        subset_log_marginal(np.zeros(10), X, (0, 2), UniformSlab(1.0))


def test_single_predictor_posterior_matches_closed_form():
    prob = random_problem(25, 1, 1, 1, SeededStream(2), magnitude=0.4)
    Y = prob.draw_y(np.random.default_rng(5))
    lam, n = 0.6, 25
    prior = _prior(1, UniformSlab(lam))
    post = subset_posterior(Y, prob.X, prior)
    xy = prob.X[:, 0] @ Y
    log_bf = math.log(lam / 2) + 0.5 * math.log(2 * math.pi / n) + xy ** 2 / (2 * n)
    log_prior_odds = prior.size.log_pmf[1] - prior.size.log_pmf[0]
    expected = 1.0 / (1.0 + math.exp(-(log_bf + log_prior_odds)))
    assert post.mass_on((0,)) == pytest.approx(expected, abs=1e-12)
    assert post.weights.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_strong_single_predictor(seed):
    prob = random_problem(60, 10, 0, 1, SeededStream(7, seed))
    prob = RegressionProblem(prob.X, prob.X_new, np.r_[5.0, np.zeros(9)])
    Y = prob.draw_y(np.random.default_rng(seed))
    post = subset_posterior(Y, prob.X, _prior(10, UniformSlab(math.sqrt(60) / 10), a=2.5))
    assert post.mass_on((0,)) >= 0.9


def test_posterior_invariant_under_column_permutation():
    prob = random_problem(30, 5, 2, 1, SeededStream(3), magnitude=1.0)
    Y = prob.draw_y(np.random.default_rng(0))
    perm = np.array([3, 0, 4, 1, 2])
    prior = _prior(5, UniformSlab(0.5))
    a = subset_posterior(Y, prob.X, prior).entries
    b = subset_posterior(Y, prob.X[:, perm], prior).entries
    for S, lw in b.items():
        assert a[tuple(sorted(perm[list(S)]))] == pytest.approx(lw, abs=1e-10)


def test_laplace_pruning_keeps_mass():
    prob = random_problem(30, 5, 2, 1, SeededStream(9), magnitude=1.0)
    Y = prob.draw_y(np.random.default_rng(4))
    prior = _prior(5, LaplaceSlab(0.5), a=1.0)
    pruned = subset_posterior(Y, prob.X, prior)
    full = subset_posterior(Y, prob.X, prior, prune_tol=1e-300)
    assert len(full) == 2 ** 5
    assert pruned.log_neglected < math.log(1e-6)
    for S, w in zip(pruned.supports, pruned.weights):
        assert w == pytest.approx(full.mass_on(S), rel=1e-5)


def test_enumeration_budget():
    assert max_feasible_R(20) == 13
    X = np.random.default_rng(0).normal(size=(40, 30))
    with pytest.raises(CapabilityError):
        subset_posterior(np.zeros(40), X, _prior(30, UniformSlab(1.0), R=12))


def test_single_support_predictive_is_gaussian():
    prob = random_problem(20, 4, 2, 1, SeededStream(5), magnitude=1.0)
    Y = prob.draw_y(np.random.default_rng(0))
    dens = regression_predictive(Y, prob.X, prob.X_new, None, posterior=point_posterior((0, 2)))
    assert dens.total_mass() == pytest.approx(1.0, abs=1e-6)
    XS, xs = prob.X[:, [0, 2]], prob.X_new[:, [0, 2]]
    bhat = np.linalg.solve(XS.T @ XS, XS.T @ Y)
    var = 1.0 + xs @ np.linalg.solve(XS.T @ XS, xs.T)
    t = 0.4
    expected = -0.5 * (t - (xs @ bhat)[0]) ** 2 / var[0, 0] - 0.5 * math.log(2 * math.pi * var[0, 0])
    assert dens(np.array([t])) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("m", [1, 3])
def test_null_support_predictive(m):
    X_new = np.ones((m, 4))
    dens = regression_predictive(np.zeros(6), np.ones((6, 4)), X_new, None, posterior=point_posterior(()))
    assert dens(np.zeros(m)) == pytest.approx(-0.5 * m * math.log(2 * math.pi), abs=1e-13)


def test_mixture_matches_direct_marginal_ratio_uniform():
    prob = random_problem(20, 3, 2, 1, SeededStream(5), magnitude=0.7)
    Y = prob.draw_y(np.random.default_rng(2))
    prior = _prior(3, UniformSlab(0.5))
    dens = regression_predictive(Y, prob.X, prob.X_new, prior)
    assert dens.total_mass() == pytest.approx(1.0, abs=1e-6)
    for t in (-1.0, 0.3, 2.0):
        assert dens(np.array(t)) == pytest.approx(direct_log_predictive(Y, prob.X, prob.X_new, t, prior),
                                                  abs=1e-6)


def test_mixture_matches_direct_marginal_ratio_laplace():
    prob = random_problem(20, 3, 1, 1, SeededStream(5), magnitude=0.7)
    Y = prob.draw_y(np.random.default_rng(2))
    prior = _prior(3, LaplaceSlab(0.5))
    dens = regression_predictive(Y, prob.X, prob.X_new, prior, stream=SeededStream(9), is_draws=20_000)
    assert dens.total_mass() == pytest.approx(1.0, abs=1e-6)
    for t in (-1.0, 0.3, 2.0):
        # importance sampling error only; the identity itself is exact
        assert dens(np.array(t)) == pytest.approx(direct_log_predictive(Y, prob.X, prob.X_new, t, prior),
                                                  abs=5e-3)


def test_multivariate_predictive_covariances_positive_definite():
    prob = random_problem(30, 5, 2, 3, SeededStream(6), magnitude=1.0)
    Y = prob.draw_y(np.random.default_rng(1))
    dens = regression_predictive(Y, prob.X, prob.X_new, _prior(5, UniformSlab(0.4)))
    mix = dens.provenance["mixture"]
    assert isinstance(mix, GaussianMixture) and mix.m == 3
    full = ~mix.unit_mask()
    diag = np.diagonal(mix.chols[full], axis1=1, axis2=2)
    assert np.all(diag >= 1.0 - 1e-12)   # I_m plus a PSD term
    draws = mix.sample(np.random.default_rng(0), 5)
    assert draws.shape == (5, 3) and np.all(np.isfinite(dens(draws)))


def test_point_mass_posterior_has_zero_kl():
    prob = random_problem(20, 4, 2, 1, SeededStream(1), magnitude=1.0)
    est = kl_pred_regression(prob, _prior(4, UniformSlab(0.5)), 3, SeededStream(2),
                             predictive_fn=lambda Y: point_mass_predictive(prob.X_new, prob.beta0))
    assert est.value == pytest.approx(0.0, abs=1e-12)


def test_kl_bound_dominates_every_draw():
    prob = random_problem(40, 8, 2, 1, SeededStream(11), magnitude=1.0)
    prior = _prior(8, UniformSlab(math.sqrt(40) / 8))
    est = kl_pred_regression(prob, prior, 15, SeededStream(12))
    assert all(b >= k for b, k in zip(est.extra["kl_bound"], est.extra["per_draw"]))
    assert all(k >= -1e-10 for k in est.extra["per_draw"])


def test_kl_bound_for_point_predictive():
    X_new = np.array([[1.0, 2.0]])
    beta0 = np.array([0.5, -0.5])
    dens = point_mass_predictive(X_new, beta0 + np.array([0.1, 0.0]))
    assert kl_moment_bound(dens, X_new, beta0) == pytest.approx(0.5 * 0.01 + 0.1)


def test_kl_estimate_reproducible_across_seeds():
    prob = random_problem(60, 20, 3, 1, SeededStream(21), magnitude=1.0)
    prior = _prior(20, UniformSlab(math.sqrt(60) / 20), R=4)
    a = kl_pred_regression(prob, prior, 12, SeededStream(1))
    b = kl_pred_regression(prob, prior, 12, SeededStream(2))
    assert abs(a.value - b.value) <= 3 * math.hypot(a.mc_se, b.mc_se)


def test_multivariate_kl_by_monte_carlo():
    prob = random_problem(30, 4, 1, 2, SeededStream(13), magnitude=1.0)
    res = evaluate_draw(prob, _prior(4, UniformSlab(0.5)), SeededStream(14), with_tv=False)
    assert res.kl_se > 0 and res.kl > -3 * res.kl_se
    assert res.kl_bound >= res.kl


def test_tv_of_identical_densities():
    f = lambda t: -0.5 * np.asarray(t) ** 2 - 0.5 * math.log(2 * math.pi)
    assert tv_distance_1d(f, f, -12, 12) == pytest.approx(0.0, abs=1e-15)
    g = lambda t: -0.5 * (np.asarray(t) - 40.0) ** 2 - 0.5 * math.log(2 * math.pi)
    assert tv_distance_1d(f, g, -12, 60) == pytest.approx(1.0, abs=1e-12)


def test_tv_between_shifted_gaussians():
    from scipy import stats
    f = lambda t: stats.norm.logpdf(t)
    g = lambda t: stats.norm.logpdf(t, loc=1.0)
    assert tv_distance_1d(f, g, -12, 13) == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-10)


def test_tv_risk_pinsker_and_range():
    prob = random_problem(30, 5, 1, 1, SeededStream(15), magnitude=1.0)
    est = tv_risk(prob, _prior(5, UniformSlab(0.4)), 8, SeededStream(16))
    tv, kl = np.array(est.extra["per_draw"]), np.array(est.extra["kl"])
    assert np.all((tv >= 0) & (tv <= 1))
    assert np.all(tv <= np.sqrt(np.maximum(kl, 0) / 2) + 1e-10)


def test_orthogonal_design_diagnostics():
    X = hadamard(8)[:, :4].astype(float)
    diag = design_diagnostics(X, [0, 1])
    assert diag.phi_S0 == pytest.approx(1.0, abs=1e-6)
    assert all(v == pytest.approx(1.0, abs=1e-12) for v in diag.phi_tilde.values())


def test_duplicated_column_has_zero_phi_tilde():
    X = np.random.default_rng(0).normal(size=(12, 3))
    assert phi_tilde(np.c_[X, X[:, 1]], 2) == pytest.approx(0.0, abs=1e-7)


def test_phi_tilde_matches_svd_enumeration():
    X = normalize_design(np.random.default_rng(3).normal(size=(60, 15)))
    oracle = min(np.linalg.svd(X[:, list(S)], compute_uv=False)[-1]
                 for S in itertools.combinations(range(15), 3)) / math.sqrt(60)
    assert phi_tilde(X, 3) == pytest.approx(oracle, rel=1e-10)


def test_phi_tilde_budget():
    X = np.random.default_rng(0).normal(size=(10, 40))
    with pytest.raises(CapabilityError):
        phi_tilde(X, 10)


def test_uniform_slab_bound_formula():
    expected = 3 * math.log(math.e * 20 ** 2) + 1.5 * math.log((2 / math.pi) * 70)
    assert uniform_slab_bound(60, 10, 20, 3, 1.0, 1.0, 1.0) == pytest.approx(expected, abs=1e-12)
    vals = [uniform_slab_bound(60, 10, 20, s, 1.0, 1.0, 1.0) for s in range(1, 6)]
    assert np.all(np.diff(vals) > 0)


def test_bound_lemma13_small_audit():
    rep = bound_lemma13(30, 1, 6, 1, math.sqrt(30) / 6, 1.0, 1.0, audit=True, instances=2, draws=4,
                        stream=SeededStream(3))
    assert rep.satisfied and rep.extra["all_satisfied"]
    assert not math.isnan(bound_lemma13(30, 1, 6, 1, 1.0, 1.0, 1.0).bound_value)


def test_marginal_bounds_null_support():
    prob = RegressionProblem(normalize_design(np.random.default_rng(0).normal(size=(20, 4))),
                             np.ones((1, 4)), np.zeros(4))
    lb, ub = marginal_bound_audit(prob, 0.5, draws=10, stream=SeededStream(1))
    assert lb.satisfied and lb.extra["per_draw_satisfied"] == 10
    assert lb.observed_value == pytest.approx(0.0, abs=1e-12)
    assert ub.bound_value == 0.0 and ub.satisfied


def test_null_model_rate_check_far_below_scale():
    rows = theorem7_rate_check(((30, 6, 0),), draws=3, stream=SeededStream(1))
    assert rows[0].s_n == 0
    assert rows[0].sup_risk < 0.01 * rows[0].theoretical_scale
