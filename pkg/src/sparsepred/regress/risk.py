"""KL and total-variation prediction risk for sparse regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special

from ..errors import IntegrationError
from ..numcore import QuadratureRule, SeededStream, hermite_rule
from ..predictive import PredictiveDensity
from ..risk import RiskEstimate
from .posterior import subset_posterior
from .predictive import gaussian_log_pdf, regression_predictive
from .problem import RegressionPrior, RegressionProblem

Y_NEW_DRAWS = 10 ** 4
NORM_DRAWS = 4000


@dataclass
class DrawResult:
    kl: float
    kl_se: float
    tv: float | None
    kl_bound: float | None
    mass_S0: float | None
    warnings: list = field(default_factory=list)


def kl_to_truth(density: PredictiveDensity, mean0: np.ndarray, stream: SeededStream | None = None,
                rule: QuadratureRule | None = None, y_draws: int = Y_NEW_DRAWS) -> tuple[float, float]:
    """KL(N(mean0, I_m) || density): Gauss-Hermite when m = 1, Monte Carlo otherwise."""
    m = len(mean0)
    if m == 0:
        return 0.0, 0.0
    if m == 1:
        rule = hermite_rule(rule)
        t = mean0[0] + rule.nodes
        log_q = np.asarray(density(t), dtype=float)
        if not np.all(np.isfinite(log_q)):
            k = int(np.argwhere(~np.isfinite(log_q))[0][0])
            raise IntegrationError("regression predictive is not finite", node=float(t[k]))
        log_p = -0.5 * rule.nodes ** 2 - 0.5 * math.log(2 * math.pi)
        return float(np.dot(rule.weights, log_p - log_q)), 0.0
    rng = stream.generator()
    y = mean0 + rng.standard_normal((y_draws, m))
    diff = gaussian_log_pdf(y, mean0) - density(y)
    return float(np.mean(diff)), float(np.std(diff, ddof=1) / math.sqrt(y_draws))


def tv_distance_1d(log_p: Callable, log_q: Callable, lo: float, hi: float,
                   grid: int = 4001, nodes: int = 24) -> float:
    """(1/2) int |p - q| on [lo, hi], splitting at the sign changes of p - q."""
    x = np.linspace(lo, hi, grid)
    d = np.exp(log_p(x)) - np.exp(log_q(x))
    cuts = [lo]
    for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
        f = lambda t: float(np.exp(log_p(np.array(t))) - np.exp(log_q(np.array(t))))
        cuts.append(optimize.brentq(f, x[i], x[i + 1], xtol=1e-14))
    cuts.append(hi)
    edges = np.unique(np.concatenate([np.array(cuts), x[::100]]))
    t, w = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * t).ravel()
    wts = (half[:, None] * w).ravel()
    vals = np.abs(np.exp(log_p(pts)) - np.exp(log_q(pts)))
    return float(min(1.0, 0.5 * np.dot(wts, vals)))


def tv_to_truth(density: PredictiveDensity, mean0: np.ndarray) -> float:
    lo, hi = density.support()
    lo, hi = min(lo, mean0[0] - 12.0), max(hi, mean0[0] + 12.0)
    return tv_distance_1d(lambda t: gaussian_log_pdf(np.asarray(t)[..., None], mean0), density, lo, hi)


def _folded_mean(mu, sd):
    """E|W| for W ~ N(mu, sd^2)."""
    if sd <= 0:
        return abs(mu)
    return float(sd * math.sqrt(2 / math.pi) * math.exp(-0.5 * (mu / sd) ** 2)
                 + mu * (1.0 - 2.0 * special.ndtr(-mu / sd)))


def kl_moment_bound(density: PredictiveDensity, X_new, beta0, stream: SeededStream | None = None) -> float:
    """(1/2) E||X_new (beta - beta0)||^2 + sqrt(m) E||X_new (beta - beta0)|| under the posterior."""
    X_new = np.asarray(X_new, dtype=float)
    m = X_new.shape[0]
    target = X_new @ beta0
    summaries = density.provenance.get("summaries")
    if summaries is None:   # posterior concentrated at a point
        mix = density.provenance["mixture"]
        W = mix.means[0] - target
        return float(0.5 * W @ W + math.sqrt(m) * np.linalg.norm(W))
    sq, ab = 0.0, 0.0
    for idx, cs in enumerate(summaries):
        w = math.exp(cs.log_weight)
        S = list(cs.support)
        if not S:
            W = -target
            sq += w * (W @ W)
            ab += w * np.linalg.norm(W)
            continue
        Xs = X_new[:, S]
        if cs.beta_draws is not None:
            W = cs.beta_draws @ Xs.T - target
            dw = np.exp(cs.draw_log_weights)
            sq += w * float(dw @ np.sum(W * W, axis=1))
            ab += w * float(dw @ np.linalg.norm(W, axis=1))
            continue
        mu = Xs @ cs.beta_mean - target
        cov = Xs @ cs.beta_cov @ Xs.T
        sq += w * float(mu @ mu + np.trace(cov))
        if m == 1:
            ab += w * _folded_mean(float(mu[0]), math.sqrt(max(cov[0, 0], 0.0)))
        else:
            rng = stream.child(idx).generator()
            # cov has rank at most |S|, so take a symmetric square root
            ev, vec = np.linalg.eigh(cov)
            L = vec * np.sqrt(np.clip(ev, 0.0, None))
            Z = mu + rng.standard_normal((NORM_DRAWS, m)) @ L.T
            ab += w * float(np.mean(np.linalg.norm(Z, axis=1)))
    return float(0.5 * sq + math.sqrt(m) * ab)


def evaluate_draw(problem: RegressionProblem, prior: RegressionPrior, stream: SeededStream,
                  predictive_fn: Callable | None = None, with_tv: bool = True,
                  with_kl_bound: bool = True, is_draws: int | None = None) -> DrawResult:
    """Draw Y, build the predictive and score it against the truth."""
    Y = problem.draw_y(stream.child(0).generator())
    mean0 = problem.X_new @ problem.beta0
    if predictive_fn is not None:
        density = predictive_fn(Y)
        mass = None
    else:
        post = subset_posterior(Y, problem.X, prior)
        kw = {} if is_draws is None else {"is_draws": is_draws}
        density = regression_predictive(Y, problem.X, problem.X_new, prior, posterior=post,
                                        stream=stream.child(1), **kw)
        mass = post.mass_on(problem.S0)
    kl, se = kl_to_truth(density, mean0, stream.child(2))
    tv = tv_to_truth(density, mean0) if (with_tv and problem.m == 1) else None
    kl_bd = kl_moment_bound(density, problem.X_new, problem.beta0, stream.child(3)) if with_kl_bound else None
    warnings = list(density.provenance.get("warnings", []))
    return DrawResult(kl, se, tv, kl_bd, mass, warnings)


def _summarize(values, method, draws, results, extra):
    values = np.asarray(values, dtype=float)
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    warnings = sorted({w for r in results for w in r.warnings})
    return RiskEstimate(float(np.mean(values)), se, method, 0, draws, warnings, extra)


def kl_pred_regression(problem: RegressionProblem, prior: RegressionPrior, draws: int,
                       stream: SeededStream, predictive_fn: Callable | None = None,
                       results: list[DrawResult] | None = None) -> RiskEstimate:
    """Monte Carlo KL prediction risk over Y ~ N(X beta0, I_n).

    extra carries per-draw KL values, the per-draw bound
    (1/2) E||X_new(beta - beta0)||^2 + sqrt(m) E||X_new(beta - beta0)||,
    and the posterior mass on the true support.
    """
    if results is None:
        results = [evaluate_draw(problem, prior, stream.child(d), predictive_fn, with_tv=False)
                   for d in range(draws)]
    kls = [r.kl for r in results]
    extra = {"per_draw": kls, "kl_bound": [r.kl_bound for r in results],
             "mass_S0": [r.mass_S0 for r in results],
             "inner_se": [r.kl_se for r in results]}
    method = "quadrature" if problem.m == 1 else "monte-carlo"
    return _summarize(kls, method, draws, results, extra)


def tv_risk(problem: RegressionProblem, prior: RegressionPrior, draws: int,
            stream: SeededStream, predictive_fn: Callable | None = None,
            results: list[DrawResult] | None = None) -> RiskEstimate:
    """Total-variation prediction risk; for m > 1 the per-draw value is sqrt(KL/2)."""
    if results is None:
        results = [evaluate_draw(problem, prior, stream.child(d), predictive_fn, with_kl_bound=False)
                   for d in range(draws)]
    if problem.m == 1:
        vals = [r.tv for r in results]
        method = "quadrature"
    else:
        vals = [math.sqrt(max(r.kl, 0.0) / 2.0) for r in results]
        method = "pinsker-bound"
    extra = {"per_draw": vals, "kl": [r.kl for r in results]}
    return _summarize(vals, method, draws, results, extra)
