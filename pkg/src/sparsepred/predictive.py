"""Posterior predictive densities for the normal-means model.

For a prior pi and one observation y ~ N(mu, 1), the Bayes predictive
density of a future y_new ~ N(mu, r) is

    log p(y_new | y) = log N(y_new; 0, r) + log M_pi(y + y_new / r, v)
                       - log M_pi(y, 1),

with M_pi the prior exponential moment from :mod:`sparsepred.priors`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError, UsageError
from .numcore import log_gauss_2f1, log_norm_pdf
from .priors import (
    MIXTURES,
    component_moment,
    DiracSpike,
    HierarchicalSS,
    Laplace,
    PredictionContext,
    PriorSpec,
    marginal_likelihood,
    mixing_weight,
    prior_moment,
)


@dataclass(frozen=True, eq=False)
class PredictiveDensity:
    """An evaluable density with a hint of where its mass lives."""

    log_eval: Callable[[np.ndarray], np.ndarray]
    context: PredictionContext | None
    provenance: dict = field(default_factory=dict)
    center: float = 0.0
    scale: float = 1.0
    dim: int = 1

    def __call__(self, y_new):
        return self.log_eval(y_new)

    def support(self, width: float = 12.0) -> tuple[float, float]:
        lo = min(self.center, 0.0) - width * self.scale
        hi = max(self.center, 0.0) + width * self.scale
        return lo, hi

    def total_mass(self, nodes: int = 400) -> float:
        """Integral of the density over center +- 12 scale (1-D only)."""
        if self.dim != 1:
            raise UsageError("total_mass is only available for univariate densities")
        lo, hi = self.support()
        # composite Gauss-Legendre: panels keep the rule resolving narrow bumps
        edges = np.linspace(lo, hi, 41)
        t, w = np.polynomial.legendre.leggauss(max(nodes // 40, 10))
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
        wx = (half[:, None] * w[None, :]).ravel()
        return float(np.sum(wx * np.exp(self.log_eval(x))))


# ---------------------------------------------------------------------------
# Univariate predictive densities
# ---------------------------------------------------------------------------

def _log_predictive(prior: PriorSpec, y, y_new, ctx: PredictionContext):
    r, v = ctx.r, ctx.v
    y = np.asarray(y, dtype=float)
    y_new = np.asarray(y_new, dtype=float)
    moment = component_moment if isinstance(prior, DiracSpike) else prior_moment
    num = moment(prior, y + y_new / r, v)
    den = moment(prior, y, 1.0)
    return log_norm_pdf(y_new, 0.0, r) + num - den


def component_predictive(comp, y: float, ctx: PredictionContext) -> PredictiveDensity:
    """Predictive density under one prior component (spike or slab)."""
    if not isinstance(comp, (Laplace, DiracSpike)):
        raise UsageError(f"not a prior component: {comp!r}")
    return PredictiveDensity(
        lambda t: _log_predictive(comp, y, t, ctx), ctx,
        {"prior": comp, "y": y}, center=float(y), scale=math.sqrt(ctx.r))


def predictive_density(prior: PriorSpec, y: float, ctx: PredictionContext) -> PredictiveDensity:
    """Bayes predictive density of one future coordinate given y."""
    if isinstance(prior, HierarchicalSS):
        raise UsageError("use hierarchical_predictive for the hierarchical prior")
    if not isinstance(prior, (Laplace, *MIXTURES)):
        raise DomainError(f"unsupported prior {prior!r}")
    y = float(y)
    return PredictiveDensity(
        lambda t: _log_predictive(prior, y, t, ctx), ctx,
        {"prior": prior, "y": y}, center=y, scale=math.sqrt(ctx.r))


def slab_weight(prior, y):
    """Mixing weight Delta_eta(y) of a spike-and-slab prior."""
    if not isinstance(prior, MIXTURES):
        raise UsageError("mixing weight needs a two-component prior")
    return mixing_weight(prior.eta, marginal_likelihood(prior.slab, y),
                         marginal_likelihood(prior.spike, y))


def mixture_predictive(prior, y: float, ctx: PredictionContext) -> PredictiveDensity:
    """Delta(y) p1 + (1 - Delta(y)) p0, the two-component form of the same density."""
    p1 = component_predictive(prior.slab, y, ctx)
    p0 = component_predictive(prior.spike, y, ctx)
    lm1 = marginal_likelihood(prior.slab, y)
    lm0 = marginal_likelihood(prior.spike, y)
    eta = prior.eta
    # log Delta and log(1 - Delta) without cancellation
    la = (math.log(eta) if eta > 0 else -math.inf) + lm1
    lb = (math.log1p(-eta) if eta < 1 else -math.inf) + lm0
    norm = np.logaddexp(la, lb)
    ld1, ld0 = la - norm, lb - norm

    def log_eval(t):
        return np.logaddexp(ld1 + p1.log_eval(t), ld0 + p0.log_eval(t))

    return PredictiveDensity(log_eval, ctx, {"prior": prior, "y": y, "form": "mixture"},
                             center=float(y), scale=math.sqrt(ctx.r))


# ---------------------------------------------------------------------------
# Hierarchical prior: posterior of eta on a Gauss-Legendre grid
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _unit_legendre(n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), np.log(0.5 * w)


@lru_cache(maxsize=4)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True, eq=False)
class EtaPosterior:
    """Normalized weights of pi(eta | Y) on fixed nodes in (0, 1)."""

    grid: np.ndarray
    log_weights: np.ndarray
    hyper: dict

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def expect(self, f) -> float:
        return float(np.sum(self.weights * f(self.grid)))

    @classmethod
    def point_mass(cls, eta: float, hyper: dict | None = None) -> "EtaPosterior":
        if not (0.0 <= eta <= 1.0):
            raise DomainError("eta must lie in [0, 1]")
        return cls(np.array([eta]), np.array([0.0]), dict(hyper or {}, point_mass=eta))


def eta_node_count(n: int) -> int:
    return 1024 if n > 500 else 256


def eta_loglik_terms(Y, lam: float, grid: np.ndarray) -> np.ndarray:
    """Per-coordinate log[(1 - eta) phi(Y_i) + eta m1(Y_i)] on the grid, shape (n, K)."""
    Y = np.asarray(Y, dtype=float).ravel()
    lm1 = marginal_likelihood(Laplace(lam), Y)
    lm0 = marginal_likelihood(DiracSpike(), Y)
    lm1, lm0 = np.atleast_1d(lm1), np.atleast_1d(lm0)
    return np.logaddexp(np.log1p(-grid)[None, :] + lm0[:, None],
                        np.log(grid)[None, :] + lm1[:, None])


def eta_posterior(Y, lam: float, a: float, b: float, nodes: int | None = None) -> EtaPosterior:
    """pi(eta | Y) proportional to Beta(a, b)(eta) prod_i [(1-eta) phi(Y_i) + eta m1(Y_i)]."""
    if not (a > 0 and b > 0):
        raise DomainError("Beta hyperparameters must be positive")
    Y = np.asarray(Y, dtype=float).ravel()
    if not np.all(np.isfinite(Y)):
        raise DomainError("Y must be finite")
    k = nodes if nodes is not None else eta_node_count(len(Y))
    grid, log_w = _unit_legendre(k)
    log_prior = (a - 1.0) * np.log(grid) + (b - 1.0) * np.log1p(-grid)
    log_post = log_w + log_prior
    if len(Y):
        log_post = log_post + eta_loglik_terms(Y, lam, grid).sum(axis=0)
    log_post = log_post - special.logsumexp(log_post)
    return EtaPosterior(grid, log_post, {"a": a, "b": b, "lam": lam, "n": len(Y)})


def averaged_slab_weight(eta_post: EtaPosterior, lam: float, y):
    """Returns (log mean Delta_eta(y), log mean (1 - Delta_eta(y))) under eta_post."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lm1 = np.atleast_1d(marginal_likelihood(Laplace(lam), y))[:, None]
    lm0 = np.atleast_1d(marginal_likelihood(DiracSpike(), y))[:, None]
    g = eta_post.grid[None, :]
    with np.errstate(divide="ignore"):
        la = np.log(g) + lm1
        lb = np.log1p(-g) + lm0
    norm = np.logaddexp(la, lb)
    lw = eta_post.log_weights[None, :]
    return (special.logsumexp(lw + la - norm, axis=1),
            special.logsumexp(lw + lb - norm, axis=1))


def hierarchical_predictive(Y, i: int, prior: HierarchicalSS, ctx: PredictionContext,
                            eta_post: EtaPosterior | None = None) -> PredictiveDensity:
    """Predictive density of future coordinate i (0-based) given the whole Y.

    Mixes the conditional spike-and-slab predictive over pi(eta | Y); pass
    ``eta_post`` to reuse a posterior or to substitute another eta law.
    """
    Y = np.asarray(Y, dtype=float).ravel()
    if not (0 <= i < len(Y)):
        raise UsageError(f"coordinate index {i} out of range for n = {len(Y)}")
    if eta_post is None:
        eta_post = eta_posterior(Y, prior.lam, prior.a, prior.b)
    yi = float(Y[i])
    ld1, ld0 = averaged_slab_weight(eta_post, prior.lam, yi)
    p1 = component_predictive(Laplace(prior.lam), yi, ctx)
    p0 = component_predictive(DiracSpike(), yi, ctx)

    def log_eval(t):
        return np.logaddexp(ld1[0] + p1.log_eval(t), ld0[0] + p0.log_eval(t))

    return PredictiveDensity(log_eval, ctx, {"prior": prior, "i": i, "y": yi},
                             center=yi, scale=math.sqrt(ctx.r))


# ---------------------------------------------------------------------------
# Posterior odds of eta given the model size
# ---------------------------------------------------------------------------

def _check_odds_args(s, n, a, b, lam):
    if not (0 <= s <= n):
        raise DomainError("need 0 <= s <= n")
    if not (a > 0 and b > 1 and a + s > 1):
        raise DomainError("need a > 0, b > 1 and a + s > 1")
    if not lam > 0:
        raise DomainError("lambda must be positive")


def posterior_odds_moments(s: int, n: int, a: float, b: float, lam: float,
                           method: str = "hypergeometric") -> tuple[float, float]:
    """(E[eta/(1-eta) | s], E[(1-eta)/eta | s]) under the weight

        [1 + eta (lam/2 - 1)]^(n - s) eta^(a+s-1) (1 - eta)^(b-1)

    ``method="hypergeometric"`` uses 2F1 ratios with argument 1 - lam/2;
    ``method="quadrature"`` integrates the two eta-integrals directly.
    """
    _check_odds_args(s, n, a, b, lam)
    if method == "quadrature":
        return _odds_by_quadrature(s, n, a, b, lam)
    if method != "hypergeometric":
        raise UsageError(f"unknown method {method!r}")
    z = lam / 2.0 - 1.0
    ap, c = s - n, a + b + s
    base = log_gauss_2f1(ap, a + s, c, -z)
    first = (a + s) / (b - 1.0) * math.exp(log_gauss_2f1(ap, a + s + 1, c, -z) - base)
    second = b / (a + s - 1.0) * math.exp(log_gauss_2f1(ap, a + s - 1, c, -z) - base)
    return first, second


def _odds_by_quadrature(s, n, a, b, lam, nodes: int = 4000):
    # smoothstep substitution keeps endpoint singularities integrable
    t, w = _legendre(nodes)
    u = 0.5 * (t + 1.0)
    eta = u * u * (3.0 - 2.0 * u)
    deta = 6.0 * u * (1.0 - u) * 0.5 * w
    with np.errstate(divide="ignore"):
        log_base = ((n - s) * np.log1p(eta * (lam / 2.0 - 1.0))
                    + (a + s - 1.0) * np.log(eta) + (b - 1.0) * np.log1p(-eta)
                    + np.log(deta))
    lo = special.logsumexp(log_base)
    first = special.logsumexp(log_base + np.log(eta) - np.log1p(-eta)) - lo
    second = special.logsumexp(log_base + np.log1p(-eta) - np.log(eta)) - lo
    return math.exp(first), math.exp(second)


def odds_moment_limits(s: int, n: int, a: float, b: float) -> tuple[float, float]:
    """Upper limits (a + s + 1)/(b - 1) and (b + n)/(s + a - 1) for the two moments."""
    return (a + s + 1.0) / (b - 1.0), (b + n) / (s + a - 1.0)


def expected_model_size(Y, eta_post: EtaPosterior, lam: float) -> float:
    """sum_i E[Delta_eta(Y_i) | Y]: posterior mean number of slab coordinates."""
    ld1, _ = averaged_slab_weight(eta_post, lam, Y)
    return float(np.sum(np.exp(ld1)))



def data_odds_moments(Y, eta_post: EtaPosterior, lam: float) -> dict:
    """Data-conditional odds moments and their model-size limits.

    Returns E[eta/(1-eta) | Y], E[(1-eta)/eta | Y], E[s | Y] and
    E[1 / (s + a - 1) | Y], with s the number of slab coordinates. Given eta
    the slab indicators are independent Bernoulli(Delta_eta(Y_i)), so
    E[1/(s + c) | eta] = int_0^1 t^(c-1) prod_i (1 - p_i + p_i t) dt.
    """
    a = eta_post.hyper["a"]
    if not a > 1:
        raise DomainError("the inverse-size moment needs a > 1")
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    g = eta_post.grid
    lw = eta_post.log_weights
    lm1 = np.atleast_1d(marginal_likelihood(Laplace(lam), Y))[:, None]
    lm0 = np.atleast_1d(marginal_likelihood(DiracSpike(), Y))[:, None]
    la = np.log(g)[None, :] + lm1
    lb = np.log1p(-g)[None, :] + lm0
    log_p = la - np.logaddexp(la, lb)                     # (n, k)
    c = a - 1.0
    u, log_wu = _unit_legendre(max(64, len(Y) + 16))
    if c >= 1.0:
        t, log_wt = u, log_wu + (c - 1.0) * np.log(u)
    else:
        # t = u^(1/c) turns t^(c-1) dt into du / c
        t, log_wt = np.exp(np.log(u) / c), log_wu - math.log(c)
    p_mat = np.exp(log_p)
    log_prod = np.log1p(-p_mat[:, :, None] * (1.0 - t)[None, None, :]).sum(axis=0)  # (k, j)
    inv_size = special.logsumexp(log_prod + log_wt[None, :], axis=1)
    with np.errstate(divide="ignore"):
        odds = g / (1.0 - g)
    return {
        "odds": float(np.sum(np.exp(lw) * odds)),
        "inverse_odds": float(np.sum(np.exp(lw) / odds)),
        "model_size": float(np.sum(np.exp(lw) * p_mat.sum(axis=0))),
        "inverse_size": float(np.exp(special.logsumexp(lw + inv_size))),
    }


def data_odds_limits(moments: dict, n: int, a: float, b: float) -> tuple[float, float]:
    """(a + E[s|Y] + 1)/(b - 1) and (b + n) E[1/(s + a - 1) | Y]."""
    return (a + moments["model_size"] + 1.0) / (b - 1.0), (b + n) * moments["inverse_size"]


__all__ = [
    "PredictiveDensity", "EtaPosterior", "predictive_density", "mixture_predictive",
    "component_predictive", "slab_weight", "eta_posterior", "hierarchical_predictive",
    "posterior_odds_moments", "odds_moment_limits", "expected_model_size",
    "averaged_slab_weight", "data_odds_moments", "data_odds_limits",
]
