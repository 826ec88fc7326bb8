"""Model-averaged predictive densities for sparse regression."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ..errors import DomainError
from ..numcore import LOG_2PI, SeededStream
from ..predictive import PredictiveDensity
from .marginal import subset_log_marginal
from .posterior import SubsetPosterior, subset_posterior
from .problem import RegressionPrior, UniformSlab

IS_DRAWS = 2000
IS_MIN_DRAWS = 500
ESS_WARN = 100.0
KEEP_WEIGHT = 1e-12
KEEP_WEIGHT_IS = 1e-8


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """sum_k w_k N(mean_k, Sigma_k) on R^m, with Cholesky factors of Sigma_k."""

    log_weights: np.ndarray     # (K,)
    means: np.ndarray           # (K, m)
    chols: np.ndarray | None    # (K, m, m); None means identity covariances
    unit: np.ndarray | None = None   # (K,) components known to have identity covariance

    @property
    def m(self) -> int:
        return self.means.shape[1]

    def log_pdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        m = self.m
        if m == 0:
            return np.zeros(y.shape[:-1] if y.ndim else ())
        if m == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        lead = y.shape[:-1]
        pts = y.reshape(-1, m)
        K = len(self.log_weights)
        step = max(1, 2_000_000 // (K * m))
        out = np.concatenate([self._log_pdf_rows(pts[i:i + step]) for i in range(0, len(pts), step)])
        return out.reshape(lead)

    def _log_pdf_rows(self, pts: np.ndarray) -> np.ndarray:
        m = self.m
        diff = pts[:, None, :] - self.means[None, :, :]          # (N, K, m)
        quad = np.empty(diff.shape[:2])
        logdet = np.zeros(len(self.log_weights))
        unit = self.unit_mask()
        if np.any(unit):
            du = diff[:, unit, :]
            quad[:, unit] = np.einsum("nkm,nkm->nk", du, du)
        full = ~unit
        if np.any(full):
            ch = self.chols[full]
            df = diff[:, full, :]
            if m == 1:
                sd = ch[:, 0, 0]
                quad[:, full] = (df[..., 0] / sd) ** 2
                logdet[full] = 2.0 * np.log(sd)
            else:
                sol = np.linalg.solve(ch, df.transpose(1, 2, 0))   # (K, m, N)
                quad[:, full] = np.einsum("kmn,kmn->nk", sol, sol)
                logdet[full] = 2.0 * np.sum(np.log(np.diagonal(ch, axis1=1, axis2=2)), axis=1)
        comp = self.log_weights - 0.5 * (m * LOG_2PI + logdet) - 0.5 * quad
        return special.logsumexp(comp, axis=1)

    def unit_mask(self) -> np.ndarray:
        if self.chols is None:
            return np.ones(len(self.log_weights), dtype=bool)
        if self.unit is None:
            return np.zeros(len(self.log_weights), dtype=bool)
        return self.unit

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k = rng.choice(len(self.log_weights), size=size, p=np.exp(self.log_weights))
        z = rng.standard_normal((size, self.m))
        if self.chols is not None:
            z = np.einsum("nij,nj->ni", self.chols[k], z)   # identity rows stay unchanged
        return self.means[k] + z

    def spread(self) -> tuple[float, float]:
        """(center, scale) such that center +- 12 scale covers every component (m = 1)."""
        w = np.exp(self.log_weights)
        mu = self.means[:, 0]
        sd = np.ones_like(mu) if self.chols is None else self.chols[:, 0, 0]
        center = float(w @ mu)
        return center, float(np.max(sd + np.abs(mu - center) / 12.0))


@dataclass
class ConditionalSummary:
    """Per-support pieces reused by the risk estimators."""

    support: tuple
    log_weight: float
    beta_mean: np.ndarray | None = None      # posterior mean of beta_S (uniform)
    beta_cov: np.ndarray | None = None       # posterior covariance of beta_S (uniform)
    beta_draws: np.ndarray | None = None     # (K, s) importance draws (Laplace)
    draw_log_weights: np.ndarray | None = None
    ess: float | None = None
    extra: dict = field(default_factory=dict)


def _fit(Y, X, S):
    XS = X[:, list(S)]
    A = XS.T @ XS
    cov = np.linalg.inv(A)
    cov = 0.5 * (cov + cov.T)
    return XS.T @ Y, A, cov, np.linalg.solve(A, XS.T @ Y)


def conditional_summaries(Y, X, posterior: SubsetPosterior, slab,
                          stream: SeededStream | None = None,
                          is_draws: int = IS_DRAWS) -> list[ConditionalSummary]:
    out = []
    for idx, (S, lw) in enumerate(zip(posterior.supports, posterior.log_weights)):
        if len(S) == 0:
            out.append(ConditionalSummary(S, float(lw)))
            continue
        _, _, cov, bhat = _fit(Y, X, S)
        if isinstance(slab, UniformSlab) or slab is None:
            out.append(ConditionalSummary(S, float(lw), bhat, cov))
            continue
        if stream is None:
            raise DomainError("Laplace-slab conditionals need a random stream")
        rng = stream.child(idx).generator()
        L = np.linalg.cholesky(cov)
        # draws scale with the support weight so low-weight supports stay cheap
        k = max(IS_MIN_DRAWS, math.ceil(is_draws * math.exp(lw)))
        draws = bhat + rng.standard_normal((k, len(S))) @ L.T
        logw = -slab.lam * np.sum(np.abs(draws), axis=1)
        logw -= special.logsumexp(logw)
        ess = float(1.0 / np.sum(np.exp(2.0 * logw)))
        out.append(ConditionalSummary(S, float(lw), bhat, cov, draws, logw, ess))
    return out


def mixture_from_summaries(X_new, summaries: list[ConditionalSummary]) -> GaussianMixture:
    m = X_new.shape[0]
    lws, means, chols, unit = [], [], [], []
    eye = np.eye(m)
    for cs in summaries:
        S = list(cs.support)
        if cs.beta_draws is not None:
            means.append(cs.beta_draws @ X_new[:, S].T)
            lws.append(cs.log_weight + cs.draw_log_weights)
            chols.append(np.broadcast_to(eye, (len(cs.draw_log_weights), m, m)))
            unit.append(np.ones(len(cs.draw_log_weights), dtype=bool))
            continue
        if not S:
            mu, cov = np.zeros(m), eye
        else:
            Xs = X_new[:, S]
            mu, cov = Xs @ cs.beta_mean, eye + Xs @ cs.beta_cov @ Xs.T
        means.append(mu[None, :])
        lws.append(np.array([cs.log_weight]))
        chols.append(np.linalg.cholesky(0.5 * (cov + cov.T))[None])
        unit.append(np.array([not S]))
    lw = np.concatenate(lws)
    return GaussianMixture(lw - special.logsumexp(lw), np.concatenate(means), np.concatenate(chols),
                           np.concatenate(unit))


def regression_predictive(Y, X, X_new, prior: RegressionPrior,
                          posterior: SubsetPosterior | None = None,
                          stream: SeededStream | None = None,
                          is_draws: int = IS_DRAWS) -> PredictiveDensity:
    """p(y_new | Y) = sum_S pi(S | Y) p(y_new | Y, S) over R^m.

    Uniform slab: every conditional is Gaussian in closed form.  Laplace
    slab: conditionals are self-normalized importance-sampling mixtures with
    the least-squares Gaussian as proposal.
    """
    X = np.asarray(X, dtype=float)
    X_new = np.asarray(X_new, dtype=float)
    m = X_new.shape[0] if X_new.ndim == 2 else 0
    if m == 0:
        return PredictiveDensity(lambda y: np.zeros(np.shape(y)[:-1] if np.ndim(y) else ()),
                                 None, {"kind": "empty"}, dim=0)
    post = subset_posterior(Y, X, prior) if posterior is None else posterior
    slab = prior.slab if prior is not None else None
    post = post.truncate(KEEP_WEIGHT if isinstance(slab, UniformSlab) or slab is None else KEEP_WEIGHT_IS)
    summaries = conditional_summaries(Y, X, post, slab, stream, is_draws)
    mix = mixture_from_summaries(X_new, summaries)
    warnings = []
    ess = [cs.ess for cs in summaries if cs.ess is not None]
    if ess and min(ess) < ESS_WARN:
        warnings.append(f"importance sampling ESS {min(ess):.1f} below {ESS_WARN:.0f}")
    center, scale = mix.spread() if m == 1 else (0.0, 1.0)
    prov = {"kind": "regression", "slab": post.slab, "supports": len(post),
            "mixture": mix, "summaries": summaries, "posterior": post,
            "min_ess": min(ess) if ess else None, "warnings": warnings}
    return PredictiveDensity(mix.log_pdf, None, prov, center=center, scale=scale, dim=m)


def point_mass_predictive(X_new, beta) -> PredictiveDensity:
    """N(X_new beta, I_m): the predictive of a posterior concentrated at beta."""
    X_new = np.asarray(X_new, dtype=float)
    m = X_new.shape[0]
    mix = GaussianMixture(np.zeros(1), (X_new @ beta)[None, :], None)
    c, s = mix.spread() if m == 1 else (0.0, 1.0)
    return PredictiveDensity(mix.log_pdf, None, {"kind": "point", "mixture": mix, "summaries": None},
                             center=c, scale=s, dim=m)


def gaussian_log_pdf(y, mean) -> np.ndarray:
    """log N(y; mean, I_m) with y of shape (..., m)."""
    d = np.asarray(y, dtype=float) - mean
    m = d.shape[-1]
    return -0.5 * m * LOG_2PI - 0.5 * np.sum(d * d, axis=-1)


def direct_log_predictive(Y, X, X_new, y_new, prior: RegressionPrior) -> float:
    """log of the marginal ratio m(Y, y_new) / m(Y), each enumerated directly."""
    Y = np.asarray(Y, dtype=float)
    Z = np.concatenate([Y, np.atleast_1d(np.asarray(y_new, dtype=float))])
    Xbar = np.vstack([X, X_new])
    p = X.shape[1]

    def log_total(V, D):
        vals = [prior.size.log_pmf[len(S)] - math.log(math.comb(p, len(S)))
                + subset_log_marginal(V, D, S, prior.slab)
                for s in range(prior.R + 1) for S in itertools.combinations(range(p), s)]
        return special.logsumexp(vals)

    return float(log_total(Z, Xbar) - log_total(Y, X))
