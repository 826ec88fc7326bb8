"""Subset marginal likelihoods under uniform and Laplace slabs."""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.stats import qmc

from ..errors import CapabilityError, DomainError
from ..numcore import LOG_2PI
from .problem import LaplaceSlab, UniformSlab

MAX_LAPLACE_SIZE = 12
TENSOR_MAX_SIZE = 3
TENSOR_NODES = 48
QMC_LOG2_POINTS = 16
# orthants whose combined upper bound is below e^-30 of the running sum are skipped
ORTHANT_SKIP_LOG_TOL = -30.0


def _null_log_marginal(Y: np.ndarray) -> float:
    return float(-0.5 * Y @ Y - 0.5 * len(Y) * LOG_2PI)


def _gram_pieces(Y, X, S):
    XS = X[:, list(S)]
    A = XS.T @ XS
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise DomainError(f"X_S is rank deficient for S = {tuple(S)}") from None
    if np.min(np.diag(L)) <= 1e-10 * math.sqrt(np.max(np.diag(A))):
        raise DomainError(f"X_S is rank deficient for S = {tuple(S)}")
    return A, L, XS.T @ Y


def uniform_log_marginal(Y, X, S, lam: float) -> float:
    """Closed form for the flat slab (lam/2)^s."""
    Y = np.asarray(Y, dtype=float)
    if len(S) == 0:
        return _null_log_marginal(Y)
    A, L, bS = _gram_pieces(Y, X, S)
    w = np.linalg.solve(L, bS)
    s = len(S)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(s * math.log(lam / 2) + 0.5 * s * LOG_2PI - 0.5 * logdet
                 - 0.5 * (Y @ Y - w @ w) - 0.5 * len(Y) * LOG_2PI)


def _smooth(u: np.ndarray):
    """Quintic smoothstep w(u) and log w'(u); flattens the endpoint singularities."""
    w = u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)
    return w, np.log(30.0) + 2.0 * np.log(u) + 2.0 * np.log1p(-u)


@lru_cache(maxsize=None)
def _unit_tensor_rule(dim: int):
    """Gauss-Legendre tensor grid on (0,1)^dim: nodes (N, dim), log weights (N,)."""
    if dim == 0:
        return np.zeros((1, 0)), np.zeros(1)
    x, w = special.roots_legendre(TENSOR_NODES)
    u = 0.5 * (x + 1.0)
    nodes1, log_jac = _smooth(u)
    logw1 = np.log(0.5 * w) + log_jac
    grids = np.meshgrid(*([nodes1] * dim), indexing="ij")
    wgrids = np.meshgrid(*([logw1] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    logw = np.sum(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, logw


@lru_cache(maxsize=None)
def _unit_qmc_rule(dim: int):
    # fixed scramble seed keeps every marginal reproducible
    u = qmc.Sobol(d=dim, scramble=True, seed=12345).random_base2(QMC_LOG2_POINTS)
    nodes, log_jac = _smooth(u)
    return nodes, np.sum(log_jac, axis=1) - QMC_LOG2_POINTS * math.log(2.0)


def log_orthant_mass(mean: np.ndarray, cov_chol: np.ndarray) -> float:
    """log P(X > 0) for X ~ N(mean, L L'), by sequential conditioning.

    Coordinate j is positive iff eps_j > a_j(eps_<j); the substitution
    Phi(-eps_j) = w_j Phi(-a_j) maps the constrained region to the unit cube,
    leaving the product of the conditional tail masses as the integrand.
    """
    s = len(mean)
    if s == 0:
        return 0.0
    rule = _unit_tensor_rule(s - 1) if s <= TENSOR_MAX_SIZE else _unit_qmc_rule(s - 1)
    W, logw = rule
    N = len(logw)
    L = cov_chol
    eps = np.zeros((N, s))
    log_int = np.zeros(N)
    for j in range(s):
        a = -(mean[j] + eps[:, :j] @ L[j, :j]) / L[j, j]
        log_e = special.log_ndtr(-a)
        log_int += log_e
        if j < s - 1:
            # eps_j = -Phi^{-1}(w * Phi(-a)), computed in log space for deep tails
            eps[:, j] = -special.ndtri(np.exp(np.log(W[:, j]) + log_e))
            bad = ~np.isfinite(eps[:, j])
            if np.any(bad):
                eps[bad, j] = -a[bad]
    return float(special.logsumexp(log_int + logw))


def laplace_log_marginal(Y, X, S, lam: float) -> float:
    """log of (lam/2)^s times the sum over sign orthants of J_kappa."""
    Y = np.asarray(Y, dtype=float)
    s = len(S)
    if s == 0:
        return _null_log_marginal(Y)
    if s > MAX_LAPLACE_SIZE:
        raise CapabilityError(f"Laplace-slab marginal supports |S| <= {MAX_LAPLACE_SIZE}, got {s}")
    A, L, bS = _gram_pieces(Y, X, S)
    Ainv = np.linalg.inv(A)
    sd = np.sqrt(np.diag(Ainv))
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=s)))
    mus = np.linalg.solve(A, (bS[None, :] - lam * signs).T).T
    base = 0.5 * s * LOG_2PI - 0.5 * logdet + 0.5 * np.einsum("ki,ij,kj->k", mus, A, mus)
    # each orthant lies inside every one of its half-spaces, so the smallest
    # half-space mass bounds its orthant mass from above
    upper = base + np.min(special.log_ndtr(signs * mus / sd), axis=1)
    order = np.argsort(-upper, kind="stable")
    tail = np.append(np.logaddexp.accumulate(upper[order][::-1])[::-1], -math.inf)
    total = -math.inf
    for pos, i in enumerate(order):
        k = signs[i]
        C = Ainv * np.outer(k, k)
        total = np.logaddexp(total, base[i] + log_orthant_mass(k * mus[i], np.linalg.cholesky(C)))
        if tail[pos + 1] < total + ORTHANT_SKIP_LOG_TOL:
            break
    return float(s * math.log(lam / 2) + total - 0.5 * Y @ Y - 0.5 * len(Y) * LOG_2PI)


def subset_log_marginal(Y, X, S, slab) -> float:
    """log of the marginal density of Y given the support S."""
    S = tuple(int(j) for j in S)
    if isinstance(slab, UniformSlab):
        return uniform_log_marginal(Y, X, S, slab.lam)
    if isinstance(slab, LaplaceSlab):
        return laplace_log_marginal(Y, X, S, slab.lam)
    raise DomainError(f"unknown slab {slab!r}")


def batched_uniform_log_marginals(Y, X, supports: np.ndarray, lam: float,
                                  G: np.ndarray | None = None,
                                  b: np.ndarray | None = None) -> np.ndarray:
    """Uniform-slab log marginals for a (C, s) array of equal-size supports."""
    Y = np.asarray(Y, dtype=float)
    C, s = supports.shape
    if s == 0:
        return np.full(C, _null_log_marginal(Y))
    G = X.T @ X if G is None else G
    b = X.T @ Y if b is None else b
    A = G[supports[:, :, None], supports[:, None, :]]
    bS = b[supports]
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise DomainError("a support of this size has a rank-deficient design") from None
    diag = np.diagonal(L, axis1=1, axis2=2)
    if np.any(diag <= 1e-10 * math.sqrt(np.max(np.diag(G)))):
        raise DomainError("a support of this size has a rank-deficient design")
    fit = np.einsum("ci,ci->c", bS, np.linalg.solve(A, bS[:, :, None])[:, :, 0])
    logdet = 2.0 * np.sum(np.log(diag), axis=1)
    return (s * math.log(lam / 2) + 0.5 * s * LOG_2PI - 0.5 * logdet
            - 0.5 * (Y @ Y - fit) - 0.5 * len(Y) * LOG_2PI)
