"""Enumerated subset posteriors."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ..errors import CapabilityError, DomainError
from .marginal import MAX_LAPLACE_SIZE, batched_uniform_log_marginals, laplace_log_marginal
from .problem import LaplaceSlab, RegressionPrior, UniformSlab

ENUMERATION_BUDGET = 10 ** 6
BATCH = 50_000
LAPLACE_PRUNE_TOL = 1e-6


def enumeration_size(p: int, R: int) -> int:
    return sum(math.comb(p, s) for s in range(min(R, p) + 1))


def max_feasible_R(p: int, budget: int = ENUMERATION_BUDGET) -> int:
    R = 0
    while R < p and enumeration_size(p, R + 1) <= budget:
        R += 1
    return R


@dataclass(frozen=True, eq=False)
class SubsetPosterior:
    """Normalized log posterior weights over the retained supports."""

    supports: list
    log_weights: np.ndarray
    R: int
    slab: str
    enumerated: int
    log_neglected: float = -math.inf
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.supports) != len(self.log_weights):
            raise DomainError("supports and weights differ in length")

    def __len__(self) -> int:
        return len(self.supports)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def entries(self) -> dict:
        return dict(zip(self.supports, self.log_weights.tolist()))

    def mass_on(self, S) -> float:
        key = tuple(sorted(int(j) for j in S))
        return float(np.exp(self.entries.get(key, -math.inf)))

    def inclusion_probabilities(self, p: int) -> np.ndarray:
        out = np.zeros(p)
        for S, w in zip(self.supports, self.weights):
            out[list(S)] += w
        return out

    def top(self, k: int = 10) -> list:
        idx = np.argsort(-self.log_weights, kind="stable")[:k]
        return [(self.supports[i], float(self.log_weights[i])) for i in idx]

    def truncate(self, min_weight: float = 1e-15) -> "SubsetPosterior":
        """Drop supports of weight below min_weight and renormalize."""
        keep = self.log_weights >= math.log(min_weight)
        lw = self.log_weights[keep]
        dropped = float(-np.expm1(special.logsumexp(lw))) if len(lw) else 1.0
        return SubsetPosterior([S for S, k in zip(self.supports, keep) if k],
                               lw - special.logsumexp(lw), self.R, self.slab, self.enumerated,
                               np.logaddexp(self.log_neglected, math.log(max(dropped, 1e-300))),
                               dict(self.extra))


def point_posterior(S) -> SubsetPosterior:
    """All mass on a single support (used for oracle and injected posteriors)."""
    S = tuple(sorted(int(j) for j in S))
    return SubsetPosterior([S], np.zeros(1), len(S), "point", 1)


def _log_size_weight(prior: RegressionPrior, p: int, s: int) -> float:
    return float(prior.size.log_pmf[s] - (special.gammaln(p + 1) - special.gammaln(s + 1)
                                           - special.gammaln(p - s + 1)))


def _sized_blocks(p: int, s: int):
    it = itertools.combinations(range(p), s)
    while True:
        block = list(itertools.islice(it, BATCH))
        if not block:
            return
        yield np.array(block, dtype=np.intp).reshape(len(block), s)


def _uniform_scores(Y, X, prior, lam, R):
    G = X.T @ X
    b = X.T @ Y
    p = X.shape[1]
    supports, scores = [], []
    for s in range(R + 1):
        lw = _log_size_weight(prior, p, s)
        for block in _sized_blocks(p, s):
            scores.append(lw + batched_uniform_log_marginals(Y, X, block, lam, G, b))
            supports.extend(map(tuple, block.tolist()))
    return supports, np.concatenate(scores)


def subset_posterior(Y, X, prior: RegressionPrior, prune_tol: float = LAPLACE_PRUNE_TOL) -> SubsetPosterior:
    """Posterior over all supports with |S| <= R.

    Uniform slab: every support is scored in closed form.  Laplace slab: the
    uniform-slab marginal with the same (lam/2)^s factor bounds the Laplace
    marginal from above, so exact orthant evaluations proceed in decreasing
    bound order and stop once the remaining bound mass falls below
    prune_tol times the accumulated exact mass.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if Y.shape != (n,):
        raise DomainError("Y and X disagree in length")
    R = min(prior.R, p)
    size = enumeration_size(p, R)
    if size > ENUMERATION_BUDGET:
        raise CapabilityError(
            f"enumerating {size} supports exceeds the budget of {ENUMERATION_BUDGET}; "
            f"lower R to at most {max_feasible_R(p)} or reduce p")
    slab = prior.slab
    supports, upper = _uniform_scores(Y, X, prior, slab.lam, R)
    if isinstance(slab, UniformSlab):
        lw = upper - special.logsumexp(upper)
        return SubsetPosterior(supports, lw, R, "uniform", size)
    if not isinstance(slab, LaplaceSlab):
        raise DomainError(f"unknown slab {slab!r}")

    order = np.argsort(-upper, kind="stable")
    sorted_upper = upper[order]
    # tail[i] = logsumexp of the bounds from position i onwards
    tail = np.logaddexp.accumulate(sorted_upper[::-1])[::-1]
    tail = np.append(tail, -math.inf)
    kept, exact = [], []
    total = -math.inf
    log_tol = math.log(prune_tol)
    for pos, idx in enumerate(order):
        S = supports[idx]
        if len(S) > MAX_LAPLACE_SIZE:
            raise CapabilityError(f"support of size {len(S)} needs an exact Laplace marginal")
        val = _log_size_weight(prior, p, len(S)) + laplace_log_marginal(Y, X, S, slab.lam)
        kept.append(S)
        exact.append(val)
        total = np.logaddexp(total, val)
        if tail[pos + 1] < total + log_tol:
            break
    exact = np.array(exact)
    log_neglected = float(tail[len(kept)] - total)
    return SubsetPosterior(kept, exact - special.logsumexp(exact), R, "laplace", size,
                           log_neglected, {"exact_evaluations": len(kept)})
