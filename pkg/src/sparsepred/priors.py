"""Priors for the normal-means model and their closed-form moments.

Throughout, ``M_lambda(c, v)`` denotes the slab exponential moment

    log int exp(mu c - mu^2 / (2 v)) (lambda/2) exp(-lambda |mu|) dmu,

which is the only integral every marginal, predictive density and risk
decomposition of a Laplace-type prior needs.  A Dirac spike at zero has
moment exactly 1 (log moment 0) and is never approximated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .errors import DomainError, UsageError
from .numcore import HALF_LOG_2PI, log_mills_ratio


# ---------------------------------------------------------------------------
# Context and prior definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictionContext:
    """Observation variance 1, future variance r, and problem sizes."""

    r: float
    n: int = 1
    s_n: int = 0

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise DomainError("future variance r must be positive and finite")
        if self.n < 1 or not (0 <= self.s_n <= self.n):
            raise DomainError("need n >= 1 and 0 <= s_n <= n")

    @property
    def v(self) -> float:
        return self.r / (1.0 + self.r)

    @property
    def rate(self) -> float:
        """Minimax scale s_n log(n / s_n) / (1 + r)."""
        if self.s_n == 0:
            return 0.0
        return self.s_n * math.log(self.n / self.s_n) / (1.0 + self.r)


def _positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be positive and finite, got {value}")


def _unit_open(name: str, value: float) -> None:
    if not (0.0 < value < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True)
class DiracSpike:
    """Point mass at zero."""


@dataclass(frozen=True)
class Laplace:
    lam: float

    def __post_init__(self):
        _positive("lambda", self.lam)


@dataclass(frozen=True)
class DiracLaplaceSS:
    """(1 - eta) delta_0 + eta Laplace(lam)."""

    lam: float
    eta: float

    def __post_init__(self):
        _positive("lambda", self.lam)
        if not (0.0 <= self.eta <= 1.0):
            raise DomainError("eta must lie in [0, 1]")

    @property
    def spike(self):
        return DiracSpike()

    @property
    def slab(self):
        return Laplace(self.lam)


@dataclass(frozen=True)
class SSL:
    """(1 - eta) Laplace(lam0) + eta Laplace(lam1) with lam1 < lam0."""

    lam0: float
    lam1: float
    eta: float

    def __post_init__(self):
        _positive("lambda0", self.lam0)
        _positive("lambda1", self.lam1)
        if not self.lam1 < self.lam0:
            raise DomainError("spike-and-slab LASSO needs lambda1 < lambda0")
        if not (0.0 <= self.eta <= 1.0):
            raise DomainError("eta must lie in [0, 1]")

    @property
    def spike(self):
        return Laplace(self.lam0)

    @property
    def slab(self):
        return Laplace(self.lam1)


@dataclass(frozen=True)
class HierarchicalSS:
    """Dirac spike, Laplace(lam) slab, eta ~ Beta(a, b)."""

    lam: float
    a: float
    b: float

    def __post_init__(self):
        _positive("lambda", self.lam)
        _positive("a", self.a)
        _positive("b", self.b)

    def conditional(self, eta: float) -> DiracLaplaceSS:
        return DiracLaplaceSS(self.lam, eta)


PriorSpec = Union[Laplace, DiracLaplaceSS, SSL, HierarchicalSS]
Component = Union[DiracSpike, Laplace]

MIXTURES = (DiracLaplaceSS, SSL)


# ---------------------------------------------------------------------------
# Slab moments and marginals
# ---------------------------------------------------------------------------

def slab_exp_moment(lam: float, c, v: float = 1.0):
    """log int exp(mu c - mu^2/(2v)) (lam/2) exp(-lam |mu|) dmu.

    Splitting at zero gives two Gaussian half-line integrals with shifted
    means v(c - lam) and v(c + lam); each is sqrt(v) times a Mills ratio,
    so the result is finite for |c| in the thousands.
    """
    if not v > 0:
        raise DomainError("shrinkage factor v must be positive")
    if not v <= 1.0:
        raise DomainError("shrinkage factor v must not exceed 1")
    _positive("lambda", lam)
    c = np.asarray(c, dtype=float)
    sv = math.sqrt(v)
    mu1 = v * (c - lam)
    mu2 = v * (c + lam)
    log_i1 = log_mills_ratio(-mu1 / sv)
    log_i2 = log_mills_ratio(mu2 / sv)
    out = math.log(0.5 * lam) + 0.5 * math.log(v) + np.logaddexp(log_i1, log_i2)
    return out if out.ndim else float(out)


def component_moment(comp: Component, c, v: float = 1.0):
    """Log exponential moment of a single prior component (0 for the spike)."""
    if isinstance(comp, DiracSpike):
        return np.zeros_like(np.asarray(c, dtype=float)) + 0.0
    if isinstance(comp, Laplace):
        return slab_exp_moment(comp.lam, c, v)
    raise UsageError(f"not a prior component: {comp!r}")


def prior_moment(prior: PriorSpec, c, v: float = 1.0):
    """Log exponential moment of a full (possibly mixture) prior."""
    if isinstance(prior, Laplace):
        return slab_exp_moment(prior.lam, c, v)
    if isinstance(prior, MIXTURES):
        m1 = component_moment(prior.slab, c, v)
        m0 = component_moment(prior.spike, c, v)
        if prior.eta == 1.0:
            return m1
        if prior.eta == 0.0:
            return m0
        return np.logaddexp(math.log(prior.eta) + m1, math.log1p(-prior.eta) + m0)
    raise UsageError(f"no closed-form moment for {type(prior).__name__}")


def marginal_likelihood(comp: Component, x):
    """log m(x) of Y = mu + N(0, 1) with mu drawn from one prior component."""
    x = np.asarray(x, dtype=float)
    log_phi = -0.5 * x * x - HALF_LOG_2PI
    out = log_phi + component_moment(comp, x, 1.0)
    return out if np.ndim(out) else float(out)


def mixing_weight(eta: float, log_m1, log_m0):
    """Slab posterior weight eta m1 / (eta m1 + (1 - eta) m0), in log space."""
    if not (0.0 <= eta <= 1.0):
        raise DomainError("eta must lie in [0, 1]")
    diff = np.asarray(log_m1, dtype=float) - np.asarray(log_m0, dtype=float)
    if eta == 0.0:
        out = np.zeros_like(diff)
    elif eta == 1.0:
        out = np.ones_like(diff)
    else:
        out = special.expit(math.log(eta) - math.log1p(-eta) + diff)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# N-functions of the risk decompositions
# ---------------------------------------------------------------------------

SLAB_DENOM = "slab-in-denominator"
SPIKE_DENOM = "spike-in-denominator"


def shifted_argument(theta, v: float, z):
    """c = z / sqrt(v) + theta / v, so that mu1,2 = v (c -/+ lambda)."""
    return np.asarray(z, dtype=float) / math.sqrt(v) + np.asarray(theta, dtype=float) / v


def log_N(prior: PriorSpec, theta, v: float, z, orientation: str | None = None):
    """log N_{theta, v}(z) of the risk decompositions.

    * Laplace: the slab moment itself.
    * mixtures, ``slab-in-denominator`` (default): 1 + ((1-eta)/eta) spike/slab.
    * mixtures, ``spike-in-denominator``: 1 + (eta/(1-eta)) slab/spike.

    For the Dirac spike the spike moment is exactly 1.
    """
    c = shifted_argument(theta, v, z)
    if isinstance(prior, Laplace):
        if orientation is not None:
            raise UsageError("orientation does not apply to a pure Laplace prior")
        return slab_exp_moment(prior.lam, c, v)
    if not isinstance(prior, MIXTURES):
        raise UsageError(f"log_N is not defined for {type(prior).__name__}")
    orientation = SLAB_DENOM if orientation is None else orientation
    m1 = component_moment(prior.slab, c, v)
    m0 = component_moment(prior.spike, c, v)
    eta = prior.eta
    if orientation == SLAB_DENOM:
        if eta == 0.0:
            raise DomainError("slab-in-denominator form needs eta > 0")
        if eta == 1.0:
            return np.zeros_like(m1)
        log_odds = math.log1p(-eta) - math.log(eta)
        return np.logaddexp(0.0, log_odds + m0 - m1)
    if orientation == SPIKE_DENOM:
        if eta == 1.0:
            raise DomainError("spike-in-denominator form needs eta < 1")
        if eta == 0.0:
            return np.zeros_like(m1)
        log_odds = math.log(eta) - math.log1p(-eta)
        return np.logaddexp(0.0, log_odds + m1 - m0)
    raise UsageError(f"unknown orientation {orientation!r}")


def ssl_log_ratio(lam0: float, lam1: float, x, v: float = 1.0):
    """log of the two-Laplace moment ratio M_lam0 / M_lam1 at argument x."""
    return slab_exp_moment(lam0, x, v) - slab_exp_moment(lam1, x, v)
