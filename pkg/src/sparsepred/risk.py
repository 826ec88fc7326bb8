"""KL prediction risk for the normal-means model.

Two independent routes are provided:

* ``risk_decomposed``: the closed-form decomposition
  rho(theta) = theta^2/(2r) + E log M(theta, 1, Z) - E log M(theta, v, Z),
  written through the N-functions of :mod:`sparsepred.priors`, integrated
  over Z by Gauss-Hermite quadrature;
* ``risk_brute_force``: Monte Carlo over Y ~ N(theta, 1) of the KL loss of
  the predictive density, which only uses the density evaluator.

The remaining functions turn the printed risk bounds into audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import DomainError, EvaluationError, IntegrationError, UsageError
from .numcore import (QuadratureRule, SeededStream, default_rule, expect_std_normal, hermite_rule,
                      log_norm_pdf)
from .predictive import (
    PredictiveDensity,
    averaged_slab_weight,
    eta_loglik_terms,
    eta_posterior,
    slab_weight,
)
from .priors import (
    MIXTURES,
    SLAB_DENOM,
    SPIKE_DENOM,
    SSL,
    DiracLaplaceSS,
    DiracSpike,
    HierarchicalSS,
    Laplace,
    PredictionContext,
    PriorSpec,
    component_moment,
    log_N,
    prior_moment,
)

# Audits of deterministic quantities use this absolute tolerance.
DET_TOL = 1e-6
# Equal-probability strata of the brute-force sampler.
STRATA = 100


@dataclass
class RiskEstimate:
    value: float
    mc_se: float = 0.0
    method: str = "decomposition"
    nodes: int = 0
    draws: int = 0
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


@dataclass
class BoundReport:
    bound_name: str
    inputs: dict
    bound_value: float
    observed_value: float
    satisfied: bool
    slack: float
    kind: str = "upper"
    observed_se: float = 0.0
    extra: dict = field(default_factory=dict)

    @classmethod
    def upper(cls, name, inputs, bound, observed, se=0.0, tol=DET_TOL, **extra):
        band = 3.0 * se if se > 0 else tol
        return cls(name, inputs, float(bound), float(observed),
                   bool(observed <= bound + band), float(bound - observed),
                   "upper", float(se), extra)

    @classmethod
    def lower(cls, name, inputs, bound, observed, se=0.0, tol=DET_TOL, **extra):
        band = 3.0 * se if se > 0 else tol
        return cls(name, inputs, float(bound), float(observed),
                   bool(observed >= bound - band), float(observed - bound),
                   "lower", float(se), extra)


@dataclass
class RateSweepRow:
    n: int
    s_n: int
    r: float
    sup_risk: float
    theoretical_scale: float
    ratio: float
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# KL loss and the two risk routes
# ---------------------------------------------------------------------------

def kl_loss(theta: float, density: PredictiveDensity, ctx: PredictionContext,
            rule: QuadratureRule | None = None) -> float:
    """KL(N(theta, r) || density) by quadrature in y_new (Gauss-Hermite or adaptive)."""
    rule = default_rule() if rule is None else rule
    sr = math.sqrt(ctx.r)
    if rule.kind == "adaptive-simpson":
        def point_loss(z):
            log_p = float(density.log_eval(np.asarray(theta + sr * z)))
            return float(log_norm_pdf(sr * z, 0.0, ctx.r)) - log_p
        try:
            return float(expect_std_normal(point_loss, rule))
        except EvaluationError as err:
            raise IntegrationError("predictive log density is not finite on the support",
                                   node=None if err.node is None else theta + sr * err.node) from err
    rule = hermite_rule(rule)
    t = theta + sr * rule.nodes
    log_p = np.asarray(density.log_eval(t), dtype=float)
    if not np.all(np.isfinite(log_p)):
        k = int(np.argwhere(~np.isfinite(log_p))[0][0])
        raise IntegrationError("predictive log density is not finite on the support",
                               node=float(t[k]))
    log_true = log_norm_pdf(sr * rule.nodes, 0.0, ctx.r)
    return float(np.dot(rule.weights, log_true - log_p))


def _check_separable(prior):
    if isinstance(prior, HierarchicalSS):
        raise UsageError("hierarchical prior: use hierarchical_risk_mc")
    if not isinstance(prior, (Laplace, *MIXTURES)):
        raise UsageError(f"unsupported prior {prior!r}")


def _reference_risk(prior, theta, ctx, rule, orientation):
    """Risk of the component the N-functions are measured against."""
    if isinstance(prior, Laplace):
        return 0.0
    if orientation == SPIKE_DENOM:
        comp = prior.spike
    else:
        comp = prior.slab
    if isinstance(comp, DiracSpike):
        return np.asarray(theta, dtype=float) ** 2 / (2.0 * ctx.r)
    return risk_values(comp, theta, ctx, rule)


def risk_values(prior: PriorSpec, theta, ctx: PredictionContext,
                rule: QuadratureRule | None = None, orientation: str | None = None):
    """Vectorized decomposition risk over an array of theta values."""
    _check_separable(prior)
    rule = hermite_rule(rule)
    theta = np.asarray(theta, dtype=float)
    th = theta[..., None]
    z = rule.nodes
    v = ctx.v
    if isinstance(prior, Laplace):
        head = theta ** 2 / (2.0 * ctx.r)
        n1 = log_N(prior, th, 1.0, z)
        nv = log_N(prior, th, v, z)
    else:
        if orientation is None:
            orientation = SLAB_DENOM if prior.eta > 0 else SPIKE_DENOM
        if prior.eta in (0.0, 1.0):
            # degenerate mixtures reduce to one component
            comp = prior.slab if prior.eta == 1.0 else prior.spike
            if isinstance(comp, DiracSpike):
                return theta ** 2 / (2.0 * ctx.r)
            return risk_values(comp, theta, ctx, rule)
        head = _reference_risk(prior, theta, ctx, rule, orientation)
        n1 = log_N(prior, th, 1.0, z, orientation)
        nv = log_N(prior, th, v, z, orientation)
    if not (np.all(np.isfinite(n1)) and np.all(np.isfinite(nv))):
        raise EvaluationError("log N not finite on the quadrature nodes")
    return head + (n1 - nv) @ rule.weights


def risk_decomposed(theta: float, prior: PriorSpec, ctx: PredictionContext,
                    rule: QuadratureRule | None = None,
                    orientation: str | None = None) -> RiskEstimate:
    """Deterministic risk rho(theta, p) from the N-function decomposition."""
    rule = hermite_rule(rule)
    val = float(risk_values(prior, theta, ctx, rule, orientation))
    return RiskEstimate(val, 0.0, "decomposition", nodes=rule.node_count)


def _log_pred_matrix(prior, y, y_new, ctx):
    """log p(y_new | y) broadcasting y (draws, 1) against y_new (draws, k)."""
    moment = component_moment if isinstance(prior, DiracSpike) else prior_moment
    num = moment(prior, y + y_new / ctx.r, ctx.v)
    den = moment(prior, y, 1.0)
    return log_norm_pdf(y_new, 0.0, ctx.r) + num - den


def risk_brute_force(theta: float, prior: PriorSpec, ctx: PredictionContext,
                     draws: int, stream: SeededStream, inner_nodes: int = 64,
                     chunk: int = 5000, sampling: str = "stratified") -> RiskEstimate:
    """Monte Carlo mean of the KL loss over Y ~ N(theta, 1).

    ``sampling="stratified"`` splits the probability scale into 100 equal
    strata with draws/100 uniform draws in each; the standard error comes
    from the within-stratum variances.  ``sampling="plain"`` uses iid
    draws.  Either way the estimator only touches the density evaluator.
    """
    _check_separable(prior)
    if draws < 1000:
        raise DomainError("brute-force risk needs at least 1000 draws")
    rng = stream.generator()
    if sampling == "plain":
        y_all = theta + rng.standard_normal(draws)
    elif sampling == "stratified":
        per = draws // STRATA
        u = (np.arange(STRATA)[:, None] + rng.uniform(size=(STRATA, per))) / STRATA
        y_all = theta + special.ndtri(u).ravel()
    else:
        raise UsageError(f"unknown sampling scheme {sampling!r}")
    rule = default_rule(inner_nodes)
    sr = math.sqrt(ctx.r)
    t = theta + sr * rule.nodes
    log_true = log_norm_pdf(sr * rule.nodes, 0.0, ctx.r)
    losses = np.empty(len(y_all))
    for start in range(0, len(y_all), chunk):
        y = y_all[start:start + chunk, None]
        log_p = _log_pred_matrix(prior, y, t[None, :], ctx)
        losses[start:start + chunk] = (log_true[None, :] - log_p) @ rule.weights
    if not np.all(np.isfinite(losses)):
        raise EvaluationError("non-finite KL loss in brute-force route")
    if sampling == "plain":
        se = float(losses.std(ddof=1) / math.sqrt(draws))
    else:
        strata = losses.reshape(STRATA, -1)
        var = strata.var(axis=1, ddof=1) / strata.shape[1]
        se = float(math.sqrt(np.sum(var)) / STRATA)
    return RiskEstimate(float(losses.mean()), se, "brute-force",
                        nodes=inner_nodes, draws=len(y_all),
                        extra={"sampling": sampling})


# ---------------------------------------------------------------------------
# Suprema over theta and vector risk
# ---------------------------------------------------------------------------

def theta_max_default(lam: float, v: float, n: int, s_n: int) -> float:
    ratio = n / s_n if s_n > 0 else float(n)
    return lam + 4.0 * math.sqrt(2.0 * math.log(max(ratio, math.e)) * max(v, 1.0))


def sup_risk(prior: PriorSpec, ctx: PredictionContext, theta_max: float,
             theta_min: float = 0.0, points: int = 400,
             rule: QuadratureRule | None = None) -> tuple[float, float]:
    """Max of the risk on [theta_min, theta_max]: grid scan then a bounded refine."""
    grid = np.linspace(theta_min, theta_max, points)
    vals = risk_values(prior, grid, ctx, rule)
    k = int(np.argmax(vals))
    best, arg = float(vals[k]), float(grid[k])
    if 0 < k < points - 1:
        res = optimize.minimize_scalar(
            lambda t: -float(risk_values(prior, t, ctx, rule)),
            bounds=(grid[k - 1], grid[k + 1]), method="bounded",
            options={"xatol": 1e-6})
        if -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    return best, arg


def vector_risk(theta, prior: PriorSpec, ctx: PredictionContext,
                theta_max: float | None = None) -> RiskEstimate:
    """Sum of coordinate risks, with the product-rule bracketing values."""
    _check_separable(prior)
    theta = np.asarray(theta, dtype=float).ravel()
    per = risk_values(prior, theta, ctx)
    n, s = len(theta), int(np.count_nonzero(theta))
    rho0 = float(risk_values(prior, 0.0, ctx))
    lam = prior.lam if isinstance(prior, (Laplace, DiracLaplaceSS)) else prior.lam1
    tmax = theta_max if theta_max is not None else max(
        theta_max_default(lam, ctx.v, n, max(s, 1)), float(np.max(np.abs(theta), initial=0.0)))
    sup, _ = sup_risk(prior, ctx, tmax)
    return RiskEstimate(float(per.sum()), 0.0, "decomposition",
                        extra={"lower": (n - s) * rho0,
                               "upper": (n - s) * rho0 + s * sup,
                               "rho0": rho0, "sup": sup})


def mixture_risk_bound(theta: float, prior, ctx: PredictionContext,
                         rule: QuadratureRule | None = None) -> dict:
    """Lambda(theta) rho(theta, p1) + (1 - Lambda(theta)) rho(theta, p0) vs rho(theta)."""
    rule = hermite_rule(rule)
    if not isinstance(prior, MIXTURES):
        raise UsageError("needs a two-component prior")
    y = theta + rule.nodes
    big_lambda = float(np.dot(rule.weights, slab_weight(prior, y)))

    def comp_risk(comp):
        if isinstance(comp, DiracSpike):
            return theta ** 2 / (2.0 * ctx.r)
        return float(risk_values(comp, theta, ctx, rule))

    r1, r0 = comp_risk(prior.slab), comp_risk(prior.spike)
    rho = float(risk_values(prior, theta, ctx, rule))
    bound = big_lambda * r1 + (1.0 - big_lambda) * r0
    return {"rho": rho, "bound": bound, "Lambda": big_lambda, "rho_slab": r1, "rho_spike": r0}


# ---------------------------------------------------------------------------
# Bayesian LASSO bounds
# ---------------------------------------------------------------------------

def theorem2_bounds(lam: float, v: float) -> tuple[float, float]:
    """Printed bounds on rho(0) and on sup_{theta != 0} rho for the Laplace prior."""
    at_zero = math.log1p(math.sqrt(2.0) / (lam * math.sqrt(math.pi * v))) + 4.0 / (lam * lam * v)
    sup = (math.log(math.sqrt(32.0 * lam * lam * math.pi / v)) + lam * lam / 2.0
           + lam * math.sqrt(2.0 / math.pi) + 4.0 / (lam * lam))
    return at_zero, sup


def bound_theorem2(lam: float, ctx: PredictionContext,
                   theta_max: float | None = None) -> tuple[BoundReport, BoundReport]:
    prior = Laplace(lam)
    b0, bsup = theorem2_bounds(lam, ctx.v)
    rho0 = risk_decomposed(0.0, prior, ctx).value
    tmax = theta_max if theta_max is not None else theta_max_default(lam, ctx.v, 100, 1)
    sup, arg = sup_risk(prior, ctx, tmax)
    # the risk may keep rising towards its large-|theta| limit
    far = float(risk_values(prior, 10.0 * tmax, ctx))
    if far > sup:
        sup, arg = far, 10.0 * tmax
    inputs = {"lambda": lam, "r": ctx.r}
    return (BoundReport.upper("theorem2_rho0", inputs, b0, rho0),
            BoundReport.upper("theorem2_sup", inputs, bsup, sup, argmax=arg))


def theorem3_bound(lam_n: float, a: float, v: float, n: int, s_n: int) -> float:
    lead = (1.0 / math.sqrt(v) - 1.0)
    if not lead * a / (lam_n + a) < 1.0:
        raise DomainError("lower bound precondition ((1/sqrt(v)) - 1) a / (lam + a) < 1 fails")
    tail = math.exp(float(special.log_ndtr(-a)))
    per = (lead * a * tail / (2.0 * (lam_n + a))
           - (4.0 + 3.0 / v + 2.0 / (lam_n * math.sqrt(v))) / lam_n ** 2)
    return (n - s_n) * per


def bound_theorem3_lower(lam_n: float, a: float, ctx: PredictionContext,
                         n: int, s_n: int) -> BoundReport:
    bound = theorem3_bound(lam_n, a, ctx.v, n, s_n)
    rho0 = risk_decomposed(0.0, Laplace(lam_n), ctx).value
    return BoundReport.lower("theorem3_lower", {"lambda_n": lam_n, "a": a, "r": ctx.r,
                                                "n": n, "s_n": s_n},
                             bound, (n - s_n) * rho0)


def bound_theorem3_best(lam_n: float, ctx: PredictionContext, n: int, s_n: int,
                        a_grid=(0.5, 1.0, 2.0)) -> BoundReport:
    """Sweep the free constant a and keep the largest (most informative) bound."""
    reports = []
    for a in a_grid:
        try:
            reports.append(bound_theorem3_lower(lam_n, a, ctx, n, s_n))
        except DomainError:
            continue
    if not reports:
        raise DomainError("no admissible a in the sweep")
    return max(reports, key=lambda rep: rep.bound_value)


# ---------------------------------------------------------------------------
# Spike-and-slab rate bounds
# ---------------------------------------------------------------------------

def theorem4_constant(ctx: PredictionContext, C: float | None = None) -> float:
    """Calibration constant C_r (r < 1) or C*_r (r >= 1), validated."""
    v = ctx.v
    if ctx.r < 1:
        floor = 2.0 / (v * 4.5)
        C = 4.0 if C is None else C
    else:
        floor = 2.0 / (5.0 * (1.0 - v))
        C = (3.0 if 3.0 > floor else 2.0 * floor) if C is None else C
    if not C > floor:
        raise DomainError(f"calibration constant {C} must exceed {floor:.6g}")
    return C


def theorem4_slab_rate(ctx: PredictionContext, C: float | None = None) -> float:
    C = theorem4_constant(ctx, C)
    return math.sqrt(ctx.v * C) if ctx.r < 1 else math.sqrt((1.0 - ctx.v) * C)


def theorem4_remainder(ctx: PredictionContext, C: float | None = None) -> float:
    """Remainder constant added to the rate term of the oracle-calibrated bound."""
    C = theorem4_constant(ctx, C)
    v, r = ctx.v, ctx.r
    if r >= 1:
        cv = C * (1.0 - v)
        return (math.log(8.0 * math.sqrt(math.pi)) + 10.0 + 2.0 * cv
                + C * math.sqrt(2.0 / math.pi) + math.log(2.0 * math.sqrt(cv) + cv))
    return (math.log(8.0 * math.sqrt(2.0 * math.pi)) + 9.0 + C / (r + 1.0) * 4.5
            + math.sqrt(C) * math.sqrt(1.0 / (8.0 * math.pi)) + math.log(2.0 * math.sqrt(C) + C))


def theorem4_prior(n: int, s_n: int, ctx: PredictionContext, C: float | None = None):
    """Dirac+Laplace with (1 - eta)/eta = n/s_n and the calibrated slab rate."""
    if not 0 < s_n < n:
        raise DomainError("need 0 < s_n < n")
    return DiracLaplaceSS(theorem4_slab_rate(ctx, C), s_n / (n + s_n))


def _sparse_sup_risk(prior, ctx, n, s_n, lam_slab, theta_min=0.0):
    rho0 = float(risk_values(prior, 0.0, ctx))
    tmax = theta_max_default(lam_slab, ctx.v, n, s_n)
    sup, arg = sup_risk(prior, ctx, tmax, theta_min=theta_min)
    total = (n - s_n) * rho0 + s_n * sup
    return total, rho0, sup, arg


def bound_theorem4(n: int, s_n: int, ctx: PredictionContext,
                   C: float | None = None) -> BoundReport:
    prior = theorem4_prior(n, s_n, ctx, C)
    total, rho0, sup, arg = _sparse_sup_risk(prior, ctx, n, s_n, prior.lam)
    rate_term = 5.0 / (1.0 + ctx.r) * s_n * math.log(n / s_n)
    remainder = theorem4_remainder(ctx, C)
    scale = s_n * math.log(n / s_n) / (1.0 + ctx.r)
    return BoundReport.upper(
        "theorem4", {"n": n, "s_n": s_n, "r": ctx.r, "lambda": prior.lam, "eta": prior.eta},
        rate_term + remainder, total, rate_term=rate_term, remainder=remainder,
        rho0=rho0, sup=sup, argmax=arg, scale=scale, ratio=total / scale,
        ratio_limit=5.0 + remainder / scale)


def ssl_prior(n: int, s_n: int, ctx: PredictionContext, c: float = 1.0,
              C: float | None = None) -> SSL:
    """SSL with lambda0 = n/s_n, (1 - eta)/eta = c and the calibrated slab rate."""
    if not 0 < s_n < n:
        raise DomainError("need 0 < s_n < n")
    if not c > 0:
        raise DomainError("odds constant c must be positive")
    lam1 = theorem4_slab_rate(ctx, C)
    lam0 = n / s_n
    if not lam1 < lam0:
        raise DomainError("calibration gives lambda1 >= lambda0")
    return SSL(lam0, lam1, 1.0 / (1.0 + c))


def bound_ssl(n: int, s_n: int, ctx: PredictionContext, c: float = 1.0,
              C: float | None = None, signal_const: float | None = None) -> BoundReport:
    """Sup risk of the calibrated SSL prior against 5 x rate + remainder.

    For r >= 1 the supremum runs over signals above signal_const *
    sqrt(log(n/s_n)), with signal_const defaulting to 2.1 sqrt(v).
    """
    prior = ssl_prior(n, s_n, ctx, c, C)
    theta_min = 0.0
    if ctx.r >= 1:
        k = 2.1 * math.sqrt(ctx.v) if signal_const is None else signal_const
        if not k > 2.0 * math.sqrt(ctx.v):
            raise DomainError("signal constant must exceed 2 sqrt(v)")
        theta_min = k * math.sqrt(math.log(n / s_n))
    total, rho0, sup, arg = _sparse_sup_risk(prior, ctx, n, s_n, prior.lam1, theta_min)
    scale = s_n * math.log(n / s_n) / (1.0 + ctx.r)
    remainder = theorem4_remainder(ctx, C)
    rate_term = 5.0 * scale
    return BoundReport.upper(
        "ssl", {"n": n, "s_n": s_n, "r": ctx.r, "lambda0": prior.lam0,
                "lambda1": prior.lam1, "eta": prior.eta, "theta_min": theta_min},
        rate_term + remainder, total, rate_term=rate_term, remainder=remainder,
        rho0=rho0, sup=sup, argmax=arg, scale=scale, ratio=total / scale,
        ratio_limit=5.0 + remainder / scale)


def rate_sweep(kind: str, ns, r: float, exponent: float = 0.4, **kwargs) -> list[RateSweepRow]:
    """Ratio of the calibrated sup risk to s_n log(n/s_n)/(1+r) over n."""
    rows = []
    for n in ns:
        s_n = int(math.ceil(n ** exponent))
        ctx = PredictionContext(r, n, s_n)
        if kind == "theorem4":
            rep = bound_theorem4(n, s_n, ctx, **kwargs)
        elif kind == "ssl":
            rep = bound_ssl(n, s_n, ctx, **kwargs)
        else:
            raise UsageError(f"unknown sweep kind {kind!r}")
        ex = rep.extra
        rows.append(RateSweepRow(n, s_n, r, rep.observed_value, ex["scale"], ex["ratio"],
                                 {"ratio_limit": ex["ratio_limit"], "rho0": ex["rho0"],
                                  "sup": ex["sup"], "bound": rep.bound_value,
                                  "satisfied": rep.satisfied}))
    return rows


def sweep_trend(rows: list[RateSweepRow]) -> float:
    """Largest ratio relative to the ratio at the smallest n."""
    if not rows:
        return 1.0
    first = rows[0].ratio
    return max(row.ratio for row in rows) / first


# ---------------------------------------------------------------------------
# Hierarchical prior
# ---------------------------------------------------------------------------

def hierarchical_risk_constant(lam: float, v: float, r: float) -> float:
    lam2 = lam * lam
    return (math.log(4.0 * math.sqrt(2.0 * math.pi / v)) + 1.0 / lam2 + lam2 / 2.0
            + (2.0 * lam2 + 1.0) / r + lam * (1.0 - math.sqrt(v)) * math.sqrt(2.0 / math.pi)
            + math.log(2.0 * lam + lam2 + 1.0))


@dataclass
class HierarchicalRiskReport:
    risk: RiskEstimate
    odds_mean: float
    log_odds_mean: float
    model_sizes: np.ndarray
    loo_odds: np.ndarray
    risk_bound_rhs: float | None
    extra: dict = field(default_factory=dict)


def hierarchical_risk_mc(theta, prior: HierarchicalSS, ctx: PredictionContext,
                         draws: int, stream: SeededStream, inner_nodes: int = 64,
                         eta_nodes: int | None = None) -> HierarchicalRiskReport:
    """Monte Carlo risk of the hierarchical predictive, summed over coordinates.

    Per draw Y ~ N(theta, I): the eta posterior, the coordinate KL losses,
    the posterior odds moments, the expected model size, and the
    leave-one-out odds E[eta/(1-eta) | Y without i] for every i.
    """
    if not isinstance(prior, HierarchicalSS):
        raise UsageError("needs a HierarchicalSS prior")
    if not prior.a > 1:
        raise DomainError("hierarchical risk audit needs a > 1")
    theta = np.asarray(theta, dtype=float).ravel()
    n = len(theta)
    rng = stream.generator()
    rule = default_rule(inner_nodes)
    sr = math.sqrt(ctx.r)
    log_true = log_norm_pdf(sr * rule.nodes, 0.0, ctx.r)
    t = theta[:, None] + sr * rule.nodes[None, :]
    slab, spike = Laplace(prior.lam), DiracSpike()

    losses = np.empty(draws)
    odds = np.empty(draws)
    log_odds = np.empty(draws)
    sizes = np.empty(draws)
    loo = np.zeros(n)
    for d in range(draws):
        Y = theta + rng.standard_normal(n)
        post = eta_posterior(Y, prior.lam, prior.a, prior.b, eta_nodes)
        g, w = post.grid, post.weights
        odds[d] = float(np.sum(w * g / (1.0 - g)))
        log_odds[d] = float(np.sum(w * (np.log1p(-g) - np.log(g))))
        ld1, ld0 = averaged_slab_weight(post, prior.lam, Y)
        sizes[d] = float(np.sum(np.exp(ld1)))
        lp1 = _log_pred_matrix(slab, Y[:, None], t, ctx)
        lp0 = _log_pred_matrix(spike, Y[:, None], t, ctx)
        log_p = np.logaddexp(ld1[:, None] + lp1, ld0[:, None] + lp0)
        losses[d] = float(np.sum((log_true[None, :] - log_p) @ rule.weights))
        # leave-one-out posteriors: remove each coordinate's likelihood factor
        terms = eta_loglik_terms(Y, prior.lam, g)
        full = post.log_weights[None, :] - terms
        full = full - special.logsumexp(full, axis=1, keepdims=True)
        loo += np.exp(full) @ (g / (1.0 - g))
    loo /= draws
    se = float(losses.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    est = RiskEstimate(float(losses.mean()), se, "monte-carlo", inner_nodes, draws)

    s_n = int(np.count_nonzero(theta))
    signal = np.flatnonzero(theta)
    loo_sup = float(loo[signal].max()) if len(signal) else float(loo.max())
    rhs = None
    if prior.lam > 2:
        D = 1.0 + 2.0 / (prior.a - 1.0)
        C = hierarchical_risk_constant(prior.lam, ctx.v, ctx.r)
        rhs = (s_n * (C + (1.0 - ctx.v) * float(log_odds.mean()))
               + D * (n - s_n) * loo_sup)
    scale = s_n * math.log(n / s_n) / (1.0 + ctx.r) if 0 < s_n < n else float("nan")
    return HierarchicalRiskReport(
        est, float(odds.mean()), float(log_odds.mean()), sizes, loo, rhs,
        {"loo_sup_signal": loo_sup, "loo_sup_all": float(loo.max()),
         "scale": scale, "ratio": est.value / scale if scale == scale else float("nan")})

