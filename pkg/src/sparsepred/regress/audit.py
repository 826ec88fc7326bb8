"""Bound audits and the desk-scale rate check for sparse regression."""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from ..errors import CapabilityError, DomainError
from ..numcore import LOG_2PI, SeededStream
from ..risk import BoundReport, RateSweepRow
from .diagnostics import design_diagnostics, signal_constant_for_assumption
from .marginal import MAX_LAPLACE_SIZE, subset_log_marginal
from .posterior import max_feasible_R
from .problem import (LaplaceSlab, ModelSizePrior, RegressionPrior, RegressionProblem,
                      UniformSlab, random_problem)
from .risk import evaluate_draw, kl_pred_regression


# ---------------------------------------------------------------------------
# Uniform slab risk bound
# ---------------------------------------------------------------------------

def uniform_slab_bound(n: int, m: int, p: int, s_n: int, lam: float, a: float, c: float) -> float:
    """s log(e c p^(a+1)) + (s/2) log((2/pi)(n+m)/lam^2)."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    return (s_n * (1.0 + math.log(c) + (a + 1.0) * math.log(p))
            + 0.5 * s_n * math.log((2.0 / math.pi) * (n + m) / lam ** 2))


def bound_lemma13(n: int, m: int, p: int, s_n: int, lam: float, a: float, c: float,
                  audit: bool = False, instances: int = 5, draws: int = 20,
                  stream: SeededStream | None = None, magnitude=(0.5, 3.0)) -> BoundReport:
    """Uniform-slab KL risk bound, optionally audited on sampled s_n-sparse beta0."""
    bound = uniform_slab_bound(n, m, p, s_n, lam, a, c)
    inputs = {"n": n, "m": m, "p": p, "s_n": s_n, "lam": lam, "a": a, "c": c}
    if not audit:
        return BoundReport("uniform_slab_risk", inputs, bound, math.nan, True, math.nan, "formula")
    stream = SeededStream(0) if stream is None else stream
    R = min(n, p)
    if R > max_feasible_R(p):
        raise CapabilityError(f"R = min(n, p) = {R} is not enumerable at p = {p}")
    prior = RegressionPrior(UniformSlab(lam), ModelSizePrior.complexity(p, R, a, c))
    worst, worst_se, per = -math.inf, 0.0, []
    for k in range(instances):
        prob = random_problem(n, p, s_n, m, stream.child(k).child(0), magnitude)
        est = kl_pred_regression(prob, prior, draws, stream.child(k).child(1))
        per.append((est.value, est.mc_se))
        if est.value > worst:
            worst, worst_se = est.value, est.mc_se
    reps = [BoundReport.upper("uniform_slab_risk", inputs, bound, v, se) for v, se in per]
    return BoundReport.upper("uniform_slab_risk", inputs, bound, worst, worst_se,
                             instances=per, all_satisfied=all(r.satisfied for r in reps))


# ---------------------------------------------------------------------------
# Marginal-likelihood bounds at the oracle support
# ---------------------------------------------------------------------------

def log_Lambda(Y, problem: RegressionProblem, lam: float) -> float:
    """log of the Laplace-slab marginal at the true support over the likelihood at beta0."""
    r = Y - problem.X @ problem.beta0
    log_lik0 = -0.5 * r @ r - 0.5 * len(Y) * LOG_2PI
    return subset_log_marginal(Y, problem.X, problem.S0, LaplaceSlab(lam)) - log_lik0


def lb_value(problem: RegressionProblem, lam: float) -> float:
    s, n = len(problem.S0), problem.n
    return float(-lam * np.sum(np.abs(problem.beta0)) - 0.5 - lam / n
                 + s * math.log(lam / n) - special.gammaln(s + 1))


def ub_value(problem: RegressionProblem, lam: float, d: float, C0: float) -> float:
    s, n, p = len(problem.S0), problem.n, problem.p
    if s == 0:
        return 0.0
    return float(0.5 * s * (1.0 + 2.0 * lam ** 2 * n * math.log(p) ** d
                            + C0 * math.sqrt(s / n * math.log(p)) + math.log(8 * math.pi / n))
                 - lam * np.sum(np.abs(problem.beta0)))


def ub_constant(diag, s: int, b: float, M: float) -> float:
    """C0 = [2 sqrt(s) + sqrt(2/pi) + 1/b] M0 (1 - b) / (2 sqrt(s)), M0 = M / (psi^2 phi)."""
    M0 = M / (diag.psi_tilde ** 2 * diag.phi_S0)
    return (2 * math.sqrt(s) + math.sqrt(2 / math.pi) + 1 / b) * M0 * (1 - b) / (2 * math.sqrt(s))


def marginal_bound_audit(problem: RegressionProblem, lam: float, draws: int = 100,
                         stream: SeededStream | None = None, M: float = 1.0, b: float = 0.5,
                         d: float | None = None) -> tuple[BoundReport, BoundReport]:
    """Almost-sure lower bound and in-mean upper bound on log Lambda at the true support."""
    stream = SeededStream(0) if stream is None else stream
    s = len(problem.S0)
    values = np.array([log_Lambda(problem.draw_y(stream.child(k).generator()), problem, lam)
                       for k in range(draws)])
    inputs = {"n": problem.n, "p": problem.p, "s": s, "lam": lam, "draws": draws}
    lb = lb_value(problem, lam)
    lb_rep = BoundReport.lower("log_marginal_lower", inputs, lb, float(np.min(values)),
                               per_draw_satisfied=int(np.sum(values >= lb)), draws=draws)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    if s == 0:
        return lb_rep, BoundReport.upper("log_marginal_upper", inputs, 0.0, mean, se)
    diag = design_diagnostics(problem.X, problem.S0, M=M, b=b, lam=lam, beta0=problem.beta0,
                              psi_fallback=True)
    d_used = diag.d_hat if d is None else d
    flags = dict(diag.flags)
    if not flags["assumption1"]:
        rep = BoundReport("log_marginal_upper", inputs, math.nan, mean, False, math.nan, "skipped", se,
                          {"reason": "design assumption or beta-min condition fails", "flags": flags})
        return lb_rep, rep
    C0 = ub_constant(diag, s, b, M)
    ub = ub_value(problem, lam, d_used, C0)
    return lb_rep, BoundReport.upper("log_marginal_upper", inputs, ub, mean, se, C0=C0, d=d_used,
                                     beta_min=diag.beta_min, flags=flags)


# ---------------------------------------------------------------------------
# Desk-scale rate check
# ---------------------------------------------------------------------------

def mu_n(s: int, p: int, n: int, m: int, d: float) -> float:
    return s * max(math.log(p) ** max(d - 1.0, 1.0), math.log1p(m / n))


def strong_signal_problem(n: int, p: int, s: int, m: int, stream: SeededStream, M: float = 1.0,
                          b: float = 0.5, A4: float = 2.5, margin: float = 1.2):
    """Random normalized design with beta0 above the beta-min threshold.

    M is raised when needed so that the eigenvalue lower bound of the design
    assumption holds; the returned dict records the constant actually used.
    """
    base = random_problem(n, p, s, m, stream, magnitude=1.0)
    if s == 0:
        return base, {"M": M, "beta_min": 0.0, "d_hat": 0.0, "flags": {}}
    diag = design_diagnostics(base.X, base.S0, M=M, b=b, A4=A4, psi_fallback=True)
    if not diag.flags["eigen_lower"]:
        M = signal_constant_for_assumption(diag, s, b)
        diag = design_diagnostics(base.X, base.S0, M=M, b=b, A4=A4, psi_fallback=True)
    beta0 = base.beta0 * margin * diag.beta_min
    prob = RegressionProblem(base.X, base.X_new, beta0)
    diag = design_diagnostics(prob.X, prob.S0, M=M, b=b, A4=A4, beta0=beta0, psi_fallback=True)
    return prob, {"M": M, "beta_min": diag.beta_min, "d_hat": diag.d_hat, "flags": diag.flags,
                  "psi_is_bound": diag.extra["psi_is_bound"], "phi_S0": diag.phi_S0,
                  "psi_tilde": diag.psi_tilde}


def theorem7_rate_check(grid=((40, 12, 2), (60, 16, 2), (80, 20, 3)), m: int = 1, draws: int = 10,
                        stream: SeededStream | None = None, a: float = 2.5, c: float = 1.0,
                        M: float = 1.0, b: float = 0.5, R: int | None = None) -> list[RateSweepRow]:
    """Typical KL and squared TV against mu_n with the Laplace slab at lam = sqrt(n)/p.

    Draws whose posterior mass on the true support is below 1/2 are counted
    as atypical and kept out of the typical-KL average.
    """
    stream = SeededStream(0) if stream is None else stream
    rows = []
    for gi, (n, p, s) in enumerate(grid):
        R_used = min(p, MAX_LAPLACE_SIZE, max_feasible_R(p)) if R is None else R
        if R_used < s:
            raise CapabilityError(f"R = {R_used} cannot reach the true support size {s}")
        gs = stream.child(gi)
        prob, info = strong_signal_problem(n, p, s, m, gs.child(0), M, b, a)
        lam = math.sqrt(n) / p
        prior = RegressionPrior(LaplaceSlab(lam), ModelSizePrior.complexity(p, R_used, a, c))
        results = [evaluate_draw(prob, prior, gs.child(1).child(k)) for k in range(draws)]
        kl = np.array([r.kl for r in results])
        tv = np.array([r.tv if r.tv is not None else math.sqrt(max(r.kl, 0) / 2) for r in results])
        mass = np.array([r.mass_S0 for r in results], dtype=float)
        typical = mass >= 0.5 if s > 0 else np.ones(draws, dtype=bool)
        typ_kl = float(np.mean(kl[typical])) if np.any(typical) else math.nan
        d = info["d_hat"] if s > 0 else 0.0
        scale = mu_n(s, p, n, m, d) if s > 0 else mu_n(1, p, n, m, d)
        rows.append(RateSweepRow(n, s, float(m), typ_kl, scale, typ_kl / scale, {
            "p": p, "R": R_used, "lam": lam, "kl_mean": float(np.mean(kl)),
            "kl_se": float(np.std(kl, ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0,
            "tv2_mean": float(np.mean(tv ** 2)), "tv_mean": float(np.mean(tv)),
            "atypical": int(np.sum(~typical)), "mass_S0": mass.tolist(),
            "pinsker": bool(np.all(tv ** 2 <= kl / 2 + 1e-12)),
            "tv2_le_2kl": bool(np.all(tv ** 2 <= 2 * kl + 1e-12)),
            "kl_bound": bool(all(r.kl_bound >= r.kl for r in results)),
            "warnings": sorted({w for r in results for w in r.warnings}), **info}))
    return rows


def rate_trend(rows: list[RateSweepRow]) -> float:
    """Largest ratio over the ratio at the smallest grid point."""
    ratios = [r.ratio for r in rows]
    return max(ratios) / ratios[0]
