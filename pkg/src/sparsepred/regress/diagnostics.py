"""Design diagnostics: sparse singular values, compatibility and signal thresholds."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from ..errors import CapabilityError, DomainError

PHI_TILDE_BUDGET = 10 ** 5
CONE_FACTOR = 7.0
CONE_DIRECTIONS = 10 ** 4


def design_norm(X) -> float:
    """||X||: the largest column norm."""
    return float(np.max(np.linalg.norm(X, axis=0)))


def phi_tilde(X, s: int, budget: int = PHI_TILDE_BUDGET) -> float:
    """min over |S| = s of the smallest singular value of X_S, divided by ||X||.

    By eigenvalue interlacing this also equals the minimum over |S| <= s.
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    if not 1 <= s <= p:
        raise DomainError(f"support size must lie in 1..{p}")
    count = math.comb(p, s)
    if count > budget:
        raise CapabilityError(f"C({p},{s}) = {count} supports exceed the budget {budget}")
    G = X.T @ X
    best = math.inf
    it = itertools.combinations(range(p), s)
    while True:
        block = np.array(list(itertools.islice(it, 20_000)), dtype=np.intp)
        if block.size == 0:
            break
        block = block.reshape(-1, s)
        ev = np.linalg.eigvalsh(G[block[:, :, None], block[:, None, :]])[:, 0]
        best = min(best, float(np.min(ev)))
    return math.sqrt(max(best, 0.0)) / design_norm(X)


def _cone_ratio(X, S, beta, norm_x):
    l1 = np.sum(np.abs(beta[..., S]), axis=-1)
    return np.linalg.norm(beta @ X.T, axis=-1) * math.sqrt(len(S)) / (norm_x * l1)


def compatibility_number(X, S, directions: int = CONE_DIRECTIONS, seed: int = 0,
                         refine: bool = True) -> tuple[float, dict]:
    """Upper bound on inf ||X b|| sqrt|S| / (||X|| ||b_S||_1) over the cone
    ||b_{S^c}||_1 <= 7 ||b_S||_1.

    Random cone directions locate the region of the minimum; each sign
    pattern on S then gives a convex quadratic program that a local solver
    descends on.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    S = sorted(int(j) for j in S)
    if not S:
        raise DomainError("compatibility number needs a nonempty support")
    Sc = [j for j in range(p) if j not in S]
    norm_x = design_norm(X)
    rng = np.random.default_rng(seed)
    s = len(S)
    B = np.zeros((directions, p))
    core = rng.standard_normal((directions, s))
    core /= np.sum(np.abs(core), axis=1, keepdims=True)
    B[:, S] = core
    if Sc:
        off = rng.laplace(size=(directions, len(Sc)))
        off *= (CONE_FACTOR * rng.uniform(size=(directions, 1))) / np.sum(np.abs(off), axis=1, keepdims=True)
        B[:, Sc] = off
    ratios = _cone_ratio(X, S, B, norm_x)
    best = float(np.min(ratios))
    info = {"directions": directions, "sampled": best, "approximate": True, "qp_patterns": 0}
    if not refine:
        return best, info
    XS, Xc = X[:, S], X[:, Sc]
    k = len(Sc)
    # one representative per +-pair of sign patterns; the objective is even
    for signs in itertools.product((1.0, -1.0), repeat=s - 1):
        sig = np.array((1.0,) + signs)

        def obj(z):
            r = XS @ z[:s] + (Xc @ (z[s:s + k] - z[s + k:]) if k else 0.0)
            return float(r @ r)

        def grad(z):
            r = XS @ z[:s] + (Xc @ (z[s:s + k] - z[s + k:]) if k else 0.0)
            g = 2.0 * np.concatenate([XS.T @ r, Xc.T @ r, -(Xc.T @ r)]) if k else 2.0 * XS.T @ r
            return g

        cons = [{"type": "eq", "fun": lambda z: sig @ z[:s] - 1.0, "jac": lambda z: np.r_[sig, np.zeros(2 * k)]}]
        if k:
            cons.append({"type": "ineq", "fun": lambda z: CONE_FACTOR - np.sum(z[s:]),
                         "jac": lambda z: np.r_[np.zeros(s), -np.ones(2 * k)]})
        bounds = [(0, None) if g > 0 else (None, 0) for g in sig] + [(0, None)] * (2 * k)
        z0 = np.r_[sig / s, np.zeros(2 * k)]
        res = optimize.minimize(obj, z0, jac=grad, bounds=bounds, constraints=cons, method="SLSQP",
                                options={"maxiter": 500, "ftol": 1e-14})
        info["qp_patterns"] += 1
        if res.success:
            val = math.sqrt(max(res.fun, 0.0)) * math.sqrt(s) / norm_x
            best = min(best, val)
    return best, info


def chi2_median(k: int) -> float:
    return float(stats.chi2.median(k))


@dataclass
class DesignDiagnostics:
    phi_S0: float
    phi_tilde: dict
    psi_tilde: float
    psi_size: int
    beta_min: float
    eig_min: float
    eig_max: float
    d_hat: float
    flags: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def design_diagnostics(X, S0, M: float = 1.0, b: float = 0.5, A4: float = 2.5,
                       lam: float | None = None, sizes=None, beta0=None,
                       directions: int = CONE_DIRECTIONS, seed: int = 0,
                       psi_fallback: bool = False) -> DesignDiagnostics:
    """Compatibility, sparse singular values, beta-min threshold and design flags.

    With psi_fallback, a small-model singular value whose enumeration is too
    large is replaced by the full-design value phi_tilde(p), a lower bound,
    which can only enlarge beta_min.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    S0 = sorted(int(j) for j in S0)
    if not S0:
        raise DomainError("design diagnostics need a nonempty true support")
    if not (0 < b < 1):
        raise DomainError("b must lie in (0, 1)")
    s0 = len(S0)
    lam = math.sqrt(n) / p if lam is None else lam
    norm_x = design_norm(X)
    log_p = math.log(p)

    phi, phi_info = compatibility_number(X, S0, directions, seed)
    sizes = range(1, min(p, s0 + 1) + 1) if sizes is None else sizes
    pt, running = {}, math.inf
    for k in sorted(sizes):
        running = min(running, phi_tilde(X, k))
        pt[k] = running

    lam_bar = 2.0 * norm_x * math.sqrt(log_p)
    t = (2.0 + 3.0 / A4 + 33.0 / phi ** 2 * lam / lam_bar) * s0
    psi_size = min(int(math.floor(t)), p)
    psi_is_bound = False
    try:
        psi = pt[psi_size] if psi_size in pt else phi_tilde(X, psi_size)
    except CapabilityError:
        if not psi_fallback:
            raise
        sv = np.linalg.svd(X, compute_uv=False)
        psi = float(sv[-1]) / norm_x if p <= n else 0.0
        psi_is_bound = True

    X0 = X[:, S0]
    ev = np.linalg.eigvalsh(X0.T @ X0)
    eig_min, eig_max = float(ev[0]), float(ev[-1])
    beta_min = (M / psi ** 2 * math.sqrt(s0 * log_p) / (norm_x * phi)
                if psi > 0 and phi > 0 else math.inf)
    d_hat = math.log(eig_max / n) / math.log(log_p) if log_p > 1 else math.nan
    lower_lhs = 4.0 * chi2_median(s0) / ((1.0 - b) ** 2 * beta_min ** 2)
    flags = {
        "eigen_lower": bool(lower_lhs < eig_min),
        "eigen_lower_lhs": lower_lhs,
        "normalized": bool(abs(norm_x - math.sqrt(n)) < 1e-8 * math.sqrt(n)),
    }
    if beta0 is not None:
        beta0 = np.asarray(beta0, dtype=float)
        flags["beta_min"] = bool(np.min(np.abs(beta0[S0])) >= beta_min)
    flags["assumption1"] = bool(flags["eigen_lower"] and flags["normalized"]
                                and flags.get("beta_min", True))
    return DesignDiagnostics(phi, pt, psi, psi_size, beta_min, eig_min, eig_max, d_hat, flags,
                             {"phi": phi_info, "psi_is_bound": psi_is_bound, "lam": lam,
                              "lam_bar": lam_bar, "M": M, "b": b, "A4": A4})


def signal_constant_for_assumption(diag: DesignDiagnostics, s0: int, b: float,
                                   margin: float = 1.1) -> float:
    """Smallest M (times margin) for which the eigenvalue lower bound holds."""
    need = 2.0 * math.sqrt(chi2_median(s0)) / ((1.0 - b) * math.sqrt(diag.eig_min))
    return margin * need / diag.beta_min * diag.extra["M"]
