"""Gaussian tail functions, quadrature rules, the Euler-integral 2F1 and
seeded random streams.

Everything here is pure: results depend only on the arguments, so the
functions are safe to call from concurrent tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import optimize, special

from .errors import DomainError, EvaluationError, UsageError

LOG_2PI = math.log(2.0 * math.pi)
HALF_LOG_2PI = 0.5 * LOG_2PI

# Below this abscissa log Phi is evaluated through the asymptotic tail series.
_TAIL_CUTOFF = -8.0


# ---------------------------------------------------------------------------
# Gaussian tails
# ---------------------------------------------------------------------------

def _check_finite(x: np.ndarray, name: str = "x") -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite")


# (-1)^k (2k-1)!! for k = 0..30
_TAIL_COEFS = np.cumprod(np.r_[1.0, -(2.0 * np.arange(1, 31) - 1.0)])


def _tail_series(x: np.ndarray) -> np.ndarray:
    """sum_k (-1)^k (2k-1)!! / x^(2k), k = 0..30, for |x| >= 8.

    The series is divergent, with its smallest term near k = x^2/2; for
    |x| >= 8 the first 31 terms are all still decreasing and the truncation
    error is below 1e-13 relative, which is what makes the two branches meet.
    """
    u = 1.0 / (x * x)
    total = np.full_like(x, _TAIL_COEFS[-1])
    for c in _TAIL_COEFS[-2::-1]:
        total = total * u + c
    return total


def _log_tail_series(x: np.ndarray) -> np.ndarray:
    """log Phi(x) for x <= -8: Phi(x) = phi(x)/|x| times the tail series."""
    return -0.5 * x * x - np.log(-x) - HALF_LOG_2PI + np.log(_tail_series(x))


def log_norm_cdf(x):
    """Return log Phi(x), accurate far into the lower tail.

    Values above -8 come from ``scipy.special.log_ndtr``; below, from the
    tail series, which stays finite and accurate to 12+ digits at x = -40.
    """
    arr = np.asarray(x, dtype=float)
    _check_finite(arr)
    out = np.empty_like(arr)
    low = arr < _TAIL_CUTOFF
    out[~low] = special.log_ndtr(arr[~low])
    if low.any():
        out[low] = _log_tail_series(arr[low])
    return out if out.ndim else float(out)


def log_norm_sf(x):
    """log(1 - Phi(x))."""
    return log_norm_cdf(-np.asarray(x, dtype=float))


def log_mills_ratio(x):
    """log R(x) with R(x) = (1 - Phi(x)) / phi(x).

    Finite for any finite x: for large positive x the tail series is used,
    for large negative x the log of the e^{x^2/2} growth is returned exactly.
    """
    arr = np.asarray(x, dtype=float)
    _check_finite(arr)
    out = np.empty_like(arr)
    big = arr > -_TAIL_CUTOFF
    # the series form avoids cancelling x^2/2 against log Phi(-x)
    out[big] = np.log(_tail_series(arr[big])) - np.log(arr[big])
    small = arr[~big]
    out[~big] = log_norm_cdf(-small) + 0.5 * small * small + HALF_LOG_2PI
    return out if out.ndim else float(out)


def mills_ratio(x):
    """Gaussian Mills ratio R(x) = (1 - Phi(x)) / phi(x)."""
    return np.exp(log_mills_ratio(x))


def mills_bounds(x):
    """Two-sided bound 2/(sqrt(x^2+4)+x) < R(x) < 2/(sqrt(x^2+2)+x), x > 0."""
    x = np.asarray(x, dtype=float)
    lower = 2.0 / (np.sqrt(x * x + 4.0) + x)
    upper = 2.0 / (np.sqrt(x * x + 2.0) + x)
    return lower, upper


def log_norm_pdf(x, mean=0.0, var=1.0):
    x = np.asarray(x, dtype=float)
    return -0.5 * (x - mean) ** 2 / var - 0.5 * np.log(var) - HALF_LOG_2PI


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """A fixed rule (nodes, weights) or an adaptive Simpson setting.

    Gauss-Hermite rules are stored normalized for expectations under
    N(0, 1): nodes are sqrt(2) * t_k and weights w_k / sqrt(pi).
    """

    kind: str
    node_count: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    tol: float = 1e-10
    half_width: float = 12.0

    def __post_init__(self):
        if self.kind not in ("gauss-hermite", "gauss-legendre", "adaptive-simpson"):
            raise DomainError(f"unknown quadrature kind {self.kind!r}")
        if self.kind != "adaptive-simpson":
            if self.node_count < 1 or len(self.nodes) != self.node_count:
                raise DomainError("node_count must match the node array")
            if np.any(self.weights <= 0):
                raise DomainError("quadrature weights must be positive")

    @classmethod
    def gauss_hermite(cls, n: int = 201) -> "QuadratureRule":
        t, w = _hermite_nodes(n)
        # far nodes of large rules have weights that underflow to zero
        keep = w > 0
        t, w = t[keep], w[keep]
        return cls("gauss-hermite", len(t), math.sqrt(2.0) * t, w / math.sqrt(math.pi))

    @classmethod
    def gauss_legendre(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> "QuadratureRule":
        if not hi > lo:
            raise DomainError("need hi > lo")
        t, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * (hi - lo)
        return cls("gauss-legendre", n, lo + half * (t + 1.0), half * w)

    @classmethod
    def adaptive_simpson(cls, tol: float = 1e-10, half_width: float = 12.0) -> "QuadratureRule":
        return cls("adaptive-simpson", 0, np.empty(0), np.empty(0), tol, half_width)


@lru_cache(maxsize=32)
def _hermite_nodes(n: int):
    t, w = special.roots_hermite(n)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


@lru_cache(maxsize=8)
def default_rule(n: int = 201) -> QuadratureRule:
    return QuadratureRule.gauss_hermite(n)


def hermite_rule(rule: QuadratureRule | None) -> QuadratureRule:
    """The default rule for None; otherwise rule itself, which must be Gauss-Hermite.

    Vectorized callers evaluate on the node array and cannot use an adaptive rule.
    """
    if rule is None:
        return default_rule()
    if rule.kind != "gauss-hermite":
        raise UsageError(f"a Gauss-Hermite rule is required here, got {rule.kind}")
    return rule


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 50) -> float:
    """Adaptive Simpson integration of a scalar function on [a, b]."""

    def simpson(fa, fm, fb, h):
        return h * (fa + 4.0 * fm + fb) / 6.0

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = simpson(fa, fm, fb, b - a)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(flo, flm, fmid, mid - lo)
        right = simpson(fmid, frm, fhi, hi - mid)
        delta = left + right - est
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
    return total


def expect_std_normal(f: Callable, rule: QuadratureRule | None = None) -> float:
    """E f(Z) for Z ~ N(0, 1).

    ``f`` is called once on the whole node array for fixed rules, so it must
    be vectorized; it may return extra trailing axes, which are preserved.
    Fixed rules assume f is smooth; kinked integrands need the adaptive rule.
    """
    rule = default_rule() if rule is None else rule
    if rule.kind == "adaptive-simpson":
        def integrand(z):
            val = float(f(np.asarray(z)))
            if not math.isfinite(val):
                raise EvaluationError(f"integrand not finite at z={z}", node=float(z))
            return val * math.exp(-0.5 * z * z - HALF_LOG_2PI)
        h = rule.half_width
        return adaptive_simpson(integrand, -h, h, rule.tol)
    if rule.kind == "gauss-legendre":
        raise DomainError("expect_std_normal needs a Gauss-Hermite or adaptive rule")
    vals = np.asarray(f(rule.nodes), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.argwhere(bad)[0][0])
        raise EvaluationError(f"integrand not finite at node z={rule.nodes[k]}",
                              node=float(rule.nodes[k]))
    return np.tensordot(rule.weights, vals, axes=(0, 0))


# ---------------------------------------------------------------------------
# Gauss hypergeometric function via the Euler integral
# ---------------------------------------------------------------------------

EULER_PANEL_NODES = 20
EULER_DROP = 60.0   # nats below the peak at which the integrand is cut


def _euler_log_integrand(a_p, b_p, c_p, z, u):
    """Log Euler integrand in logit coordinates t = expit(u), Jacobian included."""
    t = special.expit(u)
    return (b_p * special.log_expit(u) + (c_p - b_p) * special.log_expit(-u)
            - a_p * np.log1p(-t * z))


def _panel_edges(g, u0: float, width: float, peak: float, direction: float) -> list:
    edges, step, u = [], width, u0
    for _ in range(80):
        u = u + direction * step
        edges.append(u)
        if g(np.array([u]))[0] < peak - EULER_DROP:
            break
        step *= 2.0
    return edges


def log_gauss_2f1(a_p: float, b_p: float, c_p: float, z: float,
                  nodes: int | None = None) -> float:
    """log 2F1(a', b'; c'; z) from the Euler integral, for positive integrands.

    2F1 = Gamma(c') / (Gamma(b') Gamma(c'-b')) *
          int_0^1 t^(b'-1) (1-t)^(c'-b'-1) (1-tz)^(-a') dt.
    With t = expit(u) the integrand is smooth and unimodal on the real
    line.  Gauss-Legendre panels start at the mode with the curvature
    width and double outward until the integrand has dropped 60 nats.
    Everything stays in log space, so |a'| in the thousands is fine.
    Requires c' > b' > 0 and z < 1.
    """
    if not (c_p > b_p > 0):
        raise DomainError("Euler representation needs c' > b' > 0")
    if not z < 1.0:
        raise DomainError("Euler representation needs z < 1")
    a_p, b_p, c_p, z = float(a_p), float(b_p), float(c_p), float(z)
    k = EULER_PANEL_NODES if nodes is None else int(nodes)
    g = lambda u: _euler_log_integrand(a_p, b_p, c_p, z, u)

    scan = np.linspace(-60.0, 60.0, 241)
    j = int(np.argmax(g(scan)))
    res = optimize.minimize_scalar(lambda u: -float(g(np.array([u]))[0]),
                                   bounds=(scan[max(j - 1, 0)], scan[min(j + 1, 240)]),
                                   method="bounded", options={"xatol": 1e-10})
    u0 = float(res.x)
    peak = float(g(np.array([u0]))[0])
    h = 1e-3
    curv = -(g(np.array([u0 + h]))[0] - 2.0 * peak + g(np.array([u0 - h]))[0]) / h**2
    width = min(1.0 / math.sqrt(curv), 1.0) if curv > 0 else 1.0
    edges = np.array(_panel_edges(g, u0, width, peak, -1.0)[::-1] + [u0]
                     + _panel_edges(g, u0, width, peak, 1.0))

    t, w = np.polynomial.legendre.leggauss(k)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * t).ravel()
    log_w = np.log((half[:, None] * w).ravel())
    log_int = special.logsumexp(log_w + g(u))
    return float(log_int - special.betaln(b_p, c_p - b_p))


def gauss_2f1(a_p: float, b_p: float, c_p: float, z: float,
              nodes: int | None = None) -> float:
    """2F1(a', b'; c'; z) by quadrature of the Euler integral."""
    return math.exp(log_gauss_2f1(a_p, b_p, c_p, z, nodes))


def hyp2f1_ratio(a_p: float, b_p: float, c_p: float, z: float, delta: float) -> float:
    """f_delta = 2F1(a', b'+delta; c'; -z) / 2F1(a', b'; c'; -z)."""
    return math.exp(log_gauss_2f1(a_p, b_p + delta, c_p, -z)
                    - log_gauss_2f1(a_p, b_p, c_p, -z))


def hyp2f1_series(a_p: float, b_p: float, c_p: float, z: float) -> float:
    """Terminating hypergeometric series for a non-positive integer a'."""
    if not (a_p <= 0 and float(a_p).is_integer()):
        raise DomainError("series only terminates for a' in {0, -1, -2, ...}")
    total, term = 1.0, 1.0
    for k in range(int(-a_p)):
        term *= (a_p + k) * (b_p + k) / ((c_p + k) * (k + 1.0)) * z
        total += term
    return total


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeededStream:
    """Counter-based random stream keyed by (seed, stream_id[, path]).

    Every call to :meth:`generator` starts the same Philox sequence, so
    results do not depend on which worker evaluates which grid point.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        for v in (self.seed, self.stream_id, *self.path):
            if not (0 <= int(v) < 2**64):
                raise DomainError("seed and stream ids must be 64-bit unsigned")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed),
                                    spawn_key=(int(self.stream_id), *map(int, self.path)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream_id, self.path + (int(index),))
