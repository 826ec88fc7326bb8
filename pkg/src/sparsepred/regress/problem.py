"""Regression problems, designs and subset priors."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from ..errors import DomainError
from ..numcore import SeededStream


def normalize_design(X) -> np.ndarray:
    """Rescale every column to Euclidean norm sqrt(n)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError("design must be a 2-D array")
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise DomainError("design has a zero column")
    return X * (math.sqrt(X.shape[0]) / norms)


def load_design_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a design from CSV: header row of column names, one row per observation."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DomainError(f"{path}: empty design file")
    header, body = rows[0], rows[1:]
    try:
        X = np.array([[float(v) for v in row] for row in body], dtype=float)
    except ValueError as exc:
        raise DomainError(f"{path}: non-numeric entry ({exc})") from None
    if X.ndim != 2 or X.shape[1] != len(header):
        raise DomainError(f"{path}: rows do not match the header width")
    return header, X


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Y ~ N(X beta0, I_n), future Y_new ~ N(X_new beta0, I_m)."""

    X: np.ndarray
    X_new: np.ndarray
    beta0: np.ndarray

    def __post_init__(self):
        X, Xn, b = (np.asarray(a, dtype=float) for a in (self.X, self.X_new, self.beta0))
        if X.ndim != 2 or Xn.ndim != 2 or X.shape[1] != Xn.shape[1] or b.shape != (X.shape[1],):
            raise DomainError("inconsistent shapes for X, X_new, beta0")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "X_new", Xn)
        object.__setattr__(self, "beta0", b)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.X_new.shape[0]

    @property
    def S0(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.beta0))

    def normalized(self) -> "RegressionProblem":
        Xn = normalize_design(self.X_new) if self.m else self.X_new
        return RegressionProblem(normalize_design(self.X), Xn, self.beta0)

    def draw_y(self, rng: np.random.Generator) -> np.ndarray:
        return self.X @ self.beta0 + rng.standard_normal(self.n)


def random_problem(n: int, p: int, s: int, m: int, stream: SeededStream,
                   magnitude: float | tuple[float, float] = 1.0,
                   rho: float = 0.0) -> RegressionProblem:
    """Gaussian design (equicorrelation rho), normalized, with a random s-sparse beta0."""
    rng = stream.generator()
    Z = rng.standard_normal((n, p))
    if rho:
        Z = math.sqrt(1.0 - rho) * Z + math.sqrt(rho) * rng.standard_normal((n, 1))
    Xn = rng.standard_normal((m, p)) if m else np.zeros((0, p))
    beta0 = np.zeros(p)
    support = rng.choice(p, size=s, replace=False) if s else np.array([], dtype=int)
    if isinstance(magnitude, tuple):
        mags = rng.uniform(magnitude[0], magnitude[1], size=s)
    else:
        mags = np.full(s, float(magnitude))
    beta0[support] = mags * rng.choice([-1.0, 1.0], size=s)
    return RegressionProblem(Z, Xn, beta0).normalized()


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformSlab:
    """Flat slab with density (lam/2)^s on the active coefficients."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("slab scale must be positive")


@dataclass(frozen=True)
class LaplaceSlab:
    """Product Laplace slab (lam/2)^s exp(-lam ||beta_S||_1)."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("slab rate must be positive")


@dataclass(frozen=True, eq=False)
class ModelSizePrior:
    """pi(s) for s = 0..R, stored as normalized log masses."""

    log_pmf: np.ndarray
    family: dict = field(default_factory=dict)

    def __post_init__(self):
        lp = np.asarray(self.log_pmf, dtype=float)
        if lp.ndim != 1 or len(lp) < 1:
            raise DomainError("model-size prior needs at least the s = 0 mass")
        object.__setattr__(self, "log_pmf", lp - special.logsumexp(lp))

    @property
    def R(self) -> int:
        return len(self.log_pmf) - 1

    @classmethod
    def complexity(cls, p: int, R: int, a: float = 1.0, c: float = 1.0) -> "ModelSizePrior":
        """pi(s) proportional to c^(-s) p^(-a s)."""
        if not (a > 0 and c > 0):
            raise DomainError("complexity prior needs a, c > 0")
        s = np.arange(R + 1)
        return cls(-s * (math.log(c) + a * math.log(p)), {"kind": "complexity", "a": a, "c": c, "p": p})

    def satisfies_sandwich(self, p: int, A1, A2, A3, A4) -> bool:
        """A1 p^-A3 <= pi(s)/pi(s-1) <= A2 p^-A4 for s = 1..R."""
        ratios = np.diff(self.log_pmf)
        lo = math.log(A1) - A3 * math.log(p)
        hi = math.log(A2) - A4 * math.log(p)
        return bool(np.all(ratios >= lo - 1e-12) and np.all(ratios <= hi + 1e-12))

    def tail_mass_beyond(self, R: int) -> float:
        return float(np.exp(special.logsumexp(self.log_pmf[R + 1:]))) if R < self.R else 0.0


@dataclass(frozen=True)
class RegressionPrior:
    slab: UniformSlab | LaplaceSlab
    size: ModelSizePrior

    @property
    def R(self) -> int:
        return self.size.R
