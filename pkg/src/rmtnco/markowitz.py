"""Closed-form mean-variance allocation and in/out-of-sample risk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .rmt import CorrelationEstimate

EIGEN_GUARD = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Smallest eigenvalue of a matrix handed to the allocator is below the guard."""


@dataclass(frozen=True)
class GainSpec:
    g: np.ndarray
    G: float = 1.0

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 1 or not np.all(np.isfinite(g)):
            raise ValueError("g must be a finite vector")
        object.__setattr__(self, "g", g)

    @classmethod
    def minimum_variance(cls, p: int, G: float = 1.0) -> "GainSpec":
        return cls(np.ones(p), G)

    def restrict(self, idx) -> "GainSpec":
        return GainSpec(self.g[idx], self.G)


@dataclass(frozen=True)
class AllocationResult:
    weights: np.ndarray
    gamma: float
    strategy_tag: str
    estimator_tag: str | None = None

    @property
    def sum_abs(self) -> float:
        return float(np.abs(self.weights).sum())


@dataclass(frozen=True)
class RiskTriple:
    r2_in: float
    r2_out: float
    r2_true: float | None = None


def _matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, CorrelationEstimate) else np.asarray(x, dtype=float)


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive definite ``a``."""
    lam_min = np.linalg.eigvalsh(a)[0]
    if not lam_min > EIGEN_GUARD:
        raise SingularMatrixError(f"smallest eigenvalue {lam_min:.3e} is below {EIGEN_GUARD:g}")
    return cho_solve(cho_factor(a, lower=True), b)


def optimal_weights(Xi, gain: GainSpec) -> AllocationResult:
    """w = gamma Xi^-1 g with gamma chosen so that w'g = G."""
    a = _matrix(Xi)
    if a.shape != (len(gain.g), len(gain.g)):
        raise ValueError(f"matrix shape {a.shape} does not match gain vector of length {len(gain.g)}")
    x = spd_solve(a, gain.g)
    denom = float(gain.g @ x)
    if not denom > 0:
        raise SingularMatrixError(f"g' Xi^-1 g = {denom:.3e} is not positive")
    gamma = gain.G / denom
    tag = Xi.estimator_tag if isinstance(Xi, CorrelationEstimate) else None
    return AllocationResult(gamma * x, gamma, "markowitz", tag)


def risk_true(gain: GainSpec, Sigma) -> float:
    x = spd_solve(_matrix(Sigma), gain.g)
    return gain.G**2 / float(gain.g @ x)


def risk_in_out(E_in, E_out, gain: GainSpec, Sigma=None) -> RiskTriple:
    a_in, a_out = _matrix(E_in), _matrix(E_out)
    x = spd_solve(a_in, gain.g)
    gx = float(gain.g @ x)
    if not gx > 0:
        raise SingularMatrixError(f"g' E_in^-1 g = {gx:.3e} is not positive")
    r2_in = gain.G**2 / gx
    r2_out = gain.G**2 * float(x @ a_out @ x) / gx**2
    r2_true = None if Sigma is None else risk_true(gain, Sigma)
    return RiskTriple(r2_in, r2_out, r2_true)


def portfolio_variance(w: np.ndarray, Xi) -> float:
    return float(w @ _matrix(Xi) @ w)


def efficient_frontier(Xi_in, Xi_out, gain_levels, g=None) -> list[tuple[float, float, float]]:
    levels = np.asarray(gain_levels, dtype=float)
    if np.any(levels <= 0) or np.any(np.diff(levels) < 0):
        raise ValueError("gain levels must be positive and sorted")
    p = _matrix(Xi_in).shape[0]
    g = np.ones(p) if g is None else np.asarray(g, dtype=float)
    out = []
    for G in levels:
        rt = risk_in_out(Xi_in, Xi_out, GainSpec(g, float(G)))
        out.append((float(G), rt.r2_in, rt.r2_out))
    return out


@dataclass(frozen=True)
class InequalityReport:
    p: int
    n: int
    q: float
    trials: int
    r2_in_scaled: float  # mean R2_in / (1 - q)
    r2_true: float
    r2_out_scaled: float  # mean (1 - q) R2_out

    @property
    def max_relative_spread(self) -> float:
        vals = np.array([self.r2_in_scaled, self.r2_true, self.r2_out_scaled])
        return float((vals.max() - vals.min()) / self.r2_true)


def risk_inequality_check(p: int, q: float, trials: int, seed: int, G: float = 1.0) -> InequalityReport:
    """Monte Carlo check of R2_in/(1-q) ~ R2_true ~ (1-q) R2_out for white data.

    Each trial draws an in-sample and an independent realized sample of
    ``n = round(p / q)`` Gaussian observations with identity covariance.
    The gain vector is a random direction normalized to g'g = p, drawn
    independently of the data.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    n = int(round(p / q))
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(p)
    g *= np.sqrt(p) / np.linalg.norm(g)
    gain = GainSpec(g, G)
    Sigma = np.eye(p)
    r_in = np.empty(trials)
    r_out = np.empty(trials)
    for k in range(trials):
        x_in = rng.standard_normal((p, n))
        x_out = rng.standard_normal((p, n))
        rt = risk_in_out(x_in @ x_in.T / n, x_out @ x_out.T / n, gain)
        r_in[k], r_out[k] = rt.r2_in, rt.r2_out
    qq = p / n
    return InequalityReport(
        p, n, qq, trials,
        float(r_in.mean() / (1 - qq)),
        risk_true(gain, Sigma),
        float((1 - qq) * r_out.mean()),
    )
