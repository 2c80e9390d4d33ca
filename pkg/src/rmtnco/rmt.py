"""Correlation estimators from random matrix theory.

Three estimators share the :class:`CorrelationEstimate` container:

* ``naive``  -- the sample correlation matrix E,
* ``tw``     -- eigenvalue clipping driven by a Tracy-Widom test on the top of
  the spectrum of E,
* ``linear`` -- linear shrinkage of E towards the identity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tracy_widom
from .marketdata import DataError, ReturnPanel

ESTIMATORS = ("naive", "linear", "tw")
DEFAULT_TW_ALPHA = 0.01


class ClippingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CorrelationEstimate:
    matrix: np.ndarray
    estimator_tag: str
    n: int
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        a = self.matrix
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"correlation matrix must be square, got {a.shape}")
        if self.estimator_tag not in ESTIMATORS:
            raise ValueError(f"unknown estimator tag {self.estimator_tag!r}")
        if not np.allclose(a, a.T, rtol=0, atol=1e-12):
            raise ValueError("correlation matrix is not symmetric")
        if not np.allclose(np.diag(a), 1.0, rtol=0, atol=1e-10):
            raise ValueError("correlation matrix must have unit diagonal")

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # column k pairs with eigenvalues[k]

    def reconstruct(self, eigenvalues: np.ndarray | None = None) -> np.ndarray:
        lam = self.eigenvalues if eigenvalues is None else eigenvalues
        v = self.eigenvectors
        return (v * lam) @ v.T


@dataclass(frozen=True)
class MarchenkoPastur:
    q: float

    @property
    def lambda_minus(self) -> float:
        return (1.0 - np.sqrt(self.q)) ** 2

    @property
    def lambda_plus(self) -> float:
        return (1.0 + np.sqrt(self.q)) ** 2

    def density(self, lam):
        lam = np.asarray(lam, dtype=float)
        lo, hi = self.lambda_minus, self.lambda_plus
        inside = (lam > lo) & (lam < hi)
        safe = np.where(inside, lam, 1.0)
        rho = np.sqrt(np.clip((hi - safe) * (safe - lo), 0.0, None)) / (2.0 * np.pi * self.q * safe)
        out = np.where(inside, rho, 0.0)
        return out if out.ndim else float(out)

    def outside_fraction(self, eigenvalues: np.ndarray, margin: float = 0.0) -> float:
        ev = np.asarray(eigenvalues)
        bad = (ev < self.lambda_minus - margin) | (ev > self.lambda_plus + margin)
        return float(bad.mean())


@dataclass(frozen=True)
class TracyWidomTest:
    n: int
    p: int
    alpha: float
    mu_np: float
    sigma_np: float
    critical_value: float

    def statistic(self, eigenvalue: float) -> float:
        return (self.n * eigenvalue - self.mu_np) / self.sigma_np

    def rejects(self, eigenvalue: float) -> bool:
        return self.statistic(eigenvalue) > self.critical_value


@dataclass(frozen=True)
class ShrinkageResult:
    alpha_hat: float
    estimate: CorrelationEstimate


def to_correlation(a: np.ndarray) -> np.ndarray:
    """Rescale a symmetric PSD matrix to exact unit diagonal."""
    d = np.sqrt(np.diag(a))
    if np.any(d <= 0):
        raise DataError("cannot normalize a matrix with a non-positive diagonal entry")
    c = a / np.outer(d, d)
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    return c


def sample_correlation(window: ReturnPanel) -> CorrelationEstimate:
    if not window.standardized:
        raise DataError("sample_correlation expects a standardized window")
    if window.n < 2:
        raise DataError("need at least two observations")
    r = window.returns
    if np.any(np.sum(r**2, axis=1) == 0):
        raise DataError("zero-variance asset in window")
    return CorrelationEstimate(to_correlation(r @ r.T / window.n), "naive", window.n)


def eigendecompose(matrix: np.ndarray) -> SpectralDecomposition:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0, atol=1e-10):
        raise ValueError("eigendecompose needs a symmetric matrix")
    lam, v = np.linalg.eigh(a)
    return SpectralDecomposition(lam[::-1].copy(), v[:, ::-1].copy())


def mp_edges(q: float) -> MarchenkoPastur:
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    return MarchenkoPastur(q)


def tw_centering(n: int, p: int) -> tuple[float, float]:
    """Johnstone's (mu_np, sigma_np) for the top eigenvalue of a white Wishart."""
    a, b = np.sqrt(n - 1.0), np.sqrt(float(p))
    return (a + b) ** 2, (a + b) * (1.0 / a + 1.0 / b) ** (1.0 / 3.0)


def tw_critical(n: int, p: int, alpha: float = DEFAULT_TW_ALPHA) -> TracyWidomTest:
    if n <= 1 or p < 2:
        raise ValueError(f"need n > 1 and p >= 2, got n={n}, p={p}")
    if not 0.0 < alpha <= 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5], got {alpha}")
    mu, sigma = tw_centering(n, p)
    return TracyWidomTest(n, p, alpha, mu, sigma, tracy_widom.ppf(1.0 - alpha))


def tw_signal_count(spectrum: SpectralDecomposition, test: TracyWidomTest) -> int:
    """Number of leading eigenvalues that reject the white-Wishart null.

    The scan runs down the spectrum and stops at the first acceptance.
    """
    if len(spectrum.eigenvalues) != test.p:
        raise ValueError(f"spectrum has {len(spectrum.eigenvalues)} eigenvalues, test expects p={test.p}")
    r = 0
    for lam in spectrum.eigenvalues:
        if not test.rejects(lam):
            break
        r += 1
    return r


def clip_eigenvalues(eigenvalues: np.ndarray, r: int) -> np.ndarray:
    """Keep the top ``r`` eigenvalues and replace the rest by their mean."""
    xi = np.array(eigenvalues, dtype=float)
    if r < len(xi):
        xi[r:] = xi[r:].mean()
    return xi


def tw_clip(E: CorrelationEstimate, alpha: float = DEFAULT_TW_ALPHA) -> CorrelationEstimate:
    if E.estimator_tag != "naive":
        raise ValueError("tw_clip expects the sample correlation matrix")
    spec = eigendecompose(E.matrix)
    r = tw_signal_count(spec, tw_critical(E.n, E.p, alpha))
    if r == E.p:
        warnings.warn("every eigenvalue rejects the null; returning E unchanged", ClippingWarning, stacklevel=2)
        return CorrelationEstimate(E.matrix.copy(), "tw", E.n, flags=("all_signal",))
    xi = clip_eigenvalues(spec.eigenvalues, r)
    return CorrelationEstimate(to_correlation(spec.reconstruct(xi)), "tw", E.n, flags=(f"r={r}",))


def shrinkage_intensity(E: np.ndarray, x: np.ndarray) -> float:
    """Optimal shrinkage weight towards the identity.

    ``x`` holds one observation per column (p x n).  The dispersion term is
    (1/n^2) * sum_i ||x_i x_i' - E||_F^2, capped at ||E - I||_F^2.
    """
    p, n = x.shape
    d2 = np.sum((E - np.eye(p)) ** 2)
    if d2 == 0:
        return 0.0
    # ||x x' - E||^2 = ||x||^4 - 2 x'Ex + ||E||^2, summed over columns
    sq = np.sum(x**2, axis=0)
    quad = np.einsum("it,ij,jt->t", x, E, x)
    b2 = np.sum(sq**2 - 2.0 * quad + np.sum(E**2)) / n**2
    return float(np.clip(min(b2, d2) / d2, 0.0, 1.0))


def linear_shrink(E: CorrelationEstimate, window: ReturnPanel) -> ShrinkageResult:
    if not window.standardized:
        raise DataError("linear_shrink expects a standardized window")
    if window.p != E.p:
        raise ValueError("window and estimate dimensions differ")
    a = shrinkage_intensity(E.matrix, window.returns)
    m = a * np.eye(E.p) + (1.0 - a) * E.matrix
    np.fill_diagonal(m, 1.0)
    return ShrinkageResult(a, CorrelationEstimate(m, "linear", E.n, flags=(f"alpha={a!r}",)))


def estimate(window: ReturnPanel, estimator: str, tw_alpha: float = DEFAULT_TW_ALPHA) -> CorrelationEstimate:
    E = sample_correlation(window)
    if estimator == "naive":
        return E
    if estimator == "linear":
        return linear_shrink(E, window).estimate
    if estimator == "tw":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClippingWarning)
            return tw_clip(E, tw_alpha)
    raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def condition_number(a: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(a)
    return float(lam[-1] / lam[0]) if lam[0] > 0 else np.inf
