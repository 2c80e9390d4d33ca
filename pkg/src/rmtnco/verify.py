"""Monte Carlo checks of the random-matrix laws on white Gaussian data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rmt
from .marketdata import ReturnPanel, standardize


@dataclass(frozen=True)
class MPCoverage:
    p: int
    n: int
    lambda_minus: float
    lambda_plus: float
    margin: float
    fraction_outside: float


@dataclass(frozen=True)
class TWSize:
    trials: int
    rejections: int

    @property
    def rate(self) -> float:
        return self.rejections / self.trials


def white_panel(p: int, n: int, rng: np.random.Generator) -> ReturnPanel:
    r = rng.standard_normal((p, n))
    stamps = np.datetime64("2000-01-07") + 7 * np.arange(n)
    return ReturnPanel(tuple(f"X{i}" for i in range(p)), stamps, r)


def mp_coverage(p: int = 200, q: float = 0.25, seed: int = 0, margin: float = 0.05) -> MPCoverage:
    """Fraction of sample-correlation eigenvalues outside the widened MP support."""
    n = int(round(p / q))
    mp = rmt.mp_edges(p / n)
    E = rmt.sample_correlation(standardize(white_panel(p, n, np.random.default_rng(seed))))
    lam = rmt.eigendecompose(E.matrix).eigenvalues
    return MPCoverage(p, n, mp.lambda_minus, mp.lambda_plus, margin, mp.outside_fraction(lam, margin))


def tw_size(p: int = 50, n: int = 100, trials: int = 2000, alpha: float = 0.05, seed: int = 0) -> TWSize:
    """Empirical size of the top-eigenvalue test under W_p(n, I).

    Each trial feeds the spectrum of X X' / n, X a p x n standard Gaussian
    matrix, to :func:`rmt.tw_signal_count`.
    """
    test = rmt.tw_critical(n, p, alpha)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        x = rng.standard_normal((p, n))
        spec = rmt.eigendecompose(x @ x.T / n)
        hits += rmt.tw_signal_count(spec, test) > 0
    return TWSize(trials, int(hits))
