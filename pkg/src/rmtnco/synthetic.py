"""Synthetic markets with a planted block correlation structure."""

from __future__ import annotations

import numpy as np

from .marketdata import PricePanel

START_DATE = "2017-12-29"


def block_correlation(sizes, rho_in: float, rho_out: float) -> np.ndarray:
    """Equicorrelated blocks: ``rho_in`` inside a block, ``rho_out`` across."""
    p = int(sum(sizes))
    C = np.full((p, p), rho_out)
    start = 0
    for s in sizes:
        C[start : start + s, start : start + s] = rho_in
        start += s
    np.fill_diagonal(C, 1.0)
    return C


def equal_blocks(p: int, k: int) -> list[int]:
    base, extra = divmod(p, k)
    return [base + (i < extra) for i in range(k)]


def simulate_returns(
    corr: np.ndarray,
    T: int,
    rng: np.random.Generator,
    vol_range=(0.02, 0.06),
    vol_persistence: float = 0.9,
    vol_of_vol: float = 0.25,
) -> np.ndarray:
    """Weekly log returns (p x T) with a common stochastic volatility factor."""
    p = corr.shape[0]
    L = np.linalg.cholesky(corr)
    sigma = rng.uniform(*vol_range, size=p)
    h = np.empty(T)
    h[0] = 0.0
    for t in range(1, T):
        h[t] = vol_persistence * h[t - 1] + vol_of_vol * rng.standard_normal()
    z = L @ rng.standard_normal((p, T))
    return sigma[:, None] * np.exp(h)[None, :] * z


def synthetic_market(
    p: int = 28,
    T: int = 232,
    blocks: int = 4,
    rho_in: float = 0.6,
    rho_out: float = 0.2,
    seed: int = 0,
    missing_rate: float = 0.0,
) -> tuple[PricePanel, np.ndarray]:
    """Weekly price panel with ``T`` returns (``T + 1`` price rows) and its true correlation."""
    rng = np.random.default_rng(seed)
    corr = block_correlation(equal_blocks(p, blocks), rho_in, rho_out)
    r = simulate_returns(corr, T, rng)
    logp = np.log(100.0) + np.concatenate([np.zeros((p, 1)), np.cumsum(r, axis=1)], axis=1)
    prices = np.exp(logp).T
    if missing_rate > 0:
        holes = rng.random(prices.shape) < missing_rate
        holes[0] = holes[-1] = False
        prices[holes] = np.nan
    dates = np.datetime64(START_DATE) + 7 * np.arange(T + 1)
    tickers = tuple(f"A{i:02d}" for i in range(p))
    frac = np.isnan(prices).mean(axis=0)
    return PricePanel(tickers, dates.astype("datetime64[D]"), prices, {t: float(f) for t, f in zip(tickers, frac)}), corr
