"""Price ingestion, log returns, three-step standardization and rolling windows."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Raised for malformed or unusable market data."""


@dataclass(frozen=True)
class PricePanel:
    tickers: tuple[str, ...]
    timestamps: np.ndarray  # datetime64[D], strictly increasing
    prices: np.ndarray  # (time, asset); NaN marks a missing close
    missing_fraction: dict[str, float] = field(default_factory=dict)
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        if self.prices.shape != (len(self.timestamps), len(self.tickers)):
            raise DataError(
                f"price matrix shape {self.prices.shape} does not match "
                f"{len(self.timestamps)} timestamps x {len(self.tickers)} tickers"
            )
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > np.timedelta64(0, "D")):
            raise DataError("timestamps must be strictly increasing")
        present = self.prices[~np.isnan(self.prices)]
        if np.any(present <= 0):
            raise DataError("prices must be strictly positive")

    @property
    def diagnostics(self) -> dict:
        return {"dropped": list(self.dropped), "missing_fraction": dict(self.missing_fraction)}

    def write_diagnostics(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.diagnostics, indent=2, sort_keys=True))

    def to_csv(self, path: str | Path) -> None:
        frame = pd.DataFrame(self.prices, columns=list(self.tickers))
        frame.insert(0, "date", pd.DatetimeIndex(self.timestamps).strftime("%Y-%m-%d"))
        frame.to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True)
class ReturnPanel:
    """Returns laid out asset x time."""

    tickers: tuple[str, ...]
    timestamps: np.ndarray
    returns: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        if self.returns.shape != (len(self.tickers), len(self.timestamps)):
            raise DataError(
                f"returns shape {self.returns.shape} does not match "
                f"{len(self.tickers)} tickers x {len(self.timestamps)} timestamps"
            )
        if np.isnan(self.returns).any():
            raise DataError("return panel has missing entries")

    @property
    def p(self) -> int:
        return self.returns.shape[0]

    @property
    def n(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True)
class WindowSet:
    windows: list[ReturnPanel]
    n: int
    shift: int

    @property
    def m(self) -> int:
        return len(self.windows)

    @property
    def p(self) -> int:
        return self.windows[0].p

    @property
    def q(self) -> float:
        return self.p / self.n


def load_prices(source: str | Path, missing_threshold: float = 0.10) -> PricePanel:
    """Read a ``date,TICKER...`` CSV and drop assets missing too often.

    An asset is dropped when its fraction of empty cells strictly exceeds
    ``missing_threshold``.
    """
    if not 0.0 <= missing_threshold <= 1.0:
        raise DataError(f"missing_threshold must lie in [0, 1], got {missing_threshold}")
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read price file {source}: {exc}") from exc
    if frame.columns.size < 2 or frame.columns[0] != "date":
        raise DataError("price file header must be 'date,TICKER1,TICKER2,...'")

    try:
        stamps = pd.to_datetime(frame["date"], format="%Y-%m-%d").to_numpy(dtype="datetime64[D]")
    except ValueError as exc:
        raise DataError(f"bad date in price file: {exc}") from exc
    if len(stamps) > 1 and not np.all(np.diff(stamps) > np.timedelta64(0, "D")):
        raise DataError("timestamps must be strictly increasing")

    tickers = [str(c) for c in frame.columns[1:]]
    cells = frame[tickers].apply(lambda col: col.str.strip())
    try:
        prices = cells.replace("", np.nan).astype(float).to_numpy()
    except ValueError as exc:
        raise DataError(f"non-numeric price: {exc}") from exc
    if np.any(prices[~np.isnan(prices)] <= 0):
        raise DataError("prices must be strictly positive")

    frac = np.isnan(prices).mean(axis=0) if len(prices) else np.zeros(len(tickers))
    missing = {t: float(f) for t, f in zip(tickers, frac)}
    keep = frac <= missing_threshold
    return PricePanel(
        tickers=tuple(t for t, k in zip(tickers, keep) if k),
        timestamps=stamps,
        prices=prices[:, keep],
        missing_fraction=missing,
        dropped=tuple(t for t, k in zip(tickers, keep) if not k),
    )


def impute_linear(panel: PricePanel) -> PricePanel:
    """Fill gaps by linear interpolation in the time index.

    Leading and trailing gaps take the nearest observed price.
    """
    t = np.arange(len(panel.timestamps), dtype=float)
    filled = panel.prices.copy()
    for j, ticker in enumerate(panel.tickers):
        col = filled[:, j]
        seen = ~np.isnan(col)
        if seen.sum() < 2:
            raise DataError(f"asset {ticker} has fewer than two observed prices")
        if seen.all():
            continue
        # np.interp holds the end values constant outside the observed range
        col[~seen] = np.interp(t[~seen], t[seen], col[seen])
    return replace(panel, prices=filled)


def log_returns(panel: PricePanel) -> ReturnPanel:
    if np.isnan(panel.prices).any():
        raise DataError("log_returns needs a fully imputed panel")
    r = np.diff(np.log(panel.prices), axis=0).T
    return ReturnPanel(panel.tickers, panel.timestamps[1:], np.ascontiguousarray(r))


def demean(r: np.ndarray) -> np.ndarray:
    return r - r.mean(axis=1, keepdims=True)


def cross_sectional_scale(r: np.ndarray) -> np.ndarray:
    """Divide each time column by sqrt(sum_j r_jt^2)."""
    vol = np.sqrt(np.sum(r**2, axis=0))
    if np.any(vol == 0):
        bad = np.flatnonzero(vol == 0).tolist()
        raise DataError(f"zero cross-sectional volatility at time columns {bad}")
    return r / vol


def unit_variance(r: np.ndarray) -> np.ndarray:
    """Re-center rows and scale them to unit (population) variance."""
    r = demean(r)
    sd = r.std(axis=1, keepdims=True)
    if np.any(sd == 0):
        raise DataError("asset with zero variance after cross-sectional scaling")
    return r / sd


def standardize(panel: ReturnPanel) -> ReturnPanel:
    if panel.standardized:
        raise DataError("panel is already standardized")
    r = unit_variance(cross_sectional_scale(demean(panel.returns)))
    return ReturnPanel(panel.tickers, panel.timestamps, r, standardized=True)


def make_windows(panel: ReturnPanel, n: int, shift: int = 1) -> WindowSet:
    T = panel.n
    if shift < 1:
        raise DataError(f"shift must be >= 1, got {shift}")
    if n < 1 or n > T:
        raise DataError(f"window length {n} outside [1, {T}]")
    m = (T - n) // shift + 1
    windows = [
        ReturnPanel(
            panel.tickers,
            panel.timestamps[t * shift : t * shift + n],
            panel.returns[:, t * shift : t * shift + n],
            panel.standardized,
        )
        for t in range(m)
    ]
    return WindowSet(windows, n, shift)


def standardize_windows(ws: WindowSet) -> WindowSet:
    return WindowSet([w if w.standardized else standardize(w) for w in ws.windows], ws.n, ws.shift)
