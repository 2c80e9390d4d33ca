"""TW1 distribution backed by the embedded CDF table."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

TABLE_NAME = "tw1_cdf.txt"


@lru_cache(maxsize=1)
def load_table() -> tuple[np.ndarray, np.ndarray]:
    text = resources.files("rmtnco.data").joinpath(TABLE_NAME).read_text()
    data = np.loadtxt(text.splitlines(), comments="#")
    s, f = data[:, 0], data[:, 1]
    s.flags.writeable = False
    f.flags.writeable = False
    return s, f


@lru_cache(maxsize=1)
def _interp() -> PchipInterpolator:
    s, f = load_table()
    return PchipInterpolator(s, f, extrapolate=False)


def cdf(s):
    """F1(s); 0 left of the table and 1 right of it."""
    grid, _ = load_table()
    s = np.asarray(s, dtype=float)
    inner = np.clip(_interp()(np.clip(s, grid[0], grid[-1])), 0.0, 1.0)
    out = np.where(s < grid[0], 0.0, np.where(s > grid[-1], 1.0, inner))
    return out if out.ndim else float(out)


def ppf(prob: float) -> float:
    grid, f = load_table()
    if not f[0] < prob < f[-1]:
        raise ValueError(f"probability {prob} outside the table range ({f[0]:.3g}, {f[-1]:.12g})")
    spline = _interp()
    return float(brentq(lambda s: spline(s) - prob, grid[0], grid[-1], xtol=1e-12))
