"""Rolling-window experiment: estimator x strategy cases, risk gaps, MSAW."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rmt
from .markowitz import GainSpec, optimal_weights, portfolio_variance
from .marketdata import DataError, WindowSet
from .nco import ClusteringError, nco_allocate
from .rmt import CorrelationEstimate

STRATEGIES = ("markowitz", "nco")
DEFAULT_FRONTIER_LEVELS = tuple(np.round(np.linspace(0.1, 2.0, 20), 10).tolist())

RISK_FILE = "risk_series.csv"
WEIGHTS_FILE = "weights.csv"
ABS_FILE = "abs_weight_sum.csv"
FRONTIER_FILE = "frontier.csv"
SUMMARY_FILE = "summary.csv"
FAILURES_FILE = "failures.csv"
DIAGNOSTICS_DIR = "diagnostics"

_NUMERIC_ERRORS = (np.linalg.LinAlgError, ClusteringError, DataError, ValueError)


def case_name(strategy: str, estimator: str) -> str:
    return f"{strategy}-{estimator}"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RunConfig:
    estimators: tuple[str, ...] = rmt.ESTIMATORS
    strategies: tuple[str, ...] = STRATEGIES
    G: float = 1.0
    window: int | None = None  # None means 2p
    shift: int = 1
    tw_alpha: float = rmt.DEFAULT_TW_ALPHA
    seed: int = 0
    k_max: int | None = None
    out_sample_raw: bool = False
    threads: int = 1
    frontier_levels: tuple[float, ...] = DEFAULT_FRONTIER_LEVELS

    def __post_init__(self):
        if not self.estimators or not self.strategies:
            raise ValueError("need at least one estimator and one strategy")
        bad = set(self.estimators) - set(rmt.ESTIMATORS)
        if bad:
            raise ValueError(f"unknown estimator(s) {sorted(bad)}")
        bad = set(self.strategies) - set(STRATEGIES)
        if bad:
            raise ValueError(f"unknown strategy(ies) {sorted(bad)}")

    @property
    def cases(self) -> list[tuple[str, str]]:
        return [(s, e) for s in self.strategies for e in self.estimators]


@dataclass
class WindowResult:
    t: int
    case: str
    weights: np.ndarray
    r2_in: float | None  # None on the last window, which has no out-sample
    r2_out: float | None
    diagnostics: dict | None = None

    @property
    def gap(self) -> float | None:
        return None if self.r2_out is None else self.r2_out - self.r2_in

    @property
    def sum_abs(self) -> float:
        return float(np.abs(self.weights).sum())


@dataclass(frozen=True)
class CaseSummary:
    MSE: float
    MAE: float
    MSAW: float
    failed_windows: int


@dataclass(frozen=True)
class FrontierPoint:
    t: int
    case: str
    G: float
    r2_in: float
    r2_out: float


@dataclass
class BacktestReport:
    tickers: tuple[str, ...]
    cases: list[str]
    results: dict[str, list[WindowResult]]
    failures: dict[str, list[tuple[int, str]]] = field(default_factory=dict)
    frontier: list[FrontierPoint] = field(default_factory=list)

    def gaps(self, case: str) -> np.ndarray:
        return np.array([r.gap for r in self.results[case] if r.gap is not None])

    def summary(self) -> dict[str, CaseSummary]:
        out = {}
        for case in self.cases:
            scored = [r for r in self.results.get(case, []) if r.gap is not None]
            nfail = len(self.failures.get(case, []))
            if scored:
                mse, mae, msaw = aggregate_metrics([r.gap for r in scored], [r.sum_abs for r in scored])
            else:
                mse = mae = msaw = float("nan")
            out[case] = CaseSummary(mse, mae, msaw, nfail)
        return out


def aggregate_metrics(gaps, weight_sums) -> tuple[float, float, float]:
    gaps = np.asarray(gaps, dtype=float)
    sums = np.asarray(weight_sums, dtype=float)
    if gaps.size == 0 or sums.size == 0:
        raise ValueError("cannot aggregate an empty series")
    return float(np.mean(gaps**2)), float(np.mean(np.abs(gaps))), float(np.mean(sums))


def allocate(Xi: CorrelationEstimate, strategy: str, gain: GainSpec, seed: int = 0, k_max=None, clustering=None):
    """Weights plus NCO diagnostics (None for Markowitz)."""
    if strategy == "markowitz":
        return optimal_weights(Xi, gain).weights, None, None
    if strategy == "nco":
        res = nco_allocate(Xi, gain, seed=seed, k_max=k_max, clustering=clustering)
        return res.allocation.weights, res, res.clustering
    raise ValueError(f"unknown strategy {strategy!r}")


def _pool_map(fn, items, threads: int):
    items = list(items)
    workers = (os.cpu_count() or 1) if threads == 0 else threads
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def run_backtest(windows: WindowSet, config: RunConfig) -> BacktestReport:
    if windows.m < 2:
        raise ValueError("a backtest needs at least two windows")
    m, p = windows.m, windows.p
    tickers = tuple(windows.windows[0].tickers)
    gain = GainSpec(np.ones(p), config.G)
    needed = set(config.estimators) | ({"naive"} if config.out_sample_raw else set())

    def estimate_window(t):
        out = {}
        for est in sorted(needed):
            try:
                out[est] = rmt.estimate(windows.windows[t], est, config.tw_alpha)
            except _NUMERIC_ERRORS as exc:
                out[est] = exc
        return out

    estimates = _pool_map(estimate_window, range(m), config.threads)

    def run_cell(task):
        t, strategy, est = task
        Xi = estimates[t][est]
        if isinstance(Xi, Exception):
            return task, None, f"estimation failed: {Xi}"
        has_out = t < m - 1
        if has_out:
            Xo = estimates[t + 1]["naive" if config.out_sample_raw else est]
            if isinstance(Xo, Exception):
                return task, None, f"out-sample estimation failed: {Xo}"
        try:
            w, nco_res, _ = allocate(Xi, strategy, gain, config.seed, config.k_max)
        except _NUMERIC_ERRORS as exc:
            return task, None, f"{type(exc).__name__}: {exc}"
        r2_in = portfolio_variance(w, Xi) if has_out else None
        r2_out = portfolio_variance(w, Xo) if has_out else None
        diag = nco_res.diagnostics(tickers) if nco_res is not None else None
        return task, WindowResult(t, case_name(strategy, est), w, r2_in, r2_out, diag), None

    tasks = [(t, s, e) for t in range(m) for s, e in config.cases]
    cells = _pool_map(run_cell, tasks, config.threads)

    cases = [case_name(s, e) for s, e in config.cases]
    results = {c: [] for c in cases}
    failures = {c: [] for c in cases}
    for (t, s, e), res, err in cells:
        c = case_name(s, e)
        if res is None:
            failures[c].append((t, err))
        else:
            results[c].append(res)

    report = BacktestReport(tickers, cases, results, failures)
    report.frontier = _frontier(report, estimates, config, gain, m)
    return report


def _frontier(report, estimates, config, gain, m) -> list[FrontierPoint]:
    points = []
    for t in sorted({0, m - 2}):
        for s, e in config.cases:
            Xi = estimates[t][e]
            Xo = estimates[t + 1]["naive" if config.out_sample_raw else e]
            if isinstance(Xi, Exception) or isinstance(Xo, Exception):
                continue
            clustering = None
            for G in config.frontier_levels:
                try:
                    w, _, clustering = allocate(
                        Xi, s, GainSpec(gain.g, G), config.seed, config.k_max, clustering
                    )
                except _NUMERIC_ERRORS:
                    break
                points.append(
                    FrontierPoint(t, case_name(s, e), float(G), portfolio_variance(w, Xi), portfolio_variance(w, Xo))
                )
    return points


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def emit_report(report: BacktestReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    diag_dir = out / DIAGNOSTICS_DIR
    written = []

    def ordered():
        for case in report.cases:
            for r in sorted(report.results.get(case, []), key=lambda r: r.t):
                yield r

    risk_rows, weight_rows, abs_rows = [], [], []
    for r in ordered():
        if r.gap is not None:
            risk_rows.append([r.t, r.case, fmt(r.r2_in), fmt(r.r2_out), fmt(r.gap)])
        weight_rows.extend([r.t, r.case, tk, fmt(w)] for tk, w in zip(report.tickers, r.weights))
        abs_rows.append([r.t, r.case, fmt(r.sum_abs)])
        if r.diagnostics is not None:
            diag_dir.mkdir(exist_ok=True)
            path = diag_dir / f"{r.t}_{r.case}.json"
            path.write_text(json.dumps(r.diagnostics, sort_keys=True))
            written.append(path)

    _write_csv(out / RISK_FILE, ["t", "case", "r2_in", "r2_out", "gap"], risk_rows)
    _write_csv(out / WEIGHTS_FILE, ["t", "case", "ticker", "weight"], weight_rows)
    _write_csv(out / ABS_FILE, ["t", "case", "sum_abs"], abs_rows)
    _write_csv(
        out / FRONTIER_FILE,
        ["t", "case", "G", "r2_in", "r2_out"],
        [[f.t, f.case, fmt(f.G), fmt(f.r2_in), fmt(f.r2_out)] for f in report.frontier],
    )
    summary = report.summary()
    _write_csv(
        out / SUMMARY_FILE,
        ["case", "MSE", "MAE", "MSAW", "failed_windows"],
        [[c, fmt(s.MSE), fmt(s.MAE), fmt(s.MSAW), s.failed_windows] for c, s in summary.items()],
    )
    _write_csv(
        out / FAILURES_FILE,
        ["t", "case", "error"],
        [[t, c, msg] for c in report.cases for t, msg in report.failures.get(c, [])],
    )
    written += [out / f for f in (RISK_FILE, WEIGHTS_FILE, ABS_FILE, FRONTIER_FILE, SUMMARY_FILE, FAILURES_FILE)]
    return written


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_report(out_dir: str | Path) -> BacktestReport:
    """Parse files written by :func:`emit_report` back into a report."""
    out = Path(out_dir)
    cases = [row["case"] for row in _read_csv(out / SUMMARY_FILE)]

    tickers: list[str] = []
    weights: dict[tuple[str, int], list[float]] = {}
    for row in _read_csv(out / WEIGHTS_FILE):
        key = (row["case"], int(row["t"]))
        weights.setdefault(key, []).append(float(row["weight"]))
        if len(weights) == 1:
            tickers.append(row["ticker"])

    risks = {(r["case"], int(r["t"])): (float(r["r2_in"]), float(r["r2_out"])) for r in _read_csv(out / RISK_FILE)}
    results = {c: [] for c in cases}
    for (case, t), w in weights.items():
        r2_in, r2_out = risks.get((case, t), (None, None))
        diag_path = out / DIAGNOSTICS_DIR / f"{t}_{case}.json"
        diag = json.loads(diag_path.read_text()) if diag_path.exists() else None
        results[case].append(WindowResult(t, case, np.array(w), r2_in, r2_out, diag))
    for c in cases:
        results[c].sort(key=lambda r: r.t)

    failures = {c: [] for c in cases}
    for row in _read_csv(out / FAILURES_FILE):
        failures[row["case"]].append((int(row["t"]), row["error"]))
    frontier = [
        FrontierPoint(int(r["t"]), r["case"], float(r["G"]), float(r["r2_in"]), float(r["r2_out"]))
        for r in _read_csv(out / FRONTIER_FILE)
    ]
    return BacktestReport(tuple(tickers), cases, results, failures, frontier)


def config_dict(config: RunConfig) -> dict:
    d = asdict(config)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d
