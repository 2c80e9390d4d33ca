"""Command-line front end.

Exit codes: 0 success, 1 invalid input or flags, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import backtest as bt
from . import marketdata as md
from . import rmt
from .markowitz import GainSpec, risk_inequality_check
from .nco import ClusteringError

log = logging.getLogger("rmtnco")

SUBCOMMANDS = ("prices", "estimate", "allocate", "backtest", "frontier", "verify")
CONFIG_FILE = "config.json"
# flags that never go into the echoed config
_NOT_ECHOED = {"config", "out", "func"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _csv_list(choices):
    def parse(text: str) -> str:
        items = [x.strip() for x in text.split(",") if x.strip()]
        bad = [x for x in items if x not in choices]
        if not items or bad:
            raise argparse.ArgumentTypeError(f"expected a comma list from {','.join(choices)}, got {text!r}")
        return ",".join(items)

    return parse


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--prices", type=Path, help="input CSV: date,TICKER1,TICKER2,...")
    common.add_argument("--missing-threshold", type=_fraction, default=0.10)
    common.add_argument("--window", type=_positive_int, default=None, help="window length (default 2p)")
    common.add_argument("--shift", type=_positive_int, default=1)
    common.add_argument("--estimators", type=_csv_list(rmt.ESTIMATORS), default=",".join(rmt.ESTIMATORS))
    common.add_argument("--strategies", type=_csv_list(bt.STRATEGIES), default=",".join(bt.STRATEGIES))
    common.add_argument("--gain-target", type=float, default=1.0)
    common.add_argument("--tw-alpha", type=float, default=rmt.DEFAULT_TW_ALPHA)
    common.add_argument("--k-max", type=_positive_int, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_nonneg_int, default=1, help="worker cap, 0 = auto")
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--config", type=Path, default=None, help="JSON config echoed by an earlier run")
    common.add_argument("--out-sample-raw", action="store_true", help="score out-sample risk on the raw E_{t+1}")

    parser = _Parser(prog="rmtnco", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("prices", parents=[common], help="clean and impute a price file")
    p.set_defaults(func=cmd_prices)

    p = sub.add_parser("estimate", parents=[common], help="correlation estimates for one window")
    p.add_argument("--window-end", default=None, help="ISO date of the window's last return (default: last)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("allocate", parents=[common], help="weights for one window")
    p.add_argument("--estimator", choices=rmt.ESTIMATORS, default="linear")
    p.add_argument("--strategy", choices=bt.STRATEGIES, default="nco")
    p.add_argument("--window-end", default=None)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("backtest", parents=[common], help="rolling-window backtest")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("frontier", parents=[common], help="in/out-sample frontier for one window pair")
    p.add_argument("--window-end", default=None, help="in-sample window end (default: second to last window)")
    p.add_argument("--levels", default="0.1:2.0:20", help="G grid as start:stop:count")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("verify", parents=[common], help="synthetic checks of the random-matrix results")
    p.add_argument("--mode", choices=("mp", "tw", "inequality"), required=True)
    p.add_argument("--p", type=_positive_int, default=200)
    p.add_argument("--q", type=float, default=0.25)
    p.add_argument("--trials", type=_positive_int, default=500)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_verify)
    parser.subcommand_parsers = dict(sub.choices)
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: cannot read {args.config}: {exc}") from exc
        if cfg.get("subcommand", args.subcommand) != args.subcommand:
            raise UsageError(f"--config: file is for '{cfg['subcommand']}', not '{args.subcommand}'")
        # config supplies defaults; explicit flags on the command line still win
        sub = parser.subcommand_parsers[args.subcommand]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known - {"subcommand"}
        if unknown:
            raise UsageError(f"--config: unknown keys {sorted(unknown)}")
        sub.set_defaults(**{k: (Path(v) if k == "prices" and v else v) for k, v in cfg.items() if k != "subcommand"})
        args = parser.parse_args(argv)
    return args


def resolved_config(args: argparse.Namespace) -> dict:
    cfg = {"subcommand": args.subcommand}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_ECHOED or k == "subcommand":
            continue
        cfg[k] = str(v) if isinstance(v, Path) else v
    return cfg


def write_config(args: argparse.Namespace, extra: dict | None = None) -> None:
    cfg = resolved_config(args)
    cfg.update(extra or {})
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / CONFIG_FILE).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _require_prices(args):
    if args.prices is None:
        raise UsageError("--prices is required for this subcommand")


def load_windows(args) -> tuple[md.PricePanel, md.WindowSet]:
    _require_prices(args)
    panel = md.impute_linear(md.load_prices(args.prices, args.missing_threshold))
    returns = md.log_returns(panel)
    p = len(panel.tickers)
    if args.window is None:
        args.window = 2 * p
    if args.window <= p:
        log.warning("window %d <= p=%d: sample correlation is singular", args.window, p)
    ws = md.standardize_windows(md.make_windows(returns, args.window, args.shift))
    return panel, ws


def window_index(ws: md.WindowSet, end: str | None, default: int) -> int:
    if end is None:
        return default
    try:
        target = np.datetime64(end, "D")
    except ValueError as exc:
        raise UsageError(f"--window-end: bad date {end!r}") from exc
    ends = np.array([w.timestamps[-1] for w in ws.windows])
    idx = np.flatnonzero(ends <= target)
    if idx.size == 0:
        raise UsageError(f"--window-end: no window ends on or before {end}")
    return int(idx[-1])


def _gain(args, p: int) -> GainSpec:
    return GainSpec(np.ones(p), args.gain_target)


def cmd_prices(args) -> None:
    _require_prices(args)
    panel = md.load_prices(args.prices, args.missing_threshold)
    clean = md.impute_linear(panel)
    args.out.mkdir(parents=True, exist_ok=True)
    clean.to_csv(args.out / "prices_clean.csv")
    panel.write_diagnostics(args.out / "diagnostics.json")
    write_config(args)
    print(f"kept {len(panel.tickers)} assets, dropped {len(panel.dropped)}; {len(panel.timestamps)} rows")


def cmd_estimate(args) -> None:
    panel, ws = load_windows(args)
    t = window_index(ws, args.window_end, ws.m - 1)
    args.out.mkdir(parents=True, exist_ok=True)
    for est in args.estimators.split(","):
        Xi = rmt.estimate(ws.windows[t], est, args.tw_alpha)
        path = args.out / f"correlation_{est}.csv"
        with open(path, "w") as fh:
            fh.write("ticker," + ",".join(panel.tickers) + "\n")
            for tk, row in zip(panel.tickers, Xi.matrix):
                fh.write(tk + "," + ",".join(bt.fmt(x) for x in row) + "\n")
        print(f"{est}: window {t}, condition number {rmt.condition_number(Xi.matrix):.4g}, flags {list(Xi.flags)}")
    write_config(args, {"window_index": t})


def cmd_allocate(args) -> None:
    panel, ws = load_windows(args)
    t = window_index(ws, args.window_end, ws.m - 1)
    Xi = rmt.estimate(ws.windows[t], args.estimator, args.tw_alpha)
    w, nco_res, _ = bt.allocate(Xi, args.strategy, _gain(args, ws.p), args.seed, args.k_max)
    case = bt.case_name(args.strategy, args.estimator)
    args.out.mkdir(parents=True, exist_ok=True)
    bt._write_csv(
        args.out / bt.WEIGHTS_FILE,
        ["t", "case", "ticker", "weight"],
        [[t, case, tk, bt.fmt(x)] for tk, x in zip(panel.tickers, w)],
    )
    if nco_res is not None:
        (args.out / f"{t}_{case}.json").write_text(json.dumps(nco_res.diagnostics(panel.tickers), sort_keys=True))
    write_config(args, {"window_index": t})
    print(f"{case} window {t}: sum w = {w.sum():.10f}, sum |w| = {np.abs(w).sum():.6f}")


def _run_config(args) -> bt.RunConfig:
    return bt.RunConfig(
        estimators=tuple(args.estimators.split(",")),
        strategies=tuple(args.strategies.split(",")),
        G=args.gain_target,
        window=args.window,
        shift=args.shift,
        tw_alpha=args.tw_alpha,
        seed=args.seed,
        k_max=args.k_max,
        out_sample_raw=args.out_sample_raw,
        threads=args.threads,
    )


def cmd_backtest(args) -> None:
    _, ws = load_windows(args)
    report = bt.run_backtest(ws, _run_config(args))
    bt.emit_report(report, args.out)
    write_config(args)
    print(f"{ws.m} windows, n={ws.n}, p={ws.p}, q={ws.q:.4g}")
    print(f"{'case':<18}{'MSE':>14}{'MAE':>14}{'MSAW':>12}{'failed':>8}")
    for case, s in report.summary().items():
        print(f"{case:<18}{s.MSE:>14.6g}{s.MAE:>14.6g}{s.MSAW:>12.6f}{s.failed_windows:>8d}")


def cmd_frontier(args) -> None:
    try:
        start, stop, count = args.levels.split(":")
        levels = tuple(np.linspace(float(start), float(stop), int(count)).tolist())
    except ValueError as exc:
        raise UsageError(f"--levels: expected start:stop:count, got {args.levels!r}") from exc
    _, ws = load_windows(args)
    t = window_index(ws, args.window_end, ws.m - 2)
    if t >= ws.m - 1:
        raise UsageError("--window-end: the last window has no out-sample successor")
    cfg = _run_config(args)
    rows = []
    for s, e in cfg.cases:
        Xi = rmt.estimate(ws.windows[t], e, args.tw_alpha)
        Xo = rmt.estimate(ws.windows[t + 1], "naive" if args.out_sample_raw else e, args.tw_alpha)
        clustering = None
        for G in levels:
            w, _, clustering = bt.allocate(Xi, s, GainSpec(np.ones(ws.p), G), args.seed, args.k_max, clustering)
            rows.append([t, bt.case_name(s, e), bt.fmt(G), bt.fmt(w @ Xi.matrix @ w), bt.fmt(w @ Xo.matrix @ w)])
    args.out.mkdir(parents=True, exist_ok=True)
    bt._write_csv(args.out / bt.FRONTIER_FILE, ["t", "case", "G", "r2_in", "r2_out"], rows)
    write_config(args, {"window_index": t})
    print(f"wrote {len(rows)} frontier points for window {t}")


def cmd_verify(args) -> None:
    from . import verify

    if args.mode == "mp":
        res = verify.mp_coverage(args.p, args.q, args.seed)
        print(f"MP edges [{res.lambda_minus:.6f}, {res.lambda_plus:.6f}], p={res.p}, n={res.n}")
        print(f"edge-violation fraction (margin {res.margin}): {res.fraction_outside:.6f}")
    elif args.mode == "tw":
        n = int(round(args.p / args.q))
        res = verify.tw_size(args.p, n, args.trials, args.alpha, args.seed)
        print(f"TW rejection rate at alpha={args.alpha}: {res.rate:.6f} ({res.rejections}/{res.trials}), p={args.p}, n={n}")
    else:
        rep = risk_inequality_check(args.p, args.q, args.trials, args.seed)
        print(f"R2_in/(1-q) = {rep.r2_in_scaled:.8g}")
        print(f"R2_true     = {rep.r2_true:.8g}")
        print(f"(1-q)R2_out = {rep.r2_out_scaled:.8g}")
        print(f"max relative spread = {rep.max_relative_spread:.6f}")
    write_config(args)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    # LinAlgError subclasses ValueError, so it must be caught first
    except (np.linalg.LinAlgError, ClusteringError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (md.DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
