import numpy as np
import pytest
from numpy.testing import assert_array_equal

from rmtnco import backtest as bt
from rmtnco import marketdata as md
from rmtnco.synthetic import synthetic_market


def small_windows(seed=0, p=6, T=30, window=12):
    panel, _ = synthetic_market(p=p, T=T, blocks=2, seed=seed)
    return md.standardize_windows(md.make_windows(md.log_returns(panel), window, 1))


@pytest.fixture(scope="module")
def windows():
    return small_windows()


@pytest.fixture(scope="module")
def report(windows):
    return bt.run_backtest(windows, bt.RunConfig(seed=3, frontier_levels=(0.5, 1.0, 2.0)))


def assert_reports_equal(a: bt.BacktestReport, b: bt.BacktestReport):
    assert a.tickers == b.tickers
    assert a.cases == b.cases
    assert a.failures == b.failures
    assert a.frontier == b.frontier
    for case in a.cases:
        assert len(a.results[case]) == len(b.results[case])
        for x, y in zip(a.results[case], b.results[case]):
            assert (x.t, x.case, x.r2_in, x.r2_out, x.diagnostics) == (y.t, y.case, y.r2_in, y.r2_out, y.diagnostics)
            assert_array_equal(x.weights, y.weights)


class TestAggregate:
    def test_symmetric_gaps(self):
        mse, mae, msaw = bt.aggregate_metrics([0.1, -0.1], [1.0, 1.0])
        assert mse == pytest.approx(0.01)
        assert mae == pytest.approx(0.1)
        assert msaw == 1.0

    def test_equal_weights(self):
        w = np.full(4, 0.25)
        assert bt.aggregate_metrics([0.0] * 3, [np.abs(w).sum()] * 3)[2] == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            bt.aggregate_metrics([], [])


class TestRunConfig:
    def test_cases(self):
        cfg = bt.RunConfig()
        assert [bt.case_name(s, e) for s, e in cfg.cases] == [
            "markowitz-naive", "markowitz-linear", "markowitz-tw", "nco-naive", "nco-linear", "nco-tw",
        ]

    @pytest.mark.parametrize("kw", [{"estimators": ()}, {"strategies": ("hrp",)}, {"estimators": ("ledoit",)}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            bt.RunConfig(**kw)


class TestRunBacktest:
    def test_shape(self, windows, report):
        assert len(report.cases) == 6
        for case in report.cases:
            res = report.results[case]
            assert [r.t for r in res] == list(range(windows.m))
            assert res[-1].gap is None
            assert all(r.gap is not None for r in res[:-1])

    def test_jensen(self, report):
        for case, s in report.summary().items():
            g = report.gaps(case)
            assert s.MSE >= 0 and s.MAE >= 0
            assert s.MAE**2 <= s.MSE * (1 + 1e-12)
            assert s.MSE <= s.MAE * np.max(np.abs(g)) * (1 + 1e-12)
            assert s.failed_windows == 0

    def test_nco_budget(self, report):
        for case in ("nco-naive", "nco-linear", "nco-tw"):
            for r in report.results[case]:
                assert abs(r.weights.sum() - 1) < 1e-8
            msaw = report.summary()[case].MSAW
            nonneg = all(np.all(r.weights >= 0) for r in report.results[case][:-1])
            assert msaw >= 1 - 1e-12
            assert (abs(msaw - 1) < 1e-12) == nonneg

    def test_identical_windows(self):
        base = np.random.default_rng(1).standard_normal((5, 10))
        r = np.tile(base, 3)
        stamps = np.datetime64("2020-01-03") + 7 * np.arange(30)
        ws = md.standardize_windows(md.make_windows(md.ReturnPanel(tuple("ABCDE"), stamps, r), 10, 10))
        rep = bt.run_backtest(ws, bt.RunConfig(frontier_levels=(1.0,)))
        for case, s in rep.summary().items():
            assert_array_equal(rep.gaps(case), 0.0)
            assert s.MSE == 0 and s.MAE == 0

    def test_deterministic(self, windows, report):
        again = bt.run_backtest(windows, bt.RunConfig(seed=3, frontier_levels=(0.5, 1.0, 2.0), threads=4))
        assert_reports_equal(report, again)

    def test_case_independence(self, windows, report):
        cfg = bt.RunConfig(estimators=("naive", "tw"), strategies=("nco",), seed=3, frontier_levels=(0.5, 1.0, 2.0))
        sub = bt.run_backtest(windows, cfg)
        for case in sub.cases:
            for x, y in zip(sub.results[case], report.results[case]):
                assert_array_equal(x.weights, y.weights)
                assert (x.r2_in, x.r2_out) == (y.r2_in, y.r2_out)

    def test_frontier(self, windows, report):
        ts = {f.t for f in report.frontier}
        assert ts == {0, windows.m - 2}
        for case in report.cases:
            pts = [f for f in report.frontier if f.case == case and f.t == 0]
            assert [f.G for f in pts] == [0.5, 1.0, 2.0]
            assert pts[2].r2_in == pytest.approx(4 * pts[1].r2_in, rel=1e-10)

    def test_singular_window_is_recorded(self):
        # duplicate asset: the naive matrix is singular, so Markowitz fails every window
        panel, _ = synthetic_market(p=4, T=20, blocks=2, seed=0)
        r = md.log_returns(panel)
        dup = md.ReturnPanel(r.tickers + ("DUP",), r.timestamps, np.vstack([r.returns, r.returns[:1]]))
        ws = md.standardize_windows(md.make_windows(dup, 10, 1))
        rep = bt.run_backtest(ws, bt.RunConfig(estimators=("naive", "linear"), strategies=("markowitz",), frontier_levels=(1.0,)))
        s = rep.summary()
        assert s["markowitz-naive"].failed_windows == ws.m
        assert np.isnan(s["markowitz-naive"].MSE)
        assert s["markowitz-linear"].failed_windows == 0

    def test_needs_two_windows(self):
        with pytest.raises(ValueError):
            bt.run_backtest(small_windows(T=12, window=12), bt.RunConfig())

    def test_raw_out_sample(self, windows):
        cfg = bt.RunConfig(estimators=("naive", "linear"), strategies=("markowitz",), out_sample_raw=True, frontier_levels=(1.0,))
        rep = bt.run_backtest(windows, cfg)
        default = bt.run_backtest(windows, bt.RunConfig(estimators=("naive",), strategies=("markowitz",), frontier_levels=(1.0,)))
        # naive is unaffected by the flag
        assert_array_equal(rep.gaps("markowitz-naive"), default.gaps("markowitz-naive"))


class TestEmit:
    def test_round_trip(self, report, tmp_path):
        bt.emit_report(report, tmp_path)
        assert_reports_equal(report, bt.load_report(tmp_path))

    def test_files(self, report, windows, tmp_path):
        bt.emit_report(report, tmp_path)
        risk = (tmp_path / bt.RISK_FILE).read_text().splitlines()
        assert risk[0] == "t,case,r2_in,r2_out,gap"
        assert len(risk) == 1 + 6 * (windows.m - 1)
        summary = (tmp_path / bt.SUMMARY_FILE).read_text().splitlines()
        assert summary[0] == "case,MSE,MAE,MSAW,failed_windows"
        assert len(summary) == 7
        assert len(list((tmp_path / bt.DIAGNOSTICS_DIR).glob("*_nco-*.json"))) == 3 * windows.m

    def test_three_windows(self, tmp_path):
        ws = small_windows(T=14, window=12)
        assert ws.m == 3
        rep = bt.run_backtest(ws, bt.RunConfig(estimators=("naive",), strategies=("markowitz",), frontier_levels=(1.0,)))
        bt.emit_report(rep, tmp_path)
        assert len((tmp_path / bt.RISK_FILE).read_text().splitlines()) == 3

    def test_empty_case_list(self, tmp_path):
        bt.emit_report(bt.BacktestReport(("A",), [], {}), tmp_path)
        assert (tmp_path / bt.SUMMARY_FILE).read_text() == "case,MSE,MAE,MSAW,failed_windows\n"
