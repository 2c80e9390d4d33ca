import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from rmtnco import markowitz as mk
from rmtnco.rmt import CorrelationEstimate


def kkt_weights(Xi, g, G):
    """Minimize w' Xi w subject to w'g = G via the bordered linear system."""
    p = len(g)
    a = np.zeros((p + 1, p + 1))
    a[:p, :p] = 2 * Xi
    a[:p, p] = -g
    a[p, :p] = g
    rhs = np.zeros(p + 1)
    rhs[p] = G
    return np.linalg.solve(a, rhs)[:p]


def random_spd(p, rng):
    a = rng.standard_normal((p, p + 3))
    return a @ a.T / (p + 3) + 0.05 * np.eye(p)


def random_corr(p, rng):
    s = random_spd(p, rng)
    d = 1 / np.sqrt(np.diag(s))
    c = s * np.outer(d, d)
    return (c + c.T) / 2


class TestOptimalWeights:
    def test_identity(self):
        res = mk.optimal_weights(np.eye(4), mk.GainSpec.minimum_variance(4))
        assert_allclose(res.weights, 0.25)
        assert res.gamma == pytest.approx(0.25)
        assert res.strategy_tag == "markowitz"

    def test_exchangeable_pair(self):
        res = mk.optimal_weights([[1, 0.5], [0.5, 1]], mk.GainSpec.minimum_variance(2))
        assert_allclose(res.weights, [0.5, 0.5])

    def test_three_assets_against_kkt(self):
        Xi = np.array([[1, 0.8, 0], [0.8, 1, 0], [0, 0, 1.0]])
        res = mk.optimal_weights(Xi, mk.GainSpec.minimum_variance(3))
        assert np.max(np.abs(res.weights - kkt_weights(Xi, np.ones(3), 1.0))) < 1e-8

    def test_estimator_tag_carried(self):
        est = CorrelationEstimate(np.eye(3), "linear", 6)
        assert mk.optimal_weights(est, mk.GainSpec.minimum_variance(3)).estimator_tag == "linear"

    def test_singular(self):
        with pytest.raises(mk.SingularMatrixError):
            mk.optimal_weights(np.ones((3, 3)), mk.GainSpec.minimum_variance(3))

    def test_nonpositive_quadratic_form(self):
        # g = 0 makes the quadratic form vanish
        with pytest.raises(mk.SingularMatrixError):
            mk.optimal_weights(np.eye(2), mk.GainSpec(np.array([0.0, 0.0])))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mk.optimal_weights(np.eye(3), mk.GainSpec.minimum_variance(4))

    def test_kkt_oracle_randomized(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            p = int(rng.integers(2, 9))
            Xi = random_spd(p, rng)
            g = rng.uniform(0.2, 2.0, p)
            G = float(rng.uniform(0.5, 2))
            res = mk.optimal_weights(Xi, mk.GainSpec(g, G))
            worst = max(worst, np.max(np.abs(res.weights - kkt_weights(Xi, g, G))))
        assert worst < 1e-7

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 10), st.floats(0.1, 10), st.floats(0.01, 100), st.integers(0, 2**31))
    def test_constraint_and_scale(self, p, G, c, seed):
        rng = np.random.default_rng(seed)
        Xi = random_spd(p, rng)
        gain = mk.GainSpec(rng.uniform(0.1, 1, p), G)
        a = mk.optimal_weights(Xi, gain)
        assert a.weights @ gain.g == pytest.approx(G, abs=1e-8 * max(1, G))
        b = mk.optimal_weights(c * Xi, gain)
        assert_allclose(b.weights, a.weights, rtol=1e-8, atol=1e-10)
        assert b.gamma == pytest.approx(c * a.gamma, rel=1e-8)
        ra = mk.risk_in_out(Xi, Xi, gain).r2_in
        rb = mk.risk_in_out(c * Xi, c * Xi, gain).r2_in
        assert rb == pytest.approx(c * ra, rel=1e-8)


class TestRisk:
    @pytest.mark.parametrize("p", [1, 3, 10])
    def test_true_identity(self, p):
        assert mk.risk_true(mk.GainSpec.minimum_variance(p), np.eye(p)) == pytest.approx(1 / p)

    def test_true_scalar(self):
        assert mk.risk_true(mk.GainSpec.minimum_variance(1), [[4.0]]) == pytest.approx(4.0)

    def test_true_equicorrelated(self):
        p, rho = 3, 0.5
        inv = (np.eye(p) - rho / (1 + (p - 1) * rho) * np.ones((p, p))) / (1 - rho)
        expected = 1 / (np.ones(p) @ inv @ np.ones(p))
        Sigma = np.full((p, p), rho) + (1 - rho) * np.eye(p)
        assert mk.risk_true(mk.GainSpec.minimum_variance(p), Sigma) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(2 / 3)

    def test_in_equals_out(self):
        rng = np.random.default_rng(0)
        E = random_corr(5, rng)
        rt = mk.risk_in_out(E, E, mk.GainSpec.minimum_variance(5))
        assert rt.r2_out == pytest.approx(rt.r2_in, rel=1e-12)
        assert rt.r2_true is None

    def test_identity_pair(self):
        rt = mk.risk_in_out(np.eye(6), np.eye(6), mk.GainSpec.minimum_variance(6))
        assert (rt.r2_in, rt.r2_out) == pytest.approx((1 / 6, 1 / 6))

    def test_straight_line_oracle(self):
        rng = np.random.default_rng(5)
        E_in, E_out = random_corr(5, rng), random_corr(5, rng)
        g, G = rng.uniform(0.5, 1.5, 5), 1.7
        inv = np.linalg.inv(E_in)
        num = 0.0
        den = 0.0
        for i in range(5):
            for j in range(5):
                den += g[i] * inv[i, j] * g[j]
        x = inv @ g
        for i in range(5):
            for j in range(5):
                num += x[i] * E_out[i, j] * x[j]
        rt = mk.risk_in_out(E_in, E_out, mk.GainSpec(g, G), Sigma=np.eye(5))
        assert rt.r2_in == pytest.approx(G**2 / den, rel=1e-12)
        assert rt.r2_out == pytest.approx(G**2 * num / den**2, rel=1e-12)
        assert rt.r2_true == pytest.approx(G**2 / (g @ g))

    def test_portfolio_variance_matches_in_sample(self):
        rng = np.random.default_rng(1)
        E = random_corr(6, rng)
        gain = mk.GainSpec.minimum_variance(6)
        w = mk.optimal_weights(E, gain).weights
        assert mk.portfolio_variance(w, E) == pytest.approx(mk.risk_in_out(E, E, gain).r2_in, rel=1e-12)

    def test_out_sample_exceeds_in_sample(self):
        rng = np.random.default_rng(9)
        p, n = 50, 100
        gain = mk.GainSpec.minimum_variance(p)
        wins = 0
        trials = 200
        for _ in range(trials):
            a = rng.standard_normal((p, n))
            b = rng.standard_normal((p, n))
            rt = mk.risk_in_out(a @ a.T / n, b @ b.T / n, gain)
            wins += rt.r2_out >= rt.r2_in
        assert wins / trials >= 0.95


class TestFrontier:
    def test_coincide(self):
        E = random_corr(4, np.random.default_rng(3))
        for G, r_in, r_out in mk.efficient_frontier(E, E, [0.5, 1, 2]):
            assert r_in == pytest.approx(r_out)

    def test_quadratic_scaling(self):
        rng = np.random.default_rng(4)
        pts = mk.efficient_frontier(random_corr(5, rng), random_corr(5, rng), [1.0, 2.0])
        assert pts[1][1] == pytest.approx(4 * pts[0][1], rel=1e-12)
        assert pts[1][2] == pytest.approx(4 * pts[0][2], rel=1e-12)

    def test_monotone(self):
        rng = np.random.default_rng(6)
        pts = np.array(mk.efficient_frontier(random_corr(8, rng), random_corr(8, rng), np.linspace(0.1, 2, 20)))
        assert np.all(np.diff(pts[:, 1]) > 0) and np.all(np.diff(pts[:, 2]) > 0)

    @pytest.mark.parametrize("levels", [[0.0, 1.0], [2.0, 1.0], [-1.0]])
    def test_bad_levels(self, levels):
        with pytest.raises(ValueError):
            mk.efficient_frontier(np.eye(2), np.eye(2), levels)


class TestRiskInequality:
    def test_small_q_converges(self):
        rep = mk.risk_inequality_check(p=10, q=0.02, trials=50, seed=0)
        assert rep.max_relative_spread < 0.05

    def test_reproducible(self):
        a = mk.risk_inequality_check(p=5, q=0.5, trials=1, seed=3)
        b = mk.risk_inequality_check(p=5, q=0.5, trials=1, seed=3)
        assert a == b

    def test_true_risk_of_normalized_gain(self):
        # Sigma = I and g'g = p give R2_true = 1/p exactly
        rep = mk.risk_inequality_check(p=20, q=0.5, trials=2, seed=1)
        assert rep.r2_true == pytest.approx(1 / 20, rel=1e-12)

    @pytest.mark.parametrize("q", [0.0, 1.0])
    def test_q_range(self, q):
        with pytest.raises(ValueError):
            mk.risk_inequality_check(p=5, q=q, trials=1, seed=0)
