import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.linalg import toeplitz

from jointshrink.backtest import (
    DEFAULT_COST_BPS,
    DEFAULT_TARGETS,
    BacktestConfig,
    drift_weights,
    run_backtest,
)
from jointshrink.core import ReturnsMatrix

FIXTURE = Path(__file__).parent / "fixtures" / "backtest_trace.json"


def load_trace():
    doc = json.loads(FIXTURE.read_text())
    x = ReturnsMatrix(np.array(doc["returns"]), tuple(doc["assets"]), tuple(doc["dates"]))
    cfg = BacktestConfig(doc["train_length"], estimator="exact", cost_bps=doc["cost_bps"],
                         exact_precision=np.array(doc["precision"]))
    return x, cfg, doc["expected"]


def random_returns(seed, n=40, p=4):
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(toeplitz(0.3 ** np.arange(p)))
    return ReturnsMatrix.from_array(0.005 + 0.03 * rng.standard_normal((n, p)) @ L.T)


class TestConfig:
    def test_defaults(self):
        assert DEFAULT_COST_BPS == 50
        assert DEFAULT_TARGETS == {"monthly": 0.007974, "daily": 0.000378}
        cfg = BacktestConfig(10)
        assert cfg.cost == 0.005
        assert cfg.mu_star == 0.007974
        assert BacktestConfig(10, frequency="daily").mu_star == 0.000378
        assert BacktestConfig(10, target=0.01).mu_star == 0.01
        assert cfg.rebalance_every == 1 and not cfg.charge_initial_trade

    @pytest.mark.parametrize("kw", [{"train_length": 2}, {"cost_bps": -1.0},
                                    {"rebalance_every": 0}, {"portfolio": "foo"},
                                    {"frequency": "weekly"}])
    def test_invalid(self, kw):
        args = {"train_length": 5, **kw}
        with pytest.raises(ValueError):
            BacktestConfig(**args)


class TestDrift:
    def test_no_move(self):
        w = np.array([0.3, -0.2, 0.9])
        assert_allclose(drift_weights(w, np.zeros(3)), w)

    def test_hand(self):
        assert_allclose(drift_weights([0.5, 0.5], [0.02, 0.0]), [0.51 / 1.01, 0.5 / 1.01])

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            w = rng.dirichlet(np.ones(5)) * 1.5 - 0.1
            w /= w.sum()
            assert_allclose(drift_weights(w, rng.normal(0, 0.05, 5)).sum(), 1.0, atol=1e-12)

    def test_wiped_out(self):
        with pytest.raises(ValueError, match="non-positive"):
            drift_weights([2.0, -1.0], [-0.6, 0.0])


class TestHandTrace:
    def test_matches_fixture(self):
        x, cfg, exp = load_trace()
        rep = run_backtest(x, cfg)
        assert_allclose(rep.gross, exp["gross"], rtol=0, atol=1e-12)
        assert_allclose(rep.net, exp["net"], rtol=0, atol=1e-12)
        assert_allclose([r.turnover for r in rep.records], exp["turnover_per_period"],
                        rtol=0, atol=1e-12)
        assert abs(rep.turnover - exp["turnover"]) <= 1e-12
        for block, perf in (("without_cost", rep.no_cost), ("with_cost", rep.with_cost)):
            assert abs(perf.mean_return - exp[block]["return"]) <= 1e-12
            assert abs(perf.variance - exp[block]["variance"]) <= 1e-12
            assert abs(perf.sharpe - exp[block]["sharpe"]) <= 1e-12

    def test_outputs(self, tmp_path):
        x, cfg, _ = load_trace()
        rep = run_backtest(x, cfg)
        assert [r.date for r in rep.records] == ["2020-04", "2020-05", "2020-06"]
        doc = json.loads(json.dumps(rep.to_json()))
        assert doc["units"] == "per period"
        rep.write_periods_csv(tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().splitlines()[0] == "date,gross,net,turnover"
        rows = rep.summary_rows()
        assert [r["block"] for r in rows] == ["without_cost", "with_cost"]

    def test_charge_initial_trade(self):
        x, cfg, exp = load_trace()
        from dataclasses import replace

        rep = run_backtest(x, replace(cfg, charge_initial_trade=True))
        # buying (0.2, 0.8) from cash trades 1.0 in the first period
        assert_allclose(rep.records[0].turnover, 1.0)
        assert_allclose(rep.net[0], exp["gross"][0] - 0.005 * (1 + exp["gross"][0]))


def test_exact_oracle_variance():
    rng = np.random.default_rng(1)
    sigma = 1e-4 * toeplitz(0.15 ** np.arange(4))  # 1% per-period volatility
    omega = np.linalg.inv(sigma)
    n_t = 3
    X = rng.standard_normal((n_t + 5000, 4)) @ np.linalg.cholesky(sigma).T
    cfg = BacktestConfig(n_t, estimator="exact", exact_precision=omega, cost_bps=0.0)
    rep = run_backtest(ReturnsMatrix.from_array(X), cfg)
    assert len(rep.records) == 5000
    assert_allclose(rep.no_cost.variance, 1.0 / omega.sum(), rtol=0.05)


class TestCostIdentities:
    @pytest.mark.parametrize("est", ["ledoit_wolf", "space_unweighted"])
    def test_zero_cost(self, est):
        x = random_returns(2)
        rep = run_backtest(x, BacktestConfig(15, estimator=est, cost_bps=0.0))
        assert_array_equal(rep.net, rep.gross)
        assert rep.no_cost.sharpe == rep.with_cost.sharpe

    def test_net_below_gross(self):
        x = random_returns(3)
        rep = run_backtest(x, BacktestConfig(15, estimator="ledoit_wolf"))
        for r in rep.records:
            if r.turnover > 0:
                assert r.net < r.gross
            else:
                assert r.net == r.gross

    def test_zero_trading(self):
        # equal returns across assets leave drifted weights unchanged
        r = np.random.default_rng(11).normal(0.01, 0.03, 30)
        x = ReturnsMatrix.from_array(np.column_stack([r, r, r]))
        cfg = BacktestConfig(5, estimator="exact", exact_precision=np.diag([1.0, 2.0, 3.0]))
        rep = run_backtest(x, cfg)
        assert rep.turnover == 0.0
        assert_array_equal(rep.net, rep.gross)
        assert rep.with_cost.as_dict()["sharpe"] == rep.no_cost.as_dict()["sharpe"]

    def test_hold_between_rebalances(self):
        x = random_returns(4)
        rep = run_backtest(x, BacktestConfig(15, estimator="ledoit_wolf", rebalance_every=5))
        assert len(rep.diagnostics) == 5
        held = [r for k, r in enumerate(rep.records) if k % 5 != 0]
        assert all(r.turnover == 0.0 for r in held)
        assert all(r.net == r.gross for r in held)


class TestRun:
    def test_window_count_and_determinism(self):
        x = random_returns(5)
        cfg = BacktestConfig(20, estimator="space_weighted")
        a = run_backtest(x, cfg)
        b = run_backtest(x, cfg, jobs=2)
        assert len(a.records) == len(a.diagnostics) == 20
        assert json.dumps(a.to_json()) == json.dumps(b.to_json())

    def test_training_window_is_fixed_width(self):
        x = random_returns(6, n=10)
        rep = run_backtest(x, BacktestConfig(6, estimator="ledoit_wolf"))
        assert [d["window_start"] for d in rep.diagnostics] == list(x.period_index[:4])

    def test_needs_test_periods(self):
        with pytest.raises(ValueError, match="more periods"):
            run_backtest(random_returns(7, n=10), BacktestConfig(10))

    def test_markowitz(self):
        x = random_returns(8)
        rep = run_backtest(x, BacktestConfig(20, estimator="ledoit_wolf", portfolio="markowitz"))
        assert rep.portfolio == "markowitz"
        assert all(d["fallback"] is None for d in rep.diagnostics)

    def test_markowitz_fallback(self, caplog):
        rng = np.random.default_rng(9)
        a = rng.normal(0.01, 0.02, 10)
        x = ReturnsMatrix.from_array(np.column_stack([a, a + rng.normal(0, 0.01, 10)]))
        X = np.array(x.values)
        X[:4, 1] = X[:4, 0][::-1]  # first window: equal column means
        cfg = BacktestConfig(4, estimator="exact", portfolio="markowitz",
                             exact_precision=np.diag([1.0, 4.0]))
        rep = run_backtest(ReturnsMatrix.from_array(X), cfg)
        assert rep.diagnostics[0]["fallback"] == "gmv"
        assert_allclose(rep.weights[0], [0.2, 0.8])
        assert "falling back to GMV" in caplog.text

    def test_failure_names_window(self):
        X = np.array(random_returns(10, n=12).values)
        X[5:9, 2] = 0.0  # flat column inside some windows
        with pytest.raises(RuntimeError, match="window"):
            run_backtest(ReturnsMatrix.from_array(X), BacktestConfig(4, estimator="space_unweighted"))
