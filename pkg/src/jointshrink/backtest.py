"""Rolling-sample out-of-sample evaluation with drift and proportional costs.

For each test period k (realized row ``n_t + k``) the estimator is fitted
on the preceding ``n_t`` rows, weights are set at the start of the period
and the gross return is ``w_k' x``. The trade into ``w_k`` is measured
against the drifted weights of the previous period; the first period has
no previous weights and trades nothing unless ``charge_initial_trade``.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .baselines import NodewiseConfig
from .core import ReturnsMatrix, normalize_tag
from .metrics import PerformanceReport, net_return, oos_performance, turnover
from .portfolio import PortfolioTarget, gmv_weights, markowitz_weights
from .registry import fit_estimator
from .space import SpaceConfig

logger = logging.getLogger(__name__)

DEFAULT_COST_BPS = 50.0
DEFAULT_TARGETS = {"monthly": 0.007974, "daily": 0.000378}


@dataclass(frozen=True)
class BacktestConfig:
    train_length: int
    estimator: str = "space_unweighted"
    portfolio: Literal["gmv", "markowitz"] = "gmv"
    target: PortfolioTarget | None = None
    frequency: Literal["monthly", "daily"] = "monthly"
    cost_bps: float = DEFAULT_COST_BPS
    space: SpaceConfig = field(default_factory=SpaceConfig)
    nodewise: NodewiseConfig = field(default_factory=NodewiseConfig)
    rebalance_every: int = 1
    charge_initial_trade: bool = False
    exact_precision: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.train_length < 3:
            raise ValueError("train_length must be >= 3")
        if self.cost_bps < 0:
            raise ValueError("cost must be non-negative")
        if self.rebalance_every < 1:
            raise ValueError("rebalance_every must be >= 1")
        if self.portfolio not in ("gmv", "markowitz"):
            raise ValueError(f"unknown portfolio kind {self.portfolio!r}")
        if self.frequency not in DEFAULT_TARGETS:
            raise ValueError(f"unknown frequency {self.frequency!r}")
        object.__setattr__(self, "estimator", normalize_tag(self.estimator))

    @property
    def cost(self) -> float:
        """Proportional cost per unit traded (50 bps -> 0.005)."""
        return self.cost_bps / 1e4

    @property
    def mu_star(self) -> float:
        if self.target is not None:
            return float(getattr(self.target, "mu_star", self.target))
        return DEFAULT_TARGETS[self.frequency]


@dataclass(frozen=True)
class PeriodRecord:
    date: str
    gross: float
    net: float
    turnover: float
    weight_id: int


@dataclass
class BacktestReport:
    estimator: str
    portfolio: str
    records: list[PeriodRecord]
    no_cost: PerformanceReport
    with_cost: PerformanceReport
    turnover: float
    weights: np.ndarray = field(repr=False)
    diagnostics: list[dict] = field(default_factory=list, repr=False)

    @property
    def gross(self) -> np.ndarray:
        return np.array([r.gross for r in self.records])

    @property
    def net(self) -> np.ndarray:
        return np.array([r.net for r in self.records])

    def summary_rows(self) -> list[dict]:
        rows = []
        for block, perf in (("without_cost", self.no_cost), ("with_cost", self.with_cost)):
            rows.append({
                "estimator": self.estimator,
                "portfolio": self.portfolio,
                "block": block,
                "return": perf.mean_return,
                "variance": perf.variance,
                "sharpe": perf.sharpe,
                "turnover": self.turnover if block == "with_cost" else None,
            })
        return rows

    def to_json(self) -> dict:
        def f(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "estimator": self.estimator,
            "portfolio": self.portfolio,
            "units": "per period",
            "without_cost": {k: f(v) for k, v in self.no_cost.as_dict().items()},
            "with_cost": {k: f(v) for k, v in self.with_cost.as_dict().items()},
            "turnover": self.turnover,
            "periods": [asdict(r) for r in self.records],
            "diagnostics": self.diagnostics,
        }

    def write_periods_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "gross", "net", "turnover"])
            for r in self.records:
                w.writerow([r.date, repr(r.gross), repr(r.net), repr(r.turnover)])


def drift_weights(w, x_next) -> np.ndarray:
    """Buy-and-hold weights after one period: ``w_j (1 + x_j) / (1 + w'x)``."""
    w = np.asarray(getattr(w, "values", w), dtype=np.float64)
    x = np.asarray(x_next, dtype=np.float64)
    growth = 1.0 + float(w @ x)
    if growth <= 0:
        raise ValueError("portfolio value non-positive after period return")
    return w * (1.0 + x) / growth


def _performance(series, *, with_cost, cost_bps, turnover_value=None) -> PerformanceReport:
    try:
        return oos_performance(series, with_cost=with_cost, cost_bps=cost_bps,
                               turnover=turnover_value)
    except ValueError:
        r = np.asarray(series, dtype=float)
        logger.warning("zero out-of-sample variance; Sharpe ratio undefined")
        return PerformanceReport(float(r.mean()), 0.0, math.nan, turnover_value, with_cost, cost_bps)


def _window_weights(X: ReturnsMatrix, start: int, cfg: BacktestConfig):
    window = X.window(start, start + cfg.train_length)
    est = fit_estimator(cfg.estimator, window, space=cfg.space, nodewise=cfg.nodewise,
                        exact_precision=cfg.exact_precision)
    diag = {"window_start": X.period_index[start], "converged": est.converged,
            "lambda_used": est.lambda_used, "nonzero": est.nonzero, "fallback": None}
    if cfg.portfolio == "markowitz":
        try:
            w, _ = markowitz_weights(est.precision, window.values.mean(axis=0), cfg.mu_star)
        except ValueError as exc:
            logger.warning("window %d: %s; falling back to GMV", start, exc)
            diag["fallback"] = "gmv"
            w, _ = gmv_weights(est.precision)
    else:
        w, _ = gmv_weights(est.precision)
    return np.array(w.values), diag


def run_backtest(x: ReturnsMatrix, cfg: BacktestConfig, jobs: int = 1) -> BacktestReport:
    if not isinstance(x, ReturnsMatrix):
        x = ReturnsMatrix.from_array(x)
    n, p = x.shape
    n_t = cfg.train_length
    if n <= n_t:
        raise ValueError(f"need more periods ({n}) than the training length ({n_t})")
    m = n - n_t
    refits = list(range(0, m, cfg.rebalance_every))

    def fit(k):
        try:
            return _window_weights(x, k, cfg)
        except Exception as exc:
            raise RuntimeError(f"estimator failed on window {k} "
                               f"(starting {x.period_index[k]}): {exc}") from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fitted = dict(zip(refits, pool.map(fit, refits)))
    else:
        fitted = {k: fit(k) for k in refits}

    records, pairs, diagnostics = [], [], []
    weights = np.empty((m, p))
    drifted = None
    wid = -1
    for k in range(m):
        if k in fitted:
            w, diag = fitted[k]
            wid += 1
            diagnostics.append(diag)
        else:
            w = drifted  # hold between rebalances
        if drifted is None:
            prev = np.zeros(p) if cfg.charge_initial_trade else w
        else:
            prev = drifted
        xk = x.values[n_t + k]
        gross = float(w @ xk)
        net = net_return(w, xk, w, prev, cfg.cost)
        traded = float(np.sum(np.abs(w - prev)))
        pairs.append((w, prev))
        records.append(PeriodRecord(x.period_index[n_t + k], gross, net, traded, wid))
        weights[k] = w
        drifted = drift_weights(w, xk)

    to = turnover(pairs)
    no_cost = _performance([r.gross for r in records], with_cost=False, cost_bps=0.0)
    with_cost = _performance([r.net for r in records], with_cost=True,
                             cost_bps=cfg.cost_bps, turnover_value=to)
    return BacktestReport(cfg.estimator, cfg.portfolio, records, no_cost, with_cost, to,
                          weights, diagnostics)
