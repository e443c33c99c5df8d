"""Sparse precision estimation by joint partial-correlation shrinkage, for
minimum-variance and mean-variance portfolios."""

from .backtest import BacktestConfig, BacktestReport, drift_weights, run_backtest
from .baselines import (
    LedoitWolfPrecision,
    NodewiseConfig,
    NodewisePrecision,
    fit_ledoit_wolf,
    fit_nodewise,
)
from .core import (
    CovarianceMatrix,
    MeanVector,
    PrecisionMatrix,
    ReturnsMatrix,
    SpaceDecomposition,
    decomposition_from_precision,
    precision_from_decomposition,
    read_returns_csv,
    regression_coefficients,
    sample_moments,
)
from .metrics import (
    PerformanceReport,
    SimulationMetrics,
    net_return,
    oos_performance,
    risk_error,
    turnover,
    variance_error,
    weight_error,
)
from .portfolio import (
    MarkowitzPortfolio,
    MinimumVariancePortfolio,
    PortfolioTarget,
    WeightVector,
    gmv_weights,
    markowitz_weights,
)
from .simulation import DgpSpec, generate_sparse_factor, generate_toeplitz, run_study
from .space import SpaceConfig, SpaceFit, SpacePrecision, fit_space, joint_loss, select_lambda

__version__ = "0.1.0"
