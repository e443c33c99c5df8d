"""Simulation error metrics and out-of-sample performance measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import CovarianceMatrix, PrecisionMatrix
from .validation import symmetrize

EIGEN_FLOOR = 1e-8


@dataclass(frozen=True)
class SimulationMetrics:
    e_v: float
    e_w: float
    e_r: float

    def __post_init__(self):
        for name in ("e_v", "e_w", "e_r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def as_dict(self) -> dict[str, float]:
        return {"E_V": self.e_v, "E_W": self.e_w, "E_R": self.e_r}


@dataclass(frozen=True)
class PerformanceReport:
    """Out-of-sample mean, variance and Sharpe ratio (per period)."""

    mean_return: float
    variance: float
    sharpe: float
    turnover: float | None = None
    with_cost: bool = False
    cost_bps: float = 0.0

    def as_dict(self) -> dict:
        return {
            "return": self.mean_return,
            "variance": self.variance,
            "sharpe": self.sharpe,
            "turnover": self.turnover,
            "with_cost": self.with_cost,
            "cost": self.cost_bps,
        }


def _vals(w) -> np.ndarray:
    return np.asarray(getattr(w, "values", w), dtype=np.float64)


def weight_error(w_hat, w_true) -> float:
    """L1 distance between estimated and true weights."""
    a, b = _vals(w_hat), _vals(w_true)
    if a.shape != b.shape:
        raise ValueError("weight vectors differ in length")
    return float(np.sum(np.abs(a - b)))


def variance_error(w_hat, sigma_hat, w_true, sigma_true) -> float:
    """Absolute relative error of the estimated optimal variance."""
    a, b = _vals(w_hat), _vals(w_true)
    Sh, S = _vals(sigma_hat), _vals(sigma_true)
    true_var = float(b @ S @ b)
    if true_var <= 0:
        raise ValueError("true portfolio variance must be positive")
    return float(abs((a @ Sh @ a) / true_var - 1.0))


def risk_error(w_hat, sigma_hat, sigma_true) -> float:
    a = _vals(w_hat)
    D = _vals(sigma_hat) - _vals(sigma_true)
    if D.shape != (a.size, a.size):
        raise ValueError("dimension mismatch")
    return float(abs(a @ D @ a))


def covariance_from_precision(omega: PrecisionMatrix | np.ndarray) -> tuple[np.ndarray, bool]:
    """Invert a precision estimate for use as a covariance.

    Asymmetric (nodewise) estimates are symmetrized first. When the
    symmetric matrix is not positive definite its eigenvalues are floored
    at ``1e-8 * max eigenvalue``. Returns ``(sigma, floored)``.
    """
    M = _vals(omega)
    M = symmetrize(M) if not np.array_equal(M, M.T) else M
    evals, evecs = np.linalg.eigh(M)
    top = evals.max()
    floor = EIGEN_FLOOR * top
    floored = bool(evals.min() <= floor) or top <= 0
    if floored:
        evals = np.maximum(evals, floor if top > 0 else EIGEN_FLOOR)
    sigma = (evecs / evals) @ evecs.T
    return symmetrize(sigma), floored


def oos_performance(realized: Sequence[float], *, with_cost=False, cost_bps=0.0,
                    turnover=None) -> PerformanceReport:
    """Mean, 1/(m-1) variance and Sharpe ratio of a realized return series."""
    r = np.asarray(realized, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need at least two realized returns")
    mu = float(r.mean())
    var = float(r.var(ddof=1))
    if var <= 0:
        raise ValueError("realized returns have zero variance; Sharpe ratio undefined")
    return PerformanceReport(mu, var, mu / math.sqrt(var), turnover, with_cost, cost_bps)


def net_return(w_t, x_next, w_next, w_drift, cost_c: float) -> float:
    """Period return after proportional costs on the rebalancing trade."""
    if cost_c < 0:
        raise ValueError("cost must be non-negative")
    gross = float(_vals(w_t) @ _vals(x_next))
    traded = float(np.sum(np.abs(_vals(w_next) - _vals(w_drift))))
    return gross - cost_c * (1.0 + gross) * traded


def turnover(weight_pairs: Iterable[tuple]) -> float:
    """Mean L1 distance between new and drifted weights."""
    dists = [float(np.sum(np.abs(_vals(a) - _vals(b)))) for a, b in weight_pairs]
    if not dists:
        raise ValueError("turnover needs at least one weight pair")
    return float(np.mean(dists))


def simulation_metrics(w_hat, sigma_hat, w_true, sigma_true) -> SimulationMetrics:
    return SimulationMetrics(
        e_v=variance_error(w_hat, sigma_hat, w_true, sigma_true),
        e_w=weight_error(w_hat, w_true),
        e_r=risk_error(w_hat, sigma_hat, sigma_true),
    )


def as_covariance(sigma) -> CovarianceMatrix:
    return sigma if isinstance(sigma, CovarianceMatrix) else CovarianceMatrix(sigma)
