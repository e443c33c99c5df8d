"""Comparator estimators: nodewise lasso precision and Ledoit-Wolf shrinkage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _cd
from .core import CovarianceMatrix, PrecisionMatrix
from .space import _prepare
from .validation import check_returns


@dataclass(frozen=True)
class NodewiseConfig:
    """Per-node lasso settings.

    ``lam=None`` tunes each node's penalty by GIC over a geometric grid of
    ``grid_size`` values from the all-zero penalty down to 1/100 of it; a
    float fixes the penalty for every node (on the standardized scale).
    """

    lam: float | None = None
    grid_size: int = 30
    coord_tolerance: float = 1e-7
    max_sweeps: int = 1000
    standardize: bool = True

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be non-negative")

    @property
    def lambda_mode(self) -> str:
        return "gic" if self.lam is None else "fixed"


@dataclass(frozen=True)
class NodeFit:
    coef: np.ndarray  # length p-1, on the working scale
    lam: float
    tau2: float
    rss_over_n: float
    converged: bool
    gic_table: tuple = field(default=(), repr=False)


def _gic(rss_over_n: float, k: int, n: int, p: int) -> float:
    return float(np.log(rss_over_n) + k * np.log(p) * np.log(np.log(n)) / n)


def _node(G: np.ndarray, n: int, j: int, cfg: NodewiseConfig) -> NodeFit:
    p = G.shape[0]
    others = np.r_[0:j, j + 1:p]
    Q = np.ascontiguousarray(G[np.ix_(others, others)] / n)
    c = np.ascontiguousarray(G[others, j] / n)
    yy = G[j, j] / n
    beta = np.zeros(p - 1)

    def rss(b):
        return float(yy - 2.0 * b @ c + b @ Q @ b)

    if cfg.lam is not None:
        _, conv = _cd.lasso_gram(Q, c, float(cfg.lam), beta, cfg.coord_tolerance, cfg.max_sweeps)
        r = rss(beta)
        return NodeFit(beta, float(cfg.lam), r + cfg.lam * np.abs(beta).sum(), r, bool(conv))

    lmax = float(np.abs(c).max())
    if lmax == 0.0:
        return NodeFit(beta, 0.0, yy, yy, True)
    best = None
    table = []
    for lam in np.geomspace(lmax, lmax / 100.0, cfg.grid_size):
        _, conv = _cd.lasso_gram(Q, c, float(lam), beta, cfg.coord_tolerance, cfg.max_sweeps)
        r = rss(beta)
        k = int(np.count_nonzero(beta))
        score = _gic(r, k, n, p)
        table.append((float(lam), score, k))
        if best is None or score < best[0]:
            best = (score, float(lam), beta.copy(), r, bool(conv))
    _, lam, b, r, conv = best
    return NodeFit(b, lam, r + lam * np.abs(b).sum(), r, conv, tuple(table))


def nodewise_nodes(x, cfg: NodewiseConfig | None = None):
    """Per-node lasso fits on the prepared data; returns (nodes, Z, variances)."""
    cfg = cfg or NodewiseConfig()
    X = check_returns(x, min_samples=3)
    Z, var = _prepare(X, cfg.standardize, getattr(x, "asset_labels", None))
    G = Z.T @ Z
    n = X.shape[0]
    return [_node(G, n, j, cfg) for j in range(G.shape[0])], Z, var


def fit_nodewise(x, cfg: NodewiseConfig | None = None) -> PrecisionMatrix:
    """Row-by-row precision estimate from p separate lasso regressions.

    Row j is ``(1, -gamma_j) / tau_j^2`` with
    ``tau_j^2 = RSS_j / n + lam_j * ||gamma_j||_1``. The result is not
    symmetrized.
    """
    cfg = cfg or NodewiseConfig()
    nodes, Z, var = nodewise_nodes(x, cfg)
    p = len(nodes)
    Theta = np.zeros((p, p))
    for j, nf in enumerate(nodes):
        others = np.r_[0:j, j + 1:p]
        Theta[j, j] = 1.0 / nf.tau2
        Theta[j, others] = -nf.coef / nf.tau2
    if cfg.standardize:
        s = 1.0 / np.sqrt(var)
        Theta = Theta * np.outer(s, s)
    return PrecisionMatrix(Theta, source="nodewise")


def ledoit_wolf_shrinkage(X: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Return (S, shrinkage intensity b^2/d^2, m) for centered data ``X``."""
    n, p = X.shape
    S = X.T @ X / n
    m = np.trace(S) / p
    if m <= 0:
        raise ValueError("degenerate data: sample covariance is zero")
    D = S.copy()
    D.flat[:: p + 1] -= m
    d2 = np.sum(D**2) / p
    if d2 == 0.0:
        return S, 1.0, m
    # sum_t ||x_t x_t' - S||_F^2 = sum_t ||x_t||^4 - n ||S||_F^2
    row_sq = np.sum(X**2, axis=1)
    bbar2 = (np.sum(row_sq**2) - n * np.sum(S**2)) / (n**2 * p)
    b2 = min(max(bbar2, 0.0), d2)
    return S, b2 / d2, m


def fit_ledoit_wolf(x) -> tuple[CovarianceMatrix, PrecisionMatrix]:
    """Convex shrinkage of the 1/n sample covariance toward ``m * I``."""
    X = check_returns(x, min_samples=2, min_features=1)
    Xc = X - X.mean(axis=0)
    S, delta, m = ledoit_wolf_shrinkage(Xc)
    p = S.shape[0]
    sigma = (1.0 - delta) * S
    sigma.flat[:: p + 1] += delta * m
    cov = CovarianceMatrix(sigma)
    prec = PrecisionMatrix(np.linalg.inv(cov.values), source="ledoit_wolf")
    return cov, prec


class NodewisePrecision(BaseEstimator):
    """Precision matrix from nodewise lasso regressions (not symmetrized).

    Parameters
    ----------
    lam : float or None, default=None
        Fixed penalty for every node; ``None`` tunes each node by GIC.
    grid_size : int, default=30
    coord_tolerance : float, default=1e-7
    max_sweeps : int, default=1000
    standardize : bool, default=True
    """

    def __init__(self, lam=None, grid_size=30, coord_tolerance=1e-7, max_sweeps=1000,
                 standardize=True):
        self.lam = lam
        self.grid_size = grid_size
        self.coord_tolerance = coord_tolerance
        self.max_sweeps = max_sweeps
        self.standardize = standardize

    def fit(self, X, y=None):
        from .metrics import covariance_from_precision

        Xa = check_returns(X, min_samples=3)
        self.n_features_in_ = Xa.shape[1]
        cfg = NodewiseConfig(self.lam, self.grid_size, self.coord_tolerance,
                             self.max_sweeps, self.standardize)
        prec = fit_nodewise(Xa, cfg)
        self.precision_ = np.array(prec.values)
        self.covariance_, self.covariance_floored_ = covariance_from_precision(prec)
        self.location_ = Xa.mean(axis=0)
        return self

    def get_precision(self):
        check_is_fitted(self, "precision_")
        return self.precision_


class LedoitWolfPrecision(BaseEstimator):
    """Ledoit-Wolf covariance with its explicit inverse as ``precision_``."""

    def fit(self, X, y=None):
        Xa = check_returns(X, min_samples=2, min_features=1)
        self.n_features_in_ = Xa.shape[1]
        cov, prec = fit_ledoit_wolf(Xa)
        _, self.shrinkage_, _ = ledoit_wolf_shrinkage(Xa - Xa.mean(axis=0))
        self.covariance_ = np.array(cov.values)
        self.precision_ = np.array(prec.values)
        self.location_ = Xa.mean(axis=0)
        return self

    def get_precision(self):
        check_is_fitted(self, "precision_")
        return self.precision_
