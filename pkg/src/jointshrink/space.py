"""Joint sparse regression estimate of partial correlations (SPACE).

The estimator minimises

    0.5 * sum_i eta_i * ||X_i - sum_{j != i} beta_ij X_j||^2 + lam * sum_{i<j} |rho_ij|

with ``beta_ij = rho_ij * sqrt(omega_jj / omega_ii)``, alternating an exact
coordinate-descent step over the partial correlations with a plug-in
update of the diagonal precisions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Literal, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _cd
from .core import (
    PrecisionMatrix,
    ReturnsMatrix,
    SpaceDecomposition,
    precision_from_decomposition,
    regression_coefficients,
    rho_matrix_to_vector,
)
from .validation import check_returns

logger = logging.getLogger(__name__)

RHO_CLAMP = _cd.RHO_BOUND


@dataclass(frozen=True)
class SpaceConfig:
    """Settings for :func:`fit_space`.

    ``lam`` is the penalty on the sum of absolute partial correlations, on
    the scale of the (optionally standardized) data; ``"auto"`` selects it
    with a BIC-type score over a geometric grid.
    """

    lam: Union[float, Literal["auto"]] = "auto"
    weight_mode: Literal["uniform", "precision"] = "uniform"
    outer_iterations: int = 3
    coord_tolerance: float = 1e-6
    max_sweeps: int = 1000
    lambda_grid_size: int = 30
    standardize: bool = True

    def __post_init__(self):
        if self.lam != "auto":
            if not np.isfinite(self.lam) or float(self.lam) < 0:
                raise ValueError(f"lam must be >= 0 or 'auto', got {self.lam!r}")
        if self.weight_mode not in ("uniform", "precision"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")
        if self.coord_tolerance <= 0:
            raise ValueError("coord_tolerance must be positive")
        if self.max_sweeps < 1 or self.lambda_grid_size < 1:
            raise ValueError("max_sweeps and lambda_grid_size must be positive")

    @property
    def source(self) -> str:
        return "space_weighted" if self.weight_mode == "precision" else "space_unweighted"


@dataclass(frozen=True)
class SpaceFit:
    decomposition: SpaceDecomposition
    lambda_used: float
    objective_trace: tuple[float, ...]
    sweeps_per_outer: tuple[int, ...]
    converged: bool
    source: str = "space_unweighted"
    clamped: bool = False
    # omega / eta of the last rho-step, on the working (standardized) scale;
    # these certify the returned rho.
    rho_step_omega: np.ndarray | None = field(default=None, repr=False)
    rho_step_eta: np.ndarray | None = field(default=None, repr=False)
    column_scale: np.ndarray | None = field(default=None, repr=False)
    score_table: tuple[tuple[float, float, int], ...] | None = field(default=None, repr=False)
    # objective at the start of each rho-step (same omega/eta as the
    # matching objective_trace entry)
    rho_step_start: tuple[float, ...] = field(default=(), repr=False)

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.decomposition.rho))

    def precision(self) -> PrecisionMatrix:
        return precision_from_decomposition(self.decomposition, source=self.source)

    def to_json(self, asset_labels=None) -> dict:
        d = self.decomposition
        edges = []
        for i, j, r in d.edges():
            e = {"i": i, "j": j, "rho": r}
            if asset_labels is not None:
                e["asset_i"] = asset_labels[i]
                e["asset_j"] = asset_labels[j]
            edges.append(e)
        out = {
            "estimator": self.source,
            "lambda_used": float(self.lambda_used),
            "converged": bool(self.converged),
            "omega_diag": [float(v) for v in d.omega_diag],
            "rho_edges": edges,
        }
        if asset_labels is not None:
            out["asset_labels"] = list(asset_labels)
        return out


def _prepare(X: np.ndarray, standardize: bool, labels=None) -> tuple[np.ndarray, np.ndarray]:
    """Center (and scale to unit 1/n variance); returns (Z, column variances)."""
    Xc = X - X.mean(axis=0)
    var = np.mean(Xc**2, axis=0)
    flat = np.ptp(X, axis=0) == 0
    if np.any(flat):
        k = int(np.flatnonzero(flat)[0])
        name = labels[k] if labels is not None else k
        raise ValueError(f"column {name!r} has zero variance after centering")
    if standardize:
        return Xc / np.sqrt(var), var
    return Xc, np.ones_like(var)


def joint_loss(x, d: SpaceDecomposition, eta, lam: float) -> float:
    """Penalised joint regression loss evaluated on ``x`` as given."""
    X = np.asarray(getattr(x, "values", x), dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    if X.shape[1] != d.p or eta.shape != (d.p,):
        raise ValueError("dimension mismatch between data, decomposition and weights")
    if np.any(eta <= 0):
        raise ValueError("eta must be positive")
    beta = regression_coefficients(d)
    resid = X - X @ beta.T
    return float(0.5 * np.sum(eta * np.sum(resid**2, axis=0)) + lam * np.sum(np.abs(d.rho)))


def _penalised(G, rho, omega, eta, lam) -> tuple[float, np.ndarray]:
    rss = _cd.space_rss(G, rho, omega)
    pen = lam * np.sum(np.abs(rho[np.triu_indices(rho.shape[0], 1)]))
    return float(0.5 * np.dot(eta, rss) + pen), rss


def _initial_weights(G: np.ndarray, n: int, weight_mode: str):
    omega = n / np.diag(G)
    eta = omega.copy() if weight_mode == "precision" else np.ones_like(omega)
    return omega, eta


def lambda_max(G: np.ndarray, n: int, weight_mode: str = "uniform") -> float:
    """Smallest penalty giving an all-zero first rho-step."""
    omega, eta = _initial_weights(G, n, weight_mode)
    a = np.sqrt(np.outer(1.0 / omega, omega))  # a[i, j] = sqrt(w_j / w_i)
    score = np.abs(G) * (eta[:, None] * a + eta[None, :] * a.T)
    np.fill_diagonal(score, 0.0)
    return float(score.max())


@dataclass
class _RawFit:
    rho: np.ndarray
    omega: np.ndarray
    trace: list
    start: list
    sweeps: list
    converged: bool
    clamped: bool
    rho_step_omega: np.ndarray
    rho_step_eta: np.ndarray
    rss: np.ndarray


def _fit_working(G, n, lam, cfg: SpaceConfig, rho0=None) -> _RawFit:
    p = G.shape[0]
    omega, _ = _initial_weights(G, n, cfg.weight_mode)
    rho = np.zeros((p, p)) if rho0 is None else rho0.copy()
    trace, start, sweeps = [], [], []
    converged = False
    clamped = False
    for _ in range(cfg.outer_iterations):
        eta = omega.copy() if cfg.weight_mode == "precision" else np.ones(p)
        start.append(_penalised(G, rho, omega, eta, lam)[0])
        n_sweeps, converged = _cd.space_rho_step(
            G, rho, omega, eta, float(lam), cfg.coord_tolerance, cfg.max_sweeps
        )
        clamped |= bool(np.any(np.abs(rho) >= RHO_CLAMP))
        obj, rss = _penalised(G, rho, omega, eta, lam)
        trace.append(obj)
        sweeps.append(int(n_sweeps))
        step_omega, step_eta = omega, eta
        omega = n / rss
    if clamped:
        logger.warning("partial correlations held at the bound +/-%.10f", RHO_CLAMP)
    return _RawFit(rho, omega, trace, start, sweeps, bool(converged), clamped, step_omega, step_eta, rss)


def _bic(n: int, rss: np.ndarray, k: int) -> float:
    return float(np.sum(n * np.log(rss / n)) + np.log(n) * k)


def _grid(G, n, cfg: SpaceConfig) -> np.ndarray:
    lmax = lambda_max(G, n, cfg.weight_mode)
    if cfg.lambda_grid_size == 1:
        return np.array([lmax])
    return np.geomspace(lmax, lmax / 100.0, cfg.lambda_grid_size)


def _select(G, n, cfg: SpaceConfig):
    table = []
    best = None
    rho = None
    for lam in _grid(G, n, cfg):
        raw = _fit_working(G, n, lam, cfg, rho0=rho)
        rho = raw.rho
        k = int(np.count_nonzero(np.triu(raw.rho, 1)))
        score = _bic(n, raw.rss, k)
        table.append((float(lam), score, k))
        if best is None or score < best[1]:
            best = (float(lam), score)
    return best[0], tuple(table)


def select_lambda(x, cfg: SpaceConfig | None = None):
    """Pick the penalty by minimising a BIC-type score over a geometric grid.

    Returns ``(lam, score_table)`` where each table row is
    ``(lam, score, nonzero_count)``; the grid runs from the smallest
    all-zero penalty down to 1/100 of it.
    """
    cfg = cfg or SpaceConfig()
    X = check_returns(x, min_samples=3)
    Z, _ = _prepare(X, cfg.standardize, getattr(x, "asset_labels", None))
    G = Z.T @ Z
    return _select(G, X.shape[0], cfg)


def fit_space(x, cfg: SpaceConfig | None = None) -> SpaceFit:
    cfg = cfg or SpaceConfig()
    X = check_returns(x, min_samples=3)
    n = X.shape[0]
    Z, var = _prepare(X, cfg.standardize, getattr(x, "asset_labels", None))
    G = Z.T @ Z
    table = None
    if cfg.lam == "auto":
        lam, table = _select(G, n, cfg)
    else:
        lam = float(cfg.lam)
    raw = _fit_working(G, n, lam, cfg)
    omega = raw.omega / var if cfg.standardize else raw.omega
    decomp = SpaceDecomposition(rho_matrix_to_vector(raw.rho), omega)
    return SpaceFit(
        decomposition=decomp,
        lambda_used=lam,
        objective_trace=tuple(raw.trace),
        sweeps_per_outer=tuple(raw.sweeps),
        converged=raw.converged,
        source=cfg.source,
        clamped=raw.clamped,
        rho_step_omega=raw.rho_step_omega,
        rho_step_eta=raw.rho_step_eta,
        column_scale=np.sqrt(var) if cfg.standardize else np.ones_like(var),
        score_table=table,
        rho_step_start=tuple(raw.start),
    )


def kkt_violation(x, fit: SpaceFit, standardize: bool = True) -> float:
    """Largest violation of the subgradient conditions at the returned rho.

    The certificate uses the omega and eta of the final rho-step. A pair
    held at the +/-1 bound only needs the gradient to push outward.
    """
    X = check_returns(x, min_samples=3)
    Z, _ = _prepare(X, standardize)
    G = Z.T @ Z
    rho = fit.decomposition.rho_matrix()
    grad = _cd.space_gradient(G, rho, fit.rho_step_omega, fit.rho_step_eta)
    iu = np.triu_indices(rho.shape[0], 1)
    g, r = grad[iu], rho[iu]
    lam = fit.lambda_used
    nz = r != 0
    viol = np.zeros_like(g)
    viol[nz] = np.abs(g[nz] + lam * np.sign(r[nz]))
    viol[~nz] = np.maximum(np.abs(g[~nz]) - lam, 0.0)
    edge = np.abs(r) >= RHO_CLAMP
    viol[edge] = np.maximum(np.sign(r[edge]) * (g[edge] + lam * np.sign(r[edge])), 0.0)
    return float(viol.max()) if viol.size else 0.0


class SpacePrecision(BaseEstimator):
    """Sparse precision matrix via joint partial-correlation shrinkage.

    Parameters
    ----------
    lam : float or "auto", default="auto"
        Penalty on the absolute partial correlations. ``"auto"`` picks it by
        a BIC-type score.
    weight_mode : {"uniform", "precision"}, default="uniform"
        Regression weights: all ones, or the current diagonal precisions.
    outer_iterations : int, default=3
    coord_tolerance : float, default=1e-6
        Stop when a full sweep moves no coordinate gradient by more than this.
    max_sweeps : int, default=1000
    lambda_grid_size : int, default=30
    standardize : bool, default=True
        Fit on unit-variance columns and map the diagonal back afterwards.

    Attributes
    ----------
    precision_ : ndarray of shape (n_features, n_features)
    covariance_ : ndarray of shape (n_features, n_features)
        Inverse of ``precision_``.
    partial_correlation_ : ndarray of shape (n_features, n_features)
    location_ : ndarray of shape (n_features,)
        Sample mean of the training data.
    fit_ : SpaceFit
    """

    def __init__(
        self,
        lam="auto",
        weight_mode="uniform",
        outer_iterations=3,
        coord_tolerance=1e-6,
        max_sweeps=1000,
        lambda_grid_size=30,
        standardize=True,
    ):
        self.lam = lam
        self.weight_mode = weight_mode
        self.outer_iterations = outer_iterations
        self.coord_tolerance = coord_tolerance
        self.max_sweeps = max_sweeps
        self.lambda_grid_size = lambda_grid_size
        self.standardize = standardize

    def _config(self) -> SpaceConfig:
        return SpaceConfig(
            lam=self.lam,
            weight_mode=self.weight_mode,
            outer_iterations=self.outer_iterations,
            coord_tolerance=self.coord_tolerance,
            max_sweeps=self.max_sweeps,
            lambda_grid_size=self.lambda_grid_size,
            standardize=self.standardize,
        )

    def fit(self, X, y=None):
        from .metrics import covariance_from_precision

        if hasattr(X, "columns"):
            self.feature_names_in_ = np.asarray(X.columns, dtype=object)
        Xa = check_returns(X, min_samples=3)
        self.n_features_in_ = Xa.shape[1]
        self.fit_ = fit_space(Xa, self._config())
        prec = self.fit_.precision()
        self.precision_ = np.array(prec.values)
        self.covariance_, self.covariance_floored_ = covariance_from_precision(prec)
        self.partial_correlation_ = self.fit_.decomposition.rho_matrix()
        self.lambda_ = self.fit_.lambda_used
        self.location_ = Xa.mean(axis=0)
        return self

    def get_precision(self) -> np.ndarray:
        check_is_fitted(self, "precision_")
        return self.precision_


def with_lambda(cfg: SpaceConfig, lam) -> SpaceConfig:
    return replace(cfg, lam=lam)
