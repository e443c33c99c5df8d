"""Closed-form global-minimum-variance and Markowitz portfolios.

Both solvers consume a precision matrix directly, so sparse estimates
enter the weights as estimated. Asymmetric (nodewise) precisions are used
as given in the bilinear forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .core import PrecisionMatrix
from .validation import check_returns, check_square, check_vector

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class WeightVector:
    values: np.ndarray
    portfolio_kind: Literal["gmv", "markowitz"] = "gmv"

    def __post_init__(self):
        v = check_vector(self.values, name="weights")
        if abs(v.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1, got {v.sum()!r}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class PortfolioTarget:
    mu_star: float

    def __post_init__(self):
        if not np.isfinite(self.mu_star):
            raise ValueError("target return must be finite")


def _omega(omega) -> np.ndarray:
    M = check_square(getattr(omega, "values", omega), "precision")
    if np.any(np.diag(M) <= 0):
        raise ValueError("precision diagonal must be strictly positive")
    return M


def gmv_weights(omega: PrecisionMatrix | np.ndarray) -> tuple[WeightVector, float]:
    """``w = Omega 1 / (1' Omega 1)`` and its risk ``1 / (1' Omega 1)``."""
    M = _omega(omega)
    ones = np.ones(M.shape[0])
    m1 = M @ ones
    C = float(ones @ m1)
    if abs(C) < DEGENERATE_TOL:
        raise ValueError("degenerate precision for GMV: 1'Omega 1 is zero")
    return WeightVector(m1 / C, "gmv"), 1.0 / C


def markowitz_scalars(M: np.ndarray, mu: np.ndarray) -> tuple[float, float, float, float]:
    ones = np.ones(M.shape[0])
    A = float(mu @ M @ ones)
    B = float(mu @ M @ mu)
    C = float(ones @ M @ ones)
    return A, B, C, B * C - A * A


def markowitz_weights(omega, mu, target: PortfolioTarget | float,
                      sigma=None) -> tuple[WeightVector, float]:
    """Minimum-variance weights subject to ``w'1 = 1`` and ``w'mu = mu_star``.

    The risk is ``w' sigma w`` when a covariance is passed, otherwise
    ``w' Omega^{-1} w`` via a linear solve.
    """
    M = _omega(omega)
    p = M.shape[0]
    mu = check_vector(getattr(mu, "values", mu), size=p, name="mean")
    mu_star = float(getattr(target, "mu_star", target))
    ones = np.ones(p)
    A, B, C, D = markowitz_scalars(M, mu)
    scale = max(abs(B * C), A * A, np.finfo(float).tiny)
    if abs(D) < DEGENERATE_TOL or abs(D) <= 1e-13 * scale:
        raise ValueError("mean vector collinear with ones: Markowitz problem is degenerate")
    m1, mmu = M @ ones, M @ mu
    w = (B * m1 - A * mmu + mu_star * (C * mmu - A * m1)) / D
    if sigma is not None:
        S = check_square(getattr(sigma, "values", sigma), "covariance")
        risk = float(w @ S @ w)
    else:
        risk = float(w @ np.linalg.solve(M, w))
    return WeightVector(w, "markowitz"), risk


class MinimumVariancePortfolio(BaseEstimator):
    """Global-minimum-variance portfolio on top of a precision estimator.

    Parameters
    ----------
    estimator : estimator with ``precision_`` after ``fit``
        For example :class:`~jointshrink.space.SpacePrecision`.

    Attributes
    ----------
    weights_ : ndarray of shape (n_assets,)
    risk_ : float
    estimator_ : fitted clone of ``estimator``
    """

    def __init__(self, estimator=None):
        self.estimator = estimator

    def _fit_estimator(self, X):
        from .space import SpacePrecision

        est = SpacePrecision() if self.estimator is None else self.estimator
        self.estimator_ = clone(est).fit(X)
        return self.estimator_.precision_

    def fit(self, X, y=None):
        Xa = check_returns(X)
        self.n_features_in_ = Xa.shape[1]
        w, risk = gmv_weights(self._fit_estimator(Xa))
        self.weights_, self.risk_ = np.array(w.values), risk
        return self

    def predict(self, X):
        """Portfolio return of each row of ``X``."""
        check_is_fitted(self, "weights_")
        return check_returns(X, min_samples=1) @ self.weights_


class MarkowitzPortfolio(MinimumVariancePortfolio):
    """Mean-variance portfolio with a target per-period return.

    ``mean="sample"`` plugs in the training-sample mean.
    """

    def __init__(self, estimator=None, target=0.007974, mean="sample"):
        super().__init__(estimator)
        self.target = target
        self.mean = mean

    def fit(self, X, y=None):
        Xa = check_returns(X)
        self.n_features_in_ = Xa.shape[1]
        M = self._fit_estimator(Xa)
        mu = Xa.mean(axis=0) if isinstance(self.mean, str) else np.asarray(self.mean, float)
        w, risk = markowitz_weights(M, mu, self.target)
        self.weights_, self.risk_ = np.array(w.values), risk
        return self
