"""Dispatch from estimator tags to fitted precision/covariance pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import NodewiseConfig, fit_ledoit_wolf, fit_nodewise
from .core import PrecisionMatrix, normalize_tag
from .metrics import covariance_from_precision
from .space import SpaceConfig, fit_space

ESTIMATORS = ("space_unweighted", "space_weighted", "nodewise", "ledoit_wolf", "exact")
# reserved: appears in report tables only, never fitted
PLACEHOLDERS = ("poet",)


@dataclass
class Estimate:
    precision: PrecisionMatrix
    covariance: np.ndarray
    floored: bool = False
    converged: bool = True
    lambda_used: float | None = None
    nonzero: int | None = None
    extra: dict = field(default_factory=dict)


def fit_estimator(tag: str, X, *, space: SpaceConfig | None = None,
                  nodewise: NodewiseConfig | None = None,
                  exact_precision=None, exact_covariance=None) -> Estimate:
    """Fit estimator ``tag`` on returns ``X``."""
    tag = normalize_tag(tag)
    if tag in ("space_unweighted", "space_weighted"):
        base = space or SpaceConfig()
        mode = "precision" if tag == "space_weighted" else "uniform"
        cfg = SpaceConfig(**{**base.__dict__, "weight_mode": mode})
        fit = fit_space(X, cfg)
        prec = fit.precision()
        cov, floored = covariance_from_precision(prec)
        return Estimate(prec, cov, floored, fit.converged, fit.lambda_used,
                        fit.nonzero_count, {"fit": fit})
    if tag == "nodewise":
        prec = fit_nodewise(X, nodewise)
        cov, floored = covariance_from_precision(prec)
        off = prec.values[~np.eye(prec.p, dtype=bool)]
        return Estimate(prec, cov, floored, nonzero=int(np.count_nonzero(off)))
    if tag == "ledoit_wolf":
        cov, prec = fit_ledoit_wolf(X)
        return Estimate(prec, np.array(cov.values))
    if tag == "exact":
        if exact_precision is None:
            raise ValueError("estimator 'exact' needs the true precision matrix")
        M = np.asarray(getattr(exact_precision, "values", exact_precision), dtype=float)
        prec = PrecisionMatrix(M, source="exact")
        if exact_covariance is not None:
            cov = np.asarray(getattr(exact_covariance, "values", exact_covariance), dtype=float)
            floored = False
        else:
            cov, floored = covariance_from_precision(prec)
        return Estimate(prec, cov, floored)
    if tag in PLACEHOLDERS:
        raise ValueError(f"estimator {tag!r} is a reserved placeholder and is not implemented")
    raise ValueError(f"unknown estimator {tag!r}")
