"""Synthetic data-generating processes and the Monte-Carlo study runner.

Seeding
-------
Every replication draws from its own ``numpy.random.Philox`` stream (a
counter-based generator) keyed by
``SeedSequence(base_seed, spawn_key=(spec_key, portfolio_index, r))``,
where ``spec_key`` is a stable 63-bit digest of the DGP fields. Streams do
not depend on the replication count or on execution order, so runs are
reproducible under any ``jobs`` setting and extending R keeps earlier
replications intact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.linalg import toeplitz

from .baselines import NodewiseConfig
from .core import CovarianceMatrix, MeanVector, PrecisionMatrix, ReturnsMatrix, normalize_tag
from .metrics import SimulationMetrics, simulation_metrics
from .portfolio import gmv_weights, markowitz_weights
from .registry import PLACEHOLDERS, fit_estimator
from .space import SpaceConfig

logger = logging.getLogger(__name__)

PORTFOLIOS = ("gmv", "markowitz")
METRICS = ("E_V", "E_W", "E_R")
DEFAULT_MEAN_VARIANCE = {"toeplitz": 1e-4, "sparse_factor": 1e-2}


@dataclass(frozen=True)
class DgpSpec:
    """One synthetic design.

    ``mean_mode="auto"`` uses a zero mean for GMV runs and a Gaussian mean
    (``mean_variance``, default 1e-4 Toeplitz / 1e-2 factor) for Markowitz
    runs.
    """

    kind: Literal["toeplitz", "sparse_factor"]
    n: int
    p: int
    mean_mode: Literal["auto", "zero", "gaussian"] = "auto"
    mean_variance: float | None = None
    toeplitz_base: float = 0.15
    factor_count: int = 3
    loading_variance: float = 1e-2
    factor_variance: float = 1e-1
    target_mu_star: float = 0.000376
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("toeplitz", "sparse_factor"):
            raise ValueError(f"unknown DGP kind {self.kind!r}")
        if self.n < 3 or self.p < 2:
            raise ValueError("need n >= 3 and p >= 2")
        if not 0 <= self.toeplitz_base < 1:
            raise ValueError("toeplitz_base must lie in [0, 1)")
        if self.loading_variance < 0 or self.factor_variance <= 0:
            raise ValueError("variances must be positive")
        if self.mean_variance is not None and self.mean_variance <= 0:
            raise ValueError("mean_variance must be positive")
        if self.mean_mode not in ("auto", "zero", "gaussian"):
            raise ValueError(f"unknown mean_mode {self.mean_mode!r}")

    @property
    def label(self) -> str:
        return self.kind

    def key(self) -> int:
        fields = {k: v for k, v in asdict(self).items() if k != "seed"}
        digest = hashlib.sha256(json.dumps(fields, sort_keys=True).encode()).digest()
        return int.from_bytes(digest[:8], "little") >> 1

    def mean_for(self, portfolio: str) -> str:
        if self.mean_mode != "auto":
            return self.mean_mode
        return "gaussian" if portfolio == "markowitz" else "zero"

    def resolved_mean_variance(self) -> float:
        return self.mean_variance or DEFAULT_MEAN_VARIANCE[self.kind]


@dataclass(frozen=True)
class Truth:
    mu: MeanVector
    sigma: CovarianceMatrix
    omega: PrecisionMatrix


@lru_cache(maxsize=32)
def _toeplitz_factors(p: int, base: float):
    sigma = toeplitz(base ** np.arange(p))
    chol = np.linalg.cholesky(sigma)
    omega = np.linalg.solve(sigma, np.eye(p))
    return sigma, chol, omega


def _rng(spec: DgpSpec, rng_stream) -> np.random.Generator:
    if rng_stream is None:
        return np.random.Generator(np.random.Philox(spec.seed))
    return rng_stream


def _draw_mean(spec: DgpSpec, rng: np.random.Generator, mean_mode: str) -> np.ndarray:
    if mean_mode == "zero":
        return np.zeros(spec.p)
    return rng.normal(0.0, math.sqrt(spec.resolved_mean_variance()), size=spec.p)


def _returns(values: np.ndarray) -> ReturnsMatrix:
    return ReturnsMatrix.from_array(values)


def generate_toeplitz(spec: DgpSpec, rng_stream=None, mean_mode: str | None = None):
    """Gaussian returns with ``sigma_ij = base**|i-j|``.

    Returns ``(returns, true_mu, true_sigma, true_omega)``.
    """
    if spec.kind != "toeplitz":
        raise ValueError("spec is not a Toeplitz design")
    rng = _rng(spec, rng_stream)
    sigma, chol, omega = _toeplitz_factors(spec.p, float(spec.toeplitz_base))
    mu = _draw_mean(spec, rng, mean_mode or spec.mean_for("gmv"))
    Z = rng.standard_normal((spec.n, spec.p))
    X = mu + Z @ chol.T
    return _returns(X), MeanVector(mu), CovarianceMatrix(sigma), PrecisionMatrix(omega)


def factor_covariance(spec: DgpSpec) -> float:
    """Diagonal level of Var(X): loadings are redrawn each period, so the
    factor part contributes ``k * factor_var * loading_var`` times I."""
    return spec.factor_count * spec.factor_variance * spec.loading_variance + 1.0


def generate_sparse_factor(spec: DgpSpec, rng_stream=None, mean_mode: str | None = None):
    """``X_t = mu + B_t f_t + eps_t`` with fresh loadings every period."""
    if spec.kind != "sparse_factor":
        raise ValueError("spec is not a sparse-factor design")
    rng = _rng(spec, rng_stream)
    n, p, k = spec.n, spec.p, spec.factor_count
    mu = _draw_mean(spec, rng, mean_mode or spec.mean_for("gmv"))
    loadings = rng.normal(0.0, math.sqrt(spec.loading_variance), size=(n, p, k))
    factors = rng.normal(0.0, math.sqrt(spec.factor_variance), size=(n, k))
    noise = rng.standard_normal((n, p))
    X = mu + np.einsum("tpk,tk->tp", loadings, factors) + noise
    level = factor_covariance(spec)
    sigma = level * np.eye(p)
    omega = np.eye(p) / level
    return _returns(X), MeanVector(mu), CovarianceMatrix(sigma), PrecisionMatrix(omega)


def generate(spec: DgpSpec, rng_stream=None, mean_mode: str | None = None):
    if spec.kind == "toeplitz":
        return generate_toeplitz(spec, rng_stream, mean_mode)
    return generate_sparse_factor(spec, rng_stream, mean_mode)


def replication_rng(base_seed: int, spec: DgpSpec, portfolio: str, r: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(spec.key(), PORTFOLIOS.index(portfolio), int(r)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ReplicationResult:
    spec_index: int
    estimator: str
    portfolio_kind: str
    replication: int
    metrics: SimulationMetrics | None
    converged: bool = True
    lambda_used: float | None = None
    nonzero: int | None = None
    floored: bool = False
    error: str | None = None


def _weights(portfolio, omega, mu, mu_star):
    if portfolio == "gmv":
        return gmv_weights(omega)[0].values
    return markowitz_weights(omega, mu, mu_star)[0].values


def run_replication(spec: DgpSpec, spec_index: int, portfolio: str, r: int, estimators,
                    base_seed: int, *, markowitz_mu: str = "sample",
                    space: SpaceConfig | None = None,
                    nodewise: NodewiseConfig | None = None) -> list[ReplicationResult]:
    rng = replication_rng(base_seed, spec, portfolio, r)
    X, mu, sigma, omega = generate(spec, rng, spec.mean_for(portfolio))
    w_true = _weights(portfolio, omega.values, mu.values, spec.target_mu_star)
    mu_hat = X.values.mean(axis=0) if markowitz_mu == "sample" else mu.values
    out = []
    for tag in estimators:
        try:
            est = fit_estimator(tag, X, space=space, nodewise=nodewise,
                                exact_precision=omega, exact_covariance=sigma)
            w_hat = _weights(portfolio, est.precision.values, mu_hat, spec.target_mu_star)
            m = simulation_metrics(w_hat, est.covariance, w_true, sigma.values)
            out.append(ReplicationResult(spec_index, tag, portfolio, r, m, est.converged,
                                         est.lambda_used, est.nonzero, est.floored))
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("replication %d of %s/%s/%s failed: %s", r, spec.kind, portfolio, tag, exc)
            out.append(ReplicationResult(spec_index, tag, portfolio, r, None, error=str(exc)))
    return out


@dataclass(frozen=True)
class StudyRow:
    dgp: str
    n: int
    p: int
    portfolio: str
    estimator: str
    metric: str
    mean: float
    stderr: float
    replications: int
    exclusions: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class StudyTable:
    rows: list[StudyRow]
    results: list[ReplicationResult] = field(default_factory=list, repr=False)

    COLUMNS = ("dgp", "n", "p", "portfolio", "estimator", "metric", "mean", "stderr",
               "replications", "exclusions")

    def value(self, dgp, n, p, portfolio, estimator, metric) -> float:
        estimator = normalize_tag(estimator)
        for row in self.rows:
            if (row.dgp, row.n, row.p, row.portfolio, row.estimator, row.metric) == (
                    dgp, n, p, portfolio, estimator, metric):
                return row.mean
        raise KeyError((dgp, n, p, portfolio, estimator, metric))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows:
                d = row.as_dict()
                w.writerow(["" if isinstance(d[c], float) and math.isnan(d[c]) else
                            (repr(d[c]) if isinstance(d[c], float) else d[c]) for c in self.COLUMNS])

    def to_json(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {"columns": list(self.COLUMNS),
                "rows": [{k: clean(v) for k, v in r.as_dict().items()} for r in self.rows]}

    def pivot(self) -> str:
        """Plain-text table in the layout of the published result tables."""
        lines = []
        cells = sorted({(r.dgp, r.portfolio, r.n, r.p) for r in self.rows})
        ests = list(dict.fromkeys(r.estimator for r in self.rows))
        for dgp, port, n, p in cells:
            lines.append(f"{dgp} / {port} / n={n}, p={p}")
            lines.append(f"  {'':<18}" + "".join(f"{m:>10}" for m in METRICS))
            for e in ests:
                vals = [self.value(dgp, n, p, port, e, m) for m in METRICS]
                lines.append(f"  {e:<18}" + "".join(
                    f"{'-':>10}" if math.isnan(v) else f"{v:>10.4f}" for v in vals))
        return "\n".join(lines)


def _aggregate(specs, estimators, portfolios, results, R) -> list[StudyRow]:
    rows = []
    index = {}
    for res in results:
        index.setdefault((res.spec_index, res.portfolio_kind, res.estimator), []).append(res)
    for si, spec in enumerate(specs):
        for port in portfolios:
            for tag in estimators:
                if tag in PLACEHOLDERS:
                    for m in METRICS:
                        rows.append(StudyRow(spec.label, spec.n, spec.p, port, tag, m,
                                             math.nan, math.nan, 0, 0))
                    continue
                reps = sorted(index.get((si, port, tag), []), key=lambda x: x.replication)
                good = [x.metrics for x in reps if x.metrics is not None]
                excluded = len(reps) - len(good)
                for m in METRICS:
                    vals = np.array([g.as_dict()[m] for g in good], dtype=float)
                    mean = float(np.sum(vals) / vals.size) if vals.size else math.nan
                    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
                    rows.append(StudyRow(spec.label, spec.n, spec.p, port, tag, m, mean, se,
                                         int(vals.size), excluded))
    return rows


def run_study(specs: Sequence[DgpSpec], estimators: Iterable[str], portfolios: Iterable[str] = ("gmv",),
              replications: int = 100, base_seed: int = 0, *, markowitz_mu: str = "sample",
              space: SpaceConfig | None = None, nodewise: NodewiseConfig | None = None,
              jobs: int = 1) -> StudyTable:
    """Monte-Carlo study: mean error metrics per (design, portfolio, estimator).

    Failed replications are recorded and excluded from the means; the
    exclusion count is reported per cell.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if markowitz_mu not in ("sample", "true"):
        raise ValueError("markowitz_mu must be 'sample' or 'true'")
    estimators = [normalize_tag(e) for e in estimators]
    portfolios = [p.lower() for p in portfolios]
    for p in portfolios:
        if p not in PORTFOLIOS:
            raise ValueError(f"unknown portfolio kind {p!r}")
    fitted = [e for e in estimators if e not in PLACEHOLDERS]
    tasks = [(si, spec, port, r) for si, spec in enumerate(specs) for port in portfolios
             for r in range(replications)]

    def work(task):
        si, spec, port, r = task
        return run_replication(spec, si, port, r, fitted, base_seed, markowitz_mu=markowitz_mu,
                               space=space, nodewise=nodewise)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(work, tasks))
    else:
        chunks = [work(t) for t in tasks]
    results = [res for chunk in chunks for res in chunk]
    return StudyTable(_aggregate(specs, estimators, portfolios, results, replications), results)
