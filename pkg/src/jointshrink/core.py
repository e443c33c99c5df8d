"""Domain types and conversions between precision, covariance,
partial-correlation and regression-coefficient representations.

All matrix types store full (not triangular) arrays, symmetrized on
construction where symmetry is part of the contract. Arrays held by the
types are marked read-only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .validation import check_square, check_vector, is_positive_definite, symmetrize

ESTIMATOR_SOURCES = (
    "space_unweighted",
    "space_weighted",
    "nodewise",
    "ledoit_wolf",
    "exact",
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


def normalize_tag(tag: str) -> str:
    """Map CLI-style tags (``space-unweighted``) onto canonical ones."""
    t = tag.strip().lower().replace("-", "_")
    if t == "lw":
        t = "ledoit_wolf"
    return t


@dataclass(frozen=True)
class ReturnsMatrix:
    """n x p matrix of per-period (excess) returns with labels."""

    values: np.ndarray
    asset_labels: tuple[str, ...]
    period_index: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("returns must be a 2-D array")
        n, p = values.shape
        if n < 2 or p < 2:
            raise ValueError(f"need at least 2 periods and 2 assets, got {n}x{p}")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = bad[0]
            raise ValueError(f"non-finite return at row {r}, column {self.asset_labels[c] if len(self.asset_labels) == p else c}")
        labels = tuple(str(a) for a in self.asset_labels)
        index = tuple(str(t) for t in self.period_index)
        if len(labels) != p:
            raise ValueError(f"expected {p} asset labels, got {len(labels)}")
        if len(set(labels)) != p:
            raise ValueError("asset labels must be distinct")
        if len(index) != n:
            raise ValueError(f"expected {n} period labels, got {len(index)}")
        for a, b in zip(index, index[1:]):
            if not a < b:
                raise ValueError(f"period index not strictly increasing at {a!r} -> {b!r}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "asset_labels", labels)
        object.__setattr__(self, "period_index", index)

    @classmethod
    def from_array(cls, values, asset_labels=None, period_index=None) -> "ReturnsMatrix":
        values = np.asarray(values, dtype=np.float64)
        n, p = values.shape
        if asset_labels is None:
            asset_labels = [f"a{j}" for j in range(p)]
        if period_index is None:
            width = len(str(n))
            period_index = [f"{t:0{width}d}" for t in range(n)]
        return cls(values, tuple(asset_labels), tuple(period_index))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def window(self, start: int, stop: int) -> "ReturnsMatrix":
        return ReturnsMatrix(
            self.values[start:stop], self.asset_labels, self.period_index[start:stop]
        )


@dataclass(frozen=True)
class CovarianceMatrix:
    values: np.ndarray
    is_positive_definite: bool = field(init=False)

    def __post_init__(self):
        S = symmetrize(check_square(self.values, "covariance"))
        if np.any(np.diag(S) < 0):
            raise ValueError("covariance diagonal must be non-negative")
        object.__setattr__(self, "values", _frozen(S))
        object.__setattr__(self, "is_positive_definite", is_positive_definite(S))


@dataclass(frozen=True)
class PrecisionMatrix:
    """Estimated or true inverse covariance.

    Nodewise estimates are kept as produced (``is_symmetric=False``); every
    other source is symmetrized on construction.
    """

    values: np.ndarray
    source: str = "exact"
    is_symmetric: bool = True

    def __post_init__(self):
        M = check_square(self.values, "precision")
        if self.source not in ESTIMATOR_SOURCES:
            raise ValueError(f"unknown estimator source {self.source!r}")
        if np.any(np.diag(M) <= 0):
            raise ValueError("precision diagonal must be strictly positive")
        if self.source != "nodewise":
            M = symmetrize(M)
            object.__setattr__(self, "is_symmetric", True)
        else:
            object.__setattr__(self, "is_symmetric", bool(np.array_equal(M, M.T)))
        object.__setattr__(self, "values", _frozen(M))

    @property
    def p(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SpaceDecomposition:
    """Partial correlations (lexicographic pair order) and diagonal precisions."""

    rho: np.ndarray
    omega_diag: np.ndarray

    def __post_init__(self):
        omega = check_vector(self.omega_diag, name="omega_diag")
        p = omega.shape[0]
        rho = check_vector(self.rho, size=p * (p - 1) // 2, name="rho")
        if p < 2:
            raise ValueError("decomposition needs p >= 2")
        if np.any(omega <= 0):
            raise ValueError("omega_diag entries must be strictly positive")
        if np.any(np.abs(rho) > 1):
            raise ValueError("partial correlations must lie in [-1, 1]")
        object.__setattr__(self, "rho", _frozen(rho))
        object.__setattr__(self, "omega_diag", _frozen(omega))

    @property
    def p(self) -> int:
        return self.omega_diag.shape[0]

    @property
    def n_parameters(self) -> int:
        return self.rho.shape[0] + self.omega_diag.shape[0]

    def rho_matrix(self) -> np.ndarray:
        """Symmetric p x p matrix of partial correlations, zero diagonal."""
        return rho_vector_to_matrix(self.rho, self.p)

    def edges(self) -> list[tuple[int, int, float]]:
        iu, ju = np.triu_indices(self.p, k=1)
        nz = np.flatnonzero(self.rho)
        return [(int(iu[k]), int(ju[k]), float(self.rho[k])) for k in nz]


@dataclass(frozen=True)
class MeanVector:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(check_vector(self.values, name="mean")))


def rho_vector_to_matrix(rho: np.ndarray, p: int) -> np.ndarray:
    R = np.zeros((p, p))
    iu = np.triu_indices(p, k=1)
    R[iu] = rho
    R[(iu[1], iu[0])] = rho
    return R


def rho_matrix_to_vector(R: np.ndarray) -> np.ndarray:
    return np.asarray(R)[np.triu_indices(R.shape[0], k=1)].copy()


def precision_from_decomposition(d: SpaceDecomposition, source: str = "exact") -> PrecisionMatrix:
    """Rebuild the precision matrix: omega_ij = -rho_ij * sqrt(omega_ii * omega_jj)."""
    root = np.sqrt(d.omega_diag)
    Omega = -d.rho_matrix() * np.outer(root, root)
    np.fill_diagonal(Omega, d.omega_diag)
    return PrecisionMatrix(Omega, source=source)


def decomposition_from_precision(m: PrecisionMatrix | np.ndarray) -> SpaceDecomposition:
    if isinstance(m, PrecisionMatrix):
        if not m.is_symmetric:
            raise ValueError(
                "decomposition requires a symmetric precision matrix "
                f"(got source={m.source!r})"
            )
        Omega = m.values
    else:
        Omega = check_square(m, "precision")
        # tolerate round-off from numerical inversion, reject real asymmetry
        if not np.allclose(Omega, Omega.T, rtol=1e-10, atol=1e-12 * np.abs(Omega).max()):
            raise ValueError("decomposition requires a symmetric precision matrix")
        Omega = symmetrize(Omega)
    diag = np.diag(Omega).copy()
    if np.any(diag <= 0):
        raise ValueError("precision diagonal must be strictly positive")
    root = np.sqrt(diag)
    R = -Omega / np.outer(root, root)
    rho = np.clip(rho_matrix_to_vector(R), -1.0, 1.0)
    return SpaceDecomposition(rho, diag)


def regression_coefficients(d: SpaceDecomposition) -> np.ndarray:
    """beta[j, k] = rho_jk * sqrt(omega_kk / omega_jj), zero diagonal.

    Row ``j`` holds the coefficients of the regression of asset ``j`` on
    the others.
    """
    w = d.omega_diag
    return d.rho_matrix() * np.sqrt(np.outer(1.0 / w, w))


def sample_moments(x: ReturnsMatrix | np.ndarray) -> tuple[MeanVector, CovarianceMatrix]:
    """Column means and the unbiased (1/(n-1)) sample covariance."""
    X = np.asarray(getattr(x, "values", x), dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("sample moments need at least 2 periods")
    mean = X.mean(axis=0)
    Xc = X - mean
    S = Xc.T @ Xc / (n - 1)
    return MeanVector(mean), CovarianceMatrix(S)


def read_returns_csv(path: str | Path) -> ReturnsMatrix:
    """Read the returns CSV format: ``date`` column then one column per asset.

    Raises ``ValueError`` naming the offending line for malformed rows.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0].lower() != "date":
            raise ValueError(f"{path}: line 1: header must be 'date' followed by asset columns")
        dates: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}: line {lineno}: non-finite return")
            dates.append(row[0].strip())
            rows.append(vals)
    try:
        return ReturnsMatrix(np.array(rows, dtype=np.float64).reshape(len(rows), -1),
                             tuple(header[1:]), tuple(dates))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_returns_csv(x: ReturnsMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *x.asset_labels])
        for date, row in zip(x.period_index, x.values):
            w.writerow([date, *(repr(float(v)) for v in row)])


def read_rate_csv(path: str | Path) -> dict[str, float]:
    """Read a two-column ``date,rate`` risk-free file."""
    out: dict[str, float] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 2 fields")
            out[row[0].strip()] = float(row[1])
    return out


def subtract_rate(x: ReturnsMatrix, rates: dict[str, float]) -> ReturnsMatrix:
    missing = [d for d in x.period_index if d not in rates]
    if missing:
        raise ValueError(f"risk-free file has no rate for period {missing[0]!r}")
    r = np.array([rates[d] for d in x.period_index])
    return ReturnsMatrix(x.values - r[:, None], x.asset_labels, x.period_index)


def lexicographic_pairs(p: int) -> Sequence[tuple[int, int]]:
    return [(i, j) for i in range(p) for j in range(i + 1, p)]
