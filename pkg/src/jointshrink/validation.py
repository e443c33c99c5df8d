"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_returns(X, *, min_samples: int = 2, min_features: int = 2) -> np.ndarray:
    """Validate a returns array and return it as a float64 ndarray.

    Accepts anything ``sklearn.utils.check_array`` accepts, plus
    :class:`~jointshrink.core.ReturnsMatrix`.
    """
    values = getattr(X, "values", X)
    if not isinstance(values, np.ndarray):
        values = np.asarray(values)
    arr = check_array(
        values,
        dtype=np.float64,
        ensure_min_samples=min_samples,
        ensure_min_features=min_features,
        ensure_all_finite=True,
    )
    return arr


def check_square(M, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(getattr(M, "values", M), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_vector(v, size: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(getattr(v, "values", v), dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return ``(M + M.T) / 2``; the result is bitwise symmetric."""
    S = 0.5 * (M + M.T)
    # (a + b)/2 and (b + a)/2 agree in IEEE arithmetic, but force it anyway.
    iu = np.triu_indices_from(S, k=1)
    S[(iu[1], iu[0])] = S[iu]
    return S


def is_positive_definite(M: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True
