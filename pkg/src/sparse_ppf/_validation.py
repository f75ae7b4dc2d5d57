"""Input validation helpers shared by the functional core and the estimators."""

from __future__ import annotations

import numpy as np


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} contains non-finite entries")
    return arr


def check_binary(n, name: str = "spikes") -> np.ndarray:
    arr = np.asarray(n)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr.astype(float)


def check_beta(beta: float, allow_one: bool = True) -> float:
    beta = float(beta)
    upper_ok = beta <= 1.0 if allow_one else beta < 1.0
    if not (beta > 0.0 and upper_ok):
        bound = "(0, 1]" if allow_one else "(0, 1)"
        raise ValueError(f"forgetting factor beta must lie in {bound}, got {beta}")
    return beta


def check_window(X, n, M: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Validate one window: ``X`` is (W, M), ``n`` has length W."""
    X = as_float_array(X, "X")
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"X must be a (W, M) matrix, got shape {X.shape}")
    n = np.atleast_1d(check_binary(n))
    if n.shape != (X.shape[0],):
        raise ValueError(f"spike window has length {n.shape} but X has {X.shape[0]} rows")
    if M is not None and X.shape[1] != M:
        raise ValueError(f"X has {X.shape[1]} columns, expected M={M}")
    return X, n


def check_dims(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch in {what}: {a.shape} vs {b.shape}")
