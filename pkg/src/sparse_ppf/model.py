"""Bernoulli point-process observation model with a logistic conditional intensity.

Parameter vectors are laid out as ``[mu, theta_0, ..., theta_{M-2}]`` and the
covariate row for bin ``t`` is ``[1, s_t, s_{t-1}, ..., s_{t-M+2}]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ._validation import as_float_array, check_beta, check_binary, check_dims

logger = logging.getLogger(__name__)

#: λΔ outside this band triggers a diagnostic warning (never an error).
SATURATION_BAND = (1e-12, 1.0 - 1e-12)


@dataclass(frozen=True)
class SpikeTrain:
    bins: np.ndarray
    delta: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "bins", check_binary(self.bins).astype(np.int8))
        if self.delta <= 0:
            raise ValueError("bin width delta must be positive")

    def __len__(self) -> int:
        return self.bins.shape[0]

    def windows(self, W: int) -> np.ndarray:
        """Spike counts reshaped to (K, W); the length must be a multiple of W."""
        if len(self) % W:
            raise ValueError(f"train length {len(self)} is not divisible by W={W}")
        return self.bins.reshape(-1, W).astype(float)


@dataclass(frozen=True)
class StimulusSequence:
    """Stimulus samples ``s_t`` for ``t = 1 - pad, ..., T``.

    ``values[pad + t - 1]`` holds ``s_t``; the first ``pad`` entries are
    pre-history used by the earliest covariate rows.
    """

    values: np.ndarray
    pad: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", as_float_array(self.values, "stimulus", ndim=1))
        if self.pad < 0 or self.pad > self.values.shape[0]:
            raise ValueError("pad must be between 0 and the number of samples")

    @property
    def T(self) -> int:
        return self.values.shape[0] - self.pad

    @property
    def bound(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def variance(self) -> float:
        return float(np.var(self.values))

    def at(self, t: int) -> float:
        """Value of ``s_t``; indices before the stored history read as zero."""
        idx = self.pad + t - 1
        if idx >= self.values.shape[0]:
            raise IndexError(f"stimulus index t={t} beyond T={self.T}")
        return float(self.values[idx]) if idx >= 0 else 0.0


@dataclass(frozen=True)
class ParamVector:
    mu: float
    theta: np.ndarray

    @classmethod
    def from_array(cls, w) -> "ParamVector":
        w = as_float_array(w, "w", ndim=1)
        if w.size < 1:
            raise ValueError("parameter vector must have at least the baseline entry")
        return cls(float(w[0]), w[1:].copy())

    def __array__(self, dtype=None, copy=None):
        out = np.concatenate([[self.mu], np.asarray(self.theta, dtype=float)])
        return out if dtype is None else out.astype(dtype)

    @property
    def M(self) -> int:
        return 1 + len(self.theta)

    def sigma_L(self, L: int) -> float:
        return sigma_L(np.asarray(self), L)


def sigma_L(w, L: int) -> float:
    """Best L-term approximation error ``||w - w_L||_1``."""
    w = as_float_array(w, "w", ndim=1)
    if L >= w.size:
        return 0.0
    mags = np.sort(np.abs(w))
    return float(mags[: w.size - L].sum()) if L > 0 else float(mags.sum())


def _linear_predictor(X, w) -> np.ndarray:
    X = as_float_array(X, "X")
    w = np.asarray(w, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[-1] != w.shape[-1]:
        raise ValueError(f"dimension mismatch: X has {X.shape[-1]} columns, w has length {w.shape[-1]}")
    return X @ w


def logistic_cif(X, w) -> np.ndarray:
    """Per-bin spiking probability ``λΔ = logit^{-1}(X w)``."""
    p = expit(_linear_predictor(X, w))
    lo, hi = SATURATION_BAND
    if p.size and (p.min() < lo or p.max() > hi):
        logger.warning("CIF saturated: λΔ range [%.3g, %.3g] leaves [%g, 1-%g]", p.min(), p.max(), lo, lo)
    return p


def innovation(n, lam) -> np.ndarray:
    n = np.atleast_1d(np.asarray(n, dtype=float))
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    check_dims(n, lam, "innovation")
    return n - lam


def window_loglik(w, X, n) -> float:
    """Bernoulli log-likelihood of one window, ``sum n z - log(1 + e^z)``."""
    z = _linear_predictor(X, w)
    n = np.atleast_1d(np.asarray(n, dtype=float))
    check_dims(n, z, "window_loglik")
    return float(np.sum(n * z - np.logaddexp(0.0, z)))


def weighted_loglik(w, windows: Sequence[tuple[np.ndarray, np.ndarray]], beta: float) -> float:
    """Exponentially weighted log-likelihood ``sum_i beta^(k-i) L_i(w)``."""
    beta = check_beta(beta)
    k = len(windows)
    total = 0.0
    for i, (X, n) in enumerate(windows, start=1):
        total += beta ** (k - i) * window_loglik(w, X, n)
    return total


def weighted_gradient(w, windows: Sequence[tuple[np.ndarray, np.ndarray]], beta: float) -> np.ndarray:
    """Gradient ``sum_i beta^(k-i) X_i' (n_i - λ_i(w)Δ)`` of :func:`weighted_loglik`."""
    beta = check_beta(beta)
    k = len(windows)
    g = np.zeros(np.asarray(w).shape[-1])
    for i, (X, n) in enumerate(windows, start=1):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        g += beta ** (k - i) * X.T @ innovation(n, expit(X @ np.asarray(w, dtype=float)))
    return g


def _as_stimulus(s) -> StimulusSequence:
    return s if isinstance(s, StimulusSequence) else StimulusSequence(np.asarray(s, dtype=float), pad=0)


def lagged_design(s, M: int, T: int | None = None) -> np.ndarray:
    """All covariate rows ``x_1..x_T`` stacked into a (T, M) matrix.

    Missing pre-history is zero-padded.
    """
    s = _as_stimulus(s)
    if M < 1:
        raise ValueError("M must be at least 1")
    T = s.T if T is None else T
    if T > s.T:
        raise ValueError(f"requested T={T} rows but stimulus only covers t <= {s.T}")
    lags = M - 1
    need = lags - 1
    vals = s.values[: s.pad + T]
    if s.pad < need:
        vals = np.concatenate([np.zeros(need - s.pad), vals])
        start = 0
    else:
        start = s.pad - need
    X = np.ones((T, M))
    if lags:
        win = sliding_window_view(vals[start:], lags)[:T]
        X[:, 1:] = win[:, ::-1]
    return X


def build_design(s, M: int, W: int, k: int) -> np.ndarray:
    """Design window ``X_k`` of shape (W, M) for window index ``k >= 1``."""
    s = _as_stimulus(s)
    if k < 1 or W < 1:
        raise ValueError("window index k and width W must be >= 1")
    last = k * W
    if last > s.T:
        raise ValueError(f"insufficient stimulus: window {k} needs t <= {last}, have T={s.T}")
    X = np.ones((W, M))
    for j in range(W):
        t = (k - 1) * W + j + 1
        for lag in range(M - 1):
            X[j, 1 + lag] = s.at(t - lag)
    return X


def iter_windows(X_all: np.ndarray, n_all, W: int) -> Iterable[tuple[np.ndarray, np.ndarray]]:
    n_all = np.asarray(n_all, dtype=float)
    if X_all.shape[0] != n_all.shape[0] or X_all.shape[0] % W:
        raise ValueError("design rows must match spikes and be divisible by W")
    for k in range(X_all.shape[0] // W):
        yield X_all[k * W:(k + 1) * W], n_all[k * W:(k + 1) * W]
