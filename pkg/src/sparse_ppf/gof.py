"""Time-rescaling goodness-of-fit tests for discrete-time spike trains."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .confidence import normal_quantile

KS_BAND_95 = 1.36
ACF_BAND_95 = 1.96


@dataclass(frozen=True)
class RescaledTimes:
    z: np.ndarray

    @property
    def n_spikes(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class KSResult:
    statistic: float
    band: float
    passed: bool
    model_quantiles: np.ndarray
    empirical_quantiles: np.ndarray


@dataclass(frozen=True)
class ACFResult:
    lags: np.ndarray
    acf: np.ndarray
    band: float
    passed: bool


def time_rescale(spikes, lam, jitter: bool = False, rng=None) -> RescaledTimes:
    """Rescale inter-spike intervals by the integrated discrete-time intensity.

    For spikes at bins ``a < b`` the integrated intensity is
    ``sum_{t=a+1}^{b} -log(1 - λ_tΔ)`` and ``z = 1 - exp(-Λ)``. With
    ``jitter=True`` the spike bin contributes only a random fraction of its
    term (truncated-exponential draw), which makes ``z`` exactly uniform under
    the true model instead of lattice-valued.
    """
    n = np.asarray(spikes)
    lam = np.asarray(lam, dtype=float)
    if n.shape != lam.shape:
        raise ValueError("spikes and λΔ must have the same length")
    if np.any((lam <= 0.0) | (lam >= 1.0)):
        raise ValueError("λΔ must lie strictly inside (0, 1)")
    idx = np.flatnonzero(n)
    if idx.size < 2:
        raise ValueError("time rescaling needs at least two spikes")
    q = -np.log1p(-lam)
    cum = np.concatenate([[0.0], np.cumsum(q)])
    a, b = idx[:-1], idx[1:]
    # cum[b + 1] - cum[a + 1] == sum of q over bins a+1 .. b
    total = cum[b + 1] - cum[a + 1]
    if jitter:
        rng = np.random.default_rng(rng)
        qb = q[b]
        r = rng.random(b.shape[0])
        frac = -np.log1p(-r * -np.expm1(-qb))
        total = total - qb + frac
    return RescaledTimes(-np.expm1(-total))


def ks_test(z: RescaledTimes | np.ndarray, min_spikes: int = 10) -> KSResult:
    zz = np.sort(np.asarray(z.z if isinstance(z, RescaledTimes) else z, dtype=float))
    n = zz.shape[0]
    if n < min_spikes:
        raise ValueError(f"KS test needs at least {min_spikes} rescaled intervals, got {n}")
    model = (np.arange(1, n + 1) - 0.5) / n
    stat = float(np.max(np.abs(zz - model)))
    band = KS_BAND_95 / np.sqrt(n)
    return KSResult(stat, band, stat < band, model, zz)


def acf_test(z: RescaledTimes | np.ndarray, max_lag: int = 20) -> ACFResult:
    zz = np.asarray(z.z if isinstance(z, RescaledTimes) else z, dtype=float)
    n = zz.shape[0]
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if n < max_lag + 10:
        raise ValueError(f"ACF test up to lag {max_lag} needs at least {max_lag + 10} intervals")
    band = ACF_BAND_95 / np.sqrt(n)
    if max_lag == 0:
        return ACFResult(np.arange(1, 1), np.empty(0), band, True)
    u = normal_quantile(np.clip(zz, 1e-6, 1.0 - 1e-6))
    u = u - u.mean()
    denom = float(u @ u)
    lags = np.arange(1, max_lag + 1)
    if denom == 0.0:
        acf = np.ones(max_lag)
    else:
        acf = np.array([u[:-k] @ u[k:] for k in lags]) / denom
    return ACFResult(lags, acf, band, bool(np.all(np.abs(acf) < band)))


def burn_in_slice(T: int, fraction: float = 0.05) -> slice:
    if not 0.0 <= fraction < 1.0:
        raise ValueError("burn-in fraction must lie in [0, 1)")
    return slice(int(round(fraction * T)), T)
