"""Recursive de-sparsified confidence intervals.

The Hessian approximation ``B`` is the positive (negated) Hessian of the
weighted log-likelihood, so the approximate inverse ``Θ`` built from nodewise
regressions is positive as well, and the de-biased estimate is the one-step
Newton correction ``w + Θ g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, ndtri

from ._validation import check_dims, check_window
from .filters import PPF1State
from .prox import soft_threshold


def normal_quantile(p) -> float | np.ndarray:
    """Standard normal quantile ``Φ^{-1}(p)`` for ``p`` in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise ValueError("normal_quantile needs p strictly inside (0, 1)")
    out = ndtri(arr)
    return float(out) if out.ndim == 0 else out


def update_G(G_prev, X_k, eps_k, beta: float) -> np.ndarray:
    """``G = beta^2 G_prev + X' eps eps' X`` (rank-one in the window score)."""
    X = np.atleast_2d(np.asarray(X_k, dtype=float))
    eps = np.atleast_1d(np.asarray(eps_k, dtype=float))
    if X.shape[0] != eps.shape[0] or np.shape(G_prev) != (X.shape[1], X.shape[1]):
        raise ValueError("dimension mismatch in update_G")
    score = X.T @ eps
    return beta * beta * np.asarray(G_prev, dtype=float) + np.outer(score, score)


def _check_psd(B: np.ndarray) -> None:
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("B must be square")
    if not np.allclose(B, B.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(B).max())):
        raise ValueError("B must be symmetric")
    lo = np.linalg.eigvalsh(B)[0]
    if lo < -1e-10 * max(1.0, np.abs(B).max()):
        raise ValueError(f"B is not positive semidefinite (min eigenvalue {lo:.3g})")


def _nodewise(B, m, gamma_m, alpha, R, psi):
    rest = np.arange(B.shape[0]) != m
    b = B[m, rest]
    A = B[np.ix_(rest, rest)]
    tau = gamma_m * alpha
    for _ in range(R):
        psi = soft_threshold(psi + alpha * (b - A @ psi), tau)
    return psi


def nodewise_lasso(B_k, m: int, gamma_m: float, alpha: float, R: int, psi0=None) -> np.ndarray:
    """ISTA iterations for the nodewise LASSO of coordinate ``m`` (0-based).

    Minimizes ``-2 b'ψ + ψ'Aψ + 2 γ_m ||ψ||_1`` with ``b = B[m, -m]`` and
    ``A = B[-m, -m]``.
    """
    B = np.asarray(B_k, dtype=float)
    _check_psd(B)
    M = B.shape[0]
    if not 0 <= m < M:
        raise IndexError(f"coordinate {m} out of range for M={M}")
    if gamma_m < 0 or alpha <= 0 or R < 1:
        raise ValueError("need gamma_m >= 0, alpha > 0, R >= 1")
    psi = np.zeros(M - 1) if psi0 is None else np.array(psi0, dtype=float)
    return _nodewise(B, m, gamma_m, alpha, R, psi)


def theta_row(B_k, psi_hat, m: int) -> tuple[np.ndarray, float]:
    """Row ``m`` of the approximate inverse Hessian and its scaling ``τ²``."""
    B = np.asarray(B_k, dtype=float)
    psi = np.asarray(psi_hat, dtype=float)
    rest = np.arange(B.shape[0]) != m
    tau_sq = float(B[m, m] - psi @ B[m, rest])
    if not tau_sq > 0:
        raise ValueError(f"degenerate nodewise fit for coordinate {m}: tau^2 = {tau_sq:.3g}")
    c = np.empty(B.shape[0])
    c[m] = 1.0
    c[rest] = -psi
    return c / tau_sq, tau_sq


def confidence_interval(w_hat, row, g_k, G_k, m: int, level: float = 0.95):
    """De-sparsified estimate of coordinate ``m`` and its two-sided interval."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    w_hat = np.asarray(w_hat, dtype=float)
    row = np.asarray(row, dtype=float)
    g_k = np.asarray(g_k, dtype=float)
    check_dims(w_hat, row, "confidence_interval")
    check_dims(w_hat, g_k, "confidence_interval")
    var = float(row @ np.asarray(G_k, dtype=float) @ row)
    if var < 0:
        if var > -1e-12 * max(1.0, np.abs(G_k).max()):
            var = 0.0
        else:
            raise ValueError(f"negative variance estimate {var:.3g}")
    w_d = float(w_hat[m] + row @ g_k)
    z = normal_quantile(1.0 - (1.0 - level) / 2.0)
    half = z * np.sqrt(var)
    return w_d, w_d - half, w_d + half


@dataclass
class IntervalRow:
    window: int
    coord: int
    w_hat: float
    w_desparsified: float
    sigma_hat: float
    lo: float
    hi: float
    level: float
    caveat: str = ""


@dataclass
class ConfidenceState:
    """Streaming companion to an ℓ1 filter that emits de-sparsified intervals.

    Feed it every window right after the filter update. ``G`` (and, for
    filters that do not carry one, a first-order Hessian approximation) is
    refreshed every window; nodewise regressions and intervals run every
    ``stride`` windows, warm-started from the previous ``psi``.
    """

    M: int
    beta: float
    coords: Sequence[int]
    step_size: float
    gamma_m: float | Sequence[float]
    n_iter: int = 1
    level: float = 0.95
    stride: int = 10
    penalize_mu: bool = True
    G: np.ndarray = field(init=False)
    u: np.ndarray = field(init=False)
    B: np.ndarray = field(init=False)
    psi: dict = field(init=False)
    tau_sq: dict = field(init=False)
    rows: dict = field(init=False)
    k: int = field(init=False, default=0)

    def __post_init__(self):
        self.coords = [int(c) for c in self.coords]
        if any(not 0 <= c < self.M for c in self.coords):
            raise IndexError("tracked coordinate out of range")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        gm = np.broadcast_to(np.asarray(self.gamma_m, dtype=float), (len(self.coords),))
        self._gamma = dict(zip(self.coords, gm))
        self.G = np.zeros((self.M, self.M))
        self.u = np.zeros(self.M)
        self.B = np.zeros((self.M, self.M))
        self.psi = {m: np.zeros(self.M - 1) for m in self.coords}
        self.tau_sq = {}
        self.rows = {}

    def _hessian(self, filter_state):
        if isinstance(filter_state, PPF1State):
            return filter_state.B, filter_state.gradient
        return self.B, self.u - self.B @ filter_state.w

    def update(self, n_k, X_k, filter_state) -> list[IntervalRow]:
        X, n = check_window(X_k, n_k, self.M)
        w = np.asarray(filter_state.w, dtype=float)
        lam = expit(X @ w)
        eps = n - lam
        self.G = update_G(self.G, X, eps, self.beta)
        if not isinstance(filter_state, PPF1State):
            lj = lam * (1.0 - lam)
            self.u = self.beta * self.u + X.T @ (eps + lj * (X @ w))
            self.B = self.beta * self.B + (X * lj[:, None]).T @ X
        self.k += 1
        if self.k % self.stride:
            return []
        return self.intervals(filter_state)

    def intervals(self, filter_state) -> list[IntervalRow]:
        B, g = self._hessian(filter_state)
        w = np.asarray(filter_state.w, dtype=float)
        out = []
        for m in self.coords:
            self.psi[m] = _nodewise(B, m, self._gamma[m], self.step_size, self.n_iter, self.psi[m])
            try:
                row, tau_sq = theta_row(B, self.psi[m], m)
            except ValueError:
                continue
            self.tau_sq[m] = tau_sq
            self.rows[m] = row
            w_d, lo, hi = confidence_interval(w, row, g, self.G, m, self.level)
            sigma = (hi - lo) / (2.0 * normal_quantile(1.0 - (1.0 - self.level) / 2.0))
            caveat = "mu_shrunk" if (m == 0 and self.penalize_mu) else ""
            out.append(IntervalRow(self.k, m, float(w[m]), w_d, sigma, lo, hi, self.level, caveat))
        return out
