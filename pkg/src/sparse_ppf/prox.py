"""Proximal-gradient primitives for the ℓ1 penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_dims


@dataclass(frozen=True)
class ProxHyper:
    """Step size, penalty weight and inner iteration count.

    ``penalize_mu=False`` exempts the baseline coordinate (index 0) from
    shrinkage.
    """

    step_size: float
    gamma: float = 0.0
    n_iter: int = 1
    c: float = 0.25
    penalize_mu: bool = True

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.n_iter < 1:
            raise ValueError("n_iter (R) must be >= 1")
        if self.c < 0.25:
            raise ValueError("step-size constant c must be >= 1/4")


def soft_threshold(x, tau):
    """Elementwise ``sgn(x) * max(|x| - tau, 0)``.

    ``tau`` may be a scalar or an array broadcastable against ``x``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def threshold_vector(M: int, tau: float, penalize_mu: bool = True) -> np.ndarray:
    thr = np.full(M, float(tau))
    if not penalize_mu:
        thr[0] = 0.0
    return thr


def proximal_step(w, g, hyper: ProxHyper) -> np.ndarray:
    """One ascent step ``S_{γα}(w + α g)`` on the penalized log-likelihood."""
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    check_dims(w, g, "proximal_step")
    thr = threshold_vector(w.shape[-1], hyper.gamma * hyper.step_size, hyper.penalize_mu)
    return soft_threshold(w + hyper.step_size * g, thr)


def surrogate_objective(x, y, f_y: float, grad_y, step_size: float, gamma: float) -> float:
    """Quadratic majorizer of the negated log-likelihood plus the ℓ1 term.

    ``f`` here is the convex loss (negative log-likelihood); ``grad_y`` is its
    gradient at ``y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    return float(f_y + np.dot(grad_y, d) + d @ d / (2.0 * step_size) + gamma * np.abs(x).sum())


def default_step_size(beta: float, M: int, W: int, sigma_bar_sq: float, c: float = 0.25) -> float:
    """Step size ``(1 - beta) / (c M W sigma_bar^2)``.

    Derived from the trace bound on the Lipschitz constant of the weighted
    log-likelihood gradient; undefined for ``beta = 1``.
    """
    if beta >= 1.0:
        raise ValueError("beta = 1 has infinite effective memory; pass step_size explicitly")
    if not 0.0 < beta:
        raise ValueError("beta must lie in (0, 1)")
    if M < 1 or W < 1:
        raise ValueError("M and W must be >= 1")
    if not sigma_bar_sq > 0:
        raise ValueError("sigma_bar_sq must be positive")
    if c < 0.25:
        raise ValueError("c must be >= 1/4")
    return (1.0 - beta) / (c * M * W * sigma_bar_sq)
