"""Two-fold even/odd cross-validation of the ℓ1 penalty weight.

Windows are split into interleaved even and odd sets. A filter is run on one
set as if its windows were consecutive, and each held-out window is scored by
its unweighted Bernoulli log-likelihood under the training estimate available
just before it. The roles are then swapped and the two scores averaged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .filters import run_filter


@dataclass(frozen=True)
class CVResult:
    gamma_star: float
    grid: np.ndarray
    scores: np.ndarray


def _fold_windows(X_all, n_all, W: int, parity: int):
    K = X_all.shape[0] // W
    Xw = X_all[: K * W].reshape(K, W, -1)
    nw = n_all[: K * W].reshape(K, W)
    return Xw[parity::2], nw[parity::2]


def heldout_loglik(history, X_test, n_test) -> float:
    """Sum of held-out window log-likelihoods.

    ``history[i]`` scores test window ``i``; ``X_test`` is (K, W, M).
    """
    z = np.einsum("kwm,km->kw", X_test, history)
    return float(np.sum(n_test * z - np.logaddexp(0.0, z)))


def cross_validate(make_state: Callable[[float], object], X_all, n_all, W: int,
                   grid: Sequence[float]) -> CVResult:
    """Select ``gamma`` by two-fold even/odd cross-validation.

    ``make_state(gamma)`` must return a fresh filter state. Ties in the
    averaged held-out log-likelihood go to the larger (sparser) ``gamma``.
    """
    grid = np.asarray(sorted(float(g) for g in grid))
    if grid.size == 0:
        raise ValueError("cross-validation grid is empty")
    X_all = np.ascontiguousarray(X_all, dtype=float)
    n_all = np.ascontiguousarray(n_all, dtype=float)
    if not n_all.any():
        raise ValueError("cannot cross-validate on a spike train without spikes")
    if X_all.shape[0] // W < 2:
        raise ValueError("need at least two windows to cross-validate")
    Xe, ne = _fold_windows(X_all, n_all, W, 0)
    Xo, no = _fold_windows(X_all, n_all, W, 1)
    M = X_all.shape[1]
    Ko = Xo.shape[0]
    scores = np.empty(grid.size)
    for i, g in enumerate(grid):
        # even -> odd: estimate after even window j scores odd window j
        h_even = run_filter(make_state(g), Xe.reshape(-1, M), ne.reshape(-1), W, 1).history
        s1 = heldout_loglik(h_even[:Ko], Xo, no)
        # odd -> even: even window j+1 follows odd window j; even window 0
        # precedes all training data and is scored at the zero start
        h_odd = run_filter(make_state(g), Xo.reshape(-1, M), no.reshape(-1), W, 1).history
        prev = np.vstack([np.zeros((1, M)), h_odd])[: Xe.shape[0]]
        s2 = heldout_loglik(prev, Xe, ne)
        scores[i] = 0.5 * (s1 + s2)
    best = scores.max()
    tol = 1e-12 * max(1.0, abs(best))
    gamma_star = float(grid[np.flatnonzero(scores >= best - tol)[-1]])
    return CVResult(gamma_star, grid, scores)
