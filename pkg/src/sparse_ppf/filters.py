"""Recursive sparse point-process filters, baselines, and batch references.

Each ``*_update`` function is a pure step: it copies the incoming state,
advances it by one window and returns the new state. The compiled kernels in
``_kernels`` do the arithmetic; the ``run_*`` helpers drive whole recordings
without per-window Python overhead.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from . import _kernels
from ._validation import check_beta, check_window
from .prox import ProxHyper, threshold_vector


class FilterDivergence(FloatingPointError):
    """Raised when a recursive state becomes non-finite or loses definiteness."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def _check_state(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FilterDivergence("filter state became non-finite")


@dataclass
class PPF0State:
    w: np.ndarray
    g: np.ndarray
    beta: float
    hyper: ProxHyper
    k: int = 0
    literal: bool = False
    lam_pred: Optional[np.ndarray] = None

    @classmethod
    def init(cls, M: int, beta: float, hyper: ProxHyper, literal: bool = False, w0=None) -> "PPF0State":
        w = np.zeros(M) if w0 is None else np.array(w0, dtype=float)
        return cls(w, np.zeros(M), check_beta(beta), hyper, 0, literal)

    @property
    def M(self) -> int:
        return self.w.shape[0]


@dataclass
class PPF1State:
    w: np.ndarray
    u: np.ndarray
    B: np.ndarray
    beta: float
    hyper: ProxHyper
    k: int = 0
    literal: bool = False
    lam_pred: Optional[np.ndarray] = None

    @classmethod
    def init(cls, M: int, beta: float, hyper: ProxHyper, literal: bool = False, w0=None) -> "PPF1State":
        w = np.zeros(M) if w0 is None else np.array(w0, dtype=float)
        return cls(w, np.zeros(M), np.zeros((M, M)), check_beta(beta), hyper, 0, literal)

    @property
    def M(self) -> int:
        return self.w.shape[0]

    @property
    def gradient(self) -> np.ndarray:
        """First-order gradient approximation ``u - B w`` at the stored iterate."""
        return self.u - self.B @ self.w


@dataclass
class SDPPFState:
    w: np.ndarray
    rho: float
    k: int = 0
    lam_pred: Optional[np.ndarray] = None

    @classmethod
    def init(cls, M: int, rho: float, w0=None) -> "SDPPFState":
        if not rho > 0:
            raise ValueError("SDPPF step rho must be positive")
        w = np.zeros(M) if w0 is None else np.array(w0, dtype=float)
        return cls(w, float(rho))


@dataclass
class SSPPFState:
    """Gaussian-approximation filter state.

    The covariance predict step is ``cov / beta + q I``. With ``q == 0`` the
    information matrix ``info`` is carried alongside and re-inverted every
    ``resync_every`` windows, which keeps the covariance from drifting.
    """

    w: np.ndarray
    cov: np.ndarray
    info: np.ndarray
    beta: float = 1.0
    q: float = 0.0
    k: int = 0
    resync_every: int = 500
    lam_pred: Optional[np.ndarray] = None

    @classmethod
    def init(cls, M: int, beta: float = 1.0, q: float = 0.0, p0: float = 1.0, w0=None,
             resync_every: int = 500) -> "SSPPFState":
        if q < 0 or p0 <= 0:
            raise ValueError("need q >= 0 and p0 > 0")
        w = np.zeros(M) if w0 is None else np.array(w0, dtype=float)
        return cls(w, p0 * np.eye(M), np.eye(M) / p0, check_beta(beta), float(q), 0, int(resync_every))

    def bands(self, z: float = 1.959963984540054) -> tuple[np.ndarray, np.ndarray]:
        sd = np.sqrt(np.diag(self.cov))
        return self.w - z * sd, self.w + z * sd


def _thr(hyper: ProxHyper, M: int) -> np.ndarray:
    return threshold_vector(M, hyper.gamma * hyper.step_size, hyper.penalize_mu)


def ppf0_update(state: PPF0State, n_k, X_k) -> PPF0State:
    X, n = check_window(X_k, n_k, state.M)
    _check_state(state.w, state.g)
    w, g = state.w.copy(), state.g.copy()
    lam = np.empty(X.shape[0])
    h = state.hyper
    _kernels.ppf0_window(w, g, np.ascontiguousarray(X), n, state.beta, h.step_size, _thr(h, state.M),
                         h.n_iter, state.literal, lam)
    _check_state(w, g)
    return replace(state, w=w, g=g, k=state.k + 1, lam_pred=lam)


def ppf1_update(state: PPF1State, n_k, X_k) -> PPF1State:
    X, n = check_window(X_k, n_k, state.M)
    _check_state(state.w, state.u, state.B)
    w, u, B = state.w.copy(), state.u.copy(), state.B.copy()
    lam = np.empty(X.shape[0])
    h = state.hyper
    _kernels.ppf1_window(w, u, B, np.ascontiguousarray(X), n, state.beta, h.step_size, _thr(h, state.M),
                         h.n_iter, state.literal, lam)
    _check_state(w, u, B)
    return replace(state, w=w, u=u, B=B, k=state.k + 1, lam_pred=lam)


def sdppf_update(state: SDPPFState, n_k, X_k) -> SDPPFState:
    X, n = check_window(X_k, n_k, state.w.shape[0])
    w = state.w.copy()
    lam = np.empty(X.shape[0])
    _kernels.sdppf_window(w, np.ascontiguousarray(X), n, state.rho, lam)
    _check_state(w)
    return replace(state, w=w, k=state.k + 1, lam_pred=lam)


def ssppf_update(state: SSPPFState, n_k, X_k) -> SSPPFState:
    X, n = check_window(X_k, n_k, state.w.shape[0])
    w, P, J = state.w.copy(), state.cov.copy(), state.info.copy()
    lam = np.empty(X.shape[0])
    status = _kernels.ssppf_window(w, P, J, np.ascontiguousarray(X), n, state.beta, state.q, lam)
    if status != 0:
        raise FilterDivergence(f"SSPPF covariance lost definiteness or blew up at window {state.k + 1}")
    if state.q == 0.0 and state.resync_every > 0 and (state.k + 1) % state.resync_every == 0:
        _kernels.resync_covariance(P, J)
    _check_state(w, P)
    return replace(state, w=w, cov=P, info=J, k=state.k + 1, lam_pred=lam)


@dataclass
class RunResult:
    """Trajectory of a filter over a whole recording.

    ``history[r]`` is the estimate after window ``(r + 1) * record_every``;
    ``lam_pred`` holds the predictive λΔ of every bin.
    """

    history: np.ndarray
    lam_pred: np.ndarray
    record_every: int
    state: object
    variance: Optional[np.ndarray] = None

    @property
    def final(self) -> np.ndarray:
        return self.history[-1]


def _prep(X_all, n_all, W):
    X = np.ascontiguousarray(X_all, dtype=float)
    n = np.ascontiguousarray(n_all, dtype=float)
    if X.shape[0] != n.shape[0] or X.shape[0] % W:
        raise ValueError("design rows must equal spike bins and be a multiple of W")
    return X, n


def run_filter(state, X_all, n_all, W: int = 1, record_every: int = 1) -> RunResult:
    """Advance ``state`` over every window of a recording (state is copied)."""
    X, n = _prep(X_all, n_all, W)
    if X.shape[1] != state.w.shape[0]:
        raise ValueError("design width does not match the state dimension")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    K = X.shape[0] // W
    if isinstance(state, PPF1State):
        w, u, B = state.w.copy(), state.u.copy(), state.B.copy()
        h = state.hyper
        hist, lam = _kernels.run_ppf1(X, n, W, w, u, B, state.beta, h.step_size, _thr(h, state.M),
                                      h.n_iter, state.literal, record_every)
        _check_state(w, u, B)
        new = replace(state, w=w, u=u, B=B, k=state.k + K, lam_pred=lam[-W:])
        return RunResult(hist, lam, record_every, new)
    if isinstance(state, PPF0State):
        w, g = state.w.copy(), state.g.copy()
        h = state.hyper
        hist, lam = _kernels.run_ppf0(X, n, W, w, g, state.beta, h.step_size, _thr(h, state.M),
                                      h.n_iter, state.literal, record_every)
        _check_state(w, g)
        return RunResult(hist, lam, record_every, replace(state, w=w, g=g, k=state.k + K, lam_pred=lam[-W:]))
    if isinstance(state, SDPPFState):
        w = state.w.copy()
        hist, lam = _kernels.run_sdppf(X, n, W, w, state.rho, record_every)
        _check_state(w)
        return RunResult(hist, lam, record_every, replace(state, w=w, k=state.k + K, lam_pred=lam[-W:]))
    if isinstance(state, SSPPFState):
        w, P, J = state.w.copy(), state.cov.copy(), state.info.copy()
        hist, lam, var, bad = _kernels.run_ssppf(X, n, W, w, P, J, state.beta, state.q, state.k,
                                                 state.resync_every, record_every)
        if bad >= 0:
            raise FilterDivergence(f"SSPPF covariance lost definiteness or blew up at window {state.k + bad + 1}")
        _check_state(w, P)
        new = replace(state, w=w, cov=P, info=J, k=state.k + K, lam_pred=lam[-W:])
        return RunResult(hist, lam, record_every, new, variance=var)
    raise TypeError(f"unsupported state type {type(state).__name__}")


# --------------------------------------------------------------------------- batch references


def _stack(windows: Sequence[tuple[np.ndarray, np.ndarray]], beta: float):
    Xs = [np.atleast_2d(np.asarray(X, dtype=float)) for X, _ in windows]
    ns = [np.atleast_1d(np.asarray(n, dtype=float)) for _, n in windows]
    k = len(windows)
    weights = np.concatenate([np.full(X.shape[0], beta ** (k - i)) for i, X in enumerate(Xs, start=1)])
    return np.vstack(Xs), np.concatenate(ns), weights


def penalized_objective(w, X, n, weights, gamma, penalize_mu=True) -> float:
    z = X @ w
    pen = np.abs(w).sum() if penalize_mu else np.abs(w[1:]).sum()
    return float(np.sum(weights * (n * z - np.logaddexp(0.0, z))) - gamma * pen)


def kkt_residual(w, X, n, weights, gamma, penalize_mu=True) -> float:
    """Sup-norm violation of the subgradient optimality conditions."""
    g = X.T @ (weights * (n - expit(X @ w)))
    thr = threshold_vector(w.shape[0], gamma, penalize_mu)
    nz = w != 0
    res = np.where(nz, np.abs(g - thr * np.sign(w)), np.maximum(np.abs(g) - thr, 0.0))
    return float(res.max()) if res.size else 0.0


def batch_solve(windows: Sequence[tuple[np.ndarray, np.ndarray]], beta: float, gamma: float,
                penalize_mu: bool = True, tol: float = 1e-10, kkt_tol: Optional[float] = None,
                max_iter: int = 200_000, w0=None) -> np.ndarray:
    """Maximizer of the ℓ1-penalized exponentially weighted log-likelihood.

    Plain proximal gradient with step ``1/L``, ``L`` the spectral bound of the
    weighted Hessian (λΔ(1-λΔ) <= 1/4). Stops once the relative objective
    change drops below ``tol`` and, when ``kkt_tol`` is given, the KKT residual
    is below it as well.
    """
    beta = check_beta(beta)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if not windows:
        raise ValueError("need at least one window")
    X, n, wts = _stack(windows, beta)
    M = X.shape[1]
    L = 0.25 * np.linalg.eigvalsh((X * wts[:, None]).T @ X)[-1]
    if L <= 0:
        return np.zeros(M)
    step = 1.0 / L
    thr = threshold_vector(M, gamma * step, penalize_mu)
    w = np.zeros(M) if w0 is None else np.array(w0, dtype=float)
    f_old = penalized_objective(w, X, n, wts, gamma, penalize_mu)
    for it in range(1, max_iter + 1):
        g = X.T @ (wts * (n - expit(X @ w)))
        v = w + step * g
        w = np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)
        f_new = penalized_objective(w, X, n, wts, gamma, penalize_mu)
        if abs(f_new - f_old) <= tol * max(abs(f_old), 1e-300):
            if kkt_tol is None or kkt_residual(w, X, n, wts, gamma, penalize_mu) <= kkt_tol:
                return w
        f_old = f_new
    raise ConvergenceError(
        f"batch_solve did not converge in {max_iter} iterations",
        {"objective": f_old, "kkt": kkt_residual(w, X, n, wts, gamma, penalize_mu), "w": w},
    )


def nrc_estimate(spikes, X) -> np.ndarray:
    """Normalized reverse correlation: least-squares fit of spikes on covariates.

    ``X`` is the full (T, M) design whose first column is the intercept.
    Singular normal equations fall back to a ridge of ``1e-6 * trace / M``.
    """
    X = np.asarray(X, dtype=float)
    n = np.asarray(spikes, dtype=float)
    if X.shape[0] != n.shape[0]:
        raise ValueError("spikes and design must have the same number of bins")
    C = X.T @ X
    b = X.T @ n
    M = C.shape[0]
    try:
        if np.linalg.cond(C) > 1e12:
            raise np.linalg.LinAlgError
        return np.linalg.solve(C, b)
    except np.linalg.LinAlgError:
        delta = 1e-6 * np.trace(C) / M
        return np.linalg.solve(C + delta * np.eye(M), b)


# --------------------------------------------------------------------------- checkpoints

_KIND = {PPF0State: "ppf0", PPF1State: "ppf1"}


def save_state(state, fh, W: int) -> None:
    """Write a text snapshot: one header line, then vectors/matrices row-major."""
    kind = _KIND.get(type(state))
    if kind is None:
        raise TypeError("only ℓ1 filter states can be checkpointed")
    h = state.hyper
    close = False
    if isinstance(fh, (str, os.PathLike)):
        fh = open(fh, "w")
        close = True
    try:
        fh.write(f"# sparse_ppf-state v1 kind={kind} M={state.M} W={W} beta={state.beta!r} "
                 f"gamma={h.gamma!r} alpha={h.step_size!r} R={h.n_iter} k={state.k} "
                 f"c={h.c!r} penalize_mu={int(h.penalize_mu)} literal={int(state.literal)}\n")
        arrays = [("w", state.w)]
        arrays += [("g", state.g)] if kind == "ppf0" else [("u", state.u), ("B", state.B)]
        for name, arr in arrays:
            fh.write(f"{name}\n")
            np.savetxt(fh, np.atleast_2d(arr), fmt="%.17g")
    finally:
        if close:
            fh.close()


def load_state(fh):
    """Inverse of :func:`save_state`; returns ``(state, W)``."""
    if isinstance(fh, (str, os.PathLike)):
        with open(fh) as f:
            text = f.read()
    else:
        text = fh.read()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# sparse_ppf-state v1"):
        raise ValueError("not a sparse_ppf state snapshot")
    hdr = dict(tok.split("=", 1) for tok in lines[0].split()[3:])
    M = int(hdr["M"])
    blocks: dict[str, list[str]] = {}
    cur = None
    for line in lines[1:]:
        if line and not line[0].isdigit() and line[0] not in "-+.ni":
            cur = line.strip()
            blocks[cur] = []
        elif cur is not None and line.strip():
            blocks[cur].append(line)
    arr = {k: np.loadtxt(io.StringIO("\n".join(v)), ndmin=2) for k, v in blocks.items()}
    hyper = ProxHyper(step_size=float(hdr["alpha"]), gamma=float(hdr["gamma"]), n_iter=int(hdr["R"]),
                      c=float(hdr["c"]), penalize_mu=bool(int(hdr["penalize_mu"])))
    common = dict(beta=float(hdr["beta"]), hyper=hyper, k=int(hdr["k"]), literal=bool(int(hdr["literal"])))
    w = arr["w"].reshape(M)
    if hdr["kind"] == "ppf0":
        state = PPF0State(w=w, g=arr["g"].reshape(M), **common)
    else:
        state = PPF1State(w=w, u=arr["u"].reshape(M), B=arr["B"].reshape(M, M), **common)
    return state, int(hdr["W"])
