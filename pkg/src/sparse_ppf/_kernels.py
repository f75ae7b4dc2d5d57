"""Compiled per-window recursions and whole-run loops.

All kernels mutate their state arguments in place. ``lam_out`` receives the
predictive λΔ of the window (evaluated at the incoming iterate) so callers
can feed goodness-of-fit tests without a second pass.
"""

import math

import numpy as np
from numba import njit

#: Posterior variances beyond this mean the covariance recursion has lost all
#: conditioning; the SSPPF kernels report such windows as divergent.
COV_LIMIT = 1e150


@njit(cache=True)
def _expit(z):
    if z >= 0.0:
        e = math.exp(-z)
        return 1.0 / (1.0 + e)
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _shrink_step(w, g, alpha, thr):
    for m in range(w.shape[0]):
        v = w[m] + alpha * g[m]
        a = abs(v) - thr[m]
        if a > 0.0:
            w[m] = a if v > 0.0 else -a
        else:
            w[m] = 0.0


@njit(cache=True)
def _cif(X, w, lam):
    W, M = X.shape
    for j in range(W):
        z = 0.0
        for m in range(M):
            z += X[j, m] * w[m]
        lam[j] = _expit(z)


@njit(cache=True)
def _all_finite(a):
    for v in a.ravel():
        if not math.isfinite(v):
            return False
    return True


@njit(cache=True)
def ppf0_window(w, g, X, n, beta, alpha, thr, R, literal, lam_out):
    W, M = X.shape
    lam = np.empty(W)
    g0 = np.empty(M)
    for m in range(M):
        g0[m] = beta * g[m]
    for it in range(R):
        _cif(X, w, lam)
        if it == 0:
            lam_out[:] = lam
        if literal and it > 0:
            for m in range(M):
                g0[m] = beta * g[m]
        for m in range(M):
            g[m] = g0[m]
        for j in range(W):
            e = n[j] - lam[j]
            for m in range(M):
                g[m] += X[j, m] * e
        _shrink_step(w, g, alpha, thr)


@njit(cache=True)
def ppf1_window(w, u, B, X, n, beta, alpha, thr, R, literal, lam_out):
    W, M = X.shape
    lam = np.empty(W)
    g = np.empty(M)
    keep = R > 1 and not literal
    u0 = np.empty(M if keep else 0)
    B0 = np.empty((M, M) if keep else (0, 0))
    for it in range(R):
        _cif(X, w, lam)
        if it == 0:
            lam_out[:] = lam
        if it == 0 or literal:
            for a in range(M):
                u[a] *= beta
                for b in range(M):
                    B[a, b] *= beta
            if keep:
                u0[:] = u
                B0[:, :] = B
        else:
            u[:] = u0
            B[:, :] = B0
        for j in range(W):
            p = lam[j]
            lj = p * (1.0 - p)
            xw = 0.0
            for m in range(M):
                xw += X[j, m] * w[m]
            r = (n[j] - p) + lj * xw
            for a in range(M):
                xa = X[j, a]
                if xa == 0.0:
                    continue
                u[a] += r * xa
                la = lj * xa
                for b in range(M):
                    B[a, b] += la * X[j, b]
        for a in range(M):
            acc = u[a]
            for b in range(M):
                acc -= B[a, b] * w[b]
            g[a] = acc
        _shrink_step(w, g, alpha, thr)


@njit(cache=True)
def sdppf_window(w, X, n, rho, lam_out):
    W, M = X.shape
    _cif(X, w, lam_out)
    for j in range(W):
        e = n[j] - lam_out[j]
        for m in range(M):
            w[m] += rho * X[j, m] * e


@njit(cache=True)
def ssppf_window(w, P, J, X, n, beta, q, lam_out):
    """Predict with forgetting and random-walk inflation, then Newton-type update.

    ``J`` mirrors ``P^{-1}`` when ``q == 0`` so callers can periodically
    re-invert it; covariance-form updates with forgetting drift numerically.
    Returns 0 on success and 1 if the covariance lost positivity.
    """
    W, M = X.shape
    inv_beta = 1.0 / beta
    track = q == 0.0
    for a in range(M):
        for b in range(M):
            P[a, b] *= inv_beta
            if track:
                J[a, b] *= beta
        P[a, a] += q
    _cif(X, w, lam_out)
    v = np.empty(M)
    h = np.zeros(M)
    for j in range(W):
        p = lam_out[j]
        lj = p * (1.0 - p)
        e = n[j] - p
        for a in range(M):
            h[a] += X[j, a] * e
        s = 0.0
        for a in range(M):
            acc = 0.0
            for b in range(M):
                acc += P[a, b] * X[j, b]
            v[a] = acc
            s += X[j, a] * acc
        c = lj / (1.0 + lj * s)
        for a in range(M):
            ca = c * v[a]
            la = lj * X[j, a]
            for b in range(M):
                P[a, b] -= ca * v[b]
                if track:
                    J[a, b] += la * X[j, b]
    for a in range(M):
        acc = 0.0
        for b in range(M):
            acc += P[a, b] * h[b]
        w[a] += acc
    for a in range(M):
        if not (0.0 < P[a, a] < COV_LIMIT):
            return 1
    return 0


@njit(cache=True)
def resync_covariance(P, J):
    P[:, :] = np.linalg.inv(J)
    M = P.shape[0]
    for a in range(M):
        for b in range(a + 1, M):
            m = 0.5 * (P[a, b] + P[b, a])
            P[a, b] = m
            P[b, a] = m


@njit(cache=True)
def run_ppf0(X_all, n_all, W, w, g, beta, alpha, thr, R, literal, record_every):
    K = X_all.shape[0] // W
    M = X_all.shape[1]
    hist = np.empty((K // record_every, M))
    lam_all = np.empty(K * W)
    for k in range(K):
        s = k * W
        ppf0_window(w, g, X_all[s:s + W], n_all[s:s + W], beta, alpha, thr, R, literal,
                    lam_all[s:s + W])
        if (k + 1) % record_every == 0:
            hist[(k + 1) // record_every - 1] = w
    return hist, lam_all


@njit(cache=True)
def run_ppf1(X_all, n_all, W, w, u, B, beta, alpha, thr, R, literal, record_every):
    K = X_all.shape[0] // W
    M = X_all.shape[1]
    hist = np.empty((K // record_every, M))
    lam_all = np.empty(K * W)
    for k in range(K):
        s = k * W
        ppf1_window(w, u, B, X_all[s:s + W], n_all[s:s + W], beta, alpha, thr, R, literal,
                    lam_all[s:s + W])
        if (k + 1) % record_every == 0:
            hist[(k + 1) // record_every - 1] = w
    return hist, lam_all


@njit(cache=True)
def run_sdppf(X_all, n_all, W, w, rho, record_every):
    K = X_all.shape[0] // W
    M = X_all.shape[1]
    hist = np.empty((K // record_every, M))
    lam_all = np.empty(K * W)
    for k in range(K):
        s = k * W
        sdppf_window(w, X_all[s:s + W], n_all[s:s + W], rho, lam_all[s:s + W])
        if (k + 1) % record_every == 0:
            hist[(k + 1) // record_every - 1] = w
    return hist, lam_all


@njit(cache=True)
def run_ssppf(X_all, n_all, W, w, P, J, beta, q, k0, resync_every, record_every):
    """Returns (history, lam, variance history, failing window or -1)."""
    K = X_all.shape[0] // W
    M = X_all.shape[1]
    hist = np.empty((K // record_every, M))
    var_hist = np.empty((K // record_every, M))
    lam_all = np.empty(K * W)
    for k in range(K):
        s = k * W
        status = ssppf_window(w, P, J, X_all[s:s + W], n_all[s:s + W], beta, q, lam_all[s:s + W])
        if status != 0:
            return hist, lam_all, var_hist, k
        if q == 0.0 and resync_every > 0 and (k0 + k + 1) % resync_every == 0:
            resync_covariance(P, J)
        if (k + 1) % record_every == 0:
            r = (k + 1) // record_every - 1
            hist[r] = w
            for m in range(M):
                var_hist[r, m] = P[m, m]
    return hist, lam_all, var_hist, -1
