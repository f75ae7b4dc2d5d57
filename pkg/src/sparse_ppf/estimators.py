"""scikit-learn style wrappers around the functional filters.

The recursive estimators treat the rows of ``X`` as consecutive time bins
(first column the intercept) and ``y`` as the binary spike train. ``fit``
runs the filter over the whole recording from a zero start; ``partial_fit``
continues from the current state. ``coef_`` is the final estimate and
``coef_path_`` the estimate after every ``record_every`` windows.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .filters import (PPF0State, PPF1State, SDPPFState, SSPPFState, batch_solve, nrc_estimate,
                      run_filter)
from .model import StimulusSequence, lagged_design
from .prox import ProxHyper, default_step_size
from .strf import GaborDictionary, Spectrogram, gabor_dictionary, strf_covariates


def _check_Xy(X, y, W):
    X = check_array(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} bins")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be a binary spike train")
    if X.shape[0] % W:
        raise ValueError(f"number of bins {X.shape[0]} is not a multiple of window={W}")
    return X, y


class _PointProcessMixin:
    """Prediction and scoring shared by the logistic point-process estimators."""

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return X @ self.coef_

    def predict_rate(self, X):
        """Per-bin spiking probability ``λΔ`` under the final estimate."""
        return expit(self.decision_function(X))

    def predict_proba(self, X):
        p = self.predict_rate(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_rate(X) >= 0.5).astype(int)

    def score(self, X, y):
        """Mean Bernoulli log-likelihood per bin."""
        z = self.decision_function(X)
        y = np.asarray(y, dtype=float).ravel()
        return float(np.mean(y * z - np.logaddexp(0.0, z)))


class _RecursiveFilter(_PointProcessMixin, BaseEstimator):
    def _init_state(self, M, X):
        raise NotImplementedError

    def _run(self, state, X, y):
        res = run_filter(state, X, y, self.window, self.record_every)
        self.state_ = res.state
        self.coef_ = res.state.w.copy()
        self.coef_path_ = res.history
        self.rate_pred_ = res.lam_pred
        self.n_windows_ = getattr(self, "n_windows_", 0) + X.shape[0] // self.window
        self.n_features_in_ = X.shape[1]
        return res

    def fit(self, X, y):
        X, y = _check_Xy(X, y, self.window)
        self.n_windows_ = 0
        self._run(self._init_state(X.shape[1], X), X, y)
        return self

    def partial_fit(self, X, y):
        X, y = _check_Xy(X, y, self.window)
        if not hasattr(self, "state_"):
            return self.fit(X, y)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("feature count changed between partial_fit calls")
        self._run(self.state_, X, y)
        return self


class SparsePointProcessFilter(_RecursiveFilter):
    """ℓ1-regularized adaptive point-process filter.

    Parameters
    ----------
    order : {0, 1}
        Taylor order of the log-likelihood approximation. Order 1 carries a
        quadratic surrogate (``u``, ``B``); order 0 only the gradient.
    beta : float
        Forgetting factor in (0, 1].
    gamma : float
        ℓ1 penalty weight.
    step_size : float, optional
        Proximal step ``α``. Defaults to ``(1 - β) / (c M W σ̄²)`` with
        ``σ̄²`` the mean variance of the non-intercept columns of ``X``.
    c : float
        Constant of the default step size (at least 1/4).
    n_iter : int
        Proximal iterations per window.
    window : int
        Bins per window ``W``.
    penalize_mu : bool
        Whether the intercept is shrunk as well.
    literal : bool
        Re-apply the forgetting factor on every inner iteration instead of
        once per window.
    record_every : int
        Keep the estimate after every this many windows in ``coef_path_``.
    """

    def __init__(self, order=1, beta=0.999, gamma=0.5, step_size=None, c=0.25, n_iter=1, window=1,
                 penalize_mu=True, literal=False, record_every=1):
        self.order = order
        self.beta = beta
        self.gamma = gamma
        self.step_size = step_size
        self.c = c
        self.n_iter = n_iter
        self.window = window
        self.penalize_mu = penalize_mu
        self.literal = literal
        self.record_every = record_every

    def _init_state(self, M, X):
        if self.order not in (0, 1):
            raise ValueError("order must be 0 or 1")
        alpha = self.step_size
        if alpha is None:
            sbar = float(np.mean(np.var(X[:, 1:], axis=0))) if M > 1 else 1.0
            alpha = default_step_size(self.beta, M, self.window, sbar, self.c)
        self.step_size_ = float(alpha)
        hyper = ProxHyper(self.step_size_, self.gamma, self.n_iter, max(self.c, 0.25), self.penalize_mu)
        cls = PPF1State if self.order == 1 else PPF0State
        return cls.init(M, self.beta, hyper, self.literal)


class SteepestDescentPPF(_RecursiveFilter):
    """Steepest-descent point-process filter ``w += ρ X'ε``."""

    def __init__(self, rho=1.0, window=1, record_every=1):
        self.rho = rho
        self.window = window
        self.record_every = record_every

    def _init_state(self, M, X):
        return SDPPFState.init(M, self.rho)


class StochasticStatePPF(_RecursiveFilter):
    """Gaussian-approximation (Kalman-type) point-process filter.

    ``coef_var_`` holds the posterior variances at the recorded windows.
    """

    def __init__(self, beta=1.0, q=0.0, p0=1.0, window=1, record_every=1):
        self.beta = beta
        self.q = q
        self.p0 = p0
        self.window = window
        self.record_every = record_every

    def _init_state(self, M, X):
        return SSPPFState.init(M, self.beta, self.q, self.p0)

    def _run(self, state, X, y):
        res = super()._run(state, X, y)
        self.coef_var_ = res.variance
        return res


class BatchSparseLogistic(_PointProcessMixin, BaseEstimator):
    """Exact maximizer of the ℓ1-penalized, exponentially weighted log-likelihood."""

    def __init__(self, beta=1.0, gamma=0.0, window=1, penalize_mu=True, tol=1e-10, max_iter=200_000):
        self.beta = beta
        self.gamma = gamma
        self.window = window
        self.penalize_mu = penalize_mu
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = _check_Xy(X, y, self.window)
        W = self.window
        windows = [(X[i:i + W], y[i:i + W]) for i in range(0, X.shape[0], W)]
        self.coef_ = batch_solve(windows, self.beta, self.gamma, self.penalize_mu, self.tol,
                                 max_iter=self.max_iter)
        self.n_features_in_ = X.shape[1]
        return self


class NormalizedReverseCorrelation(BaseEstimator):
    """Linear least-squares fit of spikes on covariates.

    ``predict_rate`` returns ``X coef_``, which is not confined to [0, 1].
    """

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        self.coef_ = nrc_estimate(np.asarray(y, dtype=float).ravel(), X)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_rate(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X, dtype=float) @ self.coef_

    predict = predict_rate


class LaggedDesign(TransformerMixin, BaseEstimator):
    """Stimulus samples to covariate rows ``[1, s_t, ..., s_{t-M+2}]``.

    ``pad`` leading samples are treated as pre-history and produce no rows.
    """

    def __init__(self, M=101, pad=0):
        self.M = M
        self.pad = pad

    def fit(self, s, y=None):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        return self

    def transform(self, s):
        s = np.asarray(s, dtype=float).ravel()
        return lagged_design(StimulusSequence(s, pad=self.pad), self.M)


class GaborDesign(TransformerMixin, BaseEstimator):
    """Spectrogram (bands x bins) to dictionary-space covariates ``[1, vec(·) F]``."""

    def __init__(self, n_lags=50, grid_rows=13, grid_cols=13, delta=1e-3):
        self.n_lags = n_lags
        self.grid_rows = grid_rows
        self.grid_cols = grid_cols
        self.delta = delta

    def _spec(self, S):
        return S if isinstance(S, Spectrogram) else Spectrogram(np.asarray(S, dtype=float), self.delta)

    def fit(self, S, y=None):
        spec = self._spec(S)
        self.dictionary_: GaborDictionary = gabor_dictionary(self.n_lags, spec.J, self.grid_rows, self.grid_cols)
        self.n_bands_ = spec.J
        return self

    def transform(self, S):
        check_is_fitted(self, "dictionary_")
        spec = self._spec(S)
        if spec.J != self.n_bands_:
            raise ValueError(f"fitted on {self.n_bands_} bands, got {spec.J}")
        return strf_covariates(spec, self.dictionary_)
