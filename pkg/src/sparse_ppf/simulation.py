"""Scenario generators, metrics and the two simulation studies.

Study 1 runs the four recursive filters on a stationary sparse parameter and
records ensemble learning curves. Study 2 tracks a parameter whose largest
component drops linearly to zero halfway through the run and collects the
inputs for tracking plots, confidence bands and goodness-of-fit tests.

Indexing convention: supports are given as indices into the full parameter
vector ``ω = [μ, θ]``, so they lie in ``1..M-1``.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .confidence import ConfidenceState, IntervalRow
from .filters import (PPF0State, PPF1State, SDPPFState, SSPPFState, nrc_estimate, ppf0_update,
                      ppf1_update, run_filter)
from .gof import acf_test, burn_in_slice, ks_test, time_rescale
from .model import ParamVector, SpikeTrain, StimulusSequence, lagged_design
from .prox import ProxHyper, default_step_size

logger = logging.getLogger(__name__)

#: dB value reported when the normalized error is exactly zero.
DB_SENTINEL = -999.0

FILTER_KINDS = ("ppf1", "ppf0", "ssppf", "sdppf")


# --------------------------------------------------------------------------- generators

def gen_sparse_param(M: int, L: int, norm: float, rng, mu: float = 0.0) -> ParamVector:
    """Random L-sparse modulation vector with ``||θ||₂ = norm``."""
    if L >= M or L < 0:
        raise ValueError(f"need 0 <= L < M, got L={L}, M={M}")
    rng = np.random.default_rng(rng)
    theta = np.zeros(M - 1)
    if L:
        idx = rng.choice(M - 1, size=L, replace=False)
        vals = rng.standard_normal(L)
        theta[idx] = vals * (norm / np.linalg.norm(vals))
    return ParamVector(float(mu), theta)


def gen_stimulus(n: int, sigma_sq: float, rng, pad: int = 0) -> StimulusSequence:
    """I.i.d. ``N(0, sigma_sq)`` samples; ``pad`` extra leading samples of history."""
    if n < 1:
        raise ValueError("need at least one stimulus sample")
    if sigma_sq < 0:
        raise ValueError("stimulus variance must be non-negative")
    rng = np.random.default_rng(rng)
    vals = np.sqrt(sigma_sq) * rng.standard_normal(n + pad)
    return StimulusSequence(vals, pad=pad)


def sample_spikes(lam, rng, delta: float = 1e-3) -> SpikeTrain:
    """Conditionally independent Bernoulli draws with success probabilities ``lam``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(lam)) or np.any((lam < 0.0) | (lam > 1.0)):
        raise ValueError("λΔ must lie in [0, 1]")
    rng = np.random.default_rng(rng)
    return SpikeTrain((rng.random(lam.shape) < lam).astype(np.int8), delta)


def calibrate_mu(theta_norm: float, sigma_sq: float, target_rate: float, n_nodes: int = 200) -> float:
    """Baseline ``μ`` giving mean ``λΔ`` equal to ``target_rate``.

    The linear stimulus term is Gaussian with variance ``sigma_sq * ||θ||²``,
    so the mean rate is a one-dimensional Gaussian integral of the logistic.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError("target rate must lie in (0, 1)")
    x, wts = np.polynomial.hermite_e.hermegauss(n_nodes)
    wts = wts / wts.sum()
    sd = np.sqrt(sigma_sq) * theta_norm

    def gap(mu):
        return float(wts @ expit(mu + sd * x)) - target_rate

    return float(brentq(gap, -50.0, 50.0, xtol=1e-14))


# --------------------------------------------------------------------------- metrics

def to_db(x) -> float | np.ndarray:
    """``10 log10(x)``, with zero mapped to :data:`DB_SENTINEL`."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(x > 0, 10.0 * np.log10(np.where(x > 0, x, 1.0)), DB_SENTINEL)
    return float(out) if out.ndim == 0 else out


def mse_metric(w_hat, w_true) -> float:
    """Ensemble-normalized squared error ``E||ŵ - w||² / E||w||²``.

    Leading axes of the inputs are averaged over (realizations, and/or time).
    """
    w_hat = np.asarray(w_hat, dtype=float)
    w_true = np.broadcast_to(np.asarray(w_true, dtype=float), w_hat.shape)
    den = np.sum(w_true ** 2)
    if den == 0:
        raise ValueError("true parameter has zero norm")
    return float(np.sum((w_hat - w_true) ** 2) / den)


def spm_metric(theta_hat, support) -> float:
    """Fraction of estimated energy outside ``support`` (indices into ``theta_hat``)."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    tot = np.sum(theta_hat ** 2)
    if tot == 0:
        return 0.0
    mask = np.ones(theta_hat.shape[-1], dtype=bool)
    mask[np.asarray(support, dtype=int)] = False
    return float(np.sum(theta_hat[..., mask] ** 2) / tot)


# --------------------------------------------------------------------------- scenario

@dataclass(frozen=True)
class Scenario:
    """Data-generating setup shared by every filter in a comparison.

    ``schedule`` maps a parameter index to piecewise-linear knots
    ``((k_0, v_0), (k_1, v_1), ...)`` in window units; the coordinate is
    held at the end values outside the knot range. Coordinates without a
    schedule keep their entry of ``values``.
    """

    M: int = 101
    K: int = 30000
    W: int = 1
    delta: float = 1e-3
    L: int = 3
    norm: float = 10.0
    support: Optional[tuple[int, ...]] = None
    values: Optional[tuple[float, ...]] = None
    mu: Optional[float] = None
    target_rate: float = 0.13
    sigma_sq: float = 0.01
    schedule: Mapping[int, tuple[tuple[float, float], ...]] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.M < 2 or self.K < 1 or self.W < 1 or self.delta <= 0:
            raise ValueError("need M >= 2, K >= 1, W >= 1 and delta > 0")
        if self.support is not None:
            sup = tuple(int(s) for s in self.support)
            if len(set(sup)) != len(sup) or any(not 1 <= s <= self.M - 1 for s in sup):
                raise ValueError("support indices must be distinct and lie in 1..M-1")
            if self.values is None or len(self.values) != len(sup):
                raise ValueError("values must match the support")
            object.__setattr__(self, "support", sup)
            object.__setattr__(self, "L", len(sup))
        for c in self.schedule:
            if not 0 <= int(c) < self.M:
                raise ValueError(f"scheduled coordinate {c} out of range")

    @property
    def T(self) -> float:
        """Recording duration in seconds (``K W Δ``)."""
        return self.K * self.W * self.delta

    @property
    def n_bins(self) -> int:
        return self.K * self.W


def param_schedule(knots, k) -> np.ndarray:
    knots = np.asarray(knots, dtype=float)
    return np.interp(np.asarray(k, dtype=float), knots[:, 0], knots[:, 1])


@dataclass
class Realization:
    """One drawn dataset: stimulus, design, spikes and the true parameters."""

    stimulus: StimulusSequence
    X: np.ndarray
    spikes: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    scenario: Scenario

    def omega_at(self, k) -> np.ndarray:
        """True parameter at window(s) ``k`` (1-based)."""
        k = np.atleast_1d(np.asarray(k))
        out = np.repeat(self.omega[None, :], k.shape[0], axis=0)
        for c, knots in self.scenario.schedule.items():
            out[:, int(c)] = param_schedule(knots, k)
        return out

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.omega[1:]) + 1


def draw_realization(sc: Scenario, rng) -> Realization:
    """Draw parameters (when not fixed), stimulus and spikes for ``sc``."""
    rng = np.random.default_rng(rng)
    p_rng, s_rng, n_rng = rng.spawn(3)
    if sc.support is None:
        pv = gen_sparse_param(sc.M, sc.L, sc.norm, p_rng)
        theta = pv.theta
    else:
        theta = np.zeros(sc.M - 1)
        theta[np.asarray(sc.support) - 1] = sc.values
    mu = sc.mu if sc.mu is not None else calibrate_mu(np.linalg.norm(theta), sc.sigma_sq, sc.target_rate)
    omega = np.concatenate([[mu], theta])
    stim = gen_stimulus(sc.n_bins, sc.sigma_sq, s_rng, pad=sc.M - 2)
    X = lagged_design(stim, sc.M)
    z = X @ omega
    if sc.schedule:
        k_of_bin = np.arange(sc.n_bins) // sc.W + 1
        for c, knots in sc.schedule.items():
            c = int(c)
            z += X[:, c] * (param_schedule(knots, k_of_bin) - omega[c])
    lam = expit(z)
    spikes = sample_spikes(lam, n_rng, sc.delta).bins.astype(float)
    return Realization(stim, X, spikes, lam, omega, sc)


# --------------------------------------------------------------------------- filter setup

@dataclass(frozen=True)
class FilterSpec:
    """Hyperparameters of one recursive filter.

    ``alpha=None`` uses the trace-bound step size with constant ``c``;
    ``rho=None`` (SDPPF) matches the steepest-descent memory to ``beta``:
    ``rho = (1 - beta) / (W Λ̄ σ²)`` with ``Λ̄`` the mean ``λΔ(1 - λΔ)``.
    """

    kind: str
    beta: float = 0.999
    gamma: float = 0.0
    alpha: Optional[float] = None
    c: float = 1.1
    R: int = 1
    q: float = 0.0
    rho: Optional[float] = None
    penalize_mu: bool = True

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}; expected one of {FILTER_KINDS}")

    def step_size(self, M: int, W: int, sigma_bar_sq: float) -> float:
        if self.alpha is not None:
            return float(self.alpha)
        return default_step_size(self.beta, M, W, sigma_bar_sq, self.c)

    def make_state(self, M: int, W: int, sigma_bar_sq: float, mean_info: float = 0.1):
        if self.kind in ("ppf0", "ppf1"):
            hyper = ProxHyper(self.step_size(M, W, sigma_bar_sq), self.gamma, self.R,
                              max(self.c, 0.25), self.penalize_mu)
            cls = PPF1State if self.kind == "ppf1" else PPF0State
            return cls.init(M, self.beta, hyper)
        if self.kind == "ssppf":
            return SSPPFState.init(M, self.beta, self.q)
        rho = self.rho
        if rho is None:
            rho = (1.0 - self.beta) / (W * mean_info * sigma_bar_sq)
        return SDPPFState.init(M, rho)


def design_variance(X: np.ndarray) -> float:
    """Average variance of the stimulus covariates (intercept excluded)."""
    return float(np.mean(np.var(X[:, 1:], axis=0))) if X.shape[1] > 1 else 1.0


def study1_filters(gamma_ppf1: float = 0.5, gamma_ppf0: float = 0.5, beta: float = 0.999,
                   alpha: float = 9e-4) -> dict[str, FilterSpec]:
    return {
        "ppf1": FilterSpec("ppf1", beta, gamma_ppf1, alpha),
        "ppf0": FilterSpec("ppf0", beta, gamma_ppf0, alpha),
        "ssppf": FilterSpec("ssppf", beta),
        "sdppf": FilterSpec("sdppf", beta),
    }


def _n_workers(requested: Optional[int]) -> int:
    cap = os.environ.get("SPARSE_PPF_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _map(fn, items, workers: Optional[int]):
    n = _n_workers(workers)
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _mean_info(lam: np.ndarray) -> float:
    return float(np.mean(lam * (1.0 - lam)))


def select_gamma(sc: Scenario, spec: FilterSpec, grid: Sequence[float], seeds: Sequence[int]) -> tuple[float, np.ndarray]:
    """Pooled even/odd cross-validation over pilot realizations.

    Returns the selected ``gamma`` and the summed held-out scores per grid point.
    """
    from .selection import cross_validate

    grid = np.asarray(sorted(float(g) for g in grid))
    total = np.zeros(grid.size)
    for s in seeds:
        r = draw_realization(sc, np.random.default_rng(s))
        sbar = design_variance(r.X)
        res = cross_validate(lambda g: replace(spec, gamma=g).make_state(sc.M, sc.W, sbar),
                             r.X, r.spikes, sc.W, grid)
        total += res.scores
    best = total.max()
    pick = grid[np.flatnonzero(total >= best - 1e-12 * max(1.0, abs(best)))[-1]]
    return float(pick), total


# --------------------------------------------------------------------------- study 1

@dataclass
class Study1Result:
    """Per-realization squared errors on a subsampled window grid.

    ``err[f]`` has shape (realizations, records) and holds ``||ŵ_k - w||²``;
    ``norm`` holds ``||w||²`` per realization; ``off[f]`` and ``energy[f]``
    hold the out-of-support and total θ energy of the estimates.
    """

    filters: list[str]
    k: np.ndarray
    err: dict
    norm: np.ndarray
    off: dict
    energy: dict
    mean_rate: np.ndarray

    def mse_curve(self, f: str, idx=None) -> np.ndarray:
        idx = slice(None) if idx is None else idx
        return self.err[f][idx].sum(0) / self.norm[idx].sum()

    def spm_curve(self, f: str, idx=None) -> np.ndarray:
        idx = slice(None) if idx is None else idx
        e = self.energy[f][idx].sum(0)
        return np.where(e > 0, self.off[f][idx].sum(0) / np.where(e > 0, e, 1.0), 0.0)

    def steady_state(self, f: str, metric: str = "mse", tail: float = 0.2, idx=None) -> float:
        """Metric averaged over the final ``tail`` fraction of the run."""
        n = self.k.shape[0]
        start = n - max(1, int(round(tail * n)))
        idx = slice(None) if idx is None else idx
        if metric == "mse":
            return float(self.err[f][idx, start:].sum() / (self.norm[idx].sum() * (n - start)))
        off = self.off[f][idx, start:].sum()
        e = self.energy[f][idx, start:].sum()
        return float(off / e) if e > 0 else 0.0

    def bootstrap(self, n_boot: int, rng) -> list[dict[str, tuple[float, float]]]:
        """Resampled ensembles: per filter ``(steady MSE, steady SPM)``."""
        rng = np.random.default_rng(rng)
        R = self.norm.shape[0]
        out = []
        for _ in range(n_boot):
            idx = rng.integers(0, R, R)
            out.append({f: (self.steady_state(f, "mse", idx=idx), self.steady_state(f, "spm", idx=idx))
                        for f in self.filters})
        return out


def _study1_one(args):
    sc, specs, seed, record_every = args
    r = draw_realization(sc, np.random.default_rng(seed))
    sbar = design_variance(r.X)
    info = _mean_info(r.lam)
    sup_mask = np.zeros(sc.M, dtype=bool)
    sup_mask[r.support] = True
    out = {}
    for name, spec in specs.items():
        res = run_filter(spec.make_state(sc.M, sc.W, sbar, info), r.X, r.spikes, sc.W, record_every)
        h = res.history
        th = h[:, 1:]
        out[name] = (
            np.sum((h - r.omega) ** 2, axis=1),
            np.sum(th[:, ~sup_mask[1:]] ** 2, axis=1),
            np.sum(th ** 2, axis=1),
        )
    return out, float(r.omega @ r.omega), float(r.spikes.mean())


def study1(sc: Scenario, specs: Mapping[str, FilterSpec], n_realizations: int = 200,
           record_every: int = 10, workers: Optional[int] = None) -> Study1Result:
    """Stationary learning curves of every filter on shared realizations."""
    if n_realizations < 1:
        raise ValueError("study1 needs at least one realization")
    if not specs:
        raise ValueError("no filters selected")
    seeds = np.random.SeedSequence(sc.seed).spawn(n_realizations)
    items = [(sc, dict(specs), s, record_every) for s in seeds]
    results = _map(_study1_one, items, workers)
    names = list(specs)
    err = {f: np.stack([r[0][f][0] for r in results]) for f in names}
    off = {f: np.stack([r[0][f][1] for r in results]) for f in names}
    energy = {f: np.stack([r[0][f][2] for r in results]) for f in names}
    norm = np.array([r[1] for r in results])
    rate = np.array([r[2] for r in results])
    k = np.arange(1, err[names[0]].shape[1] + 1) * record_every
    return Study1Result(names, k, err, norm, off, energy, rate)


# --------------------------------------------------------------------------- study 2

def study2_scenario(K: int = 60000, seed: int = 0, drop_seconds: float = 1.0) -> Scenario:
    """Support {1, 10, 20}, values (10, -5, 5), largest entry ramps to 0 after K/2."""
    W, delta = 1, 1e-3
    ramp = max(1, int(round(drop_seconds / (W * delta))))
    half = K // 2
    return Scenario(M=101, K=K, W=W, delta=delta, support=(1, 10, 20), values=(10.0, -5.0, 5.0),
                    mu=-2.51, sigma_sq=0.01, schedule={1: ((half, 10.0), (half + ramp, 0.0))}, seed=seed)


def study2_filters(alpha_c: float = 1.1) -> dict[str, FilterSpec]:
    return {
        "ppf1": FilterSpec("ppf1", 0.9995, 0.5, c=alpha_c),
        "ppf0": FilterSpec("ppf0", 0.995, 0.1, c=alpha_c),
        "ssppf": FilterSpec("ssppf", 0.9995),
        "sdppf": FilterSpec("sdppf", 0.9995),
    }


@dataclass
class Study2Result:
    k: np.ndarray
    truth: np.ndarray
    history: dict
    lam_pred: dict
    intervals: dict
    ssppf_sd: Optional[np.ndarray]
    ks: dict
    acf: dict
    realization: Realization
    nrc: np.ndarray

    def band_coverage(self, f: str = "ppf1", coord: int = 1, after: Optional[int] = None) -> float:
        """Fraction of interval rows (window > ``after``) whose band covers the truth."""
        rows = [r for r in self.intervals.get(f, []) if r.coord == coord and (after is None or r.window > after)]
        if not rows:
            return float("nan")
        truth = self.realization.omega_at([r.window for r in rows])[:, coord]
        hits = [r.lo <= t <= r.hi for r, t in zip(rows, truth)]
        return float(np.mean(hits))


def _run_with_ci(state, X, n, W, coords, stride, gamma_m, record_every, ci_iter):
    """Per-window loop for ℓ1 filters that also emits de-sparsified intervals."""
    M = X.shape[1]
    K = X.shape[0] // W
    step = state.hyper.step_size
    ci = ConfidenceState(M, state.beta, coords, step, gamma_m, ci_iter, 0.95, stride, state.hyper.penalize_mu)
    upd = ppf1_update if isinstance(state, PPF1State) else ppf0_update
    hist = np.empty((K // record_every, M))
    lam = np.empty(K * W)
    rows: list[IntervalRow] = []
    for k in range(K):
        sl = slice(k * W, (k + 1) * W)
        state = upd(state, n[sl], X[sl])
        lam[sl] = state.lam_pred
        rows.extend(ci.update(n[sl], X[sl], state))
        if (k + 1) % record_every == 0:
            hist[(k + 1) // record_every - 1] = state.w
    return hist, lam, rows


def study2(sc: Scenario, specs: Mapping[str, FilterSpec], record_every: int = 10, ci_filters=("ppf1",),
           ci_coords=(1,), ci_stride: int = 10, ci_iter: int = 1, gamma_m: Optional[float] = None,
           burn_in: float = 0.05, max_lag: int = 20, jitter: bool = True) -> Study2Result:
    """Tracking run on one realization plus GOF inputs and confidence bands."""
    r = draw_realization(sc, np.random.default_rng(np.random.SeedSequence(sc.seed)))
    sbar = design_variance(r.X)
    info = _mean_info(r.lam)
    K = sc.K
    hist, lam_pred, intervals, ks, acf = {}, {}, {}, {}, {}
    ssppf_sd = None
    gof_rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 1]))
    keep = burn_in_slice(r.spikes.shape[0], burn_in)
    for name, spec in specs.items():
        st = spec.make_state(sc.M, sc.W, sbar, info)
        if name in ci_filters and spec.kind in ("ppf0", "ppf1"):
            gm = spec.gamma if gamma_m is None else gamma_m
            h, lam, rows = _run_with_ci(st, r.X, r.spikes, sc.W, ci_coords, ci_stride, gm, record_every, ci_iter)
            intervals[name] = rows
        else:
            res = run_filter(st, r.X, r.spikes, sc.W, record_every)
            h, lam = res.history, res.lam_pred
            if spec.kind == "ssppf":
                ssppf_sd = np.sqrt(res.variance)
        hist[name] = h
        lam_pred[name] = lam
        lam_c = np.clip(lam, 1e-12, 1 - 1e-12)
        z = time_rescale(r.spikes[keep], lam_c[keep], jitter=jitter, rng=gof_rng)
        ks[name] = ks_test(z)
        acf[name] = acf_test(z, max_lag)
    k = np.arange(1, K // record_every + 1) * record_every
    nrc = nrc_estimate(r.spikes, r.X)
    return Study2Result(k, r.omega_at(k), hist, lam_pred, intervals, ssppf_sd, ks, acf, r, nrc)
