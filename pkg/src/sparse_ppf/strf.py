"""Spectrotemporal receptive fields on a Gaussian (Gabor) dictionary.

An STRF is an ``I x J`` lag-by-frequency matrix; lag ``i = 0`` weights the
current bin. It is vectorized row-major (``i * J + j``) and represented as
``θ = F ξ`` with sparse atom coefficients ``ξ``. Every atom is a separable
Gaussian truncated to a ±3σ box, so covariates in ξ-space can be computed by
one frequency projection followed by short temporal filters instead of
forming the ``(I J)``-wide design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_float_array


@dataclass(frozen=True)
class Spectrogram:
    """``J`` frequency bands by ``T`` time bins of width ``delta`` seconds."""

    values: np.ndarray
    delta: float = 1e-3
    f_lo: float = 500.0
    f_hi: float = 16000.0
    scale: str = "log"

    def __post_init__(self):
        v = as_float_array(self.values, "spectrogram", ndim=2)
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("spectrogram needs J >= 1 bands and T >= 1 bins")
        object.__setattr__(self, "values", v)
        if self.delta <= 0 or not 0 < self.f_lo < self.f_hi:
            raise ValueError("need delta > 0 and 0 < f_lo < f_hi")
        if self.scale not in ("log", "linear"):
            raise ValueError("scale must be 'log' or 'linear'")

    @property
    def J(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def band_centers(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.f_lo, self.f_hi, self.J)
        return np.linspace(self.f_lo, self.f_hi, self.J)


def _profiles(n: int, count: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Truncated Gaussian bumps at evenly spaced cell centers along one axis."""
    D = n / count
    if D < 1.0:
        raise ValueError(f"{count} atoms do not fit in {n} bins (spacing {D:.3g} < 1)")
    sigma = D / 2.0
    centers = (np.arange(count) + 0.5) * D - 0.5
    grid = np.arange(n)[None, :] - centers[:, None]
    prof = np.exp(-grid ** 2 / (2.0 * sigma ** 2))
    prof[np.abs(grid) > 3.0 * sigma] = 0.0
    return prof, centers, D


@dataclass(frozen=True)
class GaborDictionary:
    """Unit-norm separable Gaussian atoms on a ``rows x cols`` grid.

    ``lag_profiles[r]`` and ``freq_profiles[q]`` are the unit-norm 1-D factors
    of atom ``p = r * cols + q``.
    """

    I: int
    J: int
    rows: int
    cols: int
    lag_profiles: np.ndarray
    freq_profiles: np.ndarray
    centers: np.ndarray
    spacing: tuple[float, float]

    @property
    def P(self) -> int:
        return self.rows * self.cols

    @property
    def F(self) -> np.ndarray:
        """Dense ``(I J) x P`` dictionary matrix."""
        A = np.einsum("ri,qj->ijrq", self.lag_profiles, self.freq_profiles)
        return A.reshape(self.I * self.J, self.P)


def gabor_dictionary(I: int, J: int, grid_rows: int, grid_cols: int) -> GaborDictionary:
    """Gaussian atoms with per-axis variance ``D²/4``, ``D`` the atom spacing."""
    if min(I, J, grid_rows, grid_cols) < 1:
        raise ValueError("dimensions and grid sizes must be positive")
    a, ci, Di = _profiles(I, grid_rows)
    b, cj, Dj = _profiles(J, grid_cols)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    centers = np.array([(x, y) for x in ci for y in cj])
    return GaborDictionary(I, J, grid_rows, grid_cols, a, b, centers, (Di, Dj))


def strf_reconstruct(xi, dictionary: GaborDictionary) -> np.ndarray:
    """``F ξ`` reshaped to the ``I x J`` lag-by-frequency STRF."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != dictionary.P:
        raise ValueError(f"expected {dictionary.P} coefficients, got {xi.shape[-1]}")
    C = xi.reshape(xi.shape[:-1] + (dictionary.rows, dictionary.cols))
    return np.einsum("...rq,ri,qj->...ij", C, dictionary.lag_profiles, dictionary.freq_profiles)


def _lagged_block(values: np.ndarray, I: int, t: int) -> np.ndarray:
    """``values[:, t - i]`` for ``i = 0..I-1`` as an (I, J) array; zero before time 0."""
    J = values.shape[0]
    out = np.zeros((I, J))
    for i in range(I):
        if t - i >= 0:
            out[i] = values[:, t - i]
    return out


def spectrogram_design(spec: Spectrogram, I: int, W: int, k: int, dictionary: GaborDictionary | None = None) -> np.ndarray:
    """Design window ``X_k`` (1-based ``k``) with rows ``[1, vec(lagged spectrogram)]``.

    With a dictionary the covariates are multiplied through ``F`` explicitly,
    giving rows ``[1, vec(·) F]``.
    """
    if k < 1 or W < 1 or I < 1:
        raise ValueError("need k, W, I >= 1")
    if k * W > spec.T:
        raise ValueError(f"window {k} needs {k * W} bins, spectrogram has {spec.T}")
    if dictionary is not None and (dictionary.I, dictionary.J) != (I, spec.J):
        raise ValueError("dictionary shape does not match (I, J)")
    rows = []
    for j in range(W):
        t = (k - 1) * W + j
        rows.append(_lagged_block(spec.values, I, t).ravel())
    raw = np.asarray(rows)
    if dictionary is not None:
        raw = raw @ dictionary.F
    return np.hstack([np.ones((W, 1)), raw])


def strf_covariates(spec: Spectrogram, dictionary: GaborDictionary) -> np.ndarray:
    """All effective rows ``[1, vec(·) F]`` for ``t = 1..T`` using separability.

    Frequencies are projected on the atom frequency profiles first; each lag
    profile is then applied as a causal FIR filter along time.
    """
    if dictionary.J != spec.J:
        raise ValueError("dictionary and spectrogram disagree on the number of bands")
    T = spec.T
    Y = spec.values.T @ dictionary.freq_profiles.T  # (T, cols)
    out = np.zeros((T, dictionary.rows, dictionary.cols))
    A = dictionary.lag_profiles
    for i in range(dictionary.I):
        a = A[:, i]
        if not np.any(a):
            continue
        shifted = Y[: T - i] if i else Y
        out[i:] += a[None, :, None] * shifted[:, None, :]
    return np.hstack([np.ones((T, 1)), out.reshape(T, dictionary.P)])


def torc_spectrogram(J: int, T: int, rng, n_ripples: int = 6, delta: float = 1e-3, f_lo: float = 500.0,
                     f_hi: float = 16000.0, max_velocity: float = 48.0, max_density: float = 1.4,
                     segment: float = 3.0) -> Spectrogram:
    """Broadband ripple-sum stimulus in the spirit of temporally orthogonal ripple combinations.

    Each ``segment`` seconds a fresh set of ripples with random temporal
    velocity (Hz), spectral density (cycles/octave) and phase is summed; the
    result is standardized to zero mean and unit variance per band.
    """
    if J < 1 or T < 1 or n_ripples < 1:
        raise ValueError("need J, T, n_ripples >= 1")
    rng = np.random.default_rng(rng)
    octaves = np.log2(np.geomspace(f_lo, f_hi, J) / f_lo)
    seg = max(1, int(round(segment / delta)))
    S = np.empty((J, T))
    for start in range(0, T, seg):
        stop = min(T, start + seg)
        t = np.arange(start, stop) * delta
        vel = rng.uniform(-max_velocity, max_velocity, n_ripples)
        dens = rng.uniform(0.0, max_density, n_ripples)
        phase = rng.uniform(0.0, 2 * np.pi, n_ripples)
        arg = (2 * np.pi * (vel[:, None, None] * t[None, None, :] + dens[:, None, None] * octaves[None, :, None])
               + phase[:, None, None])
        S[:, start:stop] = np.cos(arg).sum(axis=0)
    S -= S.mean(axis=1, keepdims=True)
    sd = S.std(axis=1, keepdims=True)
    S /= np.where(sd > 0, sd, 1.0)
    return Spectrogram(S, delta, f_lo, f_hi, "log")


# --------------------------------------------------------------------------- experiment

@dataclass(frozen=True)
class StrfSettings:
    """Hyperparameters of the STRF pipeline.

    The step size follows ``α = (1 - β) / (c M W σ̄²)`` with ``c = 1/4``,
    ``M = 1 + P`` the estimated dimension and ``σ̄²`` the mean variance of
    the spectrogram bands. ``atoms`` lists planted ``(row, col, value)``
    entries of the atom grid for synthetic runs.
    """

    I: int = 50
    J: int = 50
    grid_rows: int = 13
    grid_cols: int = 13
    seconds: float = 100.0
    delta: float = 1e-3
    W: int = 10
    beta: float = 0.9998
    gamma: float = 40.0
    c: float = 0.25
    R: int = 1
    mu: float = -3.5
    n_ripples: int = 6
    penalize_mu: bool = True
    atoms: tuple = ((3, 4, 0.3), (8, 9, -0.24))

    def step_size(self, sigma_bar_sq: float) -> float:
        from .prox import default_step_size

        return default_step_size(self.beta, 1 + self.grid_rows * self.grid_cols, self.W, sigma_bar_sq, self.c)


@dataclass
class StrfResult:
    dictionary: GaborDictionary
    xi_path: np.ndarray
    times: np.ndarray
    mu_path: np.ndarray
    xi_true: np.ndarray | None
    step_size: float
    spikes: np.ndarray

    @property
    def xi(self) -> np.ndarray:
        return self.xi_path[-1]

    def top_atoms(self, n: int = 2) -> np.ndarray:
        return np.sort(np.argsort(-np.abs(self.xi), kind="stable")[:n])

    def snapshot(self, time_s: float) -> np.ndarray:
        """Reconstructed STRF at the recorded time closest to ``time_s``."""
        i = int(np.argmin(np.abs(self.times - time_s)))
        return strf_reconstruct(self.xi_path[i], self.dictionary)

    def correlation(self) -> float:
        if self.xi_true is None:
            raise ValueError("no planted STRF to compare with")
        a = strf_reconstruct(self.xi, self.dictionary).ravel()
        b = strf_reconstruct(self.xi_true, self.dictionary).ravel()
        return float(np.corrcoef(a, b)[0, 1])


def planted_xi(settings: StrfSettings) -> np.ndarray:
    xi = np.zeros(settings.grid_rows * settings.grid_cols)
    for r, q, v in settings.atoms:
        if not (0 <= r < settings.grid_rows and 0 <= q < settings.grid_cols):
            raise ValueError(f"planted atom ({r}, {q}) outside the {settings.grid_rows}x{settings.grid_cols} grid")
        xi[int(r) * settings.grid_cols + int(q)] = v
    return xi


def run_strf(settings: StrfSettings, rng, spec: Spectrogram | None = None, spikes=None,
             record_every: int = 100) -> StrfResult:
    """Estimate an STRF with the first-order ℓ1 filter in dictionary space.

    Without ``spec`` a ripple-sum spectrogram is generated; without
    ``spikes`` a spike train is drawn from the planted atoms.
    """
    from scipy.special import expit

    from .filters import PPF1State, run_filter
    from .prox import ProxHyper

    rng = np.random.default_rng(rng)
    s_rng, n_rng = rng.spawn(2)
    xi_true = None
    if spec is None:
        T = int(round(settings.seconds / settings.delta))
        T -= T % settings.W
        spec = torc_spectrogram(settings.J, T, s_rng, settings.n_ripples, settings.delta)
    if spec.J != settings.J:
        raise ValueError(f"settings expect J={settings.J} bands, spectrogram has {spec.J}")
    D = gabor_dictionary(settings.I, settings.J, settings.grid_rows, settings.grid_cols)
    T = spec.T - spec.T % settings.W
    X = strf_covariates(spec, D)[:T]
    if spikes is None:
        xi_true = planted_xi(settings)
        lam = expit(settings.mu + X[:, 1:] @ xi_true)
        spikes = (n_rng.random(T) < lam).astype(float)
    else:
        spikes = np.asarray(spikes, dtype=float)[:T]
        if spikes.shape[0] != T:
            raise ValueError("spike train shorter than the spectrogram")
    sbar = float(np.mean(np.var(spec.values, axis=1)))
    alpha = settings.step_size(sbar)
    hyper = ProxHyper(alpha, settings.gamma, settings.R, settings.c, settings.penalize_mu)
    res = run_filter(PPF1State.init(X.shape[1], settings.beta, hyper), X, spikes, settings.W, record_every)
    times = np.arange(1, res.history.shape[0] + 1) * record_every * settings.W * spec.delta
    return StrfResult(D, res.history[:, 1:], times, res.history[:, 0], xi_true, alpha, spikes)
