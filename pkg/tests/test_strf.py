import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparse_ppf.config import STRF_KEYS, config_from_dict
from sparse_ppf.filters import PPF1State, run_filter
from sparse_ppf.prox import ProxHyper
from sparse_ppf.strf import (Spectrogram, StrfSettings, gabor_dictionary, planted_xi, run_strf,
                             spectrogram_design, strf_covariates, strf_reconstruct, torc_spectrogram)


def small_spec(rng, J=6, T=40):
    return Spectrogram(rng.normal(size=(J, T)))


def test_spectrogram_validation_and_bands():
    s = Spectrogram(np.ones((4, 3)), f_lo=500, f_hi=4000)
    np.testing.assert_allclose(s.band_centers, [500, 1000, 2000, 4000])
    assert Spectrogram(np.ones((3, 2)), scale="linear").band_centers[1] == pytest.approx(8250)
    for kw in ({"delta": 0}, {"f_lo": 5e3, "f_hi": 1e3}, {"scale": "mel"}):
        with pytest.raises(ValueError):
            Spectrogram(np.ones((2, 2)), **kw)


@given(st.integers(1, 30), st.integers(1, 30), st.data())
def test_dictionary_atoms_are_unit_norm_and_separable(I, J, data):
    r = data.draw(st.integers(1, I))
    c = data.draw(st.integers(1, J))
    D = gabor_dictionary(I, J, r, c)
    F = D.F
    assert F.shape == (I * J, r * c)
    np.testing.assert_allclose(np.linalg.norm(F, axis=0), 1.0)
    p = data.draw(st.integers(0, r * c - 1))
    atom = F[:, p].reshape(I, J)
    np.testing.assert_allclose(atom, np.outer(D.lag_profiles[p // c], D.freq_profiles[p % c]), atol=1e-15)


def test_dictionary_geometry():
    D = gabor_dictionary(50, 50, 13, 13)
    assert D.spacing == pytest.approx((50 / 13, 50 / 13))
    a = D.lag_profiles[6]
    peak = np.argmax(a)
    assert abs(peak - ((6 + 0.5) * 50 / 13 - 0.5)) <= 0.5
    # truncated at three standard deviations of D/2
    support = np.flatnonzero(a)
    assert (support.max() - support.min()) / 2 <= 3 * (50 / 13) / 2 + 0.5
    with pytest.raises(ValueError):
        gabor_dictionary(5, 5, 6, 2)


def test_reconstruct_matches_dense_matrix(rng):
    D = gabor_dictionary(8, 6, 3, 2)
    xi = rng.normal(size=(4, 6))
    np.testing.assert_allclose(strf_reconstruct(xi, D).reshape(4, -1), xi @ D.F.T, atol=1e-13)
    with pytest.raises(ValueError):
        strf_reconstruct(np.zeros(5), D)


def test_fast_covariates_match_explicit_design(rng):
    spec = small_spec(rng, J=6, T=30)
    D = gabor_dictionary(7, 6, 3, 2)
    fast = strf_covariates(spec, D)
    slow = np.vstack([spectrogram_design(spec, 7, 3, k, D) for k in range(1, 11)])
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_raw_design_layout(rng):
    spec = small_spec(rng, J=3, T=10)
    X = spectrogram_design(spec, 4, 2, 3)
    assert X.shape == (2, 13)
    t = 4  # first bin of window 3
    np.testing.assert_array_equal(X[0, 1:].reshape(4, 3), [spec.values[:, t - i] for i in range(4)])
    early = spectrogram_design(spec, 4, 1, 1)
    assert np.all(early[0, 4:] == 0)
    with pytest.raises(ValueError):
        spectrogram_design(spec, 4, 5, 3)


def test_dictionary_space_filter_equals_explicit_design(rng):
    spec = small_spec(rng, J=6, T=60)
    D = gabor_dictionary(5, 6, 2, 3)
    theta_true = strf_reconstruct(np.array([0.0, 1.5, 0, 0, -1.0, 0]), D).ravel()
    raw = np.vstack([spectrogram_design(spec, 5, 2, k) for k in range(1, 31)])
    n = (rng.random(60) < 1 / (1 + np.exp(1.0 - raw[:, 1:] @ theta_true))).astype(float)
    X_fast = strf_covariates(spec, D)
    X_explicit = np.hstack([raw[:, :1], raw[:, 1:] @ D.F])
    st_ = PPF1State.init(7, 0.99, ProxHyper(0.02, 0.3))
    a = run_filter(st_, X_fast, n, 2).history
    b = run_filter(st_, X_explicit, n, 2).history
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_torc_spectrogram_is_standardized():
    s = torc_spectrogram(10, 5000, 0)
    assert s.values.shape == (10, 5000)
    np.testing.assert_allclose(s.values.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(s.values.std(axis=1), 1, atol=1e-12)
    np.testing.assert_array_equal(s.values, torc_spectrogram(10, 5000, 0).values)


def test_planted_xi_and_bounds():
    xi = planted_xi(StrfSettings())
    assert xi[3 * 13 + 4] == 0.3 and xi[8 * 13 + 9] == -0.24 and np.count_nonzero(xi) == 2
    with pytest.raises(ValueError):
        planted_xi(StrfSettings(atoms=((13, 0, 1.0),)))


def test_settings_round_trip_through_config():
    defaults = StrfSettings()
    fields = {f.name for f in dataclasses.fields(StrfSettings)}
    assert fields - {"delta"} <= set(STRF_KEYS)
    table = {k: (list(map(list, v)) if k == "atoms" else v) for k, v in dataclasses.asdict(defaults).items()
             if k != "delta"}
    cfg = config_from_dict({"mode": "strf", "strf": table})
    params = dict(cfg.strf)
    params["atoms"] = tuple(tuple(a) for a in params["atoms"])
    assert StrfSettings(**params) == defaults
    assert defaults.step_size(1.0) == pytest.approx((1 - 0.9998) / (0.25 * 170 * 10))


def test_small_strf_run_recovers_planted_atoms():
    s = StrfSettings(I=20, J=12, grid_rows=5, grid_cols=4, seconds=40.0, W=10, beta=0.9995, gamma=5.0,
                     mu=-3.0, atoms=((1, 1, 0.6), (3, 2, -0.5)))
    res = run_strf(s, 0, record_every=50)
    assert res.top_atoms(2).tolist() == [1 * 4 + 1, 3 * 4 + 2]
    assert res.correlation() > 0.8
    assert res.snapshot(res.times[-1]).shape == (20, 12)
    assert res.times[-1] == pytest.approx(40.0)
