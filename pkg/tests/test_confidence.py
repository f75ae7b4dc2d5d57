import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import expit

from sparse_ppf.confidence import (ConfidenceState, confidence_interval, nodewise_lasso, normal_quantile,
                                   theta_row, update_G)
from sparse_ppf.filters import PPF0State, PPF1State, ppf0_update, ppf1_update
from sparse_ppf.model import iter_windows
from sparse_ppf.prox import ProxHyper

from conftest import random_instance


def spd(rng, M):
    A = rng.normal(size=(M, 3 * M))
    return A @ A.T / M + 0.5 * np.eye(M)


@given(st.floats(1e-6, 1 - 1e-6))
def test_normal_quantile_matches_high_precision(p):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    ref = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
    assert normal_quantile(p) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_normal_quantile_known_value_and_domain():
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-14)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            normal_quantile(bad)


def test_update_G_recursion(rng):
    X, n, _ = random_instance(rng, 6, 3, 4)
    G = np.zeros((4, 4))
    ref = np.zeros((4, 4))
    for Xi, ni in iter_windows(X, n, 3):
        eps = ni - 0.2
        G = update_G(G, Xi, eps, 0.9)
        s = Xi.T @ eps
        ref = 0.81 * ref + np.outer(s, s)
    np.testing.assert_allclose(G, ref, atol=1e-14)
    np.testing.assert_allclose(G, G.T)
    with pytest.raises(ValueError):
        update_G(np.zeros((3, 3)), Xi, eps, 0.9)


def test_nodewise_without_penalty_recovers_inverse_row(rng):
    B = spd(rng, 5)
    L = np.linalg.eigvalsh(B)[-1]
    for m in range(5):
        psi = nodewise_lasso(B, m, 0.0, 1.0 / L, 20000)
        row, tau_sq = theta_row(B, psi, m)
        np.testing.assert_allclose(row, np.linalg.inv(B)[m], atol=1e-8)
        assert tau_sq == pytest.approx(1.0 / np.linalg.inv(B)[m, m], rel=1e-8)


def test_nodewise_large_penalty_gives_diagonal_row(rng):
    B = spd(rng, 4)
    psi = nodewise_lasso(B, 2, 1e6, 0.01, 5)
    assert np.all(psi == 0)
    row, tau_sq = theta_row(B, psi, 2)
    assert tau_sq == B[2, 2]
    np.testing.assert_allclose(row, np.eye(4)[2] / B[2, 2])


def test_nodewise_input_validation(rng):
    B = spd(rng, 3)
    with pytest.raises(ValueError):
        nodewise_lasso(B + np.triu(np.ones((3, 3)), 1), 0, 0.1, 0.1, 1)
    with pytest.raises(ValueError):
        nodewise_lasso(-B, 0, 0.1, 0.1, 1)
    with pytest.raises(IndexError):
        nodewise_lasso(B, 3, 0.1, 0.1, 1)
    with pytest.raises(ValueError):
        theta_row(np.zeros((3, 3)), np.zeros(2), 0)


def test_confidence_interval_worked_example():
    w = np.array([0.5, -1.0, 0.0])
    row = np.array([0.2, 1.0, -0.1])
    g = np.array([1.0, 0.3, 2.0])
    G = np.diag([1.0, 4.0, 9.0])
    w_d, lo, hi = confidence_interval(w, row, g, G, 1, 0.95)
    var = 0.04 + 4.0 + 0.09
    assert w_d == pytest.approx(-1.0 + 0.2 + 0.3 - 0.2)
    z = 1.959963984540054
    assert lo == pytest.approx(w_d - z * np.sqrt(var))
    assert hi == pytest.approx(w_d + z * np.sqrt(var))
    with pytest.raises(ValueError):
        confidence_interval(w, row, g, G, 1, level=1.0)


def test_state_matches_manual_computation(rng):
    X, n, _ = random_instance(rng, 40, 2, 4)
    h = ProxHyper(0.05, 0.3)
    fs = PPF1State.init(4, 0.95, h)
    cs = ConfidenceState(4, 0.95, [1, 2], step_size=0.05, gamma_m=0.1, stride=5)
    G = np.zeros((4, 4))
    emitted = 0
    for Xi, ni in iter_windows(X, n, 2):
        fs = ppf1_update(fs, ni, Xi)
        G = 0.9025 * G + np.outer(Xi.T @ (ni - expit(Xi @ fs.w)), Xi.T @ (ni - expit(Xi @ fs.w)))
        rows = cs.update(ni, Xi, fs)
        emitted += len(rows)
        if rows:
            assert [r.coord for r in rows] == [1, 2]
            for r in rows:
                w_d, lo, hi = confidence_interval(fs.w, cs.rows[r.coord], fs.gradient, G, r.coord)
                assert (r.w_desparsified, r.lo, r.hi) == pytest.approx((w_d, lo, hi), rel=1e-10, abs=1e-12)
                assert r.lo <= r.w_desparsified <= r.hi
                assert r.caveat == ""
    assert emitted == 2 * (40 // 5)
    np.testing.assert_allclose(cs.G, G, atol=1e-10)


def test_state_tracks_hessian_for_zeroth_order_filter(rng):
    X, n, _ = random_instance(rng, 20, 1, 3)
    h = ProxHyper(0.05, 0.1)
    f0, f1 = PPF0State.init(3, 0.9, h), PPF1State.init(3, 0.9, h)
    cs = ConfidenceState(3, 0.9, [0], 0.05, 0.1, stride=100)
    for Xi, ni in iter_windows(X, n, 1):
        f0 = ppf0_update(f0, ni, Xi)
        cs.update(ni, Xi, f0)
        # the Hessian it accumulates is the one the first-order filter would carry at f0's iterates
        lam = expit(Xi @ f0.w)
        f1.B[...] = 0.9 * f1.B + (Xi * (lam * (1 - lam))[:, None]).T @ Xi
    np.testing.assert_allclose(cs.B, f1.B, atol=1e-12)
    rows = cs.intervals(f0)
    assert rows[0].caveat == "mu_shrunk"


def test_state_rejects_bad_arguments():
    with pytest.raises(IndexError):
        ConfidenceState(3, 0.9, [3], 0.1, 0.1)
    with pytest.raises(ValueError):
        ConfidenceState(3, 0.9, [1], 0.1, 0.1, stride=0)
