import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparse_ppf.prox import (ProxHyper, default_step_size, proximal_step, soft_threshold, surrogate_objective,
                             threshold_vector)

floats = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("x,tau,expected", [(3.0, 1.0, 2.0), (-3.0, 1.0, -2.0), (0.5, 1.0, 0.0),
                                            (-0.5, 1.0, 0.0), (2.0, 0.0, 2.0)])
def test_soft_threshold_examples(x, tau, expected):
    assert soft_threshold(x, tau) == expected


def test_soft_threshold_keeps_negative_entries():
    np.testing.assert_array_equal(soft_threshold(np.array([-5.0, 5.0, -0.2]), 1.0), [-4.0, 4.0, 0.0])


def test_soft_threshold_rejects_negative_threshold():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


@given(floats, st.floats(0, 100))
def test_soft_threshold_is_the_l1_prox(v, tau):
    # the prox minimizes 0.5 (x - v)^2 + tau |x|; compare with a fine grid search
    x = soft_threshold(v, tau)
    obj = lambda y: 0.5 * (y - v) ** 2 + tau * np.abs(y)
    grid = np.linspace(x - 1.0, x + 1.0, 2001)
    assert obj(x) <= obj(grid).min() + 1e-9 * max(1.0, abs(v)) ** 2


@given(floats, floats, st.floats(0, 10))
def test_soft_threshold_is_nonexpansive(a, b, tau):
    assert abs(soft_threshold(a, tau) - soft_threshold(b, tau)) <= abs(a - b) + 1e-12


def test_threshold_vector_mu_exemption():
    np.testing.assert_array_equal(threshold_vector(3, 0.2, penalize_mu=False), [0.0, 0.2, 0.2])
    np.testing.assert_array_equal(threshold_vector(3, 0.2), [0.2, 0.2, 0.2])


def test_proximal_step_matches_hand_computation():
    h = ProxHyper(step_size=0.5, gamma=2.0)
    w = np.array([1.0, -1.0, 0.1])
    g = np.array([2.0, 0.0, 0.0])
    # v = w + 0.5 g = [2, -1, 0.1]; threshold 1.0
    np.testing.assert_allclose(proximal_step(w, g, h), [1.0, 0.0, 0.0])


def test_proximal_step_spares_mu_when_asked():
    h = ProxHyper(step_size=1.0, gamma=1.0, penalize_mu=False)
    np.testing.assert_allclose(proximal_step(np.array([0.5, 0.5]), np.zeros(2), h), [0.5, 0.0])


@pytest.mark.parametrize("kw", [dict(step_size=0.0), dict(step_size=1.0, gamma=-1.0),
                                dict(step_size=1.0, n_iter=0), dict(step_size=1.0, c=0.2)])
def test_prox_hyper_validation(kw):
    with pytest.raises(ValueError):
        ProxHyper(**kw)


def test_default_step_size_formula_and_simulation_value():
    assert default_step_size(0.99, 10, 2, 0.5, 1.0) == pytest.approx(0.01 / 10.0)
    # β = 0.999, M = 101, W = 1, σ² = 0.01 with c ≈ 1.1 gives the ≈9e-4 used in the simulations
    assert default_step_size(0.999, 101, 1, 0.01, 1.1) == pytest.approx(9.0e-4, rel=0.01)


@pytest.mark.parametrize("args", [(1.0, 10, 1, 1.0), (0.9, 10, 1, 0.0), (0.9, 0, 1, 1.0), (0.9, 10, 1, 1.0, 0.1)])
def test_default_step_size_errors(args):
    with pytest.raises(ValueError):
        default_step_size(*args)


@given(st.integers(0, 2**31 - 1))
def test_surrogate_majorizes_logistic_loss(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 4))
    n = (rng.random(20) < 0.3).astype(float)

    def f(w):
        z = X @ w
        return float(np.sum(np.logaddexp(0.0, z) - n * z))

    def grad(w):
        return X.T @ (1 / (1 + np.exp(-(X @ w))) - n)

    L = 0.25 * np.linalg.eigvalsh(X.T @ X)[-1]
    y, x = rng.normal(size=4), rng.normal(size=4)
    gamma = 0.3
    bound = surrogate_objective(x, y, f(y), grad(y), 1.0 / L, gamma)
    assert f(x) + gamma * np.abs(x).sum() <= bound + 1e-9
    assert surrogate_objective(y, y, f(y), grad(y), 1.0 / L, gamma) == pytest.approx(f(y) + gamma * np.abs(y).sum())
