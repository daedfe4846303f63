import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semiadapt.errors import ConfigError, DimensionError, InputError
from semiadapt.mlp import MlpConfig, forward, hidden_features, init_mlp, output_layer
from semiadapt.rls import (
    RlsConfig,
    RlsState,
    flatten_theta,
    init_rls,
    rls_predict,
    rls_update,
    state_from_dict,
    state_to_dict,
    unflatten_theta,
)

from oracles import batch_rls_solution, dense_regressor, rls_gain_direct


def random_state(seed, D=3, h=5, scale=1000.0, cfg=None):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(D, h))
    gain = np.broadcast_to(scale * np.eye(h), (D, h, h)).copy()
    return RlsState(theta, gain, cfg or RlsConfig()), rng


def test_default_model_parameter_layout():
    st_ = init_rls(init_mlp(MlpConfig()), RlsConfig(f_init_scale=1000.0))
    assert st_.theta_hat.shape == (369,)
    assert st_.gain.shape == (9, 41, 41)
    for d in range(9):
        assert np.array_equal(st_.gain[d], 1000.0 * np.eye(41))


def test_zero_output_layer_flattens_to_zeros():
    m = init_mlp(MlpConfig(4, (3,), 2))
    m.weights[-1][:] = 0.0
    assert np.all(init_rls(m).theta_hat == 0.0)


def test_flatten_unflatten_round_trip():
    m = init_mlp(MlpConfig(seed=3))
    w = output_layer(m)
    th = flatten_theta(w)
    assert np.array_equal(th[:41], w[0])
    assert np.array_equal(unflatten_theta(th, 9), w)
    with pytest.raises(DimensionError):
        unflatten_theta(th[:-1], 9)


def test_initial_prediction_equals_network():
    m = init_mlp(MlpConfig(seed=5))
    m.biases[-1][:] = np.arange(9.0)
    st_ = init_rls(m)
    x = np.random.default_rng(0).normal(size=9)
    np.testing.assert_allclose(rls_predict(st_, hidden_features(m, x)), forward(m, x),
                               atol=1e-12)


def test_bias_only_features_pick_biases():
    st_, _ = random_state(0)
    phi = np.zeros(5)
    phi[-1] = 1.0
    assert np.array_equal(rls_predict(st_, phi), st_.theta[:, -1])


@given(st.integers(0, 10_000))
def test_prediction_matches_dense_regressor(seed):
    st_, rng = random_state(seed, D=4, h=6)
    phi = rng.normal(size=6)
    dense = dense_regressor(phi, 4) @ st_.theta_hat
    np.testing.assert_allclose(rls_predict(st_, phi), dense, rtol=0, atol=1e-12)


def test_constant_gain_when_lambda2_zero():
    st_, rng = random_state(1, cfg=RlsConfig(lambda1=1.0, lambda2=0.0))
    g0 = st_.gain.copy()
    for _ in range(10):
        st_, _ = rls_update(st_, rng.normal(size=5), rng.normal(size=3))
    assert np.array_equal(st_.gain, g0)


def test_zero_innovation_keeps_theta_but_updates_gain():
    st_, rng = random_state(2)
    phi = rng.normal(size=5)
    new, err = rls_update(st_, phi, rls_predict(st_, phi))
    np.testing.assert_allclose(err, 0.0, atol=1e-12)
    np.testing.assert_allclose(new.theta, st_.theta, rtol=0, atol=1e-12)
    assert not np.allclose(new.gain, st_.gain)


def test_update_is_not_in_place_by_default():
    st_, rng = random_state(3)
    before = st_.copy()
    rls_update(st_, rng.normal(size=5), rng.normal(size=3))
    assert np.array_equal(st_.theta, before.theta) and np.array_equal(st_.gain, before.gain)


def test_recursive_estimate_matches_batch_normal_equations():
    st_, rng = random_state(4, D=9, h=41, cfg=RlsConfig(1.0, 1.0, 1000.0))
    theta0 = st_.theta.copy()
    theta_true = rng.normal(size=(9, 41))
    phis, ys = [], []
    for _ in range(100):
        phi = np.append(np.maximum(rng.normal(size=40), 0.0), 1.0)
        y = theta_true @ phi
        phis.append(phi)
        ys.append(y)
        st_, _ = rls_update(st_, phi, y, inplace=True)
    expected = batch_rls_solution(theta0, 1000.0, phis, ys)
    assert np.max(np.abs(st_.theta - expected)) < 1e-8


def test_gain_step_matches_direct_formula():
    cfg = RlsConfig(0.97, 1.3)
    st_, rng = random_state(5, cfg=cfg, scale=2.0)
    phi = rng.normal(size=5)
    new, err = rls_update(st_, phi, rng.normal(size=3))
    for d in range(3):
        F_new = rls_gain_direct(st_.gain[d], phi, 0.97, 1.3)
        np.testing.assert_allclose(new.gain[d], F_new, rtol=1e-12, atol=1e-12)
        # parameter step uses the updated gain
        np.testing.assert_allclose(new.theta[d], st_.theta[d] + F_new @ phi * err[d],
                                   rtol=1e-12, atol=1e-12)


@given(st.integers(0, 10_000), st.floats(0.5, 1.0))
def test_information_form_identity(seed, lam1):
    st_, rng = random_state(seed, D=2, h=4, scale=10.0, cfg=RlsConfig(lam1, 1.0))
    for _ in range(15):
        phi = rng.normal(size=4)
        F_inv = np.linalg.inv(st_.gain)
        st_, _ = rls_update(st_, phi, rng.normal(size=2))
        expected = lam1 * F_inv + np.outer(phi, phi)
        got = np.linalg.inv(st_.gain)
        assert np.max(np.abs(got - expected)) <= 1e-6 * np.max(np.abs(expected))


def test_noiseless_convergence_after_enough_independent_features():
    h = 6
    st_, rng = random_state(6, D=2, h=h, scale=1e8, cfg=RlsConfig(1.0, 1.0, 1e8))
    theta_true = rng.normal(size=(2, h))
    for _ in range(h):
        phi = rng.normal(size=h)
        st_, _ = rls_update(st_, phi, theta_true @ phi)
    assert np.max(np.abs(st_.theta - theta_true)) < 1e-6


def test_blocks_do_not_couple():
    st_, rng = random_state(7, D=4)
    phi = rng.normal(size=5)
    y = rng.normal(size=4)
    a, _ = rls_update(st_, phi, y)
    y2 = y.copy()
    y2[2] += 10.0
    b, _ = rls_update(st_, phi, y2)
    for d in (0, 1, 3):
        assert np.array_equal(a.theta[d], b.theta[d])
    assert not np.array_equal(a.theta[2], b.theta[2])


def test_update_is_deterministic():
    st_, rng = random_state(8)
    phi, y = rng.normal(size=5), rng.normal(size=3)
    a, ea = rls_update(st_, phi, y)
    b, eb = rls_update(st_, phi, y)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.gain, b.gain)
    assert np.array_equal(ea, eb)


@pytest.mark.parametrize("bad", [dict(lambda1=0.0), dict(lambda1=1.1), dict(lambda2=-0.1),
                                 dict(lambda2=2.5), dict(f_init_scale=0.0)])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        RlsConfig(**bad)


def test_input_validation():
    st_, _ = random_state(9)
    with pytest.raises(DimensionError):
        rls_update(st_, np.ones(4), np.ones(3))
    with pytest.raises(DimensionError):
        rls_update(st_, np.ones(5), np.ones(2))
    with pytest.raises(InputError):
        rls_update(st_, np.array([1, 2, np.nan, 4, 5.0]), np.ones(3))


def test_state_dict_round_trip():
    st_, rng = random_state(10)
    st_, _ = rls_update(st_, rng.normal(size=5), rng.normal(size=3))
    back = state_from_dict(state_to_dict(st_))
    assert np.array_equal(back.theta, st_.theta) and np.array_equal(back.gain, st_.gain)
    assert back.config == st_.config
