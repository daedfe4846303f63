"""Property checks that must hold for any input, each run over >= 100 cases."""
import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from semiadapt import datagen as dg
from semiadapt.rls import RlsConfig, RlsState, rls_update
from semiadapt.pipeline import PipelineConfig, run_stream
from semiadapt.uncertainty import (
    UncertaintyConfig,
    error_ellipsoids,
    init_uncertainty,
    propagate_state_msee,
    update_param_msee,
)

from streams import random_network

seeds = st.integers(0, 2**31 - 1)


def _rls_walk(seed, lam1, lam2, D=3, h=6, steps=20):
    rng = np.random.default_rng(seed)
    st_ = RlsState(rng.normal(size=(D, h)), np.broadcast_to(100.0 * np.eye(h), (D, h, h)).copy(),
                   RlsConfig(lam1, lam2, 100.0))
    for _ in range(steps):
        phi = np.append(np.maximum(rng.normal(size=h - 1), 0.0), 1.0)
        st_, _ = rls_update(st_, phi, rng.normal(size=D), inplace=True)
    return st_


@given(seeds, st.floats(0.95, 1.0), st.floats(0.05, 1.0))
def test_gain_stays_symmetric_positive_definite(seed, lam1, lam2):
    st_ = _rls_walk(seed, lam1, lam2)
    for F in st_.gain:
        assert np.array_equal(F, F.T)
        assert np.linalg.eigvalsh(F).min() > 0


@given(seeds, st.floats(0.95, 1.0), st.booleans())
def test_parameter_msee_stays_psd(seed, lam1, drift):
    rng = np.random.default_rng(seed)
    D, h = 3, 5
    u = init_uncertainty(D, h, UncertaintyConfig(window_size=4, drift_correction=drift))
    st_ = RlsState(rng.normal(size=(D, h)), np.broadcast_to(10.0 * np.eye(h), (D, h, h)).copy(),
                   RlsConfig(lam1, 1.0, 10.0))
    for _ in range(15):
        phi = np.append(rng.normal(size=h - 1), 1.0)
        x = propagate_state_msee(u, phi)
        theta_before = st_.theta.copy()
        st_, err = rls_update(st_, phi, rng.normal(size=D))
        u = update_param_msee(u, theta_before, st_.gain, phi, err, x)
        for X in u.x_theta_theta:
            assert np.array_equal(X, X.T)
            assert np.linalg.eigvalsh(X).min() >= -1e-9 * max(1.0, np.abs(X).max())


@given(seeds)
def test_state_msee_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    D, h = 4, 6
    u = init_uncertainty(D, h)
    A = rng.normal(size=(D, h, h))
    u.x_theta_theta[:] = A @ A.transpose(0, 2, 1)
    u.noise_var = rng.uniform(0, 2, D)
    X = propagate_state_msee(u, rng.normal(size=h))
    np.testing.assert_array_equal(X, X.T)
    assert np.linalg.eigvalsh(X).min() >= -1e-12 * max(1.0, np.abs(X).max())


@given(seeds, st.integers(0, 3), st.floats(-10, 10).filter(lambda v: v != 0))
def test_output_blocks_never_couple(seed, block, bump):
    rng = np.random.default_rng(seed)
    st_ = RlsState(rng.normal(size=(4, 5)), np.broadcast_to(50.0 * np.eye(5), (4, 5, 5)).copy(),
                   RlsConfig())
    phi, y = rng.normal(size=5), rng.normal(size=4)
    a, _ = rls_update(st_, phi, y)
    y[block] += bump
    b, _ = rls_update(st_, phi, y)
    others = [d for d in range(4) if d != block]
    assert np.array_equal(a.theta[others], b.theta[others])
    assert np.array_equal(a.gain, b.gain)


@given(seeds, st.sampled_from(["ti", "tv"]))
def test_generators_are_seed_deterministic(seed, kind):
    p = dg.params_from_dict(kind, {"trials": 1, "seed": seed % 10**6})
    (a,), (b,) = dg.generate(kind, p), dg.generate(kind, p)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.timestamps, b.timestamps)


def _stream(seed, T):
    rng = np.random.default_rng(seed)
    return np.cumsum(0.1 * rng.normal(size=(T, 3)), axis=0)


@given(seeds, st.sampled_from(["rls-paa", "identifier", "none"]))
def test_pipeline_is_deterministic(seed, method):
    m = random_network(seed % 5)
    pos = _stream(seed, 12)
    cfg = PipelineConfig(method=method)
    a = list(run_stream(m, pos, cfg, flush=True))
    b = list(run_stream(m, pos, cfg, flush=True))
    for x, y in zip(a, b):
        assert np.array_equal(x.prediction.mean, y.prediction.mean)
        assert np.array_equal(x.prediction.msee, y.prediction.msee)


@given(seeds, st.integers(4, 13), st.sampled_from(["rls-paa", "identifier"]))
def test_prefix_results_ignore_later_measurements(seed, cut, method):
    m = random_network(seed % 5)
    pos = _stream(seed, 14)
    cfg = PipelineConfig(method=method)
    full = list(run_stream(m, pos, cfg, flush=True))
    prefix = list(run_stream(m, pos[:cut], cfg, flush=True))
    n_pred = cut - cfg.N + 1
    assert len(prefix) == n_pred
    for a, b in zip(full[:n_pred], prefix[:n_pred]):
        assert np.array_equal(a.prediction.mean, b.prediction.mean)
        assert np.array_equal(a.prediction.msee, b.prediction.msee)


@given(seeds, st.floats(0.5, 0.99))
def test_ellipsoid_center_inside_and_far_point_outside(seed, conf):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(9, 9))
    msee = A @ A.T + 1e-3 * np.eye(9)
    mean = rng.normal(size=9)
    for e in error_ellipsoids(mean, msee, conf):
        assert e.contains(e.center)
        w, V = np.linalg.eigh(e.shape)
        assert not e.contains(e.center + 1.01 * np.sqrt(w[-1]) * V[:, -1])
        assert e.contains(e.center + 0.99 * np.sqrt(w[-1]) * V[:, -1])
