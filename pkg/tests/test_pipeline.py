import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semiadapt.datagen import Sample, build_input, make_samples
from semiadapt.errors import ConfigError, DimensionError, StreamError
from semiadapt.mlp import MlpConfig, forward, init_mlp
from semiadapt.pipeline import (
    OnlinePredictor,
    PipelineConfig,
    is_finite_result,
    run_samples,
    run_stream,
    with_method,
)

from streams import random_network


def rollout(model, start, steps):
    """Positions produced by feeding the network its own first predicted step."""
    hist = [np.asarray(p, dtype=float) for p in start]
    for _ in range(steps):
        s = build_input(hist, 3)
        hist.append(forward(model, s[:-1])[:3])
    return np.array(hist)


def small_stream(seed, T=15):
    rng = np.random.default_rng(seed)
    return np.cumsum(0.1 * rng.normal(size=(T, 3)), axis=0)


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(method="kalman")
    with pytest.raises(ConfigError):
        PipelineConfig(N=0)
    cfg = PipelineConfig(method="identifier")
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    assert with_method(cfg, "none").method == "none"


def test_dimension_mismatch_names_both_sizes():
    m = init_mlp(MlpConfig(6, (5,), 9))
    with pytest.raises(DimensionError, match="6.*9"):
        OnlinePredictor(m, PipelineConfig(N=3))
    with pytest.raises(DimensionError, match="output_dim 9"):
        OnlinePredictor(init_mlp(MlpConfig(9, (5,), 9)), PipelineConfig(M=2))


def test_no_output_until_buffer_fills():
    p = OnlinePredictor(random_network(0))
    assert p.push([0, 0, 0]) == (None, [])
    assert p.push([0, 0, 1]) == (None, [])
    res, done = p.push([0, 0, 2])
    assert res is not None and res.k == 2 and done == []


def test_method_none_equals_offline_network():
    m = random_network(1)
    pos = small_stream(1)
    res = list(run_stream(m, pos, PipelineConfig(method="none")))
    samples = make_samples_from(pos)
    assert len(res) == len(samples)
    for r, s in zip(res, samples):
        np.testing.assert_array_equal(r.prediction.mean, forward(m, s.net_input))
        np.testing.assert_array_equal(r.truth, s.target)


def make_samples_from(pos):
    from semiadapt.datagen import Trajectory
    return make_samples(Trajectory(np.arange(len(pos), dtype=float), pos), 3, 3)


def test_exact_model_stream_gives_zero_error_and_fixed_parameters():
    m = random_network(2)
    pos = rollout(m, [[0.1, 0.2, 0.3], [0.2, 0.1, 0.0], [0.3, 0.0, -0.1]], 40)
    p = OnlinePredictor(m, PipelineConfig(method="rls-paa"))
    theta0 = p.rls.theta.copy()
    # targets come from the network itself, so every innovation is roundoff
    samples = [Sample(s.input, forward(m, s.net_input), s.k) for s in make_samples_from(pos)]
    res = list(run_samples(m, samples, PipelineConfig(), predictor=p))
    assert max(np.max(np.abs(r.apriori_error)) for r in res) < 1e-9
    np.testing.assert_allclose(p.rls.theta, theta0, rtol=0, atol=1e-9)


def test_adaptation_lags_prediction_by_m_steps():
    m = random_network(3)
    p = OnlinePredictor(m)
    pos = small_stream(3, T=10)
    made, completed = [], []
    for j, x in enumerate(pos):
        res, done = p.push(x)
        if res is not None:
            made.append(res.k)
        completed.extend(r.k for r in done)
        # every prediction made at step k is adapted on at step k + M
        assert completed == [k for k in made if k + 3 <= j]
    assert p.counters["adaptations"] == len(pos) - 3 - 3 + 1


def test_start_trial_keeps_parameters_and_resets_buffer():
    m = random_network(4)
    p = OnlinePredictor(m)
    list(run_stream(m, small_stream(4), predictor=p))
    theta = p.rls.theta.copy()
    assert not np.array_equal(theta, OnlinePredictor(m).rls.theta)
    p.start_trial()
    assert p.push([0, 0, 0]) == (None, [])
    np.testing.assert_array_equal(p.rls.theta, theta)


def test_flush_returns_unscored_predictions():
    m = random_network(5)
    res = list(run_stream(m, small_stream(5, T=8), flush=True))
    assert len(res) == 8 - 3 + 1
    assert [r.apriori_error is None for r in res] == [False, False, False, True, True, True]


def test_non_finite_measurement_is_rejected():
    p = OnlinePredictor(random_network(6))
    assert p.push([np.nan, 0, 0]) == (None, [])
    assert p.counters["rejected"] == 1 and p.k == 0


def test_timestamps_must_increase():
    p = OnlinePredictor(random_network(6))
    p.push([0, 0, 0], t=1.0)
    with pytest.raises(StreamError):
        p.push([0, 0, 0], t=1.0)


def test_measurement_formats():
    m = random_network(7)
    pos = small_stream(7, T=8)
    a = [r.prediction.mean for r in run_stream(m, pos)]
    b = [r.prediction.mean for r in run_stream(m, [(float(i), p, 0) for i, p in enumerate(pos)])]
    c = [r.prediction.mean for r in run_stream(
        m, [{"t": float(i), "x": p[0], "y": p[1], "z": p[2]} for i, p in enumerate(pos)])]
    for u, v, w in zip(a, b, c):
        assert np.array_equal(u, v) and np.array_equal(u, w)


def test_identifier_method_adapts_weights():
    m = random_network(8)
    p = OnlinePredictor(m, PipelineConfig(method="identifier"))
    res = list(run_stream(m, small_stream(8), predictor=p))
    assert p.model != m and p.counters["adaptations"] == len(res)
    assert all(is_finite_result(r) for r in res)


def test_ti_trials_rls_beats_offline_network(ti_setup):
    # one motion class of validation trials streamed through one predictor
    _, model, _, val = ti_setup
    totals = {}
    for method in ("rls-paa", "none"):
        p = OnlinePredictor(model, PipelineConfig(method=method))
        total = 0.0
        for traj in val[0]:
            p.start_trial()
            total += sum(float(np.sum(r.apriori_error ** 2))
                         for r in run_stream(model, traj.positions, predictor=p))
        totals[method] = total
    assert totals["rls-paa"] <= totals["none"]


def test_diagnostics_report_latency_and_config():
    m = random_network(9)
    p = OnlinePredictor(m)
    list(run_stream(m, small_stream(9), predictor=p))
    d = p.diagnostics()
    assert d["latency"]["adapt"]["n"] == d["adaptations"] > 0
    assert d["config"]["rls"]["lambda1"] == 0.998


@given(st.integers(0, 10_000), st.integers(4, 14),
       st.sampled_from(["rls-paa", "identifier", "none"]))
def test_prefix_outputs_do_not_depend_on_the_future(seed, cut, method):
    m = random_network(seed % 7)
    pos = small_stream(seed, T=16)
    cfg = PipelineConfig(method=method)
    full = list(run_stream(m, pos, cfg, flush=True))
    prefix = list(run_stream(m, pos[:cut], cfg, flush=True))
    n_pred = cut - 3 + 1
    for a, b in zip(full[:n_pred], prefix[:n_pred]):
        assert a.k == b.k
        assert np.array_equal(a.prediction.mean, b.prediction.mean)
        assert np.array_equal(a.prediction.msee, b.prediction.msee)
