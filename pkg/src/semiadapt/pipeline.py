"""Online predict-then-adapt loop over a stream of joint positions.

For every new position ``p(j)``:

1. pending predictions that now have all ``M`` future positions are closed:
   their a-priori error is formed and the model is adapted with that sample
   (gain update, parameter update, MSEE bookkeeping, in that order);
2. if ``N`` positions are buffered, a new ``M``-step prediction with its MSEE
   and error ellipsoids is made from the current parameters.

Adaptation therefore lags prediction by ``M`` steps, and a prediction never
sees any measurement after the one it was made at.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import IdentifierConfig, identifier_update
from .datagen import build_input
from .errors import ConfigError, DimensionError, StreamError
from .mlp import MlpModel, forward, hidden_features
from .rls import RlsConfig, init_rls, rls_predict, rls_update
from .uncertainty import (
    PredictionWithUncertainty,
    UncertaintyConfig,
    error_ellipsoids,
    estimate_noise_variance,
    init_uncertainty,
    propagate_state_msee,
    update_param_msee,
)

METHODS = ("rls-paa", "identifier", "none")


@dataclass(frozen=True)
class PipelineConfig:
    N: int = 3
    M: int = 3
    method: str = "rls-paa"
    rls: RlsConfig = field(default_factory=RlsConfig)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    identifier: IdentifierConfig = field(default_factory=IdentifierConfig)
    confidence: float = 0.95

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise ConfigError("N and M must be >= 1")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must be in (0, 1)")

    @property
    def adaptation_enabled(self):
        return self.method != "none"

    def to_dict(self):
        return {
            "N": self.N, "M": self.M, "method": self.method, "confidence": self.confidence,
            "rls": vars(self.rls).copy(), "uncertainty": vars(self.uncertainty).copy(),
            "identifier": vars(self.identifier).copy(),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sub = {"rls": RlsConfig, "uncertainty": UncertaintyConfig, "identifier": IdentifierConfig}
        for key, typ in sub.items():
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        return cls(**d)


@dataclass
class StepResult:
    k: int
    prediction: PredictionWithUncertainty
    t: float | None = None
    apriori_error: np.ndarray | None = None
    truth: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_record(self):
        p = self.prediction
        return {
            "k": self.k,
            "t": self.t,
            "mean": p.mean,
            "msee": p.msee.reshape(-1),
            "ellipsoids": [e.to_dict() for e in p.ellipsoids],
            "apriori_error": self.apriori_error,
            "diagnostics": self.diagnostics,
        }


@dataclass
class _Pending:
    result: StepResult
    input: np.ndarray
    features: np.ndarray
    future: list


class OnlinePredictor:
    """Stateful single-stream predictor.

    ``push`` consumes one position and returns ``(new_result, completed)``;
    ``start_trial`` forgets the position buffer but keeps adapted parameters.
    """

    def __init__(self, model: MlpModel, cfg: PipelineConfig = PipelineConfig()):
        N, M = cfg.N, cfg.M
        want_in = 3 * N + (1 if model.config.include_action else 0)
        if model.config.input_dim != want_in:
            raise DimensionError(
                f"model input_dim {model.config.input_dim} != {want_in} "
                f"(3*N with N={N}{' + action' if model.config.include_action else ''})")
        if model.config.output_dim != 3 * M:
            raise DimensionError(
                f"model output_dim {model.config.output_dim} != 3*M = {3 * M}")
        self.cfg = cfg
        self.base_model = model
        self.model = model.copy()
        self.rls = init_rls(model, cfg.rls)
        self.unc = init_uncertainty(3 * M, model.config.n_features, cfg.uncertainty)
        self.buffer = deque(maxlen=N)
        self.pending = deque()
        self.last_t = None
        self.k = 0
        self.counters = {"adaptations": 0, "rejected": 0, "degenerate": 0, "predictions": 0}
        self.latency = {"adapt": [], "rls": [], "msee": []}

    # -- stream bookkeeping -------------------------------------------------

    def start_trial(self):
        self.buffer.clear()
        self.pending.clear()
        self.last_t = None
        self.k = 0

    def push(self, position, action=0, t=None):
        p = np.asarray(position, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)):
            self.counters["rejected"] += 1
            return None, []
        if t is not None:
            if self.last_t is not None and not t > self.last_t:
                raise StreamError(f"timestamp {t} does not increase (previous {self.last_t})")
            self.last_t = t
        k = self.k
        self.k += 1

        completed = []
        for entry in self.pending:
            entry.future.append(p)
        while self.pending and len(self.pending[0].future) == self.cfg.M:
            entry = self.pending.popleft()
            completed.append(self.adapt(entry, np.concatenate(entry.future)))

        self.buffer.append(p)
        if len(self.buffer) < self.cfg.N:
            return None, completed
        s = build_input(self.buffer, self.cfg.N,
                        action if self.base_model.config.include_action else None)
        entry = self.predict(s, k, t)
        self.pending.append(entry)
        return entry.result, completed

    def flush(self):
        """Drop and return predictions still waiting for ground truth."""
        out = [e.result for e in self.pending]
        self.pending.clear()
        return out

    # -- predict / adapt ----------------------------------------------------

    def predict(self, s, k=0, t=None) -> _Pending:
        x = s[:-1]
        phi = hidden_features(self.base_model, x)
        method = self.cfg.method
        if method == "rls-paa":
            mean = rls_predict(self.rls, phi)
            msee = propagate_state_msee(self.unc, phi)
        else:
            mean = forward(self.model if method == "identifier" else self.base_model, x)
            msee = np.diag(self.unc.noise_var.copy())
        ell = error_ellipsoids(mean, msee, self.cfg.confidence)
        self.counters["predictions"] += 1
        result = StepResult(k, PredictionWithUncertainty(mean, msee, ell), t)
        return _Pending(result, s, phi, [])

    def adapt(self, entry: _Pending, target) -> StepResult:
        res = entry.result
        target = np.asarray(target, dtype=float)
        res.truth = target
        res.apriori_error = target - res.prediction.mean
        diag = {}
        method = self.cfg.method
        if method == "rls-paa":
            t0 = time.perf_counter()
            theta_before = self.rls.theta.copy()
            x_msee = propagate_state_msee(self.unc, entry.features)
            t1 = time.perf_counter()
            _, err = rls_update(self.rls, entry.features, target, inplace=True)
            t2 = time.perf_counter()
            clips = self.unc.psd_clips
            update_param_msee(self.unc, theta_before, self.rls.gain, entry.features, err,
                              x_msee, inplace=True)
            t3 = time.perf_counter()
            self.latency["rls"].append(t2 - t1)
            self.latency["msee"].append((t3 - t2) + (t1 - t0))
            self.latency["adapt"].append(t3 - t0)
            self.counters["adaptations"] += 1
            if self.rls.degenerate:
                self.counters["degenerate"] += 1
            diag = {"psd_clips": self.unc.psd_clips - clips, "degenerate": self.rls.degenerate}
        else:
            if method == "identifier":
                x = entry.input[:-1]
                t0 = time.perf_counter()
                identifier_update(self.model, x, target, self.cfg.identifier)
                dt = time.perf_counter() - t0
                self.latency["adapt"].append(dt)
                self.counters["adaptations"] += 1
            self._track_noise(res.apriori_error)
        res.diagnostics = diag
        return res

    def _track_noise(self, err):
        u = self.unc
        u.residuals.append(np.asarray(err, dtype=float).copy())
        if u.config.estimate_noise and len(u.residuals) >= 2:
            u.noise_var = estimate_noise_variance(u.residuals, u.config.noise_window)

    def diagnostics(self):
        lat = {}
        for key, vals in self.latency.items():
            if vals:
                lat[key] = {"mean": float(np.mean(vals)), "max": float(np.max(vals)),
                            "n": len(vals)}
        return {**self.counters, "psd_clips": self.unc.psd_clips, "latency": lat,
                "config": self.cfg.to_dict()}


def _unpack(item):
    """Normalise one measurement to ``(t, position, action)``."""
    if isinstance(item, dict):
        if "position" in item:
            pos = item["position"]
        else:
            pos = (item["x"], item["y"], item["z"])
        return item.get("t"), pos, item.get("action", 0)
    if len(item) == 3 and np.ndim(item[1]) == 1:
        return item
    if len(item) == 2:
        return None, item[0], item[1]
    return None, item, 0


def run_stream(model: MlpModel, measurements, cfg: PipelineConfig = PipelineConfig(),
               predictor: OnlinePredictor | None = None, flush=False):
    """Yield completed :class:`StepResult` objects in prediction order.

    ``measurements`` yields ``(t, position, action)``, ``(position, action)``
    or dicts with ``t``/``x``/``y``/``z``/``action`` keys. With ``flush=True``
    predictions still lacking ground truth at the end are yielded too
    (without an a-priori error).
    """
    pred = predictor if predictor is not None else OnlinePredictor(model, cfg)
    for item in measurements:
        t, p, a = _unpack(item)
        _, done = pred.push(p, a, t)
        yield from done
    if flush:
        yield from pred.flush()


def run_samples(model: MlpModel, samples, cfg: PipelineConfig = PipelineConfig(),
                predictor: OnlinePredictor | None = None):
    """Predict-then-adapt over pre-windowed samples, with no lag.

    Each sample's target is revealed right after its prediction, so the
    recursion sees exactly one adaptation per sample.
    """
    pred = predictor if predictor is not None else OnlinePredictor(model, cfg)
    for s in samples:
        entry = pred.predict(np.asarray(s.input, dtype=float), s.k)
        yield pred.adapt(entry, s.target)


def with_method(cfg: PipelineConfig, method: str) -> PipelineConfig:
    return replace(cfg, method=method)


def is_finite_result(res: StepResult):
    vals = [res.prediction.mean, res.prediction.msee]
    if res.apriori_error is not None:
        vals.append(res.apriori_error)
    return all(np.all(np.isfinite(v)) for v in vals)
