"""Identifier-style baseline: online gradient descent on every network weight."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .mlp import MlpModel, _loss_grad, forward


@dataclass(frozen=True)
class IdentifierConfig:
    step_size: float = 1e-3
    steps_per_sample: int = 1

    def __post_init__(self):
        if not self.step_size >= 0:
            raise ConfigError("step_size must be >= 0")
        if self.steps_per_sample < 1:
            raise ConfigError("steps_per_sample must be >= 1")


def identifier_step(model: MlpModel, sample, cfg: IdentifierConfig = IdentifierConfig(),
                    inplace=False):
    """Predict with the current weights, then descend on this sample's squared error.

    Returns ``(updated_model, prediction)``.
    """
    x = np.asarray(sample.net_input, dtype=float)
    prediction = forward(model, x)
    new = model if inplace else model.copy()
    identifier_update(new, x, sample.target, cfg)
    return new, prediction


def identifier_update(model: MlpModel, x, y, cfg: IdentifierConfig = IdentifierConfig()):
    """In-place gradient steps on ``||y - f(x)||^2`` for a single sample."""
    if cfg.step_size == 0:
        return model
    X = np.asarray(x, dtype=float)[None, :]
    Y = np.asarray(y, dtype=float)[None, :]
    for _ in range(cfg.steps_per_sample):
        with np.errstate(over="ignore", invalid="ignore"):
            loss, gw, gb = _loss_grad(model.weights, model.biases, X, Y)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in gw):
            raise NumericalError(
                f"identifier gradient is not finite (loss={loss}, step_size={cfg.step_size})")
        for i in range(len(model.weights)):
            model.weights[i] -= cfg.step_size * gw[i]
            model.biases[i] -= cfg.step_size * gb[i]
    return model


def tune_identifier(model: MlpModel, samples, step_sizes, steps_per_sample=(1,)):
    """Grid-search the step size on one held-out stream; returns ``(best_cfg, scores)``.

    Each candidate adapts a fresh copy of ``model`` over ``samples`` in order
    and is scored by the mean squared a-priori error. Candidates that blow up
    score ``inf``.
    """
    scores = {}
    for n in steps_per_sample:
        for lr in step_sizes:
            cfg = IdentifierConfig(lr, n)
            m = model.copy()
            total = 0.0
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    for s in samples:
                        m, pred = identifier_step(m, s, cfg, inplace=True)
                        total += float(np.sum((pred - s.target) ** 2))
                score = total / len(samples)
            except NumericalError:
                score = float("inf")
            if not np.isfinite(score):
                score = float("inf")
            scores[(lr, n)] = score
    best = min(scores, key=lambda key: (scores[key], key))
    return IdentifierConfig(*best), scores
