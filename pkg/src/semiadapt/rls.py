"""Recursive least squares adaptation of the network's output layer.

The output layer ``[W | b]`` has one row per output coordinate. Because the
regressor is block-diagonal (each output sees the same feature vector), the
matrix recursion splits into ``D`` independent scalar-measurement RLS
recursions that share ``phi``. ``theta`` is kept as a ``(D, h)`` array; its
row-major flattening is the stacked parameter vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, InputError, NumericalError
from .mlp import MlpModel, output_layer

DEGENERATE_DIAG = 1e-12


@dataclass(frozen=True)
class RlsConfig:
    lambda1: float = 0.998
    lambda2: float = 1.0
    f_init_scale: float = 1000.0

    def __post_init__(self):
        if not 0.0 < self.lambda1 <= 1.0:
            raise ConfigError(f"lambda1 must be in (0, 1], got {self.lambda1}")
        if not 0.0 <= self.lambda2 <= 2.0:
            raise ConfigError(f"lambda2 must be in [0, 2], got {self.lambda2}")
        if not (self.f_init_scale > 0 and math.isfinite(self.f_init_scale)):
            raise ConfigError(f"f_init_scale must be > 0, got {self.f_init_scale}")


@dataclass
class RlsState:
    theta: np.ndarray          # (D, h)
    gain: np.ndarray           # (D, h, h)
    config: RlsConfig = field(default_factory=RlsConfig)
    degenerate: bool = False   # set when a gain diagonal fell below DEGENERATE_DIAG

    @property
    def theta_hat(self):
        return self.theta.reshape(-1)

    @property
    def n_blocks(self):
        return self.theta.shape[0]

    @property
    def block_size(self):
        return self.theta.shape[1]

    def copy(self):
        return RlsState(self.theta.copy(), self.gain.copy(), self.config, self.degenerate)


def flatten_theta(w_aug):
    return np.ascontiguousarray(w_aug, dtype=float).reshape(-1).copy()


def unflatten_theta(theta_hat, n_blocks):
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.size % n_blocks:
        raise DimensionError(f"length {theta_hat.size} not divisible by {n_blocks} blocks")
    return theta_hat.reshape(n_blocks, -1).copy()


def init_rls(model: MlpModel, config: RlsConfig = RlsConfig()) -> RlsState:
    theta = np.ascontiguousarray(output_layer(model))
    D, h = theta.shape
    gain = np.broadcast_to(config.f_init_scale * np.eye(h), (D, h, h)).copy()
    return RlsState(theta, gain, config)


def _features(state, features):
    phi = np.ascontiguousarray(features, dtype=float)
    if phi.shape != (state.block_size,):
        raise DimensionError(
            f"feature length {phi.shape} != block size {state.block_size}")
    return phi


def rls_predict(state: RlsState, features) -> np.ndarray:
    """A-priori prediction: output ``d`` is ``features . theta[d]``."""
    return state.theta @ _features(state, features)


def rls_update(state: RlsState, features, measurement, inplace=False):
    """One gain-then-parameter update. Returns ``(new_state, apriori_error)``.

    With ``inplace=True`` the given state is mutated and returned, which
    avoids copying the gain blocks on the hot path.
    """
    phi = _features(state, features)
    y = np.ascontiguousarray(measurement, dtype=float)
    if y.shape != (state.n_blocks,):
        raise DimensionError(f"measurement length {y.shape} != {state.n_blocks} outputs")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(y))):
        raise InputError("features and measurement must be finite")
    new = state if inplace else state.copy()
    err = np.empty(state.n_blocks)
    cfg = state.config
    min_denom, min_diag = kernels.rls_update_blocks(
        new.theta, new.gain, phi, y, cfg.lambda1, cfg.lambda2, err)
    if not min_denom > 0.0:
        raise NumericalError(f"RLS denominator {min_denom} <= 0 (gain not positive definite)")
    new.degenerate = bool(min_diag < DEGENERATE_DIAG)
    return new, err


def state_to_dict(state: RlsState):
    return {
        "config": {"lambda1": state.config.lambda1, "lambda2": state.config.lambda2,
                   "f_init_scale": state.config.f_init_scale},
        "theta": state.theta,
        "gain": state.gain,
    }


def state_from_dict(d) -> RlsState:
    theta = np.asarray(d["theta"], dtype=float)
    gain = np.asarray(d["gain"], dtype=float)
    if theta.ndim != 2 or gain.shape != (theta.shape[0], theta.shape[1], theta.shape[1]):
        raise DimensionError(f"inconsistent theta {theta.shape} / gain {gain.shape}")
    return RlsState(np.ascontiguousarray(theta), np.ascontiguousarray(gain),
                    RlsConfig(**d["config"]))
