"""Mean-squared estimation error (MSEE) propagation and error ellipsoids.

The parameter MSEE is tracked per output block (cross-block terms are never
generated by the block-diagonal recursion). Each step:

* state MSEE: ``X_xx[d, d] = phi' X_d phi + noise_var[d]``, zero off-diagonal;
* parameter bias: ``E_new = (I - K phi') E + dtheta``, with ``K = F phi``;
* parameter MSEE::

      X_new = K X_xx[d,d] K' - X phi K' - K phi' X
              + E_new dtheta' + dtheta E_new' - dtheta dtheta' + X

  followed by symmetrisation and clipping of negative eigenvalues.

``dtheta`` (the unknown parameter drift) is approximated by the mean of the
last ``window_size`` observed increments of the estimate; before any
increment has been seen it is zero.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class UncertaintyConfig:
    window_size: int = 10
    noise_window: int = 50
    noise_prior: float = 1.0
    estimate_noise: bool = True
    drift_correction: bool = True

    def __post_init__(self):
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.noise_window < 2:
            raise ConfigError("noise_window must be >= 2")
        if not self.noise_prior >= 0:
            raise ConfigError("noise_prior must be >= 0")


@dataclass
class UncertaintyState:
    x_theta_theta: np.ndarray      # (D, h, h)
    e_theta_tilde: np.ndarray      # (D, h)
    dtheta_window: deque
    residuals: deque
    noise_var: np.ndarray          # (D,)
    config: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    last_theta: np.ndarray | None = None
    psd_clips: int = 0

    @property
    def window_size(self):
        return self.config.window_size

    def dtheta_mean(self):
        if not self.dtheta_window:
            return np.zeros_like(self.e_theta_tilde)
        return np.mean(np.stack(self.dtheta_window), axis=0)

    def copy(self):
        return UncertaintyState(
            self.x_theta_theta.copy(), self.e_theta_tilde.copy(),
            deque((a.copy() for a in self.dtheta_window), maxlen=self.dtheta_window.maxlen),
            deque((a.copy() for a in self.residuals), maxlen=self.residuals.maxlen),
            self.noise_var.copy(), self.config,
            None if self.last_theta is None else self.last_theta.copy(),
            self.psd_clips)


def init_uncertainty(n_blocks, block_size, config: UncertaintyConfig = UncertaintyConfig()):
    prior = np.broadcast_to(np.asarray(config.noise_prior, dtype=float), (n_blocks,)).copy()
    return UncertaintyState(
        np.zeros((n_blocks, block_size, block_size)),
        np.zeros((n_blocks, block_size)),
        deque(maxlen=config.window_size),
        deque(maxlen=config.noise_window),
        prior,
        config,
    )


def _phi(u, features):
    phi = np.ascontiguousarray(features, dtype=float)
    if phi.shape != (u.x_theta_theta.shape[1],):
        raise DimensionError(
            f"feature length {phi.shape} != block size {u.x_theta_theta.shape[1]}")
    return phi


def propagate_state_msee(u: UncertaintyState, features) -> np.ndarray:
    """A-priori state MSEE matrix (``D x D``, diagonal)."""
    phi = _phi(u, features)
    q = np.empty(len(u.noise_var))
    kernels.quad_forms(u.x_theta_theta, phi, q)
    return np.diag(q + u.noise_var)


def estimate_noise_variance(residuals, window, prior=None):
    """Per-coordinate sample variance of the last ``window`` residual vectors.

    Falls back to ``prior`` until two residuals are available.
    """
    if window < 2:
        raise ConfigError("noise window must be >= 2")
    residuals = list(residuals)
    if len(residuals) < 2:
        return None if prior is None else np.array(prior, dtype=float, copy=True)
    r = np.asarray(residuals[-window:], dtype=float)
    return r.var(axis=0, ddof=1)


def update_param_msee(u: UncertaintyState, theta_before, gain, features, apriori_error,
                      x_msee, inplace=False) -> UncertaintyState:
    """Advance the parameter MSEE by one adaptation step.

    ``theta_before`` is the estimate the a-priori error was computed with and
    ``gain`` the (already updated) gain blocks that produced the parameter
    step. ``x_msee`` is the state MSEE from :func:`propagate_state_msee` for
    the same features.
    """
    phi = _phi(u, features)
    theta_before = np.asarray(theta_before, dtype=float)
    if theta_before.shape != u.e_theta_tilde.shape:
        raise DimensionError(f"theta shape {theta_before.shape} != {u.e_theta_tilde.shape}")
    new = u if inplace else u.copy()

    if new.last_theta is not None:
        new.dtheta_window.append(theta_before - new.last_theta)
    new.last_theta = theta_before.copy()
    if new.config.drift_correction:
        dtheta = new.dtheta_mean()
    else:
        dtheta = np.zeros_like(new.e_theta_tilde)

    x_diag = np.ascontiguousarray(np.diagonal(np.asarray(x_msee, dtype=float)))
    scale = max(1.0, float(np.abs(np.diagonal(new.x_theta_theta, axis1=1, axis2=2)).max()))
    new.psd_clips += int(kernels.param_msee_blocks(
        new.x_theta_theta, new.e_theta_tilde, np.ascontiguousarray(gain), phi, x_diag,
        np.ascontiguousarray(dtheta), 1e-10 * scale))

    new.residuals.append(np.asarray(apriori_error, dtype=float).copy())
    if new.config.estimate_noise and len(new.residuals) >= 2:
        new.noise_var = estimate_noise_variance(new.residuals, new.config.noise_window)
    return new


# ---------------------------------------------------------------------------
# ellipsoids
# ---------------------------------------------------------------------------

def chi2_quantile(confidence, dof=3):
    return float(stats.chi2.ppf(confidence, dof))


@dataclass(frozen=True)
class Ellipsoid:
    """``{p : (p - center)' shape^+ (p - center) <= 1}`` restricted to range(shape)."""

    center: np.ndarray
    shape: np.ndarray
    confidence: float

    def semi_axes(self):
        w, V = np.linalg.eigh(self.shape)
        return np.sqrt(np.clip(w, 0.0, None)), V

    def contains(self, point, tol=1e-12):
        d = np.asarray(point, dtype=float) - self.center
        w, V = np.linalg.eigh(self.shape)
        c = V.T @ d
        cutoff = tol * max(1.0, float(np.abs(w).max()))
        live = w > cutoff
        # zero-variance directions are treated as exact
        if np.any(np.abs(c[~live]) > 1e-9 * max(1.0, float(np.abs(d).max()))):
            return False
        return bool(np.sum(c[live] ** 2 / w[live]) <= 1.0)

    def to_dict(self):
        return {"center": self.center, "shape": self.shape, "confidence": self.confidence}


def error_ellipsoids(mean, msee, confidence=0.95):
    """One ellipsoid per predicted 3-D position."""
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"confidence must be in (0, 1), got {confidence}")
    mean = np.asarray(mean, dtype=float)
    msee = np.asarray(msee, dtype=float)
    if mean.size % 3 or msee.shape != (mean.size, mean.size):
        raise DimensionError(f"mean {mean.shape} / msee {msee.shape} inconsistent")
    q = chi2_quantile(confidence, 3)
    out = []
    for m in range(mean.size // 3):
        sl = slice(3 * m, 3 * m + 3)
        sigma = msee[sl, sl]
        sigma = 0.5 * (sigma + sigma.T)
        out.append(Ellipsoid(mean[sl].copy(), q * sigma, confidence))
    return out


@dataclass
class PredictionWithUncertainty:
    mean: np.ndarray
    msee: np.ndarray
    ellipsoids: list

    def coverage(self, truth):
        """Number of true positions inside their ellipsoid."""
        truth = np.asarray(truth, dtype=float).reshape(-1, 3)
        return sum(e.contains(p) for e, p in zip(self.ellipsoids, truth))
