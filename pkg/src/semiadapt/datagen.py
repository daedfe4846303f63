"""Synthetic trajectory generators, smoothing, windowing and trajectory CSV I/O.

Two artificial motion systems are provided:

* time-varying (``tv``): a quadratic 3-D curve evaluated at a jittered time
  ``t + w``, one ``w`` per timestamp shared by all three axes;
* time-invariant (``ti``): a per-axis quadratic map iterated from a random
  initial position, with fresh additive noise on every axis at every step.

Trial ``i`` of a generator call uses ``numpy.random.default_rng(seed + i)``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError

log = logging.getLogger(__name__)

# coefficient order: ax, bx, ay, by, az, bz
TV_CLASSES = (
    (0.4, -2.0, 0.0, 0.9, 0.0, 1.05),
    (0.41, -1.9, 1.0, 0.9, 0.0, 0.95),
)
TI_CLASSES = (
    (0.06, 0.92, 0.0, 0.9, 0.0, 1.05),
    (0.061, 0.93, 0.0, 1.05, 0.0, 0.96),
)


@dataclass
class Trajectory:
    timestamps: np.ndarray
    positions: np.ndarray
    action_label: int = 0
    truncated: bool = False

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if len(self.timestamps) != len(self.positions):
            raise ConfigError(
                f"{len(self.timestamps)} timestamps but {len(self.positions)} positions")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise ConfigError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.positions)):
            raise ConfigError("positions must be finite")

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class Sample:
    """One supervised pair.

    ``input`` is ``[p(k), ..., p(k-N+1), (a), 1]``; ``target`` stacks
    ``p(k+1) ... p(k+M)``.
    """

    input: np.ndarray
    target: np.ndarray
    k: int = 0

    @property
    def net_input(self):
        # the network carries its own biases, so the trailing constant is dropped
        return self.input[:-1]


def _check_coeffs(coeffs):
    coeffs = tuple(float(c) for c in coeffs)
    if len(coeffs) != 6:
        raise ConfigError(f"expected 6 coefficients (ax,bx,ay,by,az,bz), got {len(coeffs)}")
    if not all(math.isfinite(c) for c in coeffs):
        raise ConfigError("coefficients must be finite")
    return coeffs


@dataclass(frozen=True)
class TvParams:
    coeffs: tuple = TV_CLASSES[0]
    noise_halfwidth: float = 1.0
    dt: float = 0.05
    duration: float = 5.0
    trials: int = 50
    seed: int = 0
    action_label: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _check_coeffs(self.coeffs))
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if not self.noise_halfwidth >= 0:
            raise ConfigError("noise_halfwidth must be >= 0")
        if not self.duration >= 0:
            raise ConfigError("duration must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")


@dataclass(frozen=True)
class TiParams:
    coeffs: tuple = TI_CLASSES[0]
    noise_halfwidth: float = 0.02
    dt: float = 0.05
    steps: int = 30
    trials: int = 50
    seed: int = 0
    action_label: int = 0
    init_position: tuple | None = None
    init_low: float = 0.0
    init_high: float = 1.0
    shared_noise: bool = False
    bound: float = 1e3

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _check_coeffs(self.coeffs))
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if not self.noise_halfwidth >= 0:
            raise ConfigError("noise_halfwidth must be >= 0")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.init_high >= self.init_low:
            raise ConfigError("init_high must be >= init_low")
        if not self.bound > 0:
            raise ConfigError("bound must be > 0")
        if self.init_position is not None:
            p = tuple(float(v) for v in self.init_position)
            if len(p) != 3:
                raise ConfigError("init_position must have 3 entries")
            object.__setattr__(self, "init_position", p)


def params_from_dict(kind, d):
    """Build ``TvParams``/``TiParams`` from a JSON-style dict."""
    cls = {"tv": TvParams, "ti": TiParams}.get(kind)
    if cls is None:
        raise ConfigError(f"unknown generator type {kind!r}; expected 'tv' or 'ti'")
    known = cls.__dataclass_fields__
    unknown = set(d) - set(known)
    if unknown:
        raise ConfigError(f"unknown {kind} parameter(s): {sorted(unknown)}")
    return cls(**d)


def params_to_dict(params):
    return asdict(params)


def gen_tv(params: TvParams) -> list[Trajectory]:
    ax, bx, ay, by, az, bz = params.coeffs
    n = int(round(params.duration / params.dt)) + 1
    t = np.arange(n) * params.dt
    out = []
    for i in range(params.trials):
        rng = np.random.default_rng(params.seed + i)
        w = rng.uniform(-params.noise_halfwidth, params.noise_halfwidth, size=n)
        tw = t + w
        pos = np.stack([ax * tw**2 + bx * tw, ay * tw**2 + by * tw, az * tw**2 + bz * tw],
                       axis=1)
        out.append(Trajectory(t.copy(), pos, params.action_label))
    return out


def gen_ti(params: TiParams) -> list[Trajectory]:
    a = np.array(params.coeffs[0::2])
    b = np.array(params.coeffs[1::2])
    h = params.noise_halfwidth
    out = []
    for i in range(params.trials):
        rng = np.random.default_rng(params.seed + i)
        if params.init_position is not None:
            p = np.array(params.init_position, dtype=float)
        else:
            p = rng.uniform(params.init_low, params.init_high, size=3)
        pos = [p]
        truncated = False
        for _ in range(params.steps):
            if params.shared_noise:
                w = np.full(3, rng.uniform(-h, h))
            else:
                w = rng.uniform(-h, h, size=3)
            p = a * p * p + b * p + w
            if not np.all(np.abs(p) <= params.bound):
                truncated = True
                break
            pos.append(p)
        if truncated:
            log.warning("ti trial %d diverged after %d steps; truncated", i, len(pos) - 1)
        pos = np.array(pos)
        t = np.arange(len(pos)) * params.dt
        out.append(Trajectory(t, pos, params.action_label, truncated=truncated))
    return out


def generate(kind, params):
    return gen_tv(params) if kind == "tv" else gen_ti(params)


def smooth(traj: Trajectory) -> Trajectory:
    """Two-tap low-pass filter on the raw positions (non-recursive)."""
    p = traj.positions
    if len(p) == 0:
        return Trajectory(traj.timestamps.copy(), p.copy(), traj.action_label, traj.truncated)
    s = p.copy()
    s[1:] = 0.6 * p[:-1] + 0.4 * p[1:]
    return Trajectory(traj.timestamps.copy(), s, traj.action_label, traj.truncated)


def n_windows(length, N, M):
    return max(length - N - M + 1, 0)


def build_input(history, N, action=None):
    """Stack the last ``N`` positions newest first, then ``action`` and 1.

    ``history`` is indexable with the newest position last.
    """
    parts = [np.asarray(history[-1 - j], dtype=float) for j in range(N)]
    if action is not None:
        parts.append(np.array([float(action)]))
    parts.append(np.ones(1))
    return np.concatenate(parts)


def make_samples(traj: Trajectory, N: int, M: int, include_action: bool = False) -> list[Sample]:
    if N < 1 or M < 1:
        raise ConfigError("N and M must be >= 1")
    T = len(traj)
    count = n_windows(T, N, M)
    if count == 0:
        log.info("trajectory of length %d too short for N=%d, M=%d: 0 samples", T, N, M)
        return []
    p = traj.positions
    action = traj.action_label if include_action else None
    out = []
    for k in range(N - 1, T - M):
        s = build_input(p[k - N + 1:k + 1], N, action)
        target = p[k + 1:k + M + 1].reshape(-1).copy()
        out.append(Sample(s, target, k))
    return out


def stack_samples(samples):
    """Return ``(X, Y)`` arrays of network inputs and targets."""
    X = np.array([s.net_input for s in samples], dtype=float)
    Y = np.array([s.target for s in samples], dtype=float)
    return X, Y


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_HEADER = ("t", "x", "y", "z", "action")


def write_trajectory_csv(traj: Trajectory, path_or_file):
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, (x, y, z) in zip(traj.timestamps, traj.positions):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y)), repr(float(z)),
                        traj.action_label])
    finally:
        if own:
            fh.close()


def iter_csv_rows(fh, source="<stream>"):
    """Yield ``(t, position, action)`` from a trajectory CSV text stream."""
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file", source) from None
    if header[:4] != list(CSV_HEADER[:4]) or len(header) > 5 or (
            len(header) == 5 and header[4] != "action"):
        raise ParseError(f"expected header t,x,y,z[,action], got {','.join(header)}", source)
    has_action = len(header) == 5
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}",
                             f"{source}:{lineno}")
        try:
            t = float(row[0])
            p = np.array([float(row[1]), float(row[2]), float(row[3])])
            a = int(float(row[4])) if has_action and row[4].strip() else 0
        except ValueError as exc:
            raise ParseError(str(exc), f"{source}:{lineno}") from None
        yield t, p, a


def read_trajectory_csv(path_or_file) -> Trajectory:
    if isinstance(path_or_file, (str, Path)):
        with open(path_or_file, newline="") as fh:
            rows = list(iter_csv_rows(fh, str(path_or_file)))
        source = str(path_or_file)
    else:
        source = getattr(path_or_file, "name", "<stream>")
        rows = list(iter_csv_rows(path_or_file, source))
    if not rows:
        return Trajectory(np.zeros(0), np.zeros((0, 3)))
    t = np.array([r[0] for r in rows])
    p = np.array([r[1] for r in rows])
    actions = {r[2] for r in rows}
    if len(actions) > 1:
        raise ParseError("action label changes within one trajectory file; split it", source)
    try:
        return Trajectory(t, p, actions.pop())
    except ConfigError as exc:
        raise ParseError(str(exc), source) from None


def trajectory_to_csv_text(traj: Trajectory) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()
