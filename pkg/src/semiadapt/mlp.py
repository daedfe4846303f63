"""Feedforward ReLU network: forward pass, feature extraction, backprop, training, JSON I/O.

Weights are stored per layer as ``(fan_out, fan_in)`` matrices plus a bias
vector; hidden layers use ReLU, the output layer is affine. The last hidden
layer's activations with a trailing 1 appended are the features the online
adaptation works on, so ``forward(m, s) == output_layer(m) @ hidden_features(m, s)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _numfmt
from .errors import ConfigError, DimensionError, InputError, NumericalError, ParseError


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int = 9
    hidden_dims: tuple = (40,)
    output_dim: int = 9
    seed: int = 0
    include_action: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if not self.hidden_dims:
            raise ConfigError("hidden_dims must be non-empty")
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) != d or d < 1 for d in dims):
            raise ConfigError(f"all layer sizes must be integers >= 1, got {dims}")

    @property
    def layer_dims(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def n_features(self):
        """Length of ``hidden_features`` output (last hidden width + bias)."""
        return self.hidden_dims[-1] + 1


@dataclass
class MlpModel:
    weights: list
    biases: list
    config: MlpConfig = field(default_factory=MlpConfig)

    def __post_init__(self):
        dims = self.config.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionError(f"expected {len(dims) - 1} layers for dims {dims}")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise DimensionError(
                    f"layer {i}: weights {w.shape} / bias {b.shape} do not match "
                    f"({dims[i + 1]}, {dims[i]})")

    def __eq__(self, other):
        if not isinstance(other, MlpModel) or self.config != other.config:
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights)) and \
            all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))

    def copy(self):
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.config)

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in (*self.weights, *self.biases))


@dataclass(frozen=True)
class TrainHyperparams:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int | None = None
    seed: int = 0
    # train in standardised coordinates, fold the scaling back into the weights
    normalize: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


def init_mlp(config: MlpConfig) -> MlpModel:
    """Uniform Glorot initialisation, zero biases."""
    rng = np.random.default_rng(config.seed)
    dims = config.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, config)


def _as_input(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.config.input_dim:
        raise DimensionError(
            f"input length {x.shape[-1]} != model input_dim {model.config.input_dim}")
    return x


def _hidden(weights, biases, x):
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
    return a


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output for one input vector or a batch of row vectors."""
    x = _as_input(model, x)
    a = _hidden(model.weights, model.biases, x)
    return a @ model.weights[-1].T + model.biases[-1]


def hidden_features(model: MlpModel, x) -> np.ndarray:
    x = _as_input(model, x)
    a = _hidden(model.weights, model.biases, x)
    one = np.ones(a.shape[:-1] + (1,))
    return np.concatenate([a, one], axis=-1)


def output_layer(model: MlpModel) -> np.ndarray:
    """Bias-augmented output layer ``[W | b]`` with shape ``(output_dim, n_h + 1)``."""
    return np.hstack([model.weights[-1], model.biases[-1][:, None]])


def with_output_layer(model: MlpModel, w_aug) -> MlpModel:
    w_aug = np.asarray(w_aug, dtype=float)
    m = model.copy()
    if w_aug.shape != (m.config.output_dim, m.config.n_features):
        raise DimensionError(f"output layer shape {w_aug.shape} does not match model")
    m.weights[-1] = w_aug[:, :-1].copy()
    m.biases[-1] = w_aug[:, -1].copy()
    return m


# ---------------------------------------------------------------------------
# loss and backprop
# ---------------------------------------------------------------------------

def _loss_grad(weights, biases, X, Y):
    """Mean squared-error-norm loss and its gradients for a batch of rows."""
    acts = [X]
    a = X
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
        acts.append(a)
    out = a @ weights[-1].T + biases[-1]
    r = out - Y
    n = X.shape[0]
    loss = float(np.sum(r * r) / n)

    gw = [None] * len(weights)
    gb = [None] * len(weights)
    delta = (2.0 / n) * r
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * (acts[i] > 0.0)
    return loss, gw, gb


def _batch_arrays(model, batch):
    if isinstance(batch, tuple):
        X, Y = batch
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
    else:
        if len(batch) == 0:
            raise InputError("batch must be non-empty")
        X = np.array([s.net_input for s in batch], dtype=float)
        Y = np.array([s.target for s in batch], dtype=float)
    if X.shape[0] == 0:
        raise InputError("batch must be non-empty")
    if X.shape[1] != model.config.input_dim or Y.shape[1] != model.config.output_dim:
        raise DimensionError(
            f"batch dims ({X.shape[1]}, {Y.shape[1]}) do not match model "
            f"({model.config.input_dim}, {model.config.output_dim})")
    return X, Y


def loss_and_gradients(model: MlpModel, batch):
    """L2 loss averaged over the batch and its gradient as an ``MlpModel``.

    ``batch`` is a list of :class:`~semiadapt.datagen.Sample` or an ``(X, Y)``
    pair of arrays.
    """
    X, Y = _batch_arrays(model, batch)
    loss, gw, gb = _loss_grad(model.weights, model.biases, X, Y)
    return loss, MlpModel(gw, gb, model.config)


def _normalizer(X, Y):
    mu_x = X.mean(axis=0)
    sd_x = X.std(axis=0)
    sd_x = np.where(sd_x > 1e-12, sd_x, 1.0)
    mu_y = Y.mean(axis=0)
    sd_y = float(np.sqrt(np.mean((Y - mu_y) ** 2)))
    if not sd_y > 1e-12:
        sd_y = 1.0
    return mu_x, sd_x, mu_y, sd_y


def _epochs(weights, biases, X, Y, hp, bs, rng, history, scale):
    n = X.shape[0]
    lr = hp.learning_rate
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, gw, gb = _loss_grad(weights, biases, X[idx], Y[idx])
            if not math.isfinite(loss):
                raise NumericalError(f"training diverged at epoch {epoch} (loss={loss})")
            total += loss * len(idx)
            for i in range(len(weights)):
                weights[i] -= lr * gw[i]
                biases[i] -= lr * gb[i]
        history.append(total / n * scale * scale)


def train(model: MlpModel, dataset, hp: TrainHyperparams = TrainHyperparams()):
    """Mini-batch gradient descent on the L2 loss.

    Returns ``(trained_model, loss_history)`` where ``loss_history[e]`` is the
    sample-weighted mean loss seen during epoch ``e``, in the data's own units.
    Full-batch when the dataset has fewer than 256 samples, else batches of 64
    (unless ``hp.batch_size`` is set). Shuffling is seeded by ``hp.seed``.

    With ``hp.normalize`` the inputs are standardised per column and the
    targets shifted and scaled by one common factor; ``model`` then acts as the
    initial network *in those coordinates* (a fresh Glorot init is meant for
    standardised data), and the affine maps are folded back into the first
    and last layers afterwards, so the returned model takes raw inputs.
    """
    if not isinstance(dataset, tuple) and len(dataset) == 0:
        raise InputError("cannot train on an empty dataset")
    X, Y = _batch_arrays(model, dataset)
    n = X.shape[0]
    bs = hp.batch_size or (n if n < 256 else 64)

    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    scale = 1.0
    if hp.normalize:
        # the starting weights are read as weights for standardised data
        mu_x, sd_x, mu_y, scale = _normalizer(X, Y)
        X = (X - mu_x) / sd_x
        Y = (Y - mu_y) / scale

    rng = np.random.default_rng(hp.seed)
    history = []
    # overflow is caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        _epochs(weights, biases, X, Y, hp, bs, rng, history, scale)

    if hp.normalize:
        weights[0] = weights[0] / sd_x
        biases[0] = biases[0] - weights[0] @ mu_x
        weights[-1] = weights[-1] * scale
        biases[-1] = biases[-1] * scale + mu_y
    trained = MlpModel(weights, biases, model.config)
    if not trained.is_finite():
        raise NumericalError("training produced non-finite weights")
    return trained, history


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def model_to_dict(model: MlpModel):
    cfg = asdict(model.config)
    cfg["hidden_dims"] = list(cfg["hidden_dims"])
    return {
        "config": cfg,
        "layers": [{"weights": w, "bias": b} for w, b in zip(model.weights, model.biases)],
    }


def save_model(model: MlpModel, path):
    Path(path).write_text(_numfmt.dumps(model_to_dict(model), indent=1) + "\n")


def _matrix(value, rows, cols, name):
    if not isinstance(value, list) or len(value) != rows:
        got = len(value) if isinstance(value, list) else type(value).__name__
        raise ParseError(f"expected {rows} rows, got {got}", name)
    out = np.empty((rows, cols))
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != cols:
            got = len(row) if isinstance(row, list) else type(row).__name__
            raise ParseError(f"expected {cols} columns, got {got}", f"{name}[{i}]")
        try:
            out[i] = [float(v) for v in row]
        except (TypeError, ValueError):
            raise ParseError("non-numeric entry", f"{name}[{i}]") from None
    if not np.all(np.isfinite(out)):
        raise ParseError("non-finite entry", name)
    return out


def model_from_dict(d) -> MlpModel:
    if not isinstance(d, dict):
        raise ParseError("top level must be an object")
    cfg = d.get("config")
    if not isinstance(cfg, dict):
        raise ParseError("missing or invalid object", "config")
    known = set(MlpConfig.__dataclass_fields__)
    if set(cfg) - known:
        raise ParseError(f"unknown key(s) {sorted(set(cfg) - known)}", "config")
    try:
        config = MlpConfig(**cfg)
    except (TypeError, ConfigError) as exc:
        raise ParseError(str(exc), "config") from None
    layers = d.get("layers")
    dims = config.layer_dims
    if not isinstance(layers, list) or len(layers) != len(dims) - 1:
        raise ParseError(f"expected a list of {len(dims) - 1} layers", "layers")
    weights, biases = [], []
    for i, layer in enumerate(layers):
        name = f"layers[{i}]"
        if not isinstance(layer, dict) or "weights" not in layer or "bias" not in layer:
            raise ParseError("expected object with 'weights' and 'bias'", name)
        weights.append(_matrix(layer["weights"], dims[i + 1], dims[i], name + ".weights"))
        weights_b = layer["bias"]
        if not isinstance(weights_b, list):
            raise ParseError("expected a list", name + ".bias")
        biases.append(_matrix([weights_b], 1, dims[i + 1], name + ".bias")[0])
    return MlpModel(weights, biases, config)


def load_model(path) -> MlpModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc})", str(path)) from None
    return model_from_dict(d)
