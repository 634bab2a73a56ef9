"""A small multilayer perceptron with exact analytic input gradients.

Training uses mini-batch ADAM on softmax cross-entropy and is deterministic
under a fixed seed (single-threaded). The Jacobian is taken with respect to
the pre-softmax logits, which keeps saliency sign comparisons meaningful
away from softmax saturation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, TrainingDivergedError, ValidationError

_MAGIC = b"CCNN"
_VERSION = 1
_ACTIVATIONS = ("relu", "sigmoid", "tanh")


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (32,)
    learning_rate: float = 1e-3
    epochs: int = 16
    batch_size: int = 128
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValidationError("learning rate, epochs, and batch size must be positive")
        if any(h <= 0 for h in self.hidden):
            raise ValidationError("hidden sizes must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValidationError(f"activation must be one of {_ACTIVATIONS}")


class MlpModel:
    """Weights, biases, and the hidden activation kind. Immutable by
    convention: arrays are flagged read-only."""

    __slots__ = ("weights", "biases", "activation")

    def __init__(self, weights, biases, activation: str):
        if len(weights) != len(biases) or not weights:
            raise ValidationError("weights and biases must pair up")
        for w, b in zip(weights, biases):
            if w.shape[1] != b.shape[0]:
                raise ValidationError("bias width must match the layer output width")
        for a, b in zip(weights, weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValidationError("consecutive layer dimensions are incompatible")
        if activation not in _ACTIVATIONS:
            raise ValidationError(f"activation must be one of {_ACTIVATIONS}")
        self.weights = tuple(np.ascontiguousarray(w, dtype=np.float64) for w in weights)
        self.biases = tuple(np.ascontiguousarray(b, dtype=np.float64) for b in biases)
        for arr in (*self.weights, *self.biases):
            arr.setflags(write=False)
        self.activation = activation

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.n_inputs, *(w.shape[1] for w in self.weights))


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return np.tanh(z)


def _act_prime(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s)
    return 1.0 - np.tanh(z) ** 2


def _forward(model: MlpModel, X: np.ndarray):
    """Returns (pre-activations per hidden layer, activations incl. input, logits)."""
    zs = []
    activations = [X]
    a = X
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w + b
        zs.append(z)
        a = _act(model.activation, z)
        activations.append(a)
    logits = a @ model.weights[-1] + model.biases[-1]
    return zs, activations, logits


def forward_logits(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    _, _, logits = _forward(model, np.atleast_2d(X))
    return logits[0] if single else logits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict(model: MlpModel, x) -> np.ndarray:
    """Class probabilities; accepts one vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_inputs:
        raise ValidationError(f"input width {x.shape[-1]} does not match the model ({model.n_inputs})")
    return softmax(forward_logits(model, x))


def input_gradient(model: MlpModel, x, y: int) -> np.ndarray:
    """Exact gradient of the cross-entropy loss at label ``y`` with respect
    to the input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("input_gradient expects a single input vector")
    zs, _, logits = _forward(model, x[None, :])
    probs = softmax(logits)[0]
    g = probs.copy()
    g[y] -= 1.0
    for layer in range(len(model.weights) - 1, -1, -1):
        g = g @ model.weights[layer].T
        if layer > 0:
            g = g * _act_prime(model.activation, zs[layer - 1][0])
    return g


def jacobian(model: MlpModel, x) -> np.ndarray:
    """Full (classes x inputs) matrix of logit derivatives."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("jacobian expects a single input vector")
    zs, _, _ = _forward(model, x[None, :])
    J = model.weights[-1].T.copy()
    for layer in range(len(model.weights) - 2, -1, -1):
        J = (J * _act_prime(model.activation, zs[layer][0])[None, :]) @ model.weights[layer].T
    return J


def _init_params(n_inputs: int, hidden: tuple[int, ...], n_classes: int, activation: str, rng):
    sizes = (n_inputs, *hidden, n_classes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        if activation == "relu":
            scale = np.sqrt(2.0 / fan_in)
        else:
            scale = np.sqrt(1.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train(X, y, config: TrainConfig, n_classes: int | None = None) -> tuple[MlpModel, float]:
    """Mini-batch ADAM on softmax cross-entropy. Returns the trained model
    and its final training accuracy."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValidationError("X must be 2-D with one label per row")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if (y < 0).any() or (y >= n_classes).any():
        raise ValidationError("labels must lie in [0, n_classes)")
    counts = np.bincount(y, minlength=n_classes)
    if (counts == 0).any():
        missing = np.flatnonzero(counts == 0)
        raise ValidationError(f"classes {missing.tolist()} have no training samples")

    rng = np.random.default_rng(config.seed)
    weights, biases = _init_params(X.shape[1], config.hidden, n_classes, config.activation, rng)
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    n = len(X)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = X[idx], y[idx]

            zs, activations, logits = _forward(MlpModelView(weights, biases, config.activation), xb)
            probs = softmax(logits)
            with np.errstate(divide="ignore"):
                batch_loss = float(-np.log(probs[np.arange(len(yb)), yb]).mean())
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}; lower the learning rate"
                )

            delta = probs
            delta[np.arange(len(yb)), yb] -= 1.0
            delta /= len(yb)
            grads_w = [None] * len(weights)
            grads_b = [None] * len(biases)
            g = delta
            for layer in range(len(weights) - 1, -1, -1):
                grads_w[layer] = activations[layer].T @ g
                grads_b[layer] = g.sum(axis=0)
                if layer > 0:
                    g = (g @ weights[layer].T) * _act_prime(config.activation, zs[layer - 1])

            step += 1
            grads = grads_w + grads_b
            for p, gr, mi, vi in zip(params, grads, m, v):
                mi += (1 - beta1) * (gr - mi)
                vi += (1 - beta2) * (gr * gr - vi)
                mhat = mi / (1 - beta1**step)
                vhat = vi / (1 - beta2**step)
                p -= config.learning_rate * mhat / (np.sqrt(vhat) + eps)

    model = MlpModel(weights, biases, config.activation)
    accuracy = float((predict(model, X).argmax(axis=1) == y).mean())
    return model, accuracy


class MlpModelView:
    """Lightweight duck-typed view over mutable parameters during training."""

    __slots__ = ("weights", "biases", "activation")

    def __init__(self, weights, biases, activation):
        self.weights = weights
        self.biases = biases
        self.activation = activation


def save_model(model: MlpModel, path) -> None:
    sizes = model.layer_sizes
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BBI", _VERSION, _ACTIVATIONS.index(model.activation), len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ParseError(f"{path}: not a model file (bad magic)")
        version, act_code, n_sizes = struct.unpack("<BBI", fh.read(6))
        if version != _VERSION:
            raise ParseError(f"{path}: unsupported model format version {version}")
        sizes = struct.unpack(f"<{n_sizes}I", fh.read(4 * n_sizes))
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            wbuf = fh.read(fan_in * fan_out * 8)
            bbuf = fh.read(fan_out * 8)
            if len(wbuf) != fan_in * fan_out * 8 or len(bbuf) != fan_out * 8:
                raise ParseError(f"{path}: truncated model file")
            weights.append(np.frombuffer(wbuf, dtype="<f8").reshape(fan_in, fan_out))
            biases.append(np.frombuffer(bbuf, dtype="<f8"))
    return MlpModel(weights, biases, _ACTIVATIONS[act_code])
