"""Classifier heads, analytic gradients, and the local SGD trainer.

Two architectures share one parameter container: a softmax linear head, and
a one-hidden-ReLU-layer network.  Gradients are derived analytically (and
pinned against finite differences in the tests), so there is no autograd
dependency.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import rng_from_seed

LINEAR = "linear"
MLP = "mlp"
ARCHS = (LINEAR, MLP)

_FORMAT_VERSION = 1


@dataclass
class ModelParams:
    """Weights of one classifier head.

    ``weights[i]`` has shape (out_features, in_features); ``biases[i]`` has
    shape (out_features,).  Linear heads hold one layer, MLPs hold two.
    """

    arch: str
    input_dim: int
    num_classes: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def clone(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            input_dim=self.input_dim,
            num_classes=self.num_classes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (weights then bias per layer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class TrainConfig:
    """Local SGD hyperparameters."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    local_epochs: int = 10
    batch_size: int | None = None   # None: full batch up to 64 rows, else 64
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        return self

    def effective_batch(self, n: int) -> int:
        if self.batch_size is not None:
            return min(self.batch_size, n)
        return n if n <= 64 else 64


def init_params(arch: str, input_dim: int, num_classes: int,
                hidden_units: int = 32, seed: int = 0) -> ModelParams:
    """Fresh parameters: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    if arch not in ARCHS:
        raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")
    rng = rng_from_seed(seed)

    def layer(out_f: int, in_f: int) -> tuple[np.ndarray, np.ndarray]:
        bound = 1.0 / np.sqrt(in_f)
        w = rng.uniform(-bound, bound, size=(out_f, in_f))
        return w, np.zeros(out_f, dtype=np.float64)

    if arch == LINEAR:
        w0, b0 = layer(num_classes, input_dim)
        weights, biases = [w0], [b0]
    else:
        w0, b0 = layer(hidden_units, input_dim)
        w1, b1 = layer(num_classes, hidden_units)
        weights, biases = [w0, w1], [b0, b1]
    return ModelParams(arch=arch, input_dim=input_dim, num_classes=num_classes,
                       weights=weights, biases=biases)


def _forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Return (logits, hidden activations or None for linear)."""
    if params.arch == LINEAR:
        return x @ params.weights[0].T + params.biases[0], None
    z1 = x @ params.weights[0].T + params.biases[0]
    h = np.maximum(z1, 0.0)
    return h @ params.weights[1].T + params.biases[1], h


def logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return _forward(params, np.asarray(x, dtype=np.float64))[0]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict_proba(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits(params, x)))


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return np.argmax(logits(params, x), axis=1)


def loss(params: ModelParams, x: np.ndarray, y: np.ndarray,
         weight_decay: float = 0.0) -> float:
    """Mean cross-entropy plus (weight_decay / 2) * sum of squared weights.

    Biases are exempt from the decay term.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    logp = _log_softmax(logits(params, x))
    ce = -logp[np.arange(len(y)), y].mean()
    reg = 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in params.weights)
    return float(ce + reg)


def loss_gradients(params: ModelParams, x: np.ndarray, y: np.ndarray,
                   weight_decay: float = 0.0) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradients of ``loss`` w.r.t. every weight and bias array."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    z, h = _forward(params, x)
    p = np.exp(_log_softmax(z))
    dlogits = p.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    if params.arch == LINEAR:
        dw0 = dlogits.T @ x + weight_decay * params.weights[0]
        db0 = dlogits.sum(axis=0)
        return [dw0], [db0]

    dw1 = dlogits.T @ h + weight_decay * params.weights[1]
    db1 = dlogits.sum(axis=0)
    dh = dlogits @ params.weights[1]
    dz1 = dh * (h > 0.0)
    dw0 = dz1.T @ x + weight_decay * params.weights[0]
    db0 = dz1.sum(axis=0)
    return [dw0, dw1], [db0, db1]


def sgd_train(params: ModelParams, x: np.ndarray, y: np.ndarray,
              cfg: TrainConfig) -> ModelParams:
    """Minibatch SGD with classical momentum, from a copy of ``params``.

    Update per step: v = momentum * v + g; w -= learning_rate * v.  Batch
    order is a fresh seeded permutation each epoch; the final short batch is
    kept.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("cannot train on an empty set")
    out = params.clone()
    rng = rng_from_seed(cfg.seed)
    bs = cfg.effective_batch(n)
    vel_w = [np.zeros_like(w) for w in out.weights]
    vel_b = [np.zeros_like(b) for b in out.biases]
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            batch = order[start:start + bs]
            gw, gb = loss_gradients(out, x[batch], y[batch], cfg.weight_decay)
            for i in range(len(out.weights)):
                vel_w[i] = cfg.momentum * vel_w[i] + gw[i]
                out.weights[i] -= cfg.learning_rate * vel_w[i]
                vel_b[i] = cfg.momentum * vel_b[i] + gb[i]
                out.biases[i] -= cfg.learning_rate * vel_b[i]
    return out


def penultimate_embedding(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Representation feeding the final layer: the input itself for linear
    heads, the hidden ReLU activations for MLPs."""
    x = np.asarray(x, dtype=np.float64)
    if params.arch == LINEAR:
        return x
    _, h = _forward(params, x)
    return h


def gradient_embedding(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Last-layer loss gradient per sample under its predicted label.

    Row i is (p_i - onehot(argmax p_i)) outer h_i, flattened to length
    num_classes * embed_dim.
    """
    x = np.asarray(x, dtype=np.float64)
    p = predict_proba(params, x)
    h = penultimate_embedding(params, x)
    resid = p.copy()
    resid[np.arange(len(p)), np.argmax(p, axis=1)] -= 1.0
    return (resid[:, :, None] * h[:, None, :]).reshape(len(p), -1)


def save_params(params: ModelParams, path: str | Path) -> None:
    payload = {
        "format_version": np.int64(_FORMAT_VERSION),
        "arch": np.str_(params.arch),
        "input_dim": np.int64(params.input_dim),
        "num_classes": np.int64(params.num_classes),
        "num_layers": np.int64(len(params.weights)),
    }
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    np.savez(path, **payload)


def load_params(path: str | Path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported model file version {version}")
        layers = int(data["num_layers"])
        return ModelParams(
            arch=str(data["arch"]),
            input_dim=int(data["input_dim"]),
            num_classes=int(data["num_classes"]),
            weights=[data[f"w{i}"].astype(np.float64) for i in range(layers)],
            biases=[data[f"b{i}"].astype(np.float64) for i in range(layers)],
        )
