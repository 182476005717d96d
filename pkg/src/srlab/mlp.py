"""One-hidden-layer perceptron mapping a 3x3 LR patch to a 2x2 HR block.

hidden = tanh(w1 @ x + b1), output = sigmoid(w2 @ hidden + b2), trained by
per-sample SGD on the mean squared error over the outputs, with
validation-based early stopping.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import (
    BadMagicError,
    DimensionError,
    FileFormatError as ModelFormatError,
    TrailingBytesError,
    TruncatedFileError,
    UnsupportedVersionError,
)

log = logging.getLogger(__name__)

INPUT_SIZE = 9
OUTPUT_SIZE = 4

MODEL_MAGIC = b"MLPSR"
MODEL_VERSION = 1
_HEADER = struct.Struct("<5sB4I")
_MAX_LAYER = 1 << 16


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        self.w1 = np.ascontiguousarray(self.w1, dtype=np.float64)
        self.b1 = np.ascontiguousarray(self.b1, dtype=np.float64)
        self.w2 = np.ascontiguousarray(self.w2, dtype=np.float64)
        self.b2 = np.ascontiguousarray(self.b2, dtype=np.float64)
        hidden, n_in = self.w1.shape
        n_out, hidden2 = self.w2.shape
        if self.b1.shape != (hidden,) or hidden2 != hidden or self.b2.shape != (n_out,):
            raise ValueError("inconsistent layer dimensions")
        if not all(np.all(np.isfinite(p)) for p in self.params()):
            raise ValueError("model parameters must be finite")

    @property
    def input_size(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    @property
    def output_size(self) -> int:
        return self.w2.shape[0]

    def params(self):
        return (self.w1, self.b1, self.w2, self.b2)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "MlpModel":
        return MlpModel(*(p.copy() for p in self.params()))

    def equals(self, other: "MlpModel") -> bool:
        """Bit-for-bit parameter equality."""
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.params(), other.params())
        )


@dataclass
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainReport:
    train_mse: list = field(default_factory=list)
    validation_mse: list = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""

    @property
    def best_validation_mse(self) -> float:
        return self.validation_mse[self.best_epoch]


def init_model(hidden_size=20, rng_seed=0, input_size=INPUT_SIZE, output_size=OUTPUT_SIZE):
    """Glorot-uniform weights, zero biases; deterministic in ``rng_seed``."""
    if hidden_size < 1:
        raise ValueError("hidden_size must be >= 1")
    rng = np.random.default_rng(rng_seed)
    r1 = math.sqrt(6.0 / (input_size + hidden_size))
    r2 = math.sqrt(6.0 / (hidden_size + output_size))
    w1 = rng.uniform(-r1, r1, size=(hidden_size, input_size))
    w2 = rng.uniform(-r2, r2, size=(output_size, hidden_size))
    return MlpModel(w1, np.zeros(hidden_size), w2, np.zeros(output_size))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def forward(model: MlpModel, x):
    """Network output for one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_size:
        raise ValueError(f"expected {model.input_size} inputs, got {x.shape[-1]}")
    hidden = np.tanh(x @ model.w1.T + model.b1)
    return _sigmoid(hidden @ model.w2.T + model.b2)


def loss(model: MlpModel, x, target) -> float:
    out = forward(model, x)
    return float(np.mean((out - np.asarray(target, dtype=np.float64)) ** 2))


def backward(model: MlpModel, x, target) -> Gradients:
    """Gradient of the per-sample mean squared error with respect to every parameter."""
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if x.shape != (model.input_size,) or target.shape != (model.output_size,):
        raise ValueError("input/target dimensions do not match the model")
    hidden = np.tanh(model.w1 @ x + model.b1)
    out = _sigmoid(model.w2 @ hidden + model.b2)
    d_out = (2.0 / model.output_size) * (out - target) * out * (1.0 - out)
    d_hidden = (model.w2.T @ d_out) * (1.0 - hidden * hidden)
    return Gradients(
        w1=np.outer(d_hidden, x),
        b1=d_hidden,
        w2=np.outer(d_out, hidden),
        b2=d_out,
    )


def sgd_step(model: MlpModel, x, target, learning_rate) -> MlpModel:
    """Return a new model after one plain SGD update on a single sample."""
    g = backward(model, x, target)
    return MlpModel(
        model.w1 - learning_rate * g.w1,
        model.b1 - learning_rate * g.b1,
        model.w2 - learning_rate * g.w2,
        model.b2 - learning_rate * g.b2,
    )


# ----------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _sgd_epoch(w1, b1, w2, b2, inputs, targets, order, lr, batch_size):
    n_hidden, n_in = w1.shape
    n_out = w2.shape[0]
    hidden = np.empty(n_hidden)
    out = np.empty(n_out)
    d_out = np.empty(n_out)
    d_hidden = np.empty(n_hidden)
    gw1 = np.zeros_like(w1)
    gb1 = np.zeros_like(b1)
    gw2 = np.zeros_like(w2)
    gb2 = np.zeros_like(b2)
    n = order.shape[0]
    start = 0
    while start < n:
        stop = min(start + batch_size, n)
        gw1[:] = 0.0
        gb1[:] = 0.0
        gw2[:] = 0.0
        gb2[:] = 0.0
        for idx in range(start, stop):
            s = order[idx]
            for j in range(n_hidden):
                acc = b1[j]
                for i in range(n_in):
                    acc += w1[j, i] * inputs[s, i]
                hidden[j] = math.tanh(acc)
            for k in range(n_out):
                acc = b2[k]
                for j in range(n_hidden):
                    acc += w2[k, j] * hidden[j]
                o = 1.0 / (1.0 + math.exp(-acc))
                out[k] = o
                d_out[k] = (2.0 / n_out) * (o - targets[s, k]) * o * (1.0 - o)
            for j in range(n_hidden):
                acc = 0.0
                for k in range(n_out):
                    acc += w2[k, j] * d_out[k]
                d_hidden[j] = acc * (1.0 - hidden[j] * hidden[j])
            for k in range(n_out):
                gb2[k] += d_out[k]
                for j in range(n_hidden):
                    gw2[k, j] += d_out[k] * hidden[j]
            for j in range(n_hidden):
                gb1[j] += d_hidden[j]
                for i in range(n_in):
                    gw1[j, i] += d_hidden[j] * inputs[s, i]
        scale = lr / (stop - start)
        for j in range(n_hidden):
            b1[j] -= scale * gb1[j]
            for i in range(n_in):
                w1[j, i] -= scale * gw1[j, i]
        for k in range(n_out):
            b2[k] -= scale * gb2[k]
            for j in range(n_hidden):
                w2[k, j] -= scale * gw2[k, j]
        start = stop


@numba.njit(cache=True)
def _mean_loss(w1, b1, w2, b2, inputs, targets):
    n_hidden, n_in = w1.shape
    n_out = w2.shape[0]
    hidden = np.empty(n_hidden)
    total = 0.0
    for s in range(inputs.shape[0]):
        for j in range(n_hidden):
            acc = b1[j]
            for i in range(n_in):
                acc += w1[j, i] * inputs[s, i]
            hidden[j] = math.tanh(acc)
        sample = 0.0
        for k in range(n_out):
            acc = b2[k]
            for j in range(n_hidden):
                acc += w2[k, j] * hidden[j]
            diff = 1.0 / (1.0 + math.exp(-acc)) - targets[s, k]
            sample += diff * diff
        total += sample / n_out
    return total / inputs.shape[0]


def run_epoch(model: MlpModel, inputs, targets, order, learning_rate, batch_size=1) -> None:
    """Apply one SGD pass over ``inputs[order]``, updating ``model`` in place."""
    _sgd_epoch(
        model.w1, model.b1, model.w2, model.b2,
        np.ascontiguousarray(inputs, dtype=np.float64),
        np.ascontiguousarray(targets, dtype=np.float64),
        np.ascontiguousarray(order, dtype=np.int64),
        float(learning_rate), int(batch_size),
    )


def mean_loss(model: MlpModel, inputs, targets) -> float:
    """Mean over samples of the per-sample output MSE."""
    return float(_mean_loss(
        model.w1, model.b1, model.w2, model.b2,
        np.ascontiguousarray(inputs, dtype=np.float64),
        np.ascontiguousarray(targets, dtype=np.float64),
    ))


def train(model: MlpModel, split, cfg: TrainConfig, progress=None):
    """Train a copy of ``model`` and return ``(best_model, report)``.

    ``split`` is a :class:`srlab.dataset.DatasetSplit` (anything with
    ``train`` / ``validation`` sets exposing ``inputs`` and ``targets``).
    The parameters of the best validation epoch are returned; training
    stops after ``cfg.patience`` epochs without validation improvement.
    """
    train_set, val_set = split.train, split.validation
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if train_set.inputs.shape[1] != model.input_size or train_set.targets.shape[1] != model.output_size:
        raise ValueError("dataset dimensions do not match the model")

    current = model.copy()
    best = current.copy()
    report = TrainReport()
    rng = np.random.default_rng(cfg.rng_seed)
    since_best = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_set))
        run_epoch(current, train_set.inputs, train_set.targets, order, cfg.learning_rate, cfg.batch_size)
        train_mse = mean_loss(current, train_set.inputs, train_set.targets)
        val_mse = mean_loss(current, val_set.inputs, val_set.targets)
        if not (math.isfinite(train_mse) and math.isfinite(val_mse)):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch} (lr={cfg.learning_rate}); lower the learning rate"
            )
        report.train_mse.append(train_mse)
        report.validation_mse.append(val_mse)
        if report.best_epoch < 0 or val_mse < report.validation_mse[report.best_epoch]:
            report.best_epoch = epoch
            best = current.copy()
            since_best = 0
        else:
            since_best += 1
        log.debug("epoch %d train %.6g val %.6g", epoch, train_mse, val_mse)
        if progress is not None:
            progress(epoch, train_mse, val_mse)
        if since_best >= cfg.patience:
            report.stop_reason = "patience"
            break
    else:
        report.stop_reason = "max_epochs"
    return best, report


# ------------------------------------------------------------- persistence


def save_model(model: MlpModel, path) -> None:
    header = _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.input_size, model.hidden_size, model.output_size, 0)
    body = b"".join(p.astype("<f8").tobytes() for p in model.params())
    Path(path).write_bytes(header + body)


def load_model(path) -> MlpModel:
    data = Path(path).read_bytes()
    if len(data) < len(MODEL_MAGIC) or data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise BadMagicError(f"{path}: not a model file (bad magic)")
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    _, version, n_in, n_hidden, n_out, reserved = _HEADER.unpack_from(data)
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if reserved != 0 or not all(0 < n <= _MAX_LAYER for n in (n_in, n_hidden, n_out)):
        raise DimensionError(f"{path}: implausible layer sizes ({n_in}, {n_hidden}, {n_out})")
    shapes = [(n_hidden, n_in), (n_hidden,), (n_out, n_hidden), (n_out,)]
    expected = _HEADER.size + 8 * sum(math.prod(s) for s in shapes)
    if len(data) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise TrailingBytesError(f"{path}: {len(data) - expected} unexpected trailing bytes")
    arrays, offset = [], _HEADER.size
    for shape in shapes:
        count = math.prod(shape)
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64))
        offset += 8 * count
    try:
        return MlpModel(*arrays)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
