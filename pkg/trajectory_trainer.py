#!/usr/bin/env python3
"""
Small fully-connected classifier trained with plain SGD, recording every iterate.

This script handles:
1. Datasets: Gaussian blobs, or IDX image/label files (MNIST layout)
2. A NumPy MLP (ReLU hidden layers, softmax cross-entropy) on one flat parameter vector
3. Mini-batch SGD that records (iteration, weights, loss, test accuracy) at every step
4. Sliding windows over the recorded trajectory, each window becoming a point cloud
5. The MAGTRJ1 binary trajectory format
"""

import gzip
import math
import struct
import logging
from dataclasses import dataclass

import numpy as np

from errors import DivergedLoss, InsufficientRecords, InvalidConfig, MalformedFile, MalformedIdx
from metric_core import PointCloud
from synthetic_gen import counter_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

TRAJECTORY_MAGIC = b"MAGTRJ1"
TRAJECTORY_HEADER = struct.Struct("<7sI")

TRAIN_FRACTION = 0.8
ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    n_classes: int

    @property
    def input_dim(self):
        return self.x_train.shape[1]


@dataclass(frozen=True)
class TrainerConfig:
    layer_sizes: tuple
    learning_rate: float = 0.1
    batch_size: int = 100
    iterations: int = 10000
    seed: int = 0
    eval_every: int = 1000
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise InvalidConfig(f"need >= 2 layers of size >= 1, got {self.layer_sizes}")
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise InvalidConfig(f"learning rate must be finite and >= 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.iterations < 1 or self.eval_every < 1:
            raise InvalidConfig("batch_size, iterations and eval_every must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")


@dataclass
class TrajectoryLog:
    """Row r of `weights` is the flattened parameter vector after iteration iterations[r]."""
    iterations: np.ndarray
    weights: np.ndarray
    train_loss: np.ndarray
    test_accuracy: np.ndarray

    @property
    def d(self):
        return self.weights.shape[1]

    def __len__(self):
        return len(self.iterations)


@dataclass(frozen=True)
class WindowView:
    window_id: int
    cloud: PointCloud
    end_test_accuracy: float
    first_iteration: int = 0
    last_iteration: int = 0


def simplex_means(n_classes, input_dim, separation):
    """Class means at mutual distance `separation` (regular simplex in the first n_classes-1 axes)."""
    means = np.zeros((n_classes, input_dim))
    if n_classes == 1:
        return means
    if input_dim < n_classes - 1:
        raise InvalidConfig(f"{n_classes} equidistant means need input_dim >= {n_classes - 1}, got {input_dim}")
    vertices = np.eye(n_classes) - 1.0 / n_classes
    basis, _ = np.linalg.qr(vertices.T)
    coords = vertices @ basis[:, :n_classes - 1]
    means[:, :n_classes - 1] = coords * (separation / math.sqrt(2.0))
    return means


def split_dataset(x, y, n_classes):
    """Deterministic split: first 80% of rows for training, the rest for testing."""
    n = len(y)
    n_train = int(round(TRAIN_FRACTION * n))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    return Dataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:], n_classes)


def gen_blobs(n_per_class, n_classes, input_dim, separation, seed):
    """Unit-covariance Gaussian clusters, shuffled with the seed, split 80/20."""
    if min(n_per_class, n_classes, input_dim) < 1:
        raise InvalidConfig("n_per_class, n_classes and input_dim must be >= 1")
    means = simplex_means(n_classes, input_dim, separation)
    rng = counter_rng(seed, 6)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    labels = labels[rng.permutation(labels.size)]
    x = means[labels] + rng.standard_normal((labels.size, input_dim))
    logging.info(f"Generated {labels.size} blob samples: {n_classes} classes in R^{input_dim}, "
                 f"separation {separation}")
    return split_dataset(x, labels, n_classes)


def _read_idx(path, expected_magic):
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    if len(data) < 4:
        raise MalformedIdx(f"{path}: truncated magic number", offset=len(data))
    magic = struct.unpack_from(">I", data, 0)[0]
    if magic != expected_magic:
        raise MalformedIdx(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise MalformedIdx(f"{path}: truncated dimension header", offset=len(data))
    dims = struct.unpack_from(">" + "I" * ndim, data, 4)
    count = int(np.prod(dims))
    if len(data) < header + count:
        raise MalformedIdx(f"{path}: expected {count} data bytes after the header, found {len(data) - header}",
                           offset=len(data))
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path):
    """IDX images (magic 0x00000803) and labels (0x00000801); pixels scaled to [0, 1]. Returns (x, y)."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise MalformedIdx(f"{images.shape[0]} images but {labels.shape[0]} labels", offset=8)
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    logging.info(f"Loaded {x.shape[0]} IDX samples with {x.shape[1]} features from {images_path}")
    return x, y


def parameter_count(layer_sizes):
    return sum(a * b + b for a, b in zip(layer_sizes, layer_sizes[1:]))


def unflatten(vector, layer_sizes):
    """Layer (W, b) views into the flat vector: all weight matrices first, then all biases."""
    weights, biases, offset = [], [], 0
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        weights.append(vector[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
    for fan_out in layer_sizes[1:]:
        biases.append(vector[offset:offset + fan_out])
        offset += fan_out
    return list(zip(weights, biases))


def flatten(params):
    return np.concatenate([w.ravel() for w, _ in params] + [b.ravel() for _, b in params])


def init_parameters(layer_sizes, seed, scheme="he"):
    """He (or Xavier) normal weights, zero biases."""
    rng = counter_rng(seed, 8)
    vector = np.zeros(parameter_count(layer_sizes))
    for w, _ in unflatten(vector, layer_sizes):
        fan_in, fan_out = w.shape
        std = math.sqrt(2.0 / fan_in) if scheme == "he" else math.sqrt(2.0 / (fan_in + fan_out))
        w[...] = rng.standard_normal(w.shape) * std
    return vector


def _activate(z, activation):
    return np.maximum(z, 0.0) if activation == "relu" else np.tanh(z)


def _activation_grad(z, a, activation):
    return (z > 0).astype(z.dtype) if activation == "relu" else 1.0 - a * a


def forward(vector, layer_sizes, x, activation="relu"):
    """Logits for a batch."""
    params = unflatten(vector, layer_sizes)
    a = x
    for index, (w, b) in enumerate(params):
        z = a @ w + b
        a = z if index == len(params) - 1 else _activate(z, activation)
    return a


def softmax_cross_entropy(logits, y):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(y)), y].mean()), log_probs


def loss_and_gradient(vector, layer_sizes, x, y, activation="relu"):
    """Mean softmax cross-entropy and its gradient with respect to the flat parameter vector."""
    params = unflatten(vector, layer_sizes)
    inputs, pre, post = [], [], []
    a = x
    for index, (w, b) in enumerate(params):
        inputs.append(a)
        z = a @ w + b
        a = z if index == len(params) - 1 else _activate(z, activation)
        pre.append(z)
        post.append(a)

    loss, log_probs = softmax_cross_entropy(a, y)
    delta = np.exp(log_probs)
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)

    grad = np.zeros_like(vector)
    grad_params = unflatten(grad, layer_sizes)
    for index in range(len(params) - 1, -1, -1):
        gw, gb = grad_params[index]
        gw[...] = inputs[index].T @ delta
        gb[...] = delta.sum(axis=0)
        if index > 0:
            delta = (delta @ params[index][0].T) * _activation_grad(pre[index - 1], post[index - 1], activation)
    return loss, grad


def accuracy(vector, layer_sizes, x, y, activation="relu"):
    if len(y) == 0:
        return math.nan
    return float(np.mean(np.argmax(forward(vector, layer_sizes, x, activation), axis=1) == y))


def train_and_record(config, data):
    """Plain mini-batch SGD; every iterate is recorded. Deterministic for a given config and dataset."""
    if data.input_dim != config.layer_sizes[0]:
        raise InvalidConfig(f"dataset has {data.input_dim} features but the input layer has {config.layer_sizes[0]}")
    if data.n_classes != config.layer_sizes[-1]:
        raise InvalidConfig(f"dataset has {data.n_classes} classes but the output layer has {config.layer_sizes[-1]}")
    if config.learning_rate == 0:
        logging.warning("Learning rate is 0: the recorded weights will not move")

    sizes = config.layer_sizes
    vector = init_parameters(sizes, config.seed)
    n_train = len(data.y_train)
    batch = min(config.batch_size, n_train)

    iterations = np.arange(1, config.iterations + 1, dtype=np.uint64)
    weights = np.empty((config.iterations, vector.size))
    losses = np.empty(config.iterations)
    accuracies = np.full(config.iterations, math.nan)

    logging.info(f"Training {sizes} for {config.iterations} iterations (lr={config.learning_rate}, "
                 f"batch={batch}, seed={config.seed}, {vector.size} parameters)")
    epoch, order, cursor = 0, None, n_train
    for step in range(config.iterations):
        if cursor + batch > n_train:
            order = counter_rng(config.seed, 7, epoch).permutation(n_train)
            epoch += 1
            cursor = 0
        index = order[cursor:cursor + batch]
        cursor += batch

        loss, grad = loss_and_gradient(vector, sizes, data.x_train[index], data.y_train[index], config.activation)
        if not math.isfinite(loss):
            raise DivergedLoss(step + 1, loss)
        vector = vector - config.learning_rate * grad

        weights[step] = vector
        losses[step] = loss
        if (step + 1) % config.eval_every == 0:
            accuracies[step] = accuracy(vector, sizes, data.x_test, data.y_test, config.activation)
            logging.info(f"Iteration {step + 1}: loss={loss:.4f}, test accuracy={accuracies[step]:.4f}")

    if not np.all(np.isfinite(weights)):
        raise DivergedLoss(int(np.argwhere(~np.isfinite(weights))[0][0]) + 1, math.nan)
    return TrajectoryLog(iterations, weights, losses, accuracies)


def sliding_windows(log, window=1000, stride=1000, thin=1):
    """Window k covers records [k*stride + 1, k*stride + window]; `thin` keeps every thin-th record."""
    if window < 2 or stride < 1 or thin < 1:
        raise InvalidConfig(f"need window >= 2, stride >= 1, thin >= 1; got {window}, {stride}, {thin}")
    if len(log) < window:
        raise InsufficientRecords(f"trajectory has {len(log)} records, a window needs {window}")
    count = (len(log) - window) // stride + 1
    windows = []
    for k in range(count):
        start, stop = k * stride, k * stride + window
        rows = np.arange(start, stop)[thin - 1::thin] if thin > 1 else np.arange(start, stop)
        windows.append(WindowView(k, PointCloud(log.weights[rows]), float(log.test_accuracy[stop - 1]),
                                  int(log.iterations[start]), int(log.iterations[stop - 1])))
    logging.info(f"Split {len(log)} records into {count} windows of {window} (stride {stride}, thin {thin})")
    return windows


def _record_dtype(d):
    return np.dtype([("iteration", "<u8"), ("train_loss", "<f8"), ("test_accuracy", "<f8"),
                     ("weights", "<f8", (d,))])


def write_trajectory(log, path):
    records = np.empty(len(log), dtype=_record_dtype(log.d))
    records["iteration"] = log.iterations
    records["train_loss"] = log.train_loss
    records["test_accuracy"] = log.test_accuracy
    records["weights"] = log.weights
    with open(path, "wb") as f:
        f.write(TRAJECTORY_HEADER.pack(TRAJECTORY_MAGIC, log.d))
        f.write(records.tobytes())
    logging.info(f"Wrote {len(log)} trajectory records (d={log.d}) to {path}")


def read_trajectory(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < TRAJECTORY_HEADER.size:
        raise MalformedFile(f"{path}: truncated header", offset=len(data))
    magic, d = TRAJECTORY_HEADER.unpack_from(data, 0)
    if magic != TRAJECTORY_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}", offset=0)
    dtype = _record_dtype(d)
    body = len(data) - TRAJECTORY_HEADER.size
    if d < 1 or body % dtype.itemsize != 0:
        raise MalformedFile(f"{path}: {body} bytes is not a whole number of {dtype.itemsize}-byte records",
                            offset=TRAJECTORY_HEADER.size + body - body % dtype.itemsize)
    records = np.frombuffer(data, dtype=dtype, offset=TRAJECTORY_HEADER.size)
    iterations = records["iteration"].copy()
    if len(iterations) and (iterations[0] != 1 or np.any(np.diff(iterations.astype(np.int64)) <= 0)):
        raise MalformedFile(f"{path}: iterations must start at 1 and increase strictly")
    logging.info(f"Read {len(records)} trajectory records (d={d}) from {path}")
    return TrajectoryLog(iterations, records["weights"].copy(), records["train_loss"].copy(),
                         records["test_accuracy"].copy())
