"""MNIST ingestion from IDX files and a small tanh MLP with exact backpropagation."""

from __future__ import annotations

import gzip
import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IdxFormatError, RosdhbError
from ..vector import derive_stream
from .base import Objective

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_ENV = "ROSDHB_MNIST_DIR"
FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _read_bytes(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw, expected_magic, ndims, what):
    if len(raw) < 4:
        raise IdxFormatError(f"{what} file too short for a magic number", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(
            f"expected {what} magic {expected_magic:#010x}, found {magic:#010x}", offset=0
        )
    end = 4 + 4 * ndims
    if len(raw) < end:
        raise IdxFormatError(f"{what} header truncated", offset=len(raw))
    return struct.unpack(">" + "I" * ndims, raw[4:end]), end


def read_idx_images(path):
    raw = _read_bytes(path)
    (count, rows, cols), start = _header(raw, IMAGE_MAGIC, 3, "image")
    need = start + count * rows * cols
    if len(raw) < need:
        raise IdxFormatError(
            f"image file truncated: header declares {count} images of {rows}x{cols}",
            offset=len(raw),
        )
    return np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=start).reshape(
        count, rows * cols
    )


def read_idx_labels(path):
    raw = _read_bytes(path)
    (count,), start = _header(raw, LABEL_MAGIC, 1, "label")
    if len(raw) < start + count:
        raise IdxFormatError(
            f"label file truncated: header declares {count} labels", offset=len(raw)
        )
    labels = np.frombuffer(raw, dtype=np.uint8, count=count, offset=start)
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise IdxFormatError(f"label {labels[bad]} out of range 0-9", offset=start + bad)
    return labels


@dataclass
class IdxSplit:
    images: np.ndarray  # (count, 784) float64 in [0, 1]
    labels: np.ndarray  # (count,) int64


def load_mnist_idx(images_path, labels_path):
    """Read one split: validated images scaled to [0, 1] and their labels."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    return IdxSplit(images.astype(np.float64) / 255.0, labels.astype(np.int64))


@dataclass
class MnistDataset:
    train: IdxSplit
    test: IdxSplit


def _locate(root, stem):
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        p = Path(root) / name
        if p.exists():
            return p
    raise RosdhbError(f"no {stem}[.gz] under {root}")


def load_mnist(root=None):
    """Load the four standard IDX files from ``root`` (default: ``$ROSDHB_MNIST_DIR``)."""
    root = root or os.environ.get(DATA_ENV)
    if not root:
        raise RosdhbError(f"dataset root not given and ${DATA_ENV} is unset")
    p = {k: _locate(root, v) for k, v in FILES.items()}
    return MnistDataset(
        load_mnist_idx(p["train_images"], p["train_labels"]),
        load_mnist_idx(p["test_images"], p["test_labels"]),
    )


class MlpModel:
    """``784 -> hidden -> 10`` network, tanh hidden layer, softmax cross-entropy.

    Parameters live in one flat vector laid out as W1, b1, W2, b2 with
    ``W1`` of shape (inputs, hidden).
    """

    def __init__(self, inputs=784, hidden=15, classes=10):
        self.inputs, self.hidden, self.classes = inputs, hidden, classes
        shapes = [(inputs, hidden), (hidden,), (hidden, classes), (classes,)]
        self.shapes = shapes
        sizes = [int(np.prod(s)) for s in shapes]
        self.offsets = np.cumsum([0] + sizes)
        self.num_params = int(self.offsets[-1])

    def unpack(self, theta):
        return [
            theta[self.offsets[j] : self.offsets[j + 1]].reshape(s)
            for j, s in enumerate(self.shapes)
        ]

    def init(self, rng):
        theta = np.zeros(self.num_params)
        W1, _, W2, _ = self.unpack(theta)
        W1[...] = rng.normal(W1.shape) * np.sqrt(1.0 / self.inputs)
        W2[...] = rng.normal(W2.shape) * np.sqrt(1.0 / self.hidden)
        return theta

    def logits(self, theta, X):
        W1, b1, W2, b2 = self.unpack(theta)
        return np.tanh(X @ W1 + b1) @ W2 + b2

    def loss(self, theta, X, y):
        z = self.logits(theta, X)
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-logp[np.arange(len(y)), y].mean())

    def loss_and_grad(self, theta, X, y):
        W1, b1, W2, b2 = self.unpack(theta)
        a = np.tanh(X @ W1 + b1)
        z = a @ W2 + b2
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        m = len(y)
        rows = np.arange(m)
        loss = float(-np.log(p[rows, y]).mean())
        dz = p
        dz[rows, y] -= 1.0
        dz /= m
        grad = np.empty_like(theta)
        gW1, gb1, gW2, gb2 = self.unpack(grad)
        gW2[...] = a.T @ dz
        gb2[...] = dz.sum(axis=0)
        da = (dz @ W2.T) * (1.0 - a * a)
        gW1[...] = X.T @ da
        gb1[...] = da.sum(axis=0)
        return loss, grad

    def predict(self, theta, X):
        # argmax keeps the lowest class id on ties
        return np.argmax(self.logits(theta, X), axis=1)


def test_accuracy(model, theta, split):
    """Fraction of examples whose top logit matches the label."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != model.num_params:
        raise RosdhbError(f"model expects {model.num_params} parameters, got {theta.size}")
    return float(np.mean(model.predict(theta, split.images) == split.labels))


class MnistObjective(Objective):
    """Honest workers own equal random shards of the training split.

    Workers ``0..n_honest-1`` are honest; any ``n_byzantine`` extra workers
    get no data.
    """

    def __init__(self, data, n_honest, rng, model=None, n_byzantine=0):
        if n_honest <= 0:
            raise RosdhbError(f"need a positive number of honest workers, got {n_honest}")
        self.data = data
        self.model = model or MlpModel()
        self.dim = self.model.num_params
        self.num_workers = n_honest + n_byzantine
        self.honest = np.arange(n_honest)
        count = data.train.images.shape[0]
        per = count // n_honest
        if per == 0:
            raise RosdhbError(f"{count} training examples cannot feed {n_honest} workers")
        perm = derive_stream(rng, "shards").generator.permutation(count)[: per * n_honest]
        self.shards = perm.reshape(n_honest, per)
        self.init_rng = derive_stream(rng, "init")

    def shard_digest(self):
        return hashlib.sha256(self.shards.tobytes()).hexdigest()

    def _check(self, i):
        if i >= self.shards.shape[0]:
            raise RosdhbError(f"worker {i} is Byzantine and has no data")

    def worker_loss(self, i, theta):
        self._check(i)
        idx = self.shards[i]
        return self.model.loss(theta, self.data.train.images[idx], self.data.train.labels[idx])

    def full_gradient(self, i, theta):
        self._check(i)
        idx = self.shards[i]
        return self.model.loss_and_grad(
            theta, self.data.train.images[idx], self.data.train.labels[idx]
        )[1]

    def batch_indices(self, i, batch, rng):
        """Shard positions drawn uniformly with replacement; ``batch=None`` means the whole shard."""
        self._check(i)
        if batch is None:
            return self.shards[i]
        return self.shards[i][rng.integers(0, self.shards.shape[1], size=batch)]

    def stochastic_gradient(self, i, theta, batch, rng):
        idx = self.batch_indices(i, batch, rng)
        return self.model.loss_and_grad(
            theta, self.data.train.images[idx], self.data.train.labels[idx]
        )[1]

    def honest_avg_loss(self, theta):
        idx = self.shards.ravel()
        return self.model.loss(theta, self.data.train.images[idx], self.data.train.labels[idx])

    def honest_avg_gradient(self, theta):
        # equal shard sizes: the average of shard means is the mean over their union
        idx = self.shards.ravel()
        return self.model.loss_and_grad(
            theta, self.data.train.images[idx], self.data.train.labels[idx]
        )[1]

    def initial_point(self, rng=None):
        return self.model.init(self.init_rng if rng is None else rng)

    def accuracy(self, theta):
        return test_accuracy(self.model, theta, self.data.test)


def mnist_objective(data, n_honest, rng, n_byzantine=0, model=None):
    return MnistObjective(data, n_honest, rng, model=model, n_byzantine=n_byzantine)


test_accuracy.__test__ = False  # keep pytest from collecting it
