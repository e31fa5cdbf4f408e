"""Trainable models as pure loss/gradient functions on flat parameter vectors.

Two models are provided: a one-hidden-layer perceptron with identity hidden
activation and softmax cross-entropy output, and a linear SVM with hinge
loss and l2 regularization.  All parameters live in a single flat vector so
the training loop can clip, perturb, and aggregate without knowing the
architecture.

Canonical parameter layout (layer-major, row-major within a layer, biases
after the weights of their layer):

    [W1 (hidden x input, row-major), b1 (hidden),
     W2 (classes x hidden, row-major), b2 (classes)]

The SVM is a single weight vector of length input_dim with no bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "MlpArchitecture",
    "MlpModel",
    "SvmModel",
    "mlp_loss",
    "mlp_gradient",
    "mlp_predict",
    "svm_loss",
    "svm_subgradient",
    "svm_predict",
]


@dataclass(frozen=True)
class ModelParams:
    """Immutable flat parameter vector."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 1:
            raise ValueError(f"parameters must be a flat vector, "
                             f"got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("parameters contain non-finite entries")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class MlpArchitecture:
    """Shape of the one-hidden-layer perceptron."""

    input_dim: int
    hidden_units: int = 32
    num_classes: int = 10

    def __post_init__(self):
        for name in ("input_dim", "hidden_units", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, "
                                 f"got {getattr(self, name)}")

    @property
    def dimension(self) -> int:
        d, h, c = self.input_dim, self.hidden_units, self.num_classes
        return h * d + h + c * h + c

    def unpack(self, values: np.ndarray):
        """Split a flat vector into (W1, b1, W2, b2) views."""
        d, h, c = self.input_dim, self.hidden_units, self.num_classes
        if values.shape != (self.dimension,):
            raise ValueError(f"expected {self.dimension} parameters, "
                             f"got shape {values.shape}")
        w1 = values[:h * d].reshape(h, d)
        b1 = values[h * d:h * d + h]
        w2 = values[h * d + h:h * d + h + c * h].reshape(c, h)
        b2 = values[h * d + h + c * h:]
        return w1, b1, w2, b2

    def pack(self, w1, b1, w2, b2) -> np.ndarray:
        """Inverse of unpack; concatenates in the canonical order."""
        return np.concatenate([np.ravel(w1), np.ravel(b1),
                               np.ravel(w2), np.ravel(b2)])


def _check_batch(features: np.ndarray, labels: np.ndarray,
                 input_dim: int) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
    if X.shape[1] != input_dim:
        raise ValueError(f"expected {input_dim} features per row, "
                         f"got {X.shape[1]}")
    return X, y


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def mlp_loss(arch: MlpArchitecture, values: np.ndarray,
             features, labels) -> float:
    """Mean softmax cross-entropy of the batch.

    The hidden layer applies no nonlinearity; logits are
    (X W1^T + b1) W2^T + b2.
    """
    X, y = _check_batch(features, labels, arch.input_dim)
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= arch.num_classes:
        raise ValueError(f"labels outside [0, {arch.num_classes})")
    w1, b1, w2, b2 = arch.unpack(np.asarray(values, dtype=np.float64))
    hidden = X @ w1.T + b1
    logits = hidden @ w2.T + b2
    logp = _log_softmax(logits)
    return float(-logp[np.arange(X.shape[0]), y].mean())


def mlp_gradient(arch: MlpArchitecture, values: np.ndarray,
                 features, labels) -> np.ndarray:
    """Exact gradient of ``mlp_loss`` in the canonical layout."""
    X, y = _check_batch(features, labels, arch.input_dim)
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= arch.num_classes:
        raise ValueError(f"labels outside [0, {arch.num_classes})")
    w1, b1, w2, b2 = arch.unpack(np.asarray(values, dtype=np.float64))
    n = X.shape[0]
    hidden = X @ w1.T + b1
    logits = hidden @ w2.T + b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(n), y] -= 1.0
    probs /= n
    dw2 = probs.T @ hidden
    db2 = probs.sum(axis=0)
    dhidden = probs @ w2
    dw1 = dhidden.T @ X
    db1 = dhidden.sum(axis=0)
    return arch.pack(dw1, db1, dw2, db2)


def mlp_predict(arch: MlpArchitecture, values: np.ndarray,
                features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    w1, b1, w2, b2 = arch.unpack(np.asarray(values, dtype=np.float64))
    logits = (X @ w1.T + b1) @ w2.T + b2
    return logits.argmax(axis=1)


def _check_svm_batch(values, features, labels):
    w = np.asarray(values, dtype=np.float64)
    X, y = _check_batch(features, labels, w.shape[0])
    y = np.asarray(y, dtype=np.float64)
    bad = np.setdiff1d(np.unique(y), [-1.0, 1.0])
    if bad.size:
        raise ValueError(f"labels must be -1 or +1, got {bad.tolist()}")
    return w, X, y


def svm_loss(values: np.ndarray, features, labels, reg_coefficient: float,
             paper_margin: bool = False) -> float:
    """Mean hinge loss plus (reg/2) ||w||^2.

    The default hinge is max(0, 1 - y * <w, x>).  With paper_margin=True
    the margin term is max(0, y - <w, x>) instead, matching a variant that
    subtracts the raw score from the label.
    """
    if reg_coefficient <= 0:
        raise ValueError(
            f"reg_coefficient must be > 0, got {reg_coefficient}")
    w, X, y = _check_svm_batch(values, features, labels)
    scores = X @ w
    if paper_margin:
        hinge = np.maximum(0.0, y - scores)
    else:
        hinge = np.maximum(0.0, 1.0 - y * scores)
    return float(hinge.mean() + 0.5 * reg_coefficient * (w @ w))


def svm_subgradient(values: np.ndarray, features, labels,
                    reg_coefficient: float,
                    paper_margin: bool = False) -> np.ndarray:
    """A subgradient of ``svm_loss``; the hinge kink contributes zero."""
    if reg_coefficient <= 0:
        raise ValueError(
            f"reg_coefficient must be > 0, got {reg_coefficient}")
    w, X, y = _check_svm_batch(values, features, labels)
    scores = X @ w
    n = X.shape[0]
    if paper_margin:
        active = y - scores > 0
        grad = -(active.astype(np.float64) @ X) / n
    else:
        active = 1.0 - y * scores > 0
        grad = -((active * y) @ X) / n
    return grad + reg_coefficient * w


def svm_predict(values: np.ndarray, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    scores = X @ np.asarray(values, dtype=np.float64)
    return np.where(scores >= 0, 1.0, -1.0)


class MlpModel:
    """Engine-facing wrapper: loss/gradient/accuracy on integer labels."""

    def __init__(self, arch: MlpArchitecture):
        self.arch = arch

    @property
    def dimension(self) -> int:
        return self.arch.dimension

    def loss(self, values, features, labels) -> float:
        return mlp_loss(self.arch, values, features, labels)

    def gradient(self, values, features, labels) -> np.ndarray:
        return mlp_gradient(self.arch, values, features, labels)

    def accuracy(self, values, features, labels) -> float:
        pred = mlp_predict(self.arch, values, features)
        return float((pred == np.asarray(labels)).mean())


class SvmModel:
    """Engine-facing wrapper: hinge loss on +-1 labels."""

    def __init__(self, input_dim: int, reg_coefficient: float = 1e-2,
                 paper_margin: bool = False):
        if input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {input_dim}")
        self.input_dim = input_dim
        self.reg_coefficient = reg_coefficient
        self.paper_margin = paper_margin

    @property
    def dimension(self) -> int:
        return self.input_dim

    def loss(self, values, features, labels) -> float:
        return svm_loss(values, features, labels, self.reg_coefficient,
                        self.paper_margin)

    def gradient(self, values, features, labels) -> np.ndarray:
        return svm_subgradient(values, features, labels,
                               self.reg_coefficient, self.paper_margin)

    def accuracy(self, values, features, labels) -> float:
        pred = svm_predict(values, features)
        return float((pred == np.asarray(labels, dtype=np.float64)).mean())
