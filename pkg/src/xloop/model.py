"""One-hidden-layer MLP binary classifier (ReLU hidden, sigmoid output).

The hidden layer is as wide as the input. Training is mini-batch Adam on
binary cross-entropy with optional L1/L2/L12 weight penalties and early
stopping on a stratified validation split.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Dataset, SplitConfig, split_indices

REGULARIZATIONS = ("none", "L1", "L2", "L12")
_PROBA_EPS = 1e-15

MAGIC = b"XLOOPMLP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ")


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 500
    patience: int = 10
    batch_size: int = 32
    validation_fraction: float = 0.1
    regularization: str = "none"
    factor: float = 0.0001
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.factor < 0:
            raise ValueError("factor must be >= 0")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be >= 1")
        if self.regularization not in REGULARIZATIONS:
            raise ValueError(f"regularization must be one of {REGULARIZATIONS}")


@dataclass(frozen=True)
class TrainHistory:
    val_loss: tuple[float, ...]
    best_epoch: int  # 0-based index into val_loss

    @property
    def epochs_run(self) -> int:
        return len(self.val_loss)


@dataclass(frozen=True)
class MLPModel:
    W1: np.ndarray  # (m, m); column h holds the input weights of hidden unit h
    b1: np.ndarray  # (m,)
    W2: np.ndarray  # (m,)
    b2: float
    history: TrainHistory | None = field(default=None, compare=False)

    def __post_init__(self):
        W1 = np.array(self.W1, dtype=float)
        m = W1.shape[0]
        if W1.shape != (m, m):
            raise ValueError(f"W1 must be square (hidden width == input width), got {W1.shape}")
        b1 = np.array(self.b1, dtype=float).reshape(m)
        W2 = np.array(self.W2, dtype=float).reshape(m)
        for a in (W1, b1, W2):
            a.setflags(write=False)
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "W2", W2)
        object.__setattr__(self, "b2", float(self.b2))

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @classmethod
    def zeros(cls, m: int) -> "MLPModel":
        return cls(np.zeros((m, m)), np.zeros(m), np.zeros(m), 0.0)

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": np.array([self.b2])}

    def digest(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()


def _check_dim(model: MLPModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise ValueError(
            f"dimension mismatch: model expects {model.input_dim} features, got {X.shape[1]}"
        )
    return X


def logits(model: MLPModel, X) -> np.ndarray:
    X = _check_dim(model, X)
    hidden = np.maximum(X @ model.W1 + model.b1, 0.0)
    return hidden @ model.W2 + model.b2


def predict_proba(model: MLPModel, X) -> np.ndarray:
    return np.clip(expit(logits(model, X)), _PROBA_EPS, 1.0 - _PROBA_EPS)


def predict_proba_rowwise(model: MLPModel, X) -> np.ndarray:
    """Forward pass with a fixed per-row accumulation order.

    Unlike the BLAS path, a row's result depends only on that row, and a
    feature whose weights are all zero leaves the output bit-identical.
    Used where exact equalities between evaluations matter.
    """
    X = _check_dim(model, X)
    pre = np.broadcast_to(model.b1, (X.shape[0], model.input_dim)).copy()
    for j in range(model.input_dim):
        pre += X[:, j:j + 1] * model.W1[j]
    hidden = np.maximum(pre, 0.0)
    z = np.full(X.shape[0], model.b2)
    for h in range(model.input_dim):
        z += hidden[:, h] * model.W2[h]
    return np.clip(expit(z), _PROBA_EPS, 1.0 - _PROBA_EPS)


def predict_label(model: MLPModel, X) -> np.ndarray:
    return (predict_proba(model, X) >= 0.5).astype(int)


# --- loss and gradients ---------------------------------------------------

def penalty(params: dict[str, np.ndarray], regularization: str, factor: float) -> float:
    if regularization == "none" or factor == 0:
        return 0.0
    total = 0.0
    for key in ("W1", "W2"):
        w = params[key]
        if regularization in ("L1", "L12"):
            total += factor * np.abs(w).sum()
        if regularization in ("L2", "L12"):
            total += factor * (w * w).sum()
    return float(total)


def loss_and_grads(params: dict[str, np.ndarray], X: np.ndarray, y: np.ndarray,
                   regularization: str = "none", factor: float = 0.0):
    """Mean BCE (plus weight penalty) and its gradient w.r.t. every parameter."""
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    n = X.shape[0]
    pre = X @ W1 + b1
    hidden = np.maximum(pre, 0.0)
    z = hidden @ W2 + b2[0]
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (expit(z) - y) / n
    grads = {
        "W2": hidden.T @ dz,
        "b2": np.array([dz.sum()]),
    }
    dpre = np.outer(dz, W2) * (pre > 0)
    grads["W1"] = X.T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    if regularization != "none" and factor > 0:
        loss += penalty(params, regularization, factor)
        for key in ("W1", "W2"):
            w = params[key]
            if regularization in ("L1", "L12"):
                grads[key] = grads[key] + factor * np.sign(w)
            if regularization in ("L2", "L12"):
                grads[key] = grads[key] + 2.0 * factor * w
    return loss, grads


def bce(model: MLPModel, X, y) -> float:
    z = logits(model, X)
    return float(np.mean(np.logaddexp(0.0, z) - np.asarray(y) * z))


def init_params(m: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(m)
    return {
        "W1": rng.uniform(-bound, bound, size=(m, m)),
        "b1": rng.uniform(-bound, bound, size=m),
        "W2": rng.uniform(-bound, bound, size=m),
        "b2": rng.uniform(-bound, bound, size=1),
    }


def _to_model(params, history=None) -> MLPModel:
    return MLPModel(params["W1"].copy(), params["b1"].copy(), params["W2"].copy(),
                    float(params["b2"][0]), history)


def train(train_set: Dataset, cfg: TrainConfig = TrainConfig()) -> MLPModel:
    """Fit an MLP; the returned model holds the best-validation-loss weights."""
    y_all = train_set.y
    if len(np.unique(y_all)) < 2:
        raise TrainingError("training set needs both classes")
    fit_idx, val_idx = split_indices(y_all, SplitConfig(cfg.validation_fraction, cfg.seed))
    if len(val_idx) == 0:
        raise TrainingError("empty validation split")
    X, y = train_set.X[fit_idx], y_all[fit_idx].astype(float)
    Xv, yv = train_set.X[val_idx], y_all[val_idx].astype(float)

    rng = np.random.default_rng(cfg.seed)
    params = init_params(train_set.m, rng)
    moments = {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-7
    step = 0

    def val_loss(p) -> float:
        z = np.maximum(Xv @ p["W1"] + p["b1"], 0.0) @ p["W2"] + p["b2"][0]
        return float(np.mean(np.logaddexp(0.0, z) - yv * z))

    history: list[float] = []
    best = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    stale = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(params, X[batch], y[batch], cfg.regularization, cfg.factor)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch + 1}")
            step += 1
            for key, g in grads.items():
                m1, m2 = moments[key]
                m1 *= beta1
                m1 += (1 - beta1) * g
                m2 *= beta2
                m2 += (1 - beta2) * g * g
                mhat = m1 / (1 - beta1 ** step)
                vhat = m2 / (1 - beta2 ** step)
                params[key] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        vl = val_loss(params)
        if not np.isfinite(vl):
            raise TrainingError(f"non-finite validation loss at epoch {epoch + 1}")
        history.append(vl)
        if vl < best:
            best, best_epoch, stale = vl, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return _to_model(best_params, TrainHistory(tuple(history), best_epoch))


# --- persistence ----------------------------------------------------------

def to_bytes(model: MLPModel) -> bytes:
    m = model.input_dim
    body = np.concatenate([model.W1.ravel(order="C"), model.b1, model.W2, [model.b2]])
    return _HEADER.pack(MAGIC, FORMAT_VERSION, m) + body.astype("<f8").tobytes()


def from_bytes(blob: bytes) -> MLPModel:
    if len(blob) < _HEADER.size:
        raise ModelFormatError("model file truncated")
    magic, version, m = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"model format version {version}, expected {FORMAT_VERSION}")
    expected = m * m + 2 * m + 1
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if body.size != expected:
        raise ModelFormatError(f"model body has {body.size} values, expected {expected}")
    W1 = body[: m * m].reshape(m, m)
    b1 = body[m * m: m * m + m]
    W2 = body[m * m + m: m * m + 2 * m]
    return MLPModel(W1, b1, W2, float(body[-1]))


def save_model(model: MLPModel, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(to_bytes(model))


def load_model(path) -> MLPModel:
    return from_bytes(Path(path).read_bytes())
