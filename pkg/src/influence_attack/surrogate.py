"""Linear SGC surrogate: propagated features followed by multinomial logistic regression."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import ConfigurationError, PropagationOperator


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    epochs: int = 300
    weight_decay: float = 5e-4
    seed: int = 0
    use_bias: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be at least 1")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")


@dataclass(frozen=True, eq=False)
class SurrogateModel:
    """Collapsed linear map of an L-layer SGC.

    Logits of node j are ``S[j] @ weights + bias`` with ``S = Â^L X``.
    """

    weights: np.ndarray
    bias: np.ndarray
    depth: int
    trained_on: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ValueError(f"weights {w.shape} and bias {b.shape} are inconsistent")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("surrogate parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_features(self) -> int:
        return self.weights.shape[0]

    @property
    def num_labels(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Prediction:
    node: int
    label: int
    logits: np.ndarray


def propagate_features(op: PropagationOperator, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != op.num_nodes:
        raise ValueError(f"feature matrix {X.shape} does not match {op.num_nodes} nodes")
    return np.asarray(op.powered @ X)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(y)), y]))


def loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    S: np.ndarray,
    y: np.ndarray,
    weight_decay: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean softmax cross-entropy plus ``weight_decay * ||W||^2`` and its gradient."""
    logits = S @ weights + bias
    loss = cross_entropy(logits, y) + weight_decay * float(np.sum(weights * weights))
    delta = softmax(logits)
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    grad_w = S.T @ delta + 2.0 * weight_decay * weights
    grad_b = delta.sum(axis=0)
    return loss, grad_w, grad_b


def train_surrogate(
    S: np.ndarray,
    labels: np.ndarray,
    train_set: np.ndarray,
    cfg: TrainConfig,
    num_labels: int | None = None,
    depth: int = 2,
) -> SurrogateModel:
    """Full-batch gradient descent on the train rows of the propagated features."""
    train_set = np.asarray(train_set, dtype=np.int64)
    if train_set.size == 0:
        raise ValueError("train_set is empty")
    y = np.asarray(labels)[train_set]
    if (y < 0).any():
        raise ValueError("every training node needs a label")
    k = int(num_labels if num_labels is not None else np.max(labels) + 1)
    rows = S[train_set]
    rng = np.random.default_rng(cfg.seed)
    w = rng.uniform(-0.01, 0.01, size=(S.shape[1], k))
    b = np.zeros(k)

    initial_loss = None
    for epoch in range(cfg.epochs):
        loss, gw, gb = loss_and_grad(w, b, rows, y, cfg.weight_decay)
        if not np.isfinite(loss):
            raise TrainingError(f"surrogate loss became non-finite at epoch {epoch}")
        if initial_loss is None:
            initial_loss = loss
        w = w - cfg.learning_rate * gw
        if cfg.use_bias:
            b = b - cfg.learning_rate * gb
    final_loss, _, _ = loss_and_grad(w, b, rows, y, cfg.weight_decay)
    if not np.isfinite(final_loss) or not np.isfinite(w).all():
        raise TrainingError(f"surrogate loss became non-finite at epoch {cfg.epochs}")
    return SurrogateModel(w, b, depth, trained_on=f"train:{train_set.size}:seed={cfg.seed}")


def logits(m: SurrogateModel, S: np.ndarray) -> np.ndarray:
    return S @ m.weights + m.bias


def predict_labels(m: SurrogateModel, S: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. the lowest label on ties
    return np.argmax(logits(m, S), axis=1)


def predict_all(m: SurrogateModel, S: np.ndarray) -> list[Prediction]:
    z = logits(m, S)
    labels = np.argmax(z, axis=1)
    return [Prediction(j, int(labels[j]), z[j]) for j in range(z.shape[0])]


def clean_logits(m: SurrogateModel, op: PropagationOperator, X: np.ndarray, j: int) -> np.ndarray:
    s_j = op.powered[j] @ X
    return np.asarray(s_j).ravel() @ m.weights + m.bias


def perturbed_logits(
    m: SurrogateModel,
    op: PropagationOperator,
    X: np.ndarray,
    i: int,
    eps,
    j: int,
    base: np.ndarray | None = None,
) -> np.ndarray:
    """Logits of node j after node i's features move by ``eps``.

    Computed incrementally as ``clean(j) + α_ij · (eps @ W)``; ``eps`` may be a
    dense D-vector or a :class:`~influence_attack.perturb.FeaturePerturbation`.
    ``base`` short-circuits the clean-logit computation when already known.
    """
    z = clean_logits(m, op, X, j) if base is None else np.asarray(base, dtype=np.float64)
    alpha = op.weight(i, j)
    if alpha == 0.0:
        return z.copy()
    return z + alpha * _shift(m, eps)


def _shift(m: SurrogateModel, eps) -> np.ndarray:
    entries = getattr(eps, "entries", None)
    if entries is None:
        return np.asarray(eps, dtype=np.float64) @ m.weights
    out = np.zeros(m.num_labels)
    for d in sorted(entries):
        out += entries[d] * m.weights[d]
    return out


# --------------------------------------------------------------------------- #
# Checkpoints: header line "D,K,L", then D weight rows, then the bias row
# --------------------------------------------------------------------------- #
def save_surrogate(m: SurrogateModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{m.num_features},{m.num_labels},{m.depth}\n")
        for row in m.weights:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
        fh.write(",".join(repr(float(v)) for v in m.bias) + "\n")


def load_surrogate(path: str | Path) -> SurrogateModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    d, k, depth = (int(v) for v in lines[0].split(","))
    body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if body.shape != (d + 1, k):
        raise ValueError(f"{path}: expected {d + 1} rows of {k} values, got {body.shape}")
    return SurrogateModel(body[:d], body[d], depth, trained_on=str(path))
