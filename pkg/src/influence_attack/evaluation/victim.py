"""Two-layer GCN victim, trained full-batch with Adam and validation early stopping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..graph import ConfigurationError, Graph, SplitAssignment, normalized_adjacency
from ..surrogate import TrainingError, cross_entropy, softmax


@dataclass(frozen=True)
class VictimConfig:
    hidden: int = 16
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    patience: int = 30
    max_epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("hidden, max_epochs and patience must be positive")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")


@dataclass(frozen=True, eq=False)
class VictimGcn:
    """``Â · ReLU(Â X W1) · W2``; no biases."""

    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        for name in ("w1", "w2"):
            w = np.array(getattr(self, name), dtype=np.float64)
            if not np.isfinite(w).all():
                raise ValueError(f"{name} has non-finite entries")
            w.setflags(write=False)
            object.__setattr__(self, name, w)
        if self.w1.shape[1] != self.w2.shape[0]:
            raise ValueError("hidden dimensions of w1 and w2 disagree")

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def depth(self) -> int:
        return 2

    def forward(self, hat_a: sp.spmatrix, X: np.ndarray) -> np.ndarray:
        h = np.maximum(hat_a @ (X @ self.w1), 0.0)
        return np.asarray(hat_a @ (h @ self.w2))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def loss_and_grads(
    w1: np.ndarray,
    w2: np.ndarray,
    hat_a: sp.spmatrix,
    X: np.ndarray,
    y: np.ndarray,
    nodes: np.ndarray,
    wrt_features: bool = False,
):
    """Mean cross-entropy over ``nodes`` with gradients for w1, w2 (and X if asked).

    Weight decay is not part of this loss; the optimiser adds it to the gradient.
    """
    loss, g1, g2, d_z1 = _grads_from_ax(w1, w2, hat_a, np.asarray(hat_a @ X), y, nodes)
    if not wrt_features:
        return loss, g1, g2
    d_x = np.asarray(hat_a.T @ (d_z1 @ w1.T))
    return loss, g1, g2, d_x


def train_victim(
    g: Graph, splits: SplitAssignment, cfg: VictimConfig = VictimConfig(), hat_a=None
) -> VictimGcn:
    if g.labels is None or splits.train.size == 0:
        raise ValueError("victim training needs a labeled, non-empty train split")
    if hat_a is None:
        hat_a = normalized_adjacency(g)
    rng = np.random.default_rng(cfg.seed)
    X, y = g.features, g.labels
    w1 = _glorot(rng, g.num_features, cfg.hidden)
    w2 = _glorot(rng, cfg.hidden, g.num_labels)
    params = [w1, w2]
    m = [np.zeros_like(w) for w in params]
    v = [np.zeros_like(w) for w in params]
    beta1, beta2, tiny = 0.9, 0.999, 1e-8

    ax = np.asarray(hat_a @ X)
    val = splits.val
    best_acc, best, stale = -1.0, (w1.copy(), w2.copy()), 0
    for epoch in range(1, cfg.max_epochs + 1):
        loss, g1, g2, _ = _grads_from_ax(params[0], params[1], hat_a, ax, y, splits.train)
        if not np.isfinite(loss):
            raise TrainingError(f"victim loss became non-finite at epoch {epoch}")
        for k, grad in enumerate((g1, g2)):
            grad = grad + cfg.weight_decay * params[k]
            m[k] = beta1 * m[k] + (1 - beta1) * grad
            v[k] = beta2 * v[k] + (1 - beta2) * grad * grad
            m_hat = m[k] / (1 - beta1**epoch)
            v_hat = v[k] / (1 - beta2**epoch)
            params[k] = params[k] - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + tiny)
        if val.size:
            pred = np.argmax(_forward_from_ax(params[0], params[1], hat_a, ax)[val], axis=1)
            acc = float(np.mean(pred == y[val]))
            if acc > best_acc:
                best_acc, best, stale = acc, (params[0].copy(), params[1].copy()), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        else:
            best = (params[0].copy(), params[1].copy())
    return VictimGcn(*best)


def _forward_from_ax(w1, w2, hat_a, ax):
    h = np.maximum(ax @ w1, 0.0)
    return np.asarray(hat_a @ (h @ w2))


def _grads_from_ax(w1, w2, hat_a, ax, y, nodes):
    z1 = ax @ w1
    h = np.maximum(z1, 0.0)
    ah = np.asarray(hat_a @ h)
    out = ah @ w2
    loss = cross_entropy(out[nodes], y[nodes])
    d_out = np.zeros_like(out)
    p = softmax(out[nodes])
    p[np.arange(len(nodes)), y[nodes]] -= 1.0
    d_out[nodes] = p / len(nodes)
    g2 = ah.T @ d_out
    d_z1 = np.asarray(hat_a.T @ (d_out @ w2.T)) * (z1 > 0)
    g1 = ax.T @ d_z1
    return loss, g1, g2, d_z1


def victim_predict(v: VictimGcn, g: Graph, hat_a=None) -> np.ndarray:
    if hat_a is None:
        hat_a = normalized_adjacency(g)
    return np.argmax(v.forward(hat_a, g.features), axis=1)
