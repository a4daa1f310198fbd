"""Test-split accuracy, per-label accuracy and per-label misclassification rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import Graph, SplitAssignment, normalized_adjacency
from .victim import VictimGcn, victim_predict


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    # NaN for labels absent from the test split
    per_label_accuracy: np.ndarray
    # share of test nodes whose true label is not k that are predicted as k
    misclassification_rate_toward: np.ndarray
    n_test: int


def compute_metrics(pred: np.ndarray, labels: np.ndarray, test: np.ndarray, num_labels: int) -> Metrics:
    pred, truth = np.asarray(pred)[test], np.asarray(labels)[test]
    correct = pred == truth
    per_label = np.full(num_labels, np.nan)
    toward = np.full(num_labels, np.nan)
    for k in range(num_labels):
        own = truth == k
        if own.any():
            per_label[k] = correct[own].mean()
        other = ~own
        if other.any():
            toward[k] = (pred[other] == k).mean()
    acc = float(correct.mean()) if test.size else float("nan")
    return Metrics(acc, per_label, toward, int(test.size))


def evaluate_attack(
    v: VictimGcn, clean_g: Graph, attacked_g: Graph, splits: SplitAssignment, mode=None
) -> tuple[Metrics, Metrics]:
    """Clean and attacked test metrics of a victim trained on the clean graph."""
    if (
        clean_g.num_nodes != attacked_g.num_nodes
        or clean_g.features.shape != attacked_g.features.shape
        or not np.array_equal(clean_g.edges, attacked_g.edges)
        or not np.array_equal(clean_g.labels, attacked_g.labels)
    ):
        raise ContractError("attacked graph must share structure and labels with the clean graph")
    hat_a = normalized_adjacency(clean_g)
    k = clean_g.num_labels
    clean = compute_metrics(victim_predict(v, clean_g, hat_a), clean_g.labels, splits.test, k)
    attacked = compute_metrics(victim_predict(v, attacked_g, hat_a), clean_g.labels, splits.test, k)
    return clean, attacked
