"""Graph container, symmetric normalization and the L-step propagation operator."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class GraphFormatError(ValueError):
    """A data file does not follow the expected layout."""


class ConfigurationError(ValueError):
    pass


class LabelError(ValueError):
    pass


class FeatureKind(str, enum.Enum):
    BINARY = "binary"
    BOUNDED_DISCRETE = "bounded-discrete"
    CONTINUOUS = "continuous"


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted graph with a dense node-feature matrix.

    ``edges`` is an ``(E, 2)`` integer array with ``u < v`` on every row and
    no duplicates. ``labels`` uses ``-1`` for unlabeled nodes.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    num_labels: int = 0
    feature_kind: FeatureKind = FeatureKind.CONTINUOUS
    _adjacency: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        edges = canonical_edges(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != self.num_nodes:
            raise ValueError(
                f"features must have shape ({self.num_nodes}, D), got {features.shape}"
            )
        if edges.size and (edges.min() < 0 or edges.max() >= self.num_nodes):
            raise IndexError(f"edge endpoint outside [0, {self.num_nodes})")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (self.num_nodes,):
                raise ValueError("labels must have one entry per node")
            if labels.max(initial=-1) >= self.num_labels:
                raise LabelError(
                    f"label {labels.max()} not below num_labels={self.num_labels}"
                )
            labels.setflags(write=False)
        kind = FeatureKind(self.feature_kind)
        if kind is FeatureKind.BINARY and not np.isin(features, (0.0, 1.0)).all():
            raise ValueError("binary feature_kind requires every feature in {0, 1}")
        edges.setflags(write=False)
        features.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_kind", kind)
        object.__setattr__(self, "_adjacency", _adjacency(self.num_nodes, edges))

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency without self-loops."""
        return self._adjacency

    def degrees(self) -> np.ndarray:
        return np.asarray(self._adjacency.sum(axis=1)).ravel().astype(np.int64)

    def labeled_nodes(self) -> np.ndarray:
        if self.labels is None:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.labels >= 0)

    def with_features(self, features: np.ndarray) -> "Graph":
        """Same structure and labels, new feature matrix."""
        return Graph(
            self.num_nodes,
            self.edges,
            features,
            self.labels,
            self.num_labels,
            self.feature_kind,
        )


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Sort endpoints within each pair and drop duplicates."""
    if edges.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if (edges[:, 0] == edges[:, 1]).any():
        raise ValueError("self-loops are not allowed in the edge set")
    pairs = np.sort(edges, axis=1)
    return np.unique(pairs, axis=0)


def _adjacency(n: int, edges: np.ndarray) -> sp.csr_matrix:
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(rows.shape[0])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


# --------------------------------------------------------------------------- #
# File loading
# --------------------------------------------------------------------------- #
def read_edge_file(path: str | Path) -> np.ndarray:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'u<TAB>v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer endpoint in {line!r}") from None
            edges.append((u, v))
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def read_feature_file(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric feature value") from None
            if rows and len(rows[-1]) != len(rows[0]):
                raise GraphFormatError(
                    f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}"
                )
    return np.asarray(rows, dtype=np.float64)


def read_label_file(path: str | Path) -> np.ndarray:
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                labels.append(-1)
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: label {line!r} is not an integer") from None
            if labels[-1] < 0:
                raise LabelError(f"{path}:{lineno}: negative label {labels[-1]}")
    return np.asarray(labels, dtype=np.int64)


def load_graph(
    edge_path: str | Path,
    feature_path: str | Path,
    label_path: str | Path | None,
    feature_kind: FeatureKind | str = FeatureKind.BINARY,
    num_labels: int | None = None,
) -> Graph:
    """Load a graph from an edge list, a feature CSV and a label file.

    The node count is the number of feature rows. ``num_labels`` defaults to
    one plus the largest label present.
    """
    features = read_feature_file(feature_path)
    n = features.shape[0]
    edges = read_edge_file(edge_path)
    if edges.size and edges.max() >= n:
        raise IndexError(f"{edge_path}: endpoint {edges.max()} >= number of nodes {n}")
    labels = None
    k = 0
    if label_path is not None:
        labels = read_label_file(label_path)
        if labels.shape[0] < n:
            labels = np.concatenate([labels, -np.ones(n - labels.shape[0], dtype=np.int64)])
        elif labels.shape[0] > n:
            raise GraphFormatError(f"{label_path}: {labels.shape[0]} labels for {n} nodes")
        k = int(labels.max(initial=-1)) + 1 if num_labels is None else num_labels
        if labels.max(initial=-1) >= k:
            raise LabelError(f"{label_path}: label {labels.max()} >= num_labels {k}")
    return Graph(n, edges, features, labels, k, FeatureKind(feature_kind))


def write_graph(g: Graph, edge_path, feature_path, label_path=None) -> None:
    with open(edge_path, "w", encoding="utf-8") as fh:
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    with open(feature_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in g.features:
            writer.writerow([f"{v:.17g}" for v in row])
    if label_path is not None and g.labels is not None:
        with open(label_path, "w", encoding="utf-8") as fh:
            for y in g.labels:
                fh.write(f"{y}\n" if y >= 0 else "\n")


# --------------------------------------------------------------------------- #
# Normalization and propagation
# --------------------------------------------------------------------------- #
def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """``D~^{-1/2} (A + I) D~^{-1/2}`` where ``D~`` counts the self-loop."""
    a_tilde = g.adjacency + sp.identity(g.num_nodes, format="csr")
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    hat_a = (inv_sqrt @ a_tilde @ inv_sqrt).tocsr()
    hat_a.sort_indices()
    return hat_a


@dataclass(frozen=True, eq=False)
class PropagationOperator:
    hat_a: sp.csr_matrix
    powered: sp.csr_matrix
    depth: int

    @property
    def num_nodes(self) -> int:
        return self.hat_a.shape[0]

    def weight(self, i: int, j: int) -> float:
        """Entry ``(Â^L)_{ij}``: how strongly node i's features reach node j."""
        return float(self.powered[i, j])


def propagation_operator(g: Graph, depth: int = 2) -> PropagationOperator:
    if depth < 1:
        raise ConfigurationError(f"propagation depth must be >= 1, got {depth}")
    hat_a = normalized_adjacency(g)
    powered = hat_a
    for _ in range(depth - 1):
        powered = powered @ hat_a
    powered = powered.tocsr()
    powered.sort_indices()
    return PropagationOperator(hat_a, powered, depth)


def receptive_weights(op: PropagationOperator, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Receptive neighbours of i with their propagation weights ``α_ij``."""
    if not 0 <= i < op.num_nodes:
        raise IndexError(f"node {i} out of range")
    start, end = op.powered.indptr[i], op.powered.indptr[i + 1]
    cols = op.powered.indices[start:end]
    vals = op.powered.data[start:end]
    keep = (vals > 0) & (cols != i)
    return cols[keep], vals[keep]


def receptive_neighbors(op: PropagationOperator, i: int) -> np.ndarray:
    """Nodes j != i whose propagated features depend on node i.

    Returned as a sorted index array. Uses the row of ``Â^L``, which equals
    the column because the operator is symmetric.
    """
    return receptive_weights(op, i)[0]


def candidate_filter(g: Graph, remove_top_fraction: float) -> np.ndarray:
    """Nodes whose raw degree does not exceed the (1 - fraction) degree quantile.

    Ties at the threshold are kept, so slightly fewer than the requested
    fraction may be removed.
    """
    if not 0.0 <= remove_top_fraction < 1.0:
        raise ConfigurationError(f"remove_top_fraction must lie in [0, 1), got {remove_top_fraction}")
    deg = g.degrees()
    if remove_top_fraction == 0.0 or g.num_nodes == 0:
        return np.arange(g.num_nodes)
    threshold = np.quantile(deg, 1.0 - remove_top_fraction)
    return np.flatnonzero(deg <= threshold)


@dataclass(frozen=True)
class SplitAssignment:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def name_of(self) -> dict[int, str]:
        out = {}
        for name, idx in (("train", self.train), ("val", self.val), ("test", self.test)):
            out.update({int(i): name for i in idx})
        return out


def make_splits(g: Graph, seed: int) -> SplitAssignment:
    """Seeded 60/20/20 split of the labeled nodes (floor for train and val)."""
    labeled = g.labeled_nodes()
    if labeled.size == 0:
        raise LabelError("cannot split a graph without labels")
    order = np.random.default_rng(seed).permutation(labeled)
    n = labeled.size
    n_train = int(np.floor(0.6 * n))
    n_val = int(np.floor(0.2 * n))
    return SplitAssignment(
        np.sort(order[:n_train]),
        np.sort(order[n_train : n_train + n_val]),
        np.sort(order[n_train + n_val :]),
        seed,
    )


def read_split_file(path: str | Path, seed: int = -1) -> SplitAssignment:
    groups: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and row[0] == "node"):
                continue
            if len(row) != 2 or row[1] not in groups:
                raise GraphFormatError(f"{path}:{lineno}: expected 'node,train|val|test'")
            groups[row[1]].append(int(row[0]))
    return SplitAssignment(*(np.sort(np.asarray(groups[k], dtype=np.int64)) for k in ("train", "val", "test")), seed)


def write_split_file(splits: SplitAssignment, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "split"])
        for node, name in sorted(splits.name_of().items()):
            writer.writerow([node, name])
