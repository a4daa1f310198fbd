import itertools

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from influence_attack.graph import FeatureKind, Graph

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@st.composite
def graphs(draw, max_nodes=12, max_features=6, max_labels=3, binary=False, min_nodes=1):
    """Small random graph with features and a full label vector."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    d = draw(st.integers(1, max_features))
    k = draw(st.integers(2, max_labels))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    if binary:
        X = (rng.random((n, d)) < 0.4).astype(float)
        kind = FeatureKind.BINARY
    else:
        X = rng.normal(size=(n, d))
        kind = FeatureKind.CONTINUOUS
    y = rng.integers(0, k, size=n)
    return Graph(n, np.array(chosen, dtype=np.int64).reshape(-1, 2), X, y, k, kind)


def path_graph(n, d=1):
    edges = np.array([(i, i + 1) for i in range(n - 1)], dtype=np.int64).reshape(-1, 2)
    return Graph(n, edges, np.zeros((n, d)))


def star_graph(leaves, d=1):
    edges = np.array([(0, i) for i in range(1, leaves + 1)], dtype=np.int64)
    return Graph(leaves + 1, edges, np.zeros((leaves + 1, d)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
