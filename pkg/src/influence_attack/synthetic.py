"""Stochastic block model graphs with binary, partially block-informative features."""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .graph import FeatureKind, Graph


@dataclass(frozen=True)
class SbmConfig:
    num_nodes: int = 400
    num_blocks: int = 2
    p_in: float = 0.05
    p_out: float = 0.005
    num_features: int = 32
    informative: int = 8
    # probability that a node switches on an informative bit of its own block
    signal: float = 0.06
    # ... of another block's informative bit
    background: float = 0.03
    # ... of an uninformative bit
    noise: float = 0.0
    seed: int = 0


def sbm_graph(cfg: SbmConfig = SbmConfig()) -> Graph:
    """Blocks of (nearly) equal size; informative bits are split evenly across blocks."""
    sizes = [cfg.num_nodes // cfg.num_blocks] * cfg.num_blocks
    for b in range(cfg.num_nodes - sum(sizes)):
        sizes[b] += 1
    probs = np.full((cfg.num_blocks, cfg.num_blocks), cfg.p_out)
    np.fill_diagonal(probs, cfg.p_in)
    rng = np.random.default_rng(cfg.seed)
    G = nx.stochastic_block_model(sizes, probs.tolist(), seed=int(rng.integers(2**31)))
    labels = np.repeat(np.arange(cfg.num_blocks), sizes)

    owner = np.full(cfg.num_features, -1)
    owner[: cfg.informative] = np.arange(cfg.informative) % cfg.num_blocks
    on_prob = np.where(owner[None, :] == labels[:, None], cfg.signal, cfg.background)
    on_prob[:, owner < 0] = cfg.noise
    X = (rng.random((cfg.num_nodes, cfg.num_features)) < on_prob).astype(np.float64)

    edges = np.array(sorted(G.edges()), dtype=np.int64).reshape(-1, 2)
    return Graph(cfg.num_nodes, edges, X, labels, cfg.num_blocks, FeatureKind.BINARY)
