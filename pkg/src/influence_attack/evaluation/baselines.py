"""Heuristic target selection and the proxy-gradient global perturbation used by baselines."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import networkx as nx
import numpy as np

from ..graph import Graph, SplitAssignment, normalized_adjacency
from ..perturb import LB_SNAP, UB_SNAP, PerturbationDomain, PerturbationTemplate
from .victim import VictimConfig, loss_and_grads, train_victim


class BaselineKind(str, enum.Enum):
    RANDOM = "random"
    DEGREE = "degree"
    PAGERANK = "pagerank"
    BETWEENNESS = "betweenness"


@dataclass(frozen=True)
class BaselineMethod:
    kind: BaselineKind
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", BaselineKind(self.kind))


def pagerank(
    g: Graph, damping: float = 0.85, tol: float = 1e-8, max_iter: int = 10_000
) -> np.ndarray:
    """Power iteration for ``p = damping * P p + (1 - damping) / N``.

    ``P`` is the column-stochastic random-walk matrix of the raw adjacency.
    Isolated nodes have no out-links, so their mass is not redistributed and
    the returned vector may sum to slightly less than one.
    """
    n = g.num_nodes
    deg = g.degrees().astype(np.float64)
    inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    p = np.full(n, 1.0 / n)
    teleport = (1.0 - damping) / n
    for _ in range(max_iter):
        nxt = damping * (g.adjacency @ (inv * p)) + teleport
        if np.abs(nxt - p).sum() < tol:
            return nxt
        p = nxt
    return p


def betweenness(g: Graph) -> np.ndarray:
    """Unnormalised shortest-path betweenness (Brandes, via networkx)."""
    G = nx.Graph()
    G.add_nodes_from(range(g.num_nodes))
    G.add_edges_from(map(tuple, g.edges.tolist()))
    bc = nx.betweenness_centrality(G, normalized=False)
    return np.array([bc[v] for v in range(g.num_nodes)])


def _top_by(score: np.ndarray, candidates: np.ndarray, budget: int) -> list[int]:
    order = sorted(candidates.tolist(), key=lambda v: (-score[v], v))
    return sorted(order[:budget])


def select_baseline_nodes(
    method: BaselineMethod, candidates, node_budget: int, g: Graph
) -> list[int]:
    candidates = np.asarray(sorted(int(c) for c in candidates), dtype=np.int64)
    budget = min(node_budget, candidates.size)
    if budget <= 0:
        return []
    if method.kind is BaselineKind.RANDOM:
        rng = np.random.default_rng(method.seed)
        return sorted(rng.choice(candidates, size=budget, replace=False).tolist())
    if method.kind is BaselineKind.DEGREE:
        score = g.degrees().astype(np.float64)
    elif method.kind is BaselineKind.PAGERANK:
        score = pagerank(g)
    else:
        score = betweenness(g)
    return _top_by(score, candidates, budget)


def template_from_gradient(gradient: np.ndarray, feature_budget: int) -> PerturbationTemplate:
    """Top features by |gradient|, each pushed in the ascent direction (zero -> upper bound)."""
    gradient = np.asarray(gradient, dtype=np.float64)
    order = np.argsort(-np.abs(gradient), kind="stable")[:feature_budget]
    return PerturbationTemplate(
        {int(d): LB_SNAP if gradient[d] < 0 else UB_SNAP for d in sorted(order.tolist())}
    )


def proxy_feature_gradient(
    g: Graph,
    splits: SplitAssignment,
    n_proxies: int = 20,
    cfg: VictimConfig = VictimConfig(),
    seed: int = 0,
) -> np.ndarray:
    """Per-feature gradient of the test-node loss, averaged over nodes and proxies."""
    hat_a = normalized_adjacency(g)
    seeds = np.random.SeedSequence(seed).generate_state(n_proxies)
    total = np.zeros(g.num_features)
    for s in seeds:
        proxy = train_victim(g, splits, replace(cfg, seed=int(s)), hat_a=hat_a)
        *_, d_x = loss_and_grads(
            proxy.w1, proxy.w2, hat_a, g.features, g.labels, splits.test, wrt_features=True
        )
        total += d_x.mean(axis=0)
    return total / n_proxies


def baseline_global_perturbation(
    g: Graph,
    splits: SplitAssignment,
    dom: PerturbationDomain,
    n_proxies: int = 20,
    cfg: VictimConfig = VictimConfig(),
    seed: int = 0,
) -> PerturbationTemplate:
    grad = proxy_feature_gradient(g, splits, n_proxies, cfg, seed)
    return template_from_gradient(grad, dom.feature_budget)
