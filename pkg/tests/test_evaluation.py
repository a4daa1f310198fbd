import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import graphs, path_graph, star_graph
from influence_attack.evaluation import (
    BaselineKind,
    BaselineMethod,
    ContractError,
    VictimConfig,
    VictimGcn,
    betweenness,
    compute_metrics,
    evaluate_attack,
    pagerank,
    select_baseline_nodes,
    template_from_gradient,
    train_victim,
    victim_predict,
)
from influence_attack.evaluation.baselines import proxy_feature_gradient
from influence_attack.evaluation.victim import loss_and_grads
from influence_attack.graph import Graph, make_splits, normalized_adjacency
from influence_attack.perturb import LB_SNAP, UB_SNAP
from influence_attack.synthetic import SbmConfig, sbm_graph


def dense_forward(g, w1, w2):
    a = np.eye(g.num_nodes)
    for u, v in g.edges:
        a[u, v] = a[v, u] = 1.0
    d = a.sum(axis=1)
    hat = a / np.sqrt(np.outer(d, d))
    return hat @ np.maximum(hat @ np.asarray(g.features) @ w1, 0) @ w2


def easy_sbm(seed=0):
    return sbm_graph(SbmConfig(signal=0.6, background=0.1, seed=seed))


# ---- victim ------------------------------------------------------------------


@given(graphs(max_nodes=20, max_features=5), st.integers(0, 1000))
def test_forward_matches_dense_reference(g, seed):
    rng = np.random.default_rng(seed)
    v = VictimGcn(rng.normal(size=(g.num_features, 4)), rng.normal(size=(4, g.num_labels)))
    got = v.forward(normalized_adjacency(g), g.features)
    assert np.allclose(got, dense_forward(g, v.w1, v.w2), atol=1e-9, rtol=0)


def test_zero_weights_predict_label_zero():
    g = path_graph(4, d=3)
    v = VictimGcn(np.zeros((3, 2)), np.zeros((2, 3)))
    assert victim_predict(v, g).tolist() == [0, 0, 0, 0]


def test_single_node_forward(rng):
    x = rng.normal(size=(1, 3))
    g = Graph(1, np.empty((0, 2)), x)
    v = VictimGcn(rng.normal(size=(3, 4)), rng.normal(size=(4, 2)))
    assert np.allclose(v.forward(normalized_adjacency(g), x), np.maximum(x @ v.w1, 0) @ v.w2)


@given(st.integers(0, 10_000))
def test_victim_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    g = Graph(5, np.array([[0, 1], [1, 2], [2, 3], [1, 4]]), rng.normal(size=(5, 3)), rng.integers(0, 2, 5), 2)
    hat = normalized_adjacency(g)
    w1, w2 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    nodes = np.array([0, 2, 3])
    X = np.array(g.features)
    _, g1, g2, gx = loss_and_grads(w1, w2, hat, X, g.labels, nodes, wrt_features=True)
    h = 1e-5

    def numeric(param, f):
        out = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            up, dn = param.copy(), param.copy()
            up[idx] += h
            dn[idx] -= h
            out[idx] = (f(up) - f(dn)) / (2 * h)
        return out

    checks = [
        (g1, numeric(w1, lambda p: loss_and_grads(p, w2, hat, X, g.labels, nodes)[0])),
        (g2, numeric(w2, lambda p: loss_and_grads(w1, p, hat, X, g.labels, nodes)[0])),
        (gx, numeric(X, lambda p: loss_and_grads(w1, w2, hat, p, g.labels, nodes)[0])),
    ]
    for analytic, approx in checks:
        scale = max(np.abs(approx).max(), 1e-6)
        assert np.abs(analytic - approx).max() / scale < 1e-4


def test_victim_fits_separable_blocks():
    g = easy_sbm()
    splits = make_splits(g, 0)
    v = train_victim(g, splits, VictimConfig(seed=1))
    pred = victim_predict(v, g)
    assert np.mean(pred[splits.val] == g.labels[splits.val]) >= 0.9


def test_victim_training_deterministic_and_lowers_loss():
    g = sbm_graph(SbmConfig(num_nodes=120))
    splits = make_splits(g, 3)
    a = train_victim(g, splits, VictimConfig(seed=5))
    b = train_victim(g, splits, VictimConfig(seed=5))
    assert a.w1.tobytes() == b.w1.tobytes() and a.w2.tobytes() == b.w2.tobytes()
    hat = normalized_adjacency(g)
    rng = np.random.default_rng(5)
    lim1, lim2 = np.sqrt(6 / (g.num_features + 16)), np.sqrt(6 / (16 + 2))
    w1 = rng.uniform(-lim1, lim1, (g.num_features, 16))
    w2 = rng.uniform(-lim2, lim2, (16, 2))
    start = loss_and_grads(w1, w2, hat, g.features, g.labels, splits.train)[0]
    end = loss_and_grads(a.w1, a.w2, hat, g.features, g.labels, splits.train)[0]
    assert end < start


# ---- baselines ---------------------------------------------------------------


def test_degree_picks_star_centre():
    g = star_graph(5)
    assert select_baseline_nodes(BaselineMethod(BaselineKind.DEGREE), range(6), 1, g) == [0]


def test_betweenness_picks_path_middle():
    g = path_graph(3)
    assert select_baseline_nodes(BaselineMethod(BaselineKind.BETWEENNESS), range(3), 1, g) == [1]


def test_pagerank_on_cycle_is_uniform():
    g = Graph(4, np.array([[0, 1], [1, 2], [2, 3], [0, 3]]), np.zeros((4, 1)))
    p = pagerank(g)
    assert np.allclose(p, 0.25, atol=1e-9)
    assert select_baseline_nodes(BaselineMethod(BaselineKind.PAGERANK), range(4), 1, g) == [0]


def test_random_baseline_seeded_and_within_candidates():
    g = path_graph(20)
    cands = list(range(5, 15))
    a = select_baseline_nodes(BaselineMethod(BaselineKind.RANDOM, 4), cands, 3, g)
    b = select_baseline_nodes(BaselineMethod(BaselineKind.RANDOM, 4), cands, 3, g)
    assert a == b and len(a) == 3 and set(a) <= set(cands)


def test_selection_restricted_to_candidates():
    g = star_graph(5)
    assert select_baseline_nodes(BaselineMethod(BaselineKind.DEGREE), [1, 2, 3], 1, g) == [1]


@given(graphs(max_nodes=30))
def test_pagerank_stationary(g):
    p = pagerank(g)
    deg = g.degrees().astype(float)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    P = g.adjacency.toarray() * inv[None, :]
    assert np.abs(p - (0.85 * P @ p + 0.15 / g.num_nodes)).sum() < 1e-6


@given(graphs(max_nodes=30))
def test_pagerank_agrees_with_networkx_without_dangling_nodes(g):
    if (g.degrees() == 0).any():
        return
    G = nx.Graph()
    G.add_nodes_from(range(g.num_nodes))
    G.add_edges_from(g.edges.tolist())
    ref = nx.pagerank(G, alpha=0.85, tol=1e-10, max_iter=10_000)
    assert np.allclose(pagerank(g), [ref[v] for v in range(g.num_nodes)], atol=1e-6)


@given(graphs(max_nodes=8))
def test_betweenness_matches_path_counting(g):
    exact = oracles.brandes_bruteforce(g.num_nodes, g.edges.tolist())
    assert betweenness(g) == pytest.approx([float(x) for x in exact], abs=1e-12)


def test_template_sign_rule():
    t = template_from_gradient(np.array([0.0, 0.3, -0.1]), 1)
    assert dict(t.directions) == {1: UB_SNAP}
    t = template_from_gradient(np.array([0.0, 0.0]), 1)
    assert dict(t.directions) == {0: UB_SNAP}


def test_template_budget_above_d_keeps_all():
    t = template_from_gradient(np.array([0.2, -0.4, 0.1]), 10)
    assert dict(t.directions) == {0: UB_SNAP, 1: LB_SNAP, 2: UB_SNAP}


def test_template_dominant_feature():
    assert dict(template_from_gradient(np.array([-0.9, 0.2]), 1).directions) == {0: LB_SNAP}


def test_proxy_gradient_is_column_derivative_of_test_loss():
    # mean over nodes of dL/dX[:, d] times N equals d/dt L(X + t * e_d on every row)
    g = sbm_graph(SbmConfig(num_nodes=60, num_features=6, informative=4, signal=0.5, background=0.1))
    # strictly positive continuous inputs keep hidden pre-activations off the ReLU kink at 0
    g = Graph(g.num_nodes, g.edges, g.features + np.random.default_rng(0).uniform(0.1, 0.3, g.features.shape),
              g.labels, g.num_labels)
    splits = make_splits(g, 0)
    cfg = VictimConfig(max_epochs=20)
    grad = proxy_feature_gradient(g, splits, n_proxies=1, cfg=cfg, seed=2)
    proxy_seed = int(np.random.SeedSequence(2).generate_state(1)[0])
    proxy = train_victim(g, splits, VictimConfig(max_epochs=20, seed=proxy_seed))
    hat = normalized_adjacency(g)
    h = 1e-6
    for d in range(g.num_features):
        shift = np.zeros_like(g.features)
        shift[:, d] = h
        up = loss_and_grads(proxy.w1, proxy.w2, hat, g.features + shift, g.labels, splits.test)[0]
        dn = loss_and_grads(proxy.w1, proxy.w2, hat, g.features - shift, g.labels, splits.test)[0]
        assert grad[d] * g.num_nodes == pytest.approx((up - dn) / (2 * h), rel=1e-4, abs=1e-8)


# ---- metrics -----------------------------------------------------------------


def test_metrics_examples():
    labels = np.array([0, 0, 1, 1, 2])
    test = np.arange(5)
    m = compute_metrics(np.array([0, 1, 1, 1, 1]), labels, test, 3)
    assert m.accuracy == pytest.approx(0.6)
    assert m.per_label_accuracy.tolist() == [0.5, 1.0, 0.0]
    assert m.misclassification_rate_toward == pytest.approx([0.0, 2 / 3, 0.0])
    wrong = compute_metrics((labels + 1) % 3, labels, test, 3)
    assert wrong.accuracy == 0.0


@given(st.integers(0, 10_000), st.integers(2, 5))
def test_metric_consistency(seed, k):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, 40)
    pred = rng.integers(0, k, 40)
    test = np.sort(rng.choice(40, 25, replace=False))
    m = compute_metrics(pred, labels, test, k)
    errors = sum((labels[test] == c).sum() * (1 - a) for c, a in enumerate(m.per_label_accuracy) if not np.isnan(a))
    assert m.accuracy == pytest.approx(1 - errors / test.size, abs=1e-12)
    finite = m.misclassification_rate_toward[~np.isnan(m.misclassification_rate_toward)]
    assert ((finite >= 0) & (finite <= 1)).all()


def test_evaluate_identity_and_purity():
    g = sbm_graph(SbmConfig(num_nodes=120))
    splits = make_splits(g, 1)
    v = train_victim(g, splits, VictimConfig(seed=2))
    w1, w2 = v.w1.tobytes(), v.w2.tobytes()
    clean, attacked = evaluate_attack(v, g, g, splits)
    assert clean.accuracy == attacked.accuracy
    X = np.array(g.features)
    X[splits.test[:10]] = 1.0 - X[splits.test[:10]]
    evaluate_attack(v, g, g.with_features(X), splits)
    assert v.w1.tobytes() == w1 and v.w2.tobytes() == w2


def test_evaluate_rejects_structure_change():
    g = sbm_graph(SbmConfig(num_nodes=60))
    splits = make_splits(g, 0)
    v = train_victim(g, splits, VictimConfig(max_epochs=3))
    other = Graph(g.num_nodes, g.edges[1:], g.features, g.labels, g.num_labels, g.feature_kind)
    with pytest.raises(ContractError):
        evaluate_attack(v, g, other, splits)
