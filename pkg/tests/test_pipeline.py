import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from influence_attack.cli import EXIT_CONFIG, EXIT_OK, EXIT_TRIALS, config_from_mapping, main
from influence_attack.graph import ConfigurationError, propagation_operator, write_graph
from influence_attack.influence import AttackKind, AttackMode
from influence_attack.perturb import FeaturePerturbation, PerturbationError
from influence_attack.pipeline import (
    AttackConfig,
    attack_trial,
    craft_attack,
    derive_seed,
    node_budget,
    perturb_graph,
    prepare_trial,
    read_plan,
    run_attack,
    run_baseline,
    run_sweep,
)
from influence_attack.surrogate import TrainConfig, perturbed_logits, propagate_features, train_surrogate
from influence_attack.synthetic import SbmConfig, sbm_graph

SMALL = AttackConfig(
    sbm=SbmConfig(num_nodes=150, seed=4),
    surrogate=TrainConfig(learning_rate=3.0, epochs=400),
    node_budget_fraction=0.02,
    feature_budget_fraction=0.1,
    trials=3,
    n_proxies=2,
)

TOML = """
node_budget = 0.02
feature_budget = 0.1
trials = 2
n_proxies = 2

[sbm]
num_nodes = 120
seed = 1

[surrogate]
learning_rate = 3.0
epochs = 300
"""


@pytest.fixture(scope="module")
def small_graph():
    return SMALL.load()


def test_node_budget_floor_and_minimum():
    assert node_budget(0.01, 2485) == 24
    assert node_budget(0.01, 50) == 1
    assert node_budget(0.03, 400) == 12


def test_config_validation():
    with pytest.raises(ConfigurationError):
        replace(SMALL, node_budget_fraction=0.0)
    with pytest.raises(ConfigurationError):
        replace(SMALL, feature_budget_fraction=1.0)
    with pytest.raises(ConfigurationError):
        replace(SMALL, trials=0)
    with pytest.raises(ConfigurationError):
        AttackConfig()


def test_seed_derivation_separates_purposes():
    seeds = {derive_seed(0, t, p) for t in range(3) for p in ("split", "surrogate", "victim")}
    assert len(seeds) == 9
    assert derive_seed(5, 1, "victim") == derive_seed(5, 1, "victim")


def test_single_trial_attack_lowers_accuracy(small_graph):
    records, summary = run_attack(replace(SMALL, trials=1), g=small_graph)
    assert records[0]["status"] == "ok"
    assert records[0]["attacked_accuracy"] < records[0]["clean_accuracy"]
    assert summary["succeeded"] == 1


def test_reports_are_byte_identical(tmp_path, small_graph):
    run_attack(SMALL, tmp_path / "a", small_graph)
    run_attack(SMALL, tmp_path / "b", small_graph)
    for name in ("attack_trials.jsonl", "attack_aggregate.json", "trial_1/perturbations.csv", "trial_2/plan.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "attack_trials.jsonl").read_text().splitlines()
    assert [json.loads(x)["trial"] for x in lines] == [0, 1, 2]


def test_trials_isolated_under_permuted_order(small_graph):
    forward = {t: attack_trial(SMALL, small_graph, t) for t in (0, 1, 2)}
    backward = {t: attack_trial(SMALL, small_graph, t) for t in (2, 0, 1)}
    assert forward == backward


def test_plan_respects_budgets_and_flips_verify(small_graph):
    setup = prepare_trial(SMALL, small_graph, 0)
    outcome = craft_attack(SMALL, setup, 0)
    assert len(outcome.plan.selected) <= setup.node_budget
    assert set(outcome.plan.nodes) <= set(setup.candidates.tolist())
    for _, eps in outcome.perturbations:
        assert len(eps) <= setup.dom.feature_budget
    changed = np.flatnonzero((outcome.attacked.features != small_graph.features).any(axis=1))
    assert set(changed.tolist()) <= set(outcome.plan.nodes)
    assert np.isin(outcome.attacked.features, (0.0, 1.0)).all()
    # every recorded pairwise flip re-verifies under the surrogate
    op = propagation_operator(small_graph)
    model = train_surrogate(
        propagate_features(op, small_graph.features),
        small_graph.labels,
        setup.splits.train,
        replace(SMALL.surrogate, seed=derive_seed(SMALL.base_seed, 0, "surrogate")),
        num_labels=small_graph.num_labels,
    )
    checked = 0
    for score in outcome.scores:
        for sol in score.solutions:
            z = perturbed_logits(model, op, small_graph.features, sol.candidate, sol.perturbation, sol.neighbor)
            assert sol.flips and int(np.argmax(z)) == sol.target_label
            checked += 1
    assert checked > 0


def test_over_budget_perturbation_rejected(small_graph):
    setup = prepare_trial(SMALL, small_graph, 0)
    too_many = FeaturePerturbation({d: 1.0 - small_graph.features[0, d] for d in range(setup.dom.feature_budget + 1)})
    with pytest.raises(PerturbationError):
        perturb_graph(small_graph, [(0, too_many)], setup.dom)


def test_global_ablation_uses_one_template(small_graph):
    cfg = replace(SMALL, mode=AttackMode(global_perturbation=True))
    setup = prepare_trial(cfg, small_graph, 0)
    outcome = craft_attack(cfg, setup, 0)
    directions = {frozenset(eps.directions().items()) for _, eps in outcome.perturbations if len(eps)}
    keys = set().union(*directions) if directions else set()
    assert len({d for d, _ in keys}) <= setup.dom.feature_budget


def test_baseline_run(tmp_path, small_graph):
    records, summary = run_baseline(replace(SMALL, trials=1), "degree", tmp_path, small_graph)
    assert records[0]["method"] == "degree" and records[0]["predicted_impact"] is None
    assert (tmp_path / "baseline_degree_aggregate.json").exists()
    assert len(records[0]["selected"]) == node_budget(SMALL.node_budget_fraction, small_graph.num_nodes)


def test_failed_trial_is_recorded(small_graph, monkeypatch):
    import influence_attack.pipeline as pl

    def boom(*args, **kwargs):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(pl, "craft_attack", boom)
    records, summary = run_attack(replace(SMALL, trials=2), g=small_graph)
    assert [r["status"] for r in records] == ["failed", "failed"]
    assert summary["failed"] == 2 and summary["attacked_accuracy_mean"] is None


def test_bad_target_label_aborts_before_trials(small_graph):
    cfg = replace(SMALL, mode=AttackMode(AttackKind.LURE_LABEL, 7))
    with pytest.raises(ConfigurationError):
        run_attack(cfg, g=small_graph)


def test_sweep_csv(tmp_path, small_graph):
    cfg = replace(SMALL, trials=1)
    rows = run_sweep(cfg, "node_budget", [0.02], tmp_path / "s.csv", small_graph)
    assert len(rows) == 1
    with open(tmp_path / "s.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["value", "mean_accuracy", "stddev"] and len(table) == 2
    with pytest.raises(ConfigurationError):
        run_sweep(cfg, "node_budget", [0.05, 0.01], None, small_graph)
    with pytest.raises(ConfigurationError):
        run_sweep(cfg, "depth", [1], None, small_graph)


def test_plan_round_trip(tmp_path, small_graph):
    cfg = replace(SMALL, trials=1)
    run_attack(cfg, tmp_path, small_graph)
    plan = read_plan(tmp_path / "trial_0")
    rec = json.loads((tmp_path / "attack_trials.jsonl").read_text())
    assert [n for n, _ in plan["selected"]] == rec["selected"]
    assert int(plan["summary"]["predicted_impact"]) == rec["predicted_impact"]
    assert sum(len(a) for _, a in plan["selected"]) == rec["predicted_impact"]


# ---- command line ------------------------------------------------------------


def test_config_mapping_and_unknown_keys():
    cfg = config_from_mapping({"sbm": {"num_nodes": 50}, "mode": "degrade-label", "target_label": 1, "ablation": "inconsistency"})
    assert cfg.mode.kind is AttackKind.DEGRADE_LABEL and not cfg.mode.consistency
    with pytest.raises(ConfigurationError):
        config_from_mapping({"sbm": {}, "nodes_budget": 0.1})
    with pytest.raises(ConfigurationError):
        config_from_mapping({"sbm": {"size": 3}})


def test_cli_attack_and_inspect(tmp_path, capsys):
    (tmp_path / "c.toml").write_text(TOML)
    out = tmp_path / "out"
    assert main(["attack", str(tmp_path / "c.toml"), "--out", str(out), "--trials", "1"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["trials"] == 1 and summary["B_n"] == 2
    assert main(["inspect-plan", str(out / "trial_0")]) == EXIT_OK
    assert "predicted_impact" in capsys.readouterr().out


def test_cli_config_errors(tmp_path):
    (tmp_path / "bad.toml").write_text("node_budget = 2.0\n[sbm]\n")
    assert main(["attack", str(tmp_path / "bad.toml"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    (tmp_path / "broken.toml").write_text("node_budget = = 1")
    assert main(["attack", str(tmp_path / "broken.toml"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    (tmp_path / "c.toml").write_text(TOML)
    argv = ["attack", str(tmp_path / "c.toml"), "--out", str(tmp_path / "o"), "--mode", "lure-label"]
    assert main(argv) == EXIT_CONFIG
    assert main(["attack", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_cli_trial_failure_exit_code(tmp_path, monkeypatch):
    import influence_attack.pipeline as pl

    monkeypatch.setattr(pl, "craft_attack", lambda *a, **k: 1 / 0)
    (tmp_path / "c.toml").write_text(TOML)
    assert main(["attack", str(tmp_path / "c.toml"), "--out", str(tmp_path / "o")]) == EXIT_TRIALS


def test_cli_sweep_and_baseline(tmp_path):
    (tmp_path / "c.toml").write_text(TOML)
    cfg = str(tmp_path / "c.toml")
    argv = ["sweep", cfg, "--axis", "feature_budget", "--values", "0.05,0.1", "--trials", "1", "--out", str(tmp_path / "s.csv")]
    assert main(argv) == EXIT_OK
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 3
    argv = ["baseline", cfg, "--method", "random", "--trials", "1", "--out", str(tmp_path / "b")]
    assert main(argv) == EXIT_OK


def test_cli_reads_dataset_files(tmp_path):
    g = sbm_graph(SbmConfig(num_nodes=80, seed=2))
    write_graph(g, tmp_path / "edges.tsv", tmp_path / "features.csv", tmp_path / "labels.csv")
    (tmp_path / "c.toml").write_text(
        'edges = "edges.tsv"\nfeatures = "features.csv"\nlabels = "labels.csv"\nfeature_kind = "binary"\nn_proxies = 1\n'
    )
    assert main(["baseline", str(tmp_path / "c.toml"), "--method", "pagerank", "--out", str(tmp_path / "o")]) == EXIT_OK
