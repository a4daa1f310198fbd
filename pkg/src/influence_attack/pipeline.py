"""End-to-end trials: splits, surrogate, victim, attack or baseline, evaluation, reports."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .evaluation import (
    BaselineKind,
    BaselineMethod,
    Metrics,
    VictimConfig,
    baseline_global_perturbation,
    evaluate_attack,
    select_baseline_nodes,
    train_victim,
)
from .graph import (
    ConfigurationError,
    FeatureKind,
    Graph,
    SplitAssignment,
    candidate_filter,
    load_graph,
    make_splits,
    normalized_adjacency,
    propagation_operator,
    read_split_file,
)
from .influence import (
    AttackMode,
    AttackPlan,
    CandidateScore,
    ScoringContext,
    build_global_perturbation_ablation,
    greedy_select,
    score_all,
)
from .perturb import (
    FeaturePerturbation,
    PerturbationDomain,
    PerturbationError,
    apply_perturbation,
    make_domain,
    read_perturbations,
    write_perturbations,
)
from .surrogate import TrainConfig, propagate_features, train_surrogate
from .synthetic import SbmConfig, sbm_graph

log = logging.getLogger(__name__)

_PURPOSES = {"split": 1, "surrogate": 2, "victim": 3, "random": 4, "proxies": 5}


def derive_seed(base_seed: int, trial: int, purpose: str) -> int:
    """Independent 32-bit seed for one (trial, purpose) pair."""
    ss = np.random.SeedSequence([base_seed, trial, _PURPOSES[purpose]])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class AttackConfig:
    edges: str | None = None
    features: str | None = None
    labels: str | None = None
    splits: str | None = None
    feature_kind: str = "binary"
    num_labels: int | None = None
    sbm: SbmConfig | None = None

    mode: AttackMode = AttackMode()
    node_budget_fraction: float = 0.01
    feature_budget_fraction: float = 0.02
    degree_remove_fraction: float = 0.1
    depth: int = 2
    surrogate: TrainConfig = TrainConfig()
    victim: VictimConfig = VictimConfig()
    bounds: str | None = None
    trials: int = 1
    base_seed: int = 0
    n_proxies: int = 20
    workers: int = 1

    def __post_init__(self):
        for name in ("node_budget_fraction", "feature_budget_fraction"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1), got {value}")
        if not 0.0 <= self.degree_remove_fraction < 1.0:
            raise ConfigurationError("degree_remove_fraction must lie in [0, 1)")
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if self.sbm is None and not (self.edges and self.features):
            raise ConfigurationError("either dataset files or an sbm block must be configured")
        if self.bounds not in (None, "binary", "global-minmax", "per-feature"):
            raise ConfigurationError(f"unknown bounds policy {self.bounds!r}")

    def load(self) -> Graph:
        if self.sbm is not None:
            return sbm_graph(self.sbm)
        return load_graph(self.edges, self.features, self.labels, FeatureKind(self.feature_kind), self.num_labels)


def node_budget(fraction: float, num_nodes: int) -> int:
    return max(1, int(math.floor(fraction * num_nodes + 1e-9)))


@dataclass
class TrialSetup:
    """Per-trial artefacts shared by the attack and every baseline."""

    graph: Graph
    splits: SplitAssignment
    victim: object
    candidates: np.ndarray
    dom: PerturbationDomain
    node_budget: int


def prepare_trial(cfg: AttackConfig, g: Graph, trial: int) -> TrialSetup:
    seed = lambda purpose: derive_seed(cfg.base_seed, trial, purpose)  # noqa: E731
    splits = read_split_file(cfg.splits) if cfg.splits else make_splits(g, seed("split"))
    victim = train_victim(g, splits, replace(cfg.victim, seed=seed("victim")), hat_a=normalized_adjacency(g))
    return TrialSetup(
        g,
        splits,
        victim,
        candidate_filter(g, cfg.degree_remove_fraction),
        make_domain(g, cfg.feature_budget_fraction, cfg.bounds),
        node_budget(cfg.node_budget_fraction, g.num_nodes),
    )


@dataclass
class AttackOutcome:
    plan: AttackPlan
    scores: list[CandidateScore]
    perturbations: list[tuple[int, FeaturePerturbation]]
    attacked: Graph


def craft_attack(cfg: AttackConfig, setup: TrialSetup, trial: int) -> AttackOutcome:
    """Surrogate training, candidate scoring and greedy selection (black-box side)."""
    g = setup.graph
    cfg.mode.validate(g.num_labels)
    op = propagation_operator(g, cfg.depth)
    S = propagate_features(op, g.features)
    model = train_surrogate(
        S,
        g.labels,
        setup.splits.train,
        replace(cfg.surrogate, seed=derive_seed(cfg.base_seed, trial, "surrogate")),
        num_labels=g.num_labels,
        depth=cfg.depth,
    )
    ctx = ScoringContext.build(model, op, g.features, setup.dom)
    scores = score_all(setup.candidates, cfg.mode, ctx, workers=cfg.workers)
    plan = greedy_select(scores, setup.node_budget)
    if cfg.mode.global_perturbation:
        template = build_global_perturbation_ablation(scores, setup.dom)
        perturbations = [(i, template.for_node(g.features[i], setup.dom)) for i in plan.nodes]
    else:
        perturbations = list(plan.selected)
    attacked = perturb_graph(g, perturbations, setup.dom)
    return AttackOutcome(plan, scores, perturbations, attacked)


def perturb_graph(g: Graph, perturbations, dom: PerturbationDomain) -> Graph:
    binary = g.feature_kind is FeatureKind.BINARY
    X = g.features
    for node, eps in perturbations:
        if len(eps) > dom.feature_budget:
            raise PerturbationError(f"node {node}: perturbation exceeds the feature budget")
        X = apply_perturbation(X, node, eps, dom, binary=binary)
    return g.with_features(X)


def _floats(values) -> list:
    return [None if (v is None or not np.isfinite(v)) else round(float(v), 6) for v in values]


def _record(
    cfg: AttackConfig,
    method: str,
    setup: TrialSetup,
    trial: int,
    clean: Metrics,
    attacked: Metrics,
    nodes: Sequence[int],
    predicted_impact: int | None,
) -> dict:
    mode = cfg.mode
    if mode.global_perturbation:
        ablation = "global"
    elif not mode.consistency:
        ablation = "inconsistency"
    else:
        ablation = None
    return {
        "trial": trial,
        "status": "ok",
        "mode": mode.kind.value,
        "target_label": mode.target_label,
        "ablation": ablation,
        "method": method,
        "B_n": setup.node_budget,
        "B_f": setup.dom.feature_budget,
        "degree_fraction": cfg.degree_remove_fraction,
        "seed": cfg.base_seed + trial,
        "clean_accuracy": round(clean.accuracy, 6),
        "attacked_accuracy": round(attacked.accuracy, 6),
        "clean_per_label_accuracy": _floats(clean.per_label_accuracy),
        "per_label_accuracy": _floats(attacked.per_label_accuracy),
        "clean_misclassification_rate": _floats(clean.misclassification_rate_toward),
        "misclassification_rate": _floats(attacked.misclassification_rate_toward),
        "predicted_impact": predicted_impact,
        "selected": [int(v) for v in nodes],
    }


def attack_trial(cfg: AttackConfig, g: Graph, trial: int, plan_dir: Path | None = None) -> dict:
    setup = prepare_trial(cfg, g, trial)
    outcome = craft_attack(cfg, setup, trial)
    clean, attacked = evaluate_attack(setup.victim, g, outcome.attacked, setup.splits, cfg.mode)
    if plan_dir is not None:
        write_plan(plan_dir / f"trial_{trial}", outcome, setup, cfg)
    return _record(
        cfg, "influence", setup, trial, clean, attacked, outcome.plan.nodes, outcome.plan.predicted_impact
    )


def baseline_trial(cfg: AttackConfig, g: Graph, trial: int, method: BaselineKind) -> dict:
    setup = prepare_trial(cfg, g, trial)
    selector = BaselineMethod(method, seed=derive_seed(cfg.base_seed, trial, "random"))
    nodes = select_baseline_nodes(selector, setup.candidates, setup.node_budget, g)
    template = baseline_global_perturbation(
        g,
        setup.splits,
        setup.dom,
        cfg.n_proxies,
        cfg.victim,
        seed=derive_seed(cfg.base_seed, trial, "proxies"),
    )
    perturbations = [(i, template.for_node(g.features[i], setup.dom)) for i in nodes]
    attacked_g = perturb_graph(g, perturbations, setup.dom)
    clean, attacked = evaluate_attack(setup.victim, g, attacked_g, setup.splits, cfg.mode)
    return _record(cfg, BaselineKind(method).value, setup, trial, clean, attacked, nodes, None)


def aggregate(records: Sequence[dict]) -> dict:
    ok = [r for r in records if r.get("status") == "ok"]
    out = {"trials": len(records), "succeeded": len(ok), "failed": len(records) - len(ok)}
    for key in ("clean_accuracy", "attacked_accuracy"):
        vals = np.array([r[key] for r in ok], dtype=np.float64)
        out[f"{key}_mean"] = round(float(vals.mean()), 6) if vals.size else None
        out[f"{key}_std"] = round(float(vals.std()), 6) if vals.size else None
    if ok:
        for key in ("method", "mode", "target_label", "ablation", "B_n", "B_f", "degree_fraction"):
            out[key] = ok[0][key]
    return out


def run_trials(
    cfg: AttackConfig,
    trial_fn: Callable[[int], dict],
    out_dir: str | Path | None = None,
    prefix: str = "attack",
) -> tuple[list[dict], dict]:
    """Run ``trial_fn`` for every trial; failures become records, not exceptions."""
    records = []
    for t in range(cfg.trials):
        try:
            rec = trial_fn(t)
        except ConfigurationError:
            raise
        except Exception as exc:  # a failed trial is reported, the run continues
            log.error("trial %d failed: %s", t, exc)
            rec = {"trial": t, "status": "failed", "error": str(exc), "seed": cfg.base_seed + t}
        records.append(rec)
        if out_dir is not None:
            _append_jsonl(Path(out_dir) / f"{prefix}_trials.jsonl", rec)
    summary = aggregate(records)
    if out_dir is not None:
        (Path(out_dir) / f"{prefix}_aggregate.json").write_text(dumps(summary) + "\n", encoding="utf-8")
    return records, summary


def run_attack(cfg: AttackConfig, out_dir: str | Path | None = None, g: Graph | None = None):
    g = cfg.load() if g is None else g
    cfg.mode.validate(g.num_labels)
    _prepare_out(out_dir, "attack")
    plan_dir = Path(out_dir) if out_dir is not None else None
    return run_trials(cfg, lambda t: attack_trial(cfg, g, t, plan_dir), out_dir, "attack")


def run_baseline(
    cfg: AttackConfig, method: BaselineKind | str, out_dir: str | Path | None = None, g: Graph | None = None
):
    g = cfg.load() if g is None else g
    cfg.mode.validate(g.num_labels)
    method = BaselineKind(method)
    prefix = f"baseline_{method.value}"
    _prepare_out(out_dir, prefix)
    return run_trials(cfg, lambda t: baseline_trial(cfg, g, t, method), out_dir, prefix)


def run_sweep(
    cfg: AttackConfig,
    axis: str,
    values: Sequence[float],
    out_path: str | Path | None = None,
    g: Graph | None = None,
) -> list[tuple[float, float, float]]:
    """One attack run per budget value; rows are (value, mean accuracy, stddev)."""
    if list(values) != sorted(values):
        raise ConfigurationError("sweep values must be sorted ascending")
    field_name = {"node_budget": "node_budget_fraction", "feature_budget": "feature_budget_fraction"}.get(axis)
    if field_name is None:
        raise ConfigurationError(f"unknown sweep axis {axis!r}")
    g = cfg.load() if g is None else g
    rows = []
    for value in values:
        _, summary = run_attack(replace(cfg, **{field_name: value}), None, g)
        rows.append((float(value), summary["attacked_accuracy_mean"], summary["attacked_accuracy_std"]))
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["value", "mean_accuracy", "stddev"])
            for value, mean, std in rows:
                writer.writerow([f"{value:.6g}", f"{mean:.6f}", f"{std:.6f}"])
    return rows


# --------------------------------------------------------------------------- #
# Report files
# --------------------------------------------------------------------------- #
def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _append_jsonl(path: Path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(dumps(record) + "\n")


def _prepare_out(out_dir, prefix: str) -> None:
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # reports are append-only within one run; a new run starts a fresh file
    (out / f"{prefix}_trials.jsonl").write_text("", encoding="utf-8")


def write_plan(directory: Path, outcome: AttackOutcome, setup: TrialSetup, cfg: AttackConfig) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    plan = outcome.plan
    if len(plan.selected) > setup.node_budget:
        raise ConfigurationError("plan exceeds node budget")
    with open(directory / "plan.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["order", "node", "affected"])
        for order, ((node, _), hit) in enumerate(zip(plan.selected, plan.affected)):
            writer.writerow([order, node, " ".join(str(j) for j in sorted(hit))])
    write_perturbations(directory / "perturbations.csv", setup.graph.features, outcome.perturbations)
    summary = {
        "mode": cfg.mode.kind.value,
        "B_n": setup.node_budget,
        "B_f": setup.dom.feature_budget,
        "predicted_impact": plan.predicted_impact,
    }
    (directory / "summary.txt").write_text(
        " ".join(f"{k}={v}" for k, v in summary.items()) + "\n", encoding="utf-8"
    )


def read_plan(directory: str | Path) -> dict:
    directory = Path(directory)
    with open(directory / "plan.csv", encoding="utf-8", newline="") as fh:
        rows = [
            (int(r["node"]), [int(j) for j in r["affected"].split()]) for r in csv.DictReader(fh)
        ]
    summary = dict(
        item.split("=", 1) for item in (directory / "summary.txt").read_text(encoding="utf-8").split()
    )
    return {
        "selected": rows,
        "perturbations": read_perturbations(directory / "perturbations.csv"),
        "summary": summary,
    }
