from .baselines import (
    BaselineKind,
    BaselineMethod,
    baseline_global_perturbation,
    betweenness,
    pagerank,
    select_baseline_nodes,
    template_from_gradient,
)
from .metrics import ContractError, Metrics, compute_metrics, evaluate_attack
from .victim import VictimConfig, VictimGcn, train_victim, victim_predict

__all__ = [
    "BaselineKind",
    "BaselineMethod",
    "ContractError",
    "Metrics",
    "VictimConfig",
    "VictimGcn",
    "baseline_global_perturbation",
    "betweenness",
    "compute_metrics",
    "evaluate_attack",
    "pagerank",
    "select_baseline_nodes",
    "template_from_gradient",
    "train_victim",
    "victim_predict",
]
