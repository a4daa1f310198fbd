"""Black-box feature-perturbation attacks on GCN node classifiers via adversarial influence maximization."""

from .graph import (
    FeatureKind,
    Graph,
    PropagationOperator,
    SplitAssignment,
    candidate_filter,
    load_graph,
    make_splits,
    normalized_adjacency,
    propagation_operator,
    receptive_neighbors,
)
from .influence import (
    AttackKind,
    AttackMode,
    AttackPlan,
    CandidateScore,
    ScoringContext,
    build_global_perturbation_ablation,
    greedy_select,
    score_candidate,
)
from .perturb import (
    FeaturePerturbation,
    PairwiseSolution,
    PerturbationDomain,
    aggregate_final_perturbation,
    apply_perturbation,
    optimal_pair_perturbation,
    restrict_topk,
    solve_box_lp,
)
from .surrogate import SurrogateModel, TrainConfig, propagate_features, train_surrogate

__version__ = "0.1.0"
