"""Adversarial influence scores per candidate and budgeted greedy target selection."""

from __future__ import annotations

import enum
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import ConfigurationError, PropagationOperator, receptive_weights
from .perturb import (
    LB_SNAP,
    UB_SNAP,
    FeaturePerturbation,
    PairwiseSolution,
    PerturbationDomain,
    PerturbationTemplate,
    aggregate_final_perturbation,
    solve_pairs,
)
from .surrogate import SurrogateModel, logits, propagate_features

log = logging.getLogger(__name__)


class AttackKind(str, enum.Enum):
    UNTARGETED = "untargeted"
    DEGRADE_LABEL = "degrade-label"  # Type I: misclassify nodes predicted as c_t
    LURE_LABEL = "lure-label"  # Type II: push nodes towards c_t


@dataclass(frozen=True)
class AttackMode:
    kind: AttackKind = AttackKind.UNTARGETED
    target_label: int | None = None
    consistency: bool = True
    global_perturbation: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if self.kind is not AttackKind.UNTARGETED and self.target_label is None:
            raise ConfigurationError(f"{self.kind.value} attacks need a target label")

    def validate(self, num_labels: int) -> None:
        if self.kind is not AttackKind.UNTARGETED and not 0 <= self.target_label < num_labels:
            raise ConfigurationError(
                f"target label {self.target_label} outside [0, {num_labels})"
            )


@dataclass(frozen=True)
class CandidateScore:
    candidate: int
    chosen_label: int | None
    final_perturbation: FeaturePerturbation
    affected: frozenset[int]
    score: int
    # flips achievable by individual per-neighbour optima (diagnostic only)
    pairwise_count: int = 0
    solutions: tuple[PairwiseSolution, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class AttackPlan:
    selected: list[tuple[int, FeaturePerturbation]]
    affected: list[frozenset[int]]
    covered: frozenset[int]

    @property
    def predicted_impact(self) -> int:
        return len(self.covered)

    @property
    def nodes(self) -> list[int]:
        return [node for node, _ in self.selected]


@dataclass(frozen=True, eq=False)
class ScoringContext:
    """Everything score_candidate reads, computed once per attacked graph."""

    model: SurrogateModel
    op: PropagationOperator
    X: np.ndarray
    dom: PerturbationDomain
    clean_logits: np.ndarray
    clean_labels: np.ndarray

    @classmethod
    def build(cls, m: SurrogateModel, op: PropagationOperator, X: np.ndarray, dom: PerturbationDomain):
        z = logits(m, propagate_features(op, X))
        return cls(m, op, np.asarray(X, dtype=np.float64), dom, z, np.argmax(z, axis=1))


def _admissible(mode: AttackMode, clean: np.ndarray, k: int) -> np.ndarray:
    n = clean.shape[0]
    if mode.kind is AttackKind.UNTARGETED:
        return np.ones((n, k), dtype=bool)
    if mode.kind is AttackKind.DEGRADE_LABEL:
        mask = np.zeros((n, k), dtype=bool)
        mask[clean == mode.target_label] = True
        return mask
    mask = np.zeros((n, k), dtype=bool)
    mask[:, mode.target_label] = True
    return mask


def _qualified(mode: AttackMode, label: int | None, clean: np.ndarray, after: np.ndarray) -> np.ndarray:
    if mode.kind is AttackKind.DEGRADE_LABEL:
        return (clean == mode.target_label) & (after != clean)
    if mode.kind is AttackKind.LURE_LABEL:
        return (after == mode.target_label) & (clean != mode.target_label)
    if label is None:
        return after != clean
    return (after == label) & (clean != label)


def score_candidate(
    i: int,
    mode: AttackMode,
    m: SurrogateModel | None = None,
    op: PropagationOperator | None = None,
    X: np.ndarray | None = None,
    dom: PerturbationDomain | None = None,
    ctx: ScoringContext | None = None,
) -> CandidateScore:
    """Influence score of candidate i under its single finalized perturbation.

    Per-neighbour optima are grouped by the label they flip to; each group is
    merged into one perturbation, every receptive neighbour is re-predicted
    under it, and the group with the most mode-qualified flips wins.
    """
    if ctx is None:
        ctx = ScoringContext.build(m, op, X, dom)
    empty = CandidateScore(i, None, FeaturePerturbation(), frozenset(), 0)
    nb, alphas = receptive_weights(ctx.op, i)
    if nb.size == 0:
        return empty
    base = ctx.clean_logits[nb]
    clean = ctx.clean_labels[nb]
    k = ctx.model.num_labels
    x_i = ctx.X[i]

    admissible = _admissible(mode, clean, k)
    rows = np.flatnonzero(admissible.any(axis=1))
    solutions = solve_pairs(
        ctx.model, x_i, i, nb[rows], alphas[rows], base[rows], admissible[rows], ctx.dom
    )
    if not solutions:
        return empty

    groups: dict[int | None, list[PairwiseSolution]] = defaultdict(list)
    for sol in solutions:
        groups[sol.target_label if mode.consistency else None].append(sol)
    pairwise = max(len(g) for g in groups.values())

    best = None
    for label in sorted(groups, key=lambda c: -1 if c is None else c):
        eps = aggregate_final_perturbation(groups[label], ctx.dom, x_i)
        if not eps.entries:
            continue
        shift = np.zeros(k)
        for d, delta in eps.entries.items():
            shift += delta * ctx.model.weights[d]
        after = np.argmax(base + alphas[:, None] * shift[None, :], axis=1)
        hit = _qualified(mode, label, clean, after)
        count = int(hit.sum())
        if best is None or count > best.score:
            best = CandidateScore(
                i, label, eps, frozenset(int(j) for j in nb[hit]), count, pairwise, tuple(solutions)
            )
    if best is None or best.score == 0:
        return CandidateScore(i, None, FeaturePerturbation(), frozenset(), 0, pairwise, tuple(solutions))
    return best


def score_all(
    candidates: Iterable[int], mode: AttackMode, ctx: ScoringContext, workers: int = 1
) -> list[CandidateScore]:
    """Score every candidate; the result is ordered by node id regardless of workers."""
    nodes = sorted(int(c) for c in candidates)
    if workers <= 1:
        return [score_candidate(i, mode, ctx=ctx) for i in nodes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: score_candidate(i, mode, ctx=ctx), nodes))


def greedy_select(scores: Sequence[CandidateScore], node_budget: int) -> AttackPlan:
    """Pick up to ``node_budget`` candidates by largest residual influence.

    A neighbour credited to an earlier pick is not counted again; affected
    sets themselves are frozen, never re-optimised against the used set.
    """
    if node_budget < 1:
        raise ConfigurationError("node budget must be at least 1")
    if not scores:
        log.warning("greedy selection called with an empty candidate set")
        return AttackPlan([], [], frozenset())
    remaining = {s.candidate: s for s in scores}
    used: set[int] = set()
    selected, affected = [], []
    for _ in range(node_budget):
        best, best_gain = None, 0
        for node in sorted(remaining):
            gain = len(remaining[node].affected - used)
            if gain > best_gain:
                best, best_gain = node, gain
        if best is None:
            break
        s = remaining.pop(best)
        fresh = frozenset(s.affected - used)
        selected.append((best, s.final_perturbation))
        affected.append(fresh)
        used |= fresh
    return AttackPlan(selected, affected, frozenset(used))


def build_global_perturbation_ablation(
    scores: Iterable[CandidateScore], dom: PerturbationDomain
) -> PerturbationTemplate:
    """One shared (feature, direction) template from all candidates' final perturbations."""
    count: dict[int, int] = defaultdict(int)
    dir_count: dict[tuple[int, int], int] = defaultdict(int)
    for s in scores:
        for d, sgn in s.final_perturbation.directions().items():
            count[d] += 1
            dir_count[d, sgn] += 1
    ranked = sorted(count, key=lambda d: (-count[d], d))[: dom.feature_budget]
    return PerturbationTemplate(
        {d: UB_SNAP if dir_count[d, UB_SNAP] >= dir_count[d, LB_SNAP] else LB_SNAP for d in ranked}
    )
