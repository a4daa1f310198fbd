"""Closed-form margin LP under box and cardinality constraints, and perturbation aggregation.

For a candidate node i and a receptive neighbour j, the surrogate margin
between labels c and ĉ is affine in the perturbation of row i, with
coefficients ``omega_d = α_ij (w_dc - w_dĉ)``. With independent per-feature
boxes the LP optimum snaps every coordinate to one of its bounds, and under an
L0 budget of ``B_f`` the best subset is simply the ``B_f`` largest positive
per-feature gains.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .graph import ConfigurationError, FeatureKind, Graph, PropagationOperator
from .surrogate import SurrogateModel, clean_logits, perturbed_logits

UB_SNAP = 1
LB_SNAP = -1


class PerturbationError(ValueError):
    """A perturbation breaks its budget or box constraints."""


@dataclass(frozen=True, eq=False)
class PerturbationDomain:
    lb: np.ndarray
    ub: np.ndarray
    feature_budget: int

    def __post_init__(self):
        lb = np.asarray(self.lb, dtype=np.float64)
        ub = np.asarray(self.ub, dtype=np.float64)
        if lb.shape != ub.shape or lb.ndim != 1:
            raise ConfigurationError("lb and ub must be D-vectors of equal length")
        if (lb > ub).any():
            raise ConfigurationError("lower bound exceeds upper bound")
        if self.feature_budget < 1:
            raise ConfigurationError("feature budget must be at least 1")
        lb.setflags(write=False)
        ub.setflags(write=False)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def num_features(self) -> int:
        return self.lb.shape[0]


def feature_budget(fraction: float, num_features: int) -> int:
    """``floor(fraction * D)`` with a minimum of one feature."""
    return max(1, int(math.floor(fraction * num_features + 1e-9)))


def make_domain(g: Graph, budget_fraction: float, policy: str | None = None) -> PerturbationDomain:
    """Bounds for ``g`` under a bounds policy.

    ``binary`` uses [0, 1]; ``global-minmax`` uses the min and max over the whole
    feature matrix for every feature; ``per-feature`` uses column min and max.
    The default is ``binary`` for binary graphs and ``global-minmax`` otherwise.
    """
    d = g.num_features
    if policy is None:
        policy = "binary" if g.feature_kind is FeatureKind.BINARY else "global-minmax"
    if policy == "binary":
        lb, ub = np.zeros(d), np.ones(d)
    elif policy == "global-minmax":
        lb = np.full(d, g.features.min())
        ub = np.full(d, g.features.max())
    elif policy == "per-feature":
        lb, ub = g.features.min(axis=0), g.features.max(axis=0)
    else:
        raise ConfigurationError(f"unknown bounds policy {policy!r}")
    return PerturbationDomain(lb, ub, feature_budget(budget_fraction, d))


@dataclass(frozen=True)
class FeaturePerturbation:
    """Sparse per-feature deltas applied to a single node's feature row."""

    entries: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "entries", {int(d): float(v) for d, v in sorted(self.entries.items())}
        )

    def __len__(self) -> int:
        return len(self.entries)

    def features(self) -> list[int]:
        return list(self.entries)

    def dense(self, num_features: int) -> np.ndarray:
        out = np.zeros(num_features)
        for d, v in self.entries.items():
            out[d] = v
        return out

    def directions(self) -> dict[int, int]:
        return {d: UB_SNAP if v > 0 else LB_SNAP for d, v in self.entries.items()}

    def validate(self, x_i: np.ndarray, dom: PerturbationDomain, binary: bool = False) -> None:
        if len(self.entries) > dom.feature_budget:
            raise PerturbationError(
                f"{len(self.entries)} perturbed features exceed budget {dom.feature_budget}"
            )
        for d, delta in self.entries.items():
            if not 0 <= d < dom.num_features:
                raise PerturbationError(f"feature index {d} out of range")
            new = x_i[d] + delta
            tol = _rounding_slack(dom, d)
            if new < dom.lb[d] - tol or new > dom.ub[d] + tol:
                raise PerturbationError(
                    f"feature {d}: {x_i[d]} + {delta} leaves [{dom.lb[d]}, {dom.ub[d]}]"
                )
            if binary and new not in (0.0, 1.0):
                raise PerturbationError(f"feature {d}: binary value became {new}")


def _rounding_slack(dom: PerturbationDomain, d: int) -> float:
    # x + (bound - x) may miss the bound by a few ulps
    return 1e-12 * (1.0 + abs(dom.lb[d]) + abs(dom.ub[d]))


@dataclass(frozen=True)
class PerturbationTemplate:
    """Feature -> snap direction, turned into concrete deltas per node."""

    directions: Mapping[int, int]

    def for_node(self, x_i: np.ndarray, dom: PerturbationDomain) -> FeaturePerturbation:
        entries = {}
        for d, sgn in sorted(self.directions.items()):
            delta = (dom.ub[d] if sgn == UB_SNAP else dom.lb[d]) - x_i[d]
            if delta != 0.0:
                entries[d] = delta
        return FeaturePerturbation(entries)


@dataclass(frozen=True)
class PairwiseSolution:
    candidate: int
    neighbor: int
    source_label: int
    target_label: int
    perturbation: FeaturePerturbation
    gains: Mapping[int, float]
    objective: float
    flips: bool


# --------------------------------------------------------------------------- #
# The LP
# --------------------------------------------------------------------------- #
def margin_coefficients(
    m: SurrogateModel, op: PropagationOperator, i: int, j: int, c: int, c_hat: int
) -> np.ndarray:
    if c == c_hat:
        raise ValueError("target label must differ from the source label")
    alpha = op.weight(i, j)
    return alpha * (m.weights[:, c] - m.weights[:, c_hat])


def solve_box_lp(
    omega: np.ndarray, x_i: np.ndarray, dom: PerturbationDomain
) -> tuple[np.ndarray, np.ndarray]:
    """Unbudgeted optimum of ``omega @ eps`` over ``lb <= x_i + eps <= ub``.

    Returns the snapped perturbation and the per-feature gains ``omega * eps``.
    Zero coefficients snap to the lower bound and contribute nothing.
    """
    omega = np.asarray(omega, dtype=np.float64)
    eps = np.where(omega > 0, dom.ub - x_i, dom.lb - x_i)
    return eps, omega * eps


def topk_order(gains: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest gains along the last axis, ties to lower index."""
    return np.argsort(-gains, axis=-1, kind="stable")[..., :k]


def restrict_topk(
    gains: np.ndarray, eps_full: np.ndarray, dom: PerturbationDomain
) -> FeaturePerturbation:
    order = topk_order(np.asarray(gains), dom.feature_budget)
    keep = [int(d) for d in order if gains[d] > 0]
    return FeaturePerturbation({d: eps_full[d] for d in keep})


def restricted_objective(gains: np.ndarray, eps: FeaturePerturbation) -> float:
    ranked = sorted(eps.entries, key=lambda d: (-gains[d], d))
    return float(np.sum([gains[d] for d in ranked]))


def optimal_pair_perturbation(
    m: SurrogateModel,
    op: PropagationOperator,
    X: np.ndarray,
    i: int,
    j: int,
    targets: Iterable[int],
    dom: PerturbationDomain,
    base: np.ndarray | None = None,
) -> PairwiseSolution | None:
    """Best flipping perturbation of node i against neighbour j.

    ``targets`` lists the admissible labels c. A solution only counts if the
    perturbed surrogate argmax at j is exactly c; among those the largest
    margin objective wins, ties going to the lower label.
    """
    z = clean_logits(m, op, X, j) if base is None else base
    c_hat = int(np.argmax(z))
    x_i = X[i]
    best = None
    for c in sorted(set(int(t) for t in targets)):
        if c == c_hat:
            continue
        omega = margin_coefficients(m, op, i, j, c, c_hat)
        eps_full, gains = solve_box_lp(omega, x_i, dom)
        eps = restrict_topk(gains, eps_full, dom)
        if not eps.entries:
            continue
        after = perturbed_logits(m, op, X, i, eps, j, base=z)
        if int(np.argmax(after)) != c:
            continue
        objective = float(z[c] - z[c_hat]) + restricted_objective(gains, eps)
        if best is None or objective > best.objective:
            best = PairwiseSolution(
                i, j, c_hat, c, eps, {d: float(gains[d]) for d in eps.entries}, objective, True
            )
    return best


def solve_pairs(
    m: SurrogateModel,
    x_i: np.ndarray,
    candidate: int,
    neighbors: np.ndarray,
    alphas: np.ndarray,
    base: np.ndarray,
    admissible: np.ndarray,
    dom: PerturbationDomain,
) -> list[PairwiseSolution]:
    """Vectorised :func:`optimal_pair_perturbation` over many neighbours of one candidate.

    ``base`` holds the clean logits of ``neighbors`` (n, K); ``admissible`` is an
    (n, K) mask of allowed target labels. Only flipping solutions are returned.
    """
    n = len(neighbors)
    if n == 0:
        return []
    W = m.weights
    k = W.shape[1]
    src = np.argmax(base, axis=1)
    wt = W.T
    omega = alphas[:, None, None] * (wt[None, :, :] - wt[src][:, None, :])
    eps_full = np.where(omega > 0, dom.ub - x_i, dom.lb - x_i)
    gains = omega * eps_full
    order = topk_order(gains, dom.feature_budget)
    top_gain = np.take_along_axis(gains, order, axis=-1)
    keep = top_gain > 0
    top_eps = np.where(keep, np.take_along_axis(eps_full, order, axis=-1), 0.0)
    shift = np.einsum("nkb,nkbl->nkl", top_eps, W[order])
    after = base[:, None, :] + alphas[:, None, None] * shift
    labels = np.arange(k)
    flips = (np.argmax(after, axis=-1) == labels[None, :]) & admissible & keep.any(axis=-1)
    flips[np.arange(n), src] = False
    objective = (base - base[np.arange(n), src][:, None]) + np.where(keep, top_gain, 0.0).sum(-1)

    out = []
    for row in np.flatnonzero(flips.any(axis=1)):
        cs = np.flatnonzero(flips[row])
        c = int(cs[np.argmax(objective[row, cs])])
        kept = order[row, c][keep[row, c]]
        out.append(
            PairwiseSolution(
                candidate,
                int(neighbors[row]),
                int(src[row]),
                c,
                FeaturePerturbation({int(d): eps_full[row, c, d] for d in kept}),
                {int(d): float(gains[row, c, d]) for d in kept},
                float(objective[row, c]),
                True,
            )
        )
    return out


# --------------------------------------------------------------------------- #
# Final perturbation
# --------------------------------------------------------------------------- #
def aggregate_final_perturbation(
    solutions: Iterable[PairwiseSolution], dom: PerturbationDomain, x_i: np.ndarray
) -> FeaturePerturbation:
    """Merge per-neighbour optima into one perturbation for the candidate.

    Features are ranked by how many solutions touch them (ties: larger summed
    |gain|, then lower index) and the top ``B_f`` are kept. Each kept feature
    takes its most frequent snap direction (ties: larger summed |gain|, then the
    upper bound).
    """
    count: dict[int, int] = defaultdict(int)
    gain_sum: dict[int, float] = defaultdict(float)
    dir_count: dict[tuple[int, int], int] = defaultdict(int)
    dir_gain: dict[tuple[int, int], float] = defaultdict(float)
    for sol in solutions:
        for d, delta in sol.perturbation.entries.items():
            sgn = UB_SNAP if delta > 0 else LB_SNAP
            g = abs(sol.gains.get(d, 0.0))
            count[d] += 1
            gain_sum[d] += g
            dir_count[d, sgn] += 1
            dir_gain[d, sgn] += g
    ranked = sorted(count, key=lambda d: (-count[d], -gain_sum[d], d))
    entries = {}
    for d in ranked[: dom.feature_budget]:
        sgn = min(
            (UB_SNAP, LB_SNAP),
            key=lambda s: (-dir_count[d, s], -dir_gain[d, s], -s),
        )
        delta = (dom.ub[d] if sgn == UB_SNAP else dom.lb[d]) - x_i[d]
        if delta != 0.0:
            entries[d] = delta
    return FeaturePerturbation(entries)


def apply_perturbation(
    X: np.ndarray,
    i: int,
    eps: FeaturePerturbation,
    dom: PerturbationDomain,
    binary: bool = False,
) -> np.ndarray:
    """Copy of X with row i shifted by eps; constraint violations raise."""
    eps.validate(X[i], dom, binary=binary)
    out = np.array(X, dtype=np.float64, copy=True)
    for d, delta in eps.entries.items():
        new = X[i, d] + delta
        # land exactly on a bound that rounding narrowly missed
        for bound in (dom.lb[d], dom.ub[d]):
            if abs(new - bound) <= _rounding_slack(dom, d):
                new = bound
        out[i, d] = new
    if binary:
        # x + (1 - x) and x + (0 - x) are exact in floating point for x in {0, 1}
        assert np.isin(out[i], (0.0, 1.0)).all()
    return out


# --------------------------------------------------------------------------- #
# CSV dump: node,feature,delta,new_value
# --------------------------------------------------------------------------- #
def write_perturbations(
    path: str | Path, X: np.ndarray, perturbations: Iterable[tuple[int, FeaturePerturbation]]
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "feature", "delta", "new_value"])
        for node, eps in perturbations:
            for d, delta in eps.entries.items():
                writer.writerow([node, d, repr(float(delta)), repr(float(X[node, d] + delta))])


def read_perturbations(path: str | Path) -> dict[int, FeaturePerturbation]:
    grouped: dict[int, dict[int, float]] = defaultdict(dict)
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            grouped[int(row["node"])][int(row["feature"])] = float(row["delta"])
    return {node: FeaturePerturbation(entries) for node, entries in grouped.items()}
