"""The eight acquisition strategies.

Each strategy maps a QueryContext (one client's view of one round) to
exactly ``budget`` distinct unlabeled row positions.  All strategies are
pure functions of the context, including its generator state, and break
every tie by lowest row position, so repeated evaluation is bit-identical
and clients can be queried concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Clustering,
    k_center_greedy,
    kmeans,
    kmeans_pp_indices,
    pairwise_sq_dist,
    typicality,
)
from .model import (
    ModelParams,
    gradient_embedding,
    penultimate_embedding,
    predict_proba,
)

GLOBAL_SELECTOR = "global"
LOCAL_ONLY_SELECTOR = "local_only"
SELECTOR_CHOICES = (GLOBAL_SELECTOR, LOCAL_ONLY_SELECTOR)

BADGE_FALLBACK_NOTE = "badge_fallback_random"

_PROB_FLOOR = 1e-12


@dataclass
class GeometryConfig:
    """Knobs shared by the geometry-based strategies."""

    typicality_k: int = 20
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6


@dataclass
class QueryContext:
    """Everything one client exposes to a strategy for one selection round.

    ``labeled`` and ``unlabeled`` are disjoint sorted positions into
    ``features`` and together cover every row.  ``typicality_features``
    optionally replaces ``features`` for the typicality-clustering strategy
    only (a per-client representation override); model-driven strategies
    always score the true features.
    """

    features: np.ndarray
    labeled: np.ndarray
    unlabeled: np.ndarray
    budget: int
    global_params: ModelParams
    rng: np.random.Generator
    local_only_params: ModelParams | None = None
    selector_choice: str = GLOBAL_SELECTOR
    logo_micro_model: str = GLOBAL_SELECTOR
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    typicality_features: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def validate(self) -> "QueryContext":
        n = self.features.shape[0]
        lab = np.asarray(self.labeled, dtype=np.int64)
        unl = np.asarray(self.unlabeled, dtype=np.int64)
        merged = np.concatenate([lab, unl])
        if len(np.unique(merged)) != len(merged) or not np.array_equal(
                np.sort(merged), np.arange(n)):
            raise ValueError("labeled and unlabeled must partition the feature rows")
        if not 1 <= self.budget <= len(unl):
            raise ValueError(f"budget must be in [1, {len(unl)}], got {self.budget}")
        if self.selector_choice not in SELECTOR_CHOICES:
            raise ValueError(f"selector_choice must be one of {SELECTOR_CHOICES}")
        if self.selector_choice == LOCAL_ONLY_SELECTOR and self.local_only_params is None:
            raise ValueError("selector_choice=local_only requires local_only_params")
        if self.typicality_features is not None and \
                self.typicality_features.shape[0] != n:
            raise ValueError("typicality_features must have one row per feature row")
        return self


def _scoring_params(ctx: QueryContext) -> ModelParams:
    if ctx.selector_choice == LOCAL_ONLY_SELECTOR:
        if ctx.local_only_params is None:
            raise ValueError("selector_choice=local_only requires local_only_params")
        return ctx.local_only_params
    return ctx.global_params


def _require_local_only(ctx: QueryContext, name: str) -> ModelParams:
    if ctx.local_only_params is None:
        raise ValueError(f"{name} requires a local-only model in the context")
    return ctx.local_only_params


def _top_by_score(unlabeled: np.ndarray, scores: np.ndarray, budget: int) -> np.ndarray:
    """Positions of the ``budget`` highest scores; ties to the lower position."""
    order = np.lexsort((unlabeled, -scores))
    return unlabeled[order[:budget]]


def _margins(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Top-1 minus top-2 predicted probability per row (small = uncertain)."""
    p = predict_proba(params, x)
    if p.shape[1] == 1:
        return np.ones(len(p))
    top2 = np.partition(p, p.shape[1] - 2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def random_query(ctx: QueryContext) -> np.ndarray:
    """Uniform sample without replacement from the unlabeled pool."""
    ctx.validate()
    order = ctx.rng.permutation(len(ctx.unlabeled))
    return ctx.unlabeled[order[:ctx.budget]]


def entropy_query(ctx: QueryContext) -> np.ndarray:
    """Top-budget rows by Shannon entropy of the predicted distribution."""
    ctx.validate()
    p = predict_proba(_scoring_params(ctx), ctx.features[ctx.unlabeled])
    scores = -np.sum(p * np.log(np.clip(p, _PROB_FLOOR, None)), axis=1)
    return _top_by_score(ctx.unlabeled, scores, ctx.budget)


def margin_query(ctx: QueryContext) -> np.ndarray:
    """Top-budget rows by negated top-1/top-2 probability margin."""
    ctx.validate()
    scores = -_margins(_scoring_params(ctx), ctx.features[ctx.unlabeled])
    return _top_by_score(ctx.unlabeled, scores, ctx.budget)


def coreset_query(ctx: QueryContext) -> np.ndarray:
    """Greedy k-center in penultimate-embedding space.

    Each pick maximizes the distance to the labeled-plus-picked set.  With no
    labeled points the first pick is the lowest position of the pair
    realizing the maximum pairwise distance.
    """
    ctx.validate()
    emb = penultimate_embedding(_scoring_params(ctx), ctx.features)
    n = emb.shape[0]
    covered = np.zeros(n, dtype=bool)
    covered[ctx.labeled] = True

    picks: list[int] = []
    budget = ctx.budget
    if not covered.any():
        d = pairwise_sq_dist(emb[ctx.unlabeled])
        flat = int(np.argmax(d))
        i, j = divmod(flat, d.shape[0])
        first = int(ctx.unlabeled[min(i, j)])
        picks.append(first)
        covered[first] = True
        budget -= 1
    if budget > 0:
        picks.extend(k_center_greedy(emb, covered, budget))
    return np.asarray(picks, dtype=np.int64)


def badge_query(ctx: QueryContext) -> np.ndarray:
    """Seeded k-means++ picks in gradient-embedding space.

    The first pick is drawn proportionally to squared embedding norm, later
    picks proportionally to squared distance from the picked set.  When every
    embedding is zero (all predictions fully confident) the selection falls
    back to random_query and a note is recorded.
    """
    ctx.validate()
    emb = gradient_embedding(_scoring_params(ctx), ctx.features[ctx.unlabeled])
    norms_sq = np.einsum("ij,ij->i", emb, emb)
    if not np.any(norms_sq > 0.0):
        ctx.notes.append(BADGE_FALLBACK_NOTE)
        return random_query(ctx)
    picks = kmeans_pp_indices(emb, ctx.budget, ctx.rng, first_weights=norms_sq)
    return ctx.unlabeled[picks]


def _symmetric_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    p = np.clip(p, _PROB_FLOOR, None)
    q = np.clip(q, _PROB_FLOOR, None)
    return np.sum((p - q) * (np.log(p) - np.log(q)), axis=1)


def kafal_query(ctx: QueryContext) -> np.ndarray:
    """Top-budget rows by global vs local-only prediction disagreement,
    measured as symmetrized KL divergence with a 1e-12 probability floor."""
    ctx.validate()
    local_only = _require_local_only(ctx, "kafal")
    x = ctx.features[ctx.unlabeled]
    scores = _symmetric_kl(predict_proba(ctx.global_params, x),
                           predict_proba(local_only, x))
    return _top_by_score(ctx.unlabeled, scores, ctx.budget)


def logo_query(ctx: QueryContext) -> np.ndarray:
    """Cluster-then-uncertainty selection.

    Macro: k-means with k = budget on the local-only model's gradient
    embeddings of the unlabeled pool.  Micro: from each cluster, the sample
    with the smallest probability margin under the configured micro model
    (global by default).  A defensively empty cluster is replaced by the
    most uncertain not-yet-selected sample overall.
    """
    ctx.validate()
    local_only = _require_local_only(ctx, "logo")
    x = ctx.features[ctx.unlabeled]
    emb = gradient_embedding(local_only, x)
    clustering = kmeans(emb, ctx.budget, ctx.rng,
                        max_iters=ctx.geometry.kmeans_max_iters,
                        tol=ctx.geometry.kmeans_tol)
    micro = ctx.global_params if ctx.logo_micro_model == GLOBAL_SELECTOR \
        else _require_local_only(ctx, "logo micro step")
    margins = _margins(micro, x)

    m = len(ctx.unlabeled)
    taken = np.zeros(m, dtype=bool)
    picks: list[int] = []
    shortfall = 0
    for c in range(ctx.budget):
        members = np.flatnonzero(clustering.assignments == c)
        if len(members) == 0:
            shortfall += 1
            continue
        best = members[int(np.lexsort((members, margins[members]))[0])]
        taken[best] = True
        picks.append(int(ctx.unlabeled[best]))
    for _ in range(shortfall):
        rest = np.flatnonzero(~taken)
        best = rest[int(np.lexsort((rest, margins[rest]))[0])]
        taken[best] = True
        picks.append(int(ctx.unlabeled[best]))
    return np.asarray(picks, dtype=np.int64)


def _cluster_typicality_pick(features: np.ndarray, members: np.ndarray,
                             candidates: np.ndarray, k_cfg: int) -> int:
    """Most typical candidate, with typicality computed within the cluster.

    The neighbor count is capped at cluster size - 1 (floor 1); a singleton
    cluster trivially yields its sole member.
    """
    if len(members) == 1:
        return int(candidates[0])
    k_eff = max(1, min(k_cfg, len(members) - 1))
    vals = typicality(features[members], k_eff)
    pos_of = {int(p): i for i, p in enumerate(members)}
    cand_vals = np.array([vals[pos_of[int(p)]] for p in candidates])
    return int(candidates[int(np.lexsort((candidates, -cand_vals))[0])])


def _cluster_order(cluster_ids: np.ndarray, sizes: np.ndarray,
                   first_member: np.ndarray) -> np.ndarray:
    """Order clusters by size descending, ties by smallest member position."""
    return cluster_ids[np.lexsort((first_member[cluster_ids], -sizes[cluster_ids]))]


def _select_from_clusters(features: np.ndarray, assignments: np.ndarray,
                          labeled_mask: np.ndarray, budget: int,
                          k_cfg: int) -> list[int]:
    """Pick ``budget`` unlabeled positions from a fixed cluster assignment.

    Clusters holding any labeled point are covered.  The largest
    ``budget`` uncovered clusters each contribute their most typical member;
    if uncovered clusters run short (impossible when every cluster is
    non-empty and k >= labeled + budget, but handled for arbitrary
    assignments), the remainder comes one pick per pass from the largest
    covered clusters' most typical unselected unlabeled members, then from
    any cluster with candidates left.
    """
    k = int(assignments.max()) + 1 if len(assignments) else 0
    members_of = [np.flatnonzero(assignments == c) for c in range(k)]
    sizes = np.array([len(m) for m in members_of], dtype=np.int64)
    first_member = np.array([m[0] if len(m) else len(assignments) for m in members_of],
                            dtype=np.int64)
    covered = np.array([bool(labeled_mask[m].any()) if len(m) else True
                        for m in members_of])

    uncovered_ids = np.flatnonzero(~covered)
    order = _cluster_order(uncovered_ids, sizes, first_member)

    selected: list[int] = []
    selected_mask = np.zeros(len(assignments), dtype=bool)
    for c in order[:budget]:
        members = members_of[c]
        pick = _cluster_typicality_pick(features, members, members, k_cfg)
        selected.append(pick)
        selected_mask[pick] = True

    # Defensive fill when fewer than ``budget`` clusters are uncovered.
    fill_order = list(_cluster_order(np.flatnonzero(covered), sizes, first_member))
    fill_order += list(order)
    while len(selected) < budget:
        progress = False
        for c in fill_order:
            if len(selected) == budget:
                break
            members = members_of[c]
            candidates = members[~labeled_mask[members] & ~selected_mask[members]]
            if len(candidates) == 0:
                continue
            pick = _cluster_typicality_pick(features, members, candidates, k_cfg)
            selected.append(pick)
            selected_mask[pick] = True
            progress = True
        if not progress:
            raise RuntimeError("not enough unlabeled points to meet the budget")
    return selected


def typiclust_query(ctx: QueryContext) -> np.ndarray:
    """Typicality-per-uncovered-cluster selection.

    All client rows (labeled and unlabeled alike) are clustered with
    k = labeled + budget; clusters touching a labeled point are covered.
    Each of the ``budget`` largest uncovered clusters contributes its most
    typical member, where typicality is the inverse mean distance to the
    nearest neighbors inside that cluster.
    """
    ctx.validate()
    features = ctx.typicality_features if ctx.typicality_features is not None \
        else ctx.features
    features = np.asarray(features, dtype=np.float64)
    k = len(ctx.labeled) + ctx.budget
    clustering = kmeans(features, k, ctx.rng,
                        max_iters=ctx.geometry.kmeans_max_iters,
                        tol=ctx.geometry.kmeans_tol)
    labeled_mask = np.zeros(features.shape[0], dtype=bool)
    labeled_mask[ctx.labeled] = True
    picks = _select_from_clusters(features, clustering.assignments, labeled_mask,
                                  ctx.budget, ctx.geometry.typicality_k)
    return np.asarray(picks, dtype=np.int64)


STRATEGIES = {
    "random": random_query,
    "entropy": entropy_query,
    "margin": margin_query,
    "coreset": coreset_query,
    "badge": badge_query,
    "kafal": kafal_query,
    "logo": logo_query,
    "typiclust": typiclust_query,
}


def get_strategy(name: str):
    try:
        return STRATEGIES[name]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from "
                         f"{', '.join(sorted(STRATEGIES))}") from None
