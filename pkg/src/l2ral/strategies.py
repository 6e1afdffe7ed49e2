"""Acquisition functions over a candidate subset of the unlabeled pool.

Every strategy returns exactly ``budget`` distinct candidate indices. Ties are
broken towards the lower pool index so runs are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

STRATEGY_NAMES = ("random", "entropy", "coreset", "pairwise", "listwise")
LEARNED = ("pairwise", "listwise")


class StrategyError(ValueError):
    pass


@dataclass
class QueryContext:
    candidates: np.ndarray
    budget: int
    features: np.ndarray = None
    probabilities: np.ndarray = None
    predictions: np.ndarray = None
    predicted_losses: np.ndarray = None
    labeled_features: np.ndarray = None

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, dtype=np.int64)
        if len(np.unique(self.candidates)) != len(self.candidates):
            raise StrategyError("duplicate candidate indices")
        if not 0 <= self.budget <= len(self.candidates):
            raise StrategyError(
                f"budget {self.budget} exceeds the {len(self.candidates)} candidates"
            )


@dataclass
class Selection:
    indices: np.ndarray
    strategy: str
    scores: np.ndarray


def _top(ctx, scores, name):
    # Stable sort over ascending pool index breaks ties towards the lower index.
    pos = np.argsort(ctx.candidates, kind="stable")
    ranked = pos[np.argsort(-scores[pos], kind="stable")][: ctx.budget]
    return Selection(ctx.candidates[ranked], name, scores[ranked])


def draw_subset(unlabeled, size, seed):
    """Uniform sample without replacement, returned in ascending index order."""
    unlabeled = np.sort(np.asarray(unlabeled, dtype=np.int64))
    if size >= len(unlabeled):
        return unlabeled
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(unlabeled, size=size, replace=False))


def select_random(ctx, seed=0):
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ctx.candidates), size=ctx.budget, replace=False)
    return Selection(ctx.candidates[chosen], "random", np.zeros(ctx.budget))


def entropy(probabilities):
    p = np.asarray(probabilities, dtype=np.float64)
    logp = np.log(np.where(p > 0, p, 1.0))
    return -(p * logp).sum(axis=1)


def select_entropy(ctx):
    """Highest Shannon entropy (nats) of the predicted class posterior."""
    if ctx.probabilities is None:
        raise StrategyError("entropy strategy requires class posteriors")
    p = np.asarray(ctx.probabilities, dtype=np.float64)
    if p.ndim != 2 or len(p) != len(ctx.candidates):
        raise StrategyError("entropy strategy requires class posteriors")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
        raise StrategyError("class posteriors must sum to 1")
    return _top(ctx, entropy(p), "entropy")


def select_kcenter_greedy(ctx):
    """Greedy k-center: repeatedly take the candidate farthest from the covered set.

    With no labeled points the first pick is the lowest-index candidate.
    """
    feats = np.asarray(ctx.features, dtype=np.float64).reshape(len(ctx.candidates), -1)
    pos = np.argsort(ctx.candidates, kind="stable")
    feats = feats[pos]
    cands = ctx.candidates[pos]
    labeled = ctx.labeled_features
    if labeled is not None and len(labeled):
        labeled = np.asarray(labeled, dtype=np.float64).reshape(len(labeled), -1)
        min_dist = cdist(feats, labeled).min(axis=1)
    else:
        min_dist = np.full(len(cands), np.inf)
    chosen, scores = [], []
    for _ in range(ctx.budget):
        if np.isinf(min_dist).all():
            pick = int(np.flatnonzero(min_dist == np.inf)[0])
        else:
            pick = int(np.argmax(min_dist))
        chosen.append(pick)
        scores.append(min_dist[pick])
        min_dist = np.minimum(min_dist, cdist(feats, feats[pick:pick + 1])[:, 0])
        min_dist[chosen] = -np.inf
    return Selection(cands[chosen], "coreset", np.array(scores))


def select_top_predicted_loss(ctx, name="listwise"):
    """Candidates with the largest predicted loss; no ranking step is involved."""
    if ctx.predicted_losses is None:
        raise StrategyError("predicted losses required")
    scores = np.asarray(ctx.predicted_losses, dtype=np.float64)
    if len(scores) != len(ctx.candidates):
        raise StrategyError("one predicted loss per candidate required")
    if not np.all(np.isfinite(scores)):
        raise StrategyError("predicted losses must be finite")
    return _top(ctx, scores, name)


def select(name, ctx, seed=0):
    if name == "random":
        return select_random(ctx, seed)
    if name == "entropy":
        return select_entropy(ctx)
    if name == "coreset":
        return select_kcenter_greedy(ctx)
    if name in LEARNED:
        return select_top_predicted_loss(ctx, name)
    raise StrategyError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGY_NAMES)}")
