"""Clause scoring, co-occurrence priors and re-ranking."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import NUM_CLASSES, ClauseInstance, SpatialRelation, assemble_features
from .mlp import MlpModel, predict

UNIFORM = np.full(NUM_CLASSES, 1.0 / NUM_CLASSES)


class RerankError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredRelation:
    relation: SpatialRelation
    score: float


def _key(subject: str, obj: str) -> tuple[str, str]:
    return subject.strip().lower(), obj.strip().lower()


@dataclass
class PriorTable:
    alpha: float
    priors: dict[tuple[str, str], np.ndarray]
    fallback: np.ndarray = UNIFORM

    def lookup(self, subject: str, obj: str) -> np.ndarray:
        return self.priors.get(_key(subject, obj), self.fallback)

    def to_json(self) -> str:
        doc = {f"{s}|{o}": vec.tolist() for (s, o), vec in sorted(self.priors.items())}
        doc["alpha"] = self.alpha
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PriorTable":
        doc = json.loads(text)
        if not isinstance(doc, dict) or "alpha" not in doc:
            raise ValueError("prior file needs an 'alpha' entry")
        alpha = float(doc.pop("alpha"))
        priors = {}
        for key, vec in doc.items():
            if "|" not in key:
                raise ValueError(f"prior key {key!r} is not of the form 'subject|object'")
            s, o = key.split("|", 1)
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (NUM_CLASSES,) or np.any(arr <= 0) or abs(arr.sum() - 1.0) > 1e-9:
                raise ValueError(f"prior for {key!r} is not a positive 9-way distribution")
            priors[_key(s, o)] = arr
        return cls(alpha, priors)

    @classmethod
    def uniform(cls, alpha: float = 1.0) -> "PriorTable":
        return cls(alpha, {})


def build_priors(train: Iterable[ClauseInstance], alpha: float = 1.0) -> PriorTable:
    """Additively smoothed relation counts per (subject, object) name pair."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    counts: dict[tuple[str, str], np.ndarray] = defaultdict(lambda: np.zeros(NUM_CLASSES))
    n = 0
    for inst in train:
        counts[_key(inst.subject_name, inst.object_name)][int(inst.relation)] += 1
        n += 1
    if n == 0:
        raise ValueError("cannot build priors from an empty training set")
    priors = {k: (c + alpha) / (c.sum() + NUM_CLASSES * alpha) for k, c in counts.items()}
    return PriorTable(alpha, priors)


def score(dist, p_i: float, p_j: float) -> list[ScoredRelation]:
    """score_k = p_i * dist_k * p_j, in canonical class order."""
    dist = np.asarray(dist, dtype=np.float64)
    return [ScoredRelation(r, float(p_i * dist[r] * p_j)) for r in SpatialRelation]


def rerank(dist, prior) -> np.ndarray:
    """Elementwise product with the prior, renormalized to sum to one."""
    dist = np.asarray(dist, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    if np.all(prior == prior[0]) and prior[0] > 0:
        # a constant factor cancels exactly; skip the arithmetic so rounding
        # cannot create ties that the no-prior path would not have
        return dist.copy()
    product = dist * prior
    total = product.sum()
    if not total > 0:
        raise RerankError("distribution and prior have disjoint support")
    return product / total


def sort_scores(scored: list[ScoredRelation], dist=None) -> list[ScoredRelation]:
    """Descending by score; ties go to the larger ``dist`` entry (when given),
    then to the lower canonical index.

    Rounding in p_i * dist_k * p_j can merge two distinct probabilities into one
    score, so the distribution is the first tie-breaker. That keeps the order
    independent of the confidences, as it is in exact arithmetic.
    """
    if dist is None:
        return sorted(scored, key=lambda s: (-s.score, int(s.relation)))
    dist = np.asarray(dist, dtype=np.float64)
    return sorted(scored, key=lambda s: (-s.score, -dist[s.relation], int(s.relation)))


def rank_clause(
    model: MlpModel,
    instance: ClauseInstance,
    priors: Optional[PriorTable] = None,
    use_geo: bool = False,
) -> list[ScoredRelation]:
    """Features -> relation distribution -> optional re-ranking -> scores, best first."""
    feats = assemble_features(instance.subject.box, instance.object.box, use_geo)
    return rank_distribution(predict(model, feats), instance, priors)


def rank_distribution(dist, instance: ClauseInstance, priors: Optional[PriorTable] = None) -> list[ScoredRelation]:
    if priors is not None:
        dist = rerank(dist, priors.lookup(instance.subject_name, instance.object_name))
    return sort_scores(score(dist, instance.subject.confidence, instance.object.confidence), dist)
