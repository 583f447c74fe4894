"""Synthetic box pairs whose spatial relation is known analytically.

Image coordinates: x grows rightwards, y grows downwards, so "above" means a
smaller y. Each class has its own sampler; every sample is re-labelled by
``label_of`` and kept only when the oracle agrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BoundingBox, ClauseInstance, Grounding, SpatialRelation, center

R = SpatialRelation

AMBIGUOUS = None

VOCABULARY = (
    "person", "dog", "cat", "car", "bicycle", "bed", "couch", "chair", "table",
    "cup", "bowl", "bottle", "laptop", "book", "umbrella", "bench", "train", "horse",
)

# with class-skewed names, each class draws most of its pairs from here
CLASS_PAIRS = {
    R.BELOW: [("dog", "table"), ("cat", "bench")],
    R.ABOVE: [("cup", "table"), ("laptop", "bed")],
    R.FAR_FROM: [("person", "train"), ("horse", "car")],
    R.RIGHT_OF: [("chair", "couch"), ("bottle", "bowl")],
    R.LEFT_OF: [("bicycle", "car"), ("book", "laptop")],
    R.INSIDE: [("cat", "bowl"), ("person", "car")],
    R.OUTSIDE: [("dog", "car"), ("cup", "umbrella")],
    R.NEAR: [("cup", "bottle"), ("chair", "table")],
    R.CONTAINS: [("bowl", "cup"), ("train", "person")],
}


class RejectionBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n: int = 100
    seed: int = 0
    near_threshold: float = 0.25
    far_threshold: float = 0.6
    directional_gap: float = 0.05
    containment_margin: float = 0.02
    name_skew: float = 0.0
    placement_jitter: float = 0.1
    max_attempts_per_instance: int = 1000

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if not self.far_threshold > self.near_threshold > 0:
            raise ValueError("need far_threshold > near_threshold > 0")
        if not self.directional_gap > 0 or not self.containment_margin > 0:
            raise ValueError("directional_gap and containment_margin must be positive")
        if not 0.0 <= self.placement_jitter <= 0.5:
            raise ValueError("placement_jitter must be in [0, 0.5]")
        if not 0.0 <= self.name_skew <= 1.0:
            raise ValueError("name_skew must be in [0, 1]")


def _within(inner: BoundingBox, outer: BoundingBox, margin: float) -> bool:
    return (
        inner.x >= outer.x + margin
        and inner.y >= outer.y + margin
        and inner.x2 <= outer.x2 - margin
        and inner.y2 <= outer.y2 - margin
    )


def _disjoint(a: BoundingBox, b: BoundingBox) -> bool:
    return a.x2 < b.x or b.x2 < a.x or a.y2 < b.y or b.y2 < a.y


def label_of(subject_box: BoundingBox, object_box: BoundingBox, config: SynthConfig = SynthConfig()) -> Optional[SpatialRelation]:
    """Analytic relation of a box pair; ``None`` when ambiguous. First match wins."""
    s, o = subject_box, object_box
    gap = config.directional_gap
    if _within(s, o, config.containment_margin):
        return R.INSIDE
    if _within(o, s, config.containment_margin):
        return R.CONTAINS
    (sx, sy), (ox, oy) = center(s), center(o)
    if abs(sx - ox) < gap:
        if s.y >= o.y2 + gap:
            return R.BELOW
        if o.y >= s.y2 + gap:
            return R.ABOVE
    if abs(sy - oy) < gap:
        if s.x >= o.x2 + gap:
            return R.RIGHT_OF
        if o.x >= s.x2 + gap:
            return R.LEFT_OF
    if not _disjoint(s, o):
        return AMBIGUOUS
    d = math.hypot(ox - sx, oy - sy)
    if d > config.far_threshold:
        return R.FAR_FROM
    if d < config.near_threshold:
        return R.NEAR
    return R.OUTSIDE


def _box(cx: float, cy: float, w: float, h: float) -> Optional[BoundingBox]:
    x, y = cx - w / 2.0, cy - h / 2.0
    if x < 0 or y < 0 or x + w > 1.0 or y + h > 1.0:
        return None
    return BoundingBox(x, y, h, w)


def _diagonal(rng: np.random.Generator, dist: float) -> tuple[float, float]:
    # direction kept 25-65 degrees away from both axes
    angle = rng.uniform(math.radians(25), math.radians(65)) + rng.integers(4) * math.pi / 2
    return dist * math.cos(angle), dist * math.sin(angle)


# Samplers return the pair in a local frame as (dx, dy, sw, sh, ow, oh, anchor):
# object center minus subject center, the four sizes, and which box the frame
# is anchored on ("mid" = midpoint of the two centers).

def _rel_inside(rng, cfg):
    ow, oh = rng.uniform(0.3, 0.5, size=2)
    m = cfg.containment_margin * 2
    sw, sh = rng.uniform(0.1, 0.45) * ow, rng.uniform(0.1, 0.45) * oh
    # roughly concentric, so inside stays well apart from "outside" in distance
    dx = rng.uniform(-0.5, 0.5) * (ow / 2 - m - sw / 2)
    dy = rng.uniform(-0.5, 0.5) * (oh / 2 - m - sh / 2)
    return -dx, -dy, sw, sh, ow, oh


def _rel_above(rng, cfg):
    sw, sh, ow, oh = rng.uniform(0.08, 0.2, size=4)
    gap = rng.uniform(2 * cfg.directional_gap, 0.3)
    jitter = rng.uniform(-0.4, 0.4) * cfg.directional_gap
    return jitter, sh / 2 + gap + oh / 2, sw, sh, ow, oh


def _rel_left_of(rng, cfg):
    sw, sh, ow, oh = rng.uniform(0.08, 0.2, size=4)
    gap = rng.uniform(2 * cfg.directional_gap, 0.3)
    jitter = rng.uniform(-0.4, 0.4) * cfg.directional_gap
    return sw / 2 + gap + ow / 2, jitter, sw, sh, ow, oh


def _rel_far(rng, cfg):
    # large boxes far apart: differs from "near" in both size and distance
    sw, sh, ow, oh = rng.uniform(0.15, 0.22, size=4)
    dx, dy = _diagonal(rng, rng.uniform(cfg.far_threshold + 0.08, 0.78))
    return dx, dy, sw, sh, ow, oh


def _rel_near(rng, cfg):
    dx, dy = _diagonal(rng, rng.uniform(0.6, 0.85) * cfg.near_threshold)
    # small enough that the boxes cannot overlap
    limit = min(abs(dx), abs(dy)) * 0.8
    sw, sh, ow, oh = rng.uniform(0.4, 1.0, size=4) * limit
    return dx, dy, sw, sh, ow, oh


def _rel_outside(rng, cfg):
    # small subject next to a large container-like object, intermediate distance
    ow, oh = rng.uniform(0.3, 0.4, size=2)
    lo, hi = cfg.near_threshold, cfg.far_threshold
    dx, dy = _diagonal(rng, rng.uniform(lo + 0.3 * (hi - lo), hi - 0.3 * (hi - lo)))
    sw, sh = rng.uniform(0.04, 0.08, size=2)
    return dx, dy, sw, sh, ow, oh


def _swapped(sampler):
    def sample(rng, cfg):
        dx, dy, sw, sh, ow, oh = sampler(rng, cfg)
        return -dx, -dy, ow, oh, sw, sh
    return sample


SAMPLERS = {
    R.BELOW: _swapped(_rel_above),
    R.ABOVE: _rel_above,
    R.FAR_FROM: _rel_far,
    R.RIGHT_OF: _swapped(_rel_left_of),
    R.LEFT_OF: _rel_left_of,
    R.INSIDE: _rel_inside,
    R.OUTSIDE: _rel_outside,
    R.NEAR: _rel_near,
    R.CONTAINS: _swapped(_rel_inside),
}


def _place(rng, rel, jitter: float):
    """Put the midpoint of the two centers near the image center."""
    dx, dy, sw, sh, ow, oh = rel
    mx, my = 0.5 + rng.uniform(-jitter, jitter, size=2)
    s_box = _box(mx - dx / 2, my - dy / 2, sw, sh)
    o_box = _box(mx + dx / 2, my + dy / 2, ow, oh)
    if s_box is None or o_box is None:
        return None
    return s_box, o_box


def _names(rng: np.random.Generator, relation: SpatialRelation, skew: float) -> tuple[str, str]:
    if skew > 0 and rng.random() < skew:
        pairs = CLASS_PAIRS[relation]
        return pairs[rng.integers(len(pairs))]
    i, j = rng.choice(len(VOCABULARY), size=2, replace=False)
    return VOCABULARY[i], VOCABULARY[j]


def generate(config: SynthConfig = SynthConfig()) -> list[ClauseInstance]:
    """``config.n`` instances per class, classes in canonical order.

    Each class draws from its own seeded substream, so classes are
    independent of each other's rejection counts.
    """
    out = []
    seeds = np.random.SeedSequence(config.seed).spawn(len(R))
    for relation, seed_seq in zip(R, seeds):
        rng = np.random.default_rng(seed_seq)
        sampler = SAMPLERS[relation]
        budget = config.max_attempts_per_instance * max(config.n, 1)
        made = attempts = 0
        while made < config.n:
            attempts += 1
            if attempts > budget:
                raise RejectionBudgetExceeded(
                    f"rejection budget exhausted for class {relation.label!r} ({made}/{config.n} generated)"
                )
            pair = _place(rng, sampler(rng, config), config.placement_jitter)
            if pair is None:
                continue
            s_box, o_box = pair
            if label_of(s_box, o_box, config) is not relation:
                continue
            subj, obj = _names(rng, relation, config.name_skew)
            p_s, p_o = rng.uniform(0.8, 1.0, size=2)
            out.append(
                ClauseInstance(
                    image_id=f"synth-{relation.label}-{made:05d}",
                    subject_name=subj,
                    object_name=obj,
                    relation=relation,
                    subject=Grounding(s_box, float(p_s)),
                    object=Grounding(o_box, float(p_o)),
                )
            )
            made += 1
    return out
