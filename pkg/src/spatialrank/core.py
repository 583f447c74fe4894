"""Domain types and bounding-box geometry features."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

BOX_TOL = 1e-6
COINCIDENT_EPS = 1e-9
NUM_CLASSES = 9


class SpatialRelation(enum.IntEnum):
    BELOW = 0
    ABOVE = 1
    FAR_FROM = 2
    RIGHT_OF = 3
    LEFT_OF = 4
    INSIDE = 5
    OUTSIDE = 6
    NEAR = 7
    CONTAINS = 8

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "SpatialRelation":
        key = label.strip().lower().replace(" ", "_")
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValueError(f"unknown spatial relation {label!r}") from None

    def is_symmetric(self, outside_symmetric: bool = True) -> bool:
        if self is SpatialRelation.OUTSIDE:
            return outside_symmetric
        return self in _SYMMETRIC

    def inverse(self) -> "SpatialRelation":
        """Relation after swapping subject and object; symmetric classes map to
        themselves. ``outside`` has no partner among the nine and maps to itself."""
        return _INVERSE.get(self, self)


_SYMMETRIC = frozenset({SpatialRelation.NEAR, SpatialRelation.FAR_FROM})
_INVERSE = {
    SpatialRelation.BELOW: SpatialRelation.ABOVE,
    SpatialRelation.ABOVE: SpatialRelation.BELOW,
    SpatialRelation.LEFT_OF: SpatialRelation.RIGHT_OF,
    SpatialRelation.RIGHT_OF: SpatialRelation.LEFT_OF,
    SpatialRelation.INSIDE: SpatialRelation.CONTAINS,
    SpatialRelation.CONTAINS: SpatialRelation.INSIDE,
}


@dataclass(frozen=True)
class BoundingBox:
    """Normalized box; (x, y) is the top-left corner, y grows downwards."""

    x: float
    y: float
    h: float
    w: float

    def __post_init__(self):
        vals = (self.x, self.y, self.h, self.w)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates {vals}")
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"box corner ({self.x}, {self.y}) outside [0, 1]")
        if not (self.h > 0.0 and self.w > 0.0):
            raise ValueError(f"box size (h={self.h}, w={self.w}) must be positive")
        if self.x + self.w > 1.0 + BOX_TOL or self.y + self.h > 1.0 + BOX_TOL:
            raise ValueError(f"box {vals} extends past the image frame")

    @classmethod
    def from_list(cls, values) -> "BoundingBox":
        """Build from ``[x, y, h, w]``."""
        if len(values) != 4:
            raise ValueError(f"box needs 4 values [x, y, h, w], got {len(values)}")
        x, y, h, w = (float(v) for v in values)
        return cls(x, y, h, w)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.h, self.w]

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h


@dataclass(frozen=True)
class Grounding:
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ClauseInstance:
    image_id: str
    subject_name: str
    object_name: str
    relation: SpatialRelation
    subject: Grounding
    object: Grounding

    def __post_init__(self):
        if not self.subject_name or not self.object_name:
            raise ValueError("subject_name and object_name must be non-empty")

    @property
    def key(self) -> tuple[str, str, int, str]:
        """Record identity used for split disjointness."""
        return (self.image_id, self.subject_name, int(self.relation), self.object_name)

    def swapped(self, relation: SpatialRelation) -> "ClauseInstance":
        return ClauseInstance(
            image_id=self.image_id,
            subject_name=self.object_name,
            object_name=self.subject_name,
            relation=relation,
            subject=self.object,
            object=self.subject,
        )


def center(box: BoundingBox) -> tuple[float, float]:
    return box.x + box.w / 2.0, box.y + box.h / 2.0


def geometry_features(subject_box: BoundingBox, object_box: BoundingBox) -> tuple[float, float, float]:
    """Unit direction from subject center to object center, plus the distance."""
    sx, sy = center(subject_box)
    ox, oy = center(object_box)
    dx, dy = ox - sx, oy - sy
    d = math.hypot(dx, dy)
    if d < COINCIDENT_EPS:
        return 0.0, 0.0, d
    return dx / d, dy / d, d


def assemble_features(subject_box: BoundingBox, object_box: BoundingBox, use_geo: bool = False) -> np.ndarray:
    values = subject_box.to_list() + object_box.to_list()
    if use_geo:
        values.extend(geometry_features(subject_box, object_box))
    return np.asarray(values, dtype=np.float64)


def feature_dim(use_geo: bool) -> int:
    return 11 if use_geo else 8
