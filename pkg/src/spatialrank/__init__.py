"""Compositional spatial-relation ranking from grounded bounding boxes."""

from .core import (
    BoundingBox,
    ClauseInstance,
    Grounding,
    SpatialRelation,
    assemble_features,
    center,
    geometry_features,
)

__version__ = "0.1.0"
