"""Grounded clause ingestion, clause merging, stratified splitting and augmentation."""

from __future__ import annotations

import json
import os
import tempfile
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .core import BoundingBox, ClauseInstance, Grounding, SpatialRelation

R = SpatialRelation

# Original clause phrase -> merged class. Orientation- and depth-based
# clauses are absent on purpose and therefore rejected.
CLAUSE_MAP: dict[str, SpatialRelation] = {
    "below": R.BELOW,
    "beneath": R.BELOW,
    "under": R.BELOW,
    "above": R.ABOVE,
    "on": R.ABOVE,
    "on top of": R.ABOVE,
    "over": R.ABOVE,
    "away from": R.FAR_FROM,
    "far away from": R.FAR_FROM,
    "far from": R.FAR_FROM,
    "at the right side of": R.RIGHT_OF,
    "right of": R.RIGHT_OF,
    "at the left side of": R.LEFT_OF,
    "left of": R.LEFT_OF,
    "in": R.INSIDE,
    "in the middle of": R.INSIDE,
    "inside": R.INSIDE,
    "part of": R.INSIDE,
    "within": R.INSIDE,
    "outside": R.OUTSIDE,
    "adjacent to": R.NEAR,
    "at the edge of": R.NEAR,
    "at the side of": R.NEAR,
    "attached to": R.NEAR,
    "beside": R.NEAR,
    "by": R.NEAR,
    "close to": R.NEAR,
    "connected to": R.NEAR,
    "near": R.NEAR,
    "next to": R.NEAR,
    "touching": R.NEAR,
    "contains": R.CONTAINS,
}

REQUIRED_FIELDS = ("image_id", "subject", "object", "relation", "label")


class RecordError(ValueError):
    """A malformed line in a grounding file."""

    def __init__(self, line_no: int, reason: str, field_name: Optional[str] = None):
        self.line_no = line_no
        self.reason = reason
        self.field = field_name
        super().__init__(f"line {line_no}: {reason}")


class MergeError(ValueError):
    """The clause has no merged class; the record must be dropped."""


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    image_id: str
    subject: str
    relation: str
    object: str
    label: int
    subject_grounding: Optional[Grounding] = None
    object_grounding: Optional[Grounding] = None


@dataclass
class PrepareSummary:
    total: int = 0
    kept: int = 0
    dropped: Counter = field(default_factory=Counter)
    per_class: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "dropped": dict(sorted(self.dropped.items())),
            "per_class": {r.label: self.per_class.get(r.label, 0) for r in SpatialRelation},
        }


@dataclass
class SplitPair:
    train: list[ClauseInstance]
    test: list[ClauseInstance]
    seed: int


def _grounding(obj: dict, prefix: str, line_no: int) -> Optional[Grounding]:
    box_key, conf_key = f"{prefix}_box", f"{prefix}_conf"
    if obj.get(box_key) is None and obj.get(conf_key) is None:
        return None
    for key in (box_key, conf_key):
        if obj.get(key) is None:
            raise RecordError(line_no, f"missing required field {key!r}", key)
    try:
        box = BoundingBox.from_list(obj[box_key])
    except (TypeError, ValueError) as exc:
        raise RecordError(line_no, f"invalid {box_key!r}: {exc}", box_key) from None
    try:
        return Grounding(box, float(obj[conf_key]))
    except (TypeError, ValueError) as exc:
        raise RecordError(line_no, f"invalid {conf_key!r}: {exc}", conf_key) from None


def parse_record(line: str, line_no: int = 1) -> RawRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise RecordError(line_no, "record is not a JSON object")
    for key in REQUIRED_FIELDS:
        if key not in obj or obj[key] is None:
            raise RecordError(line_no, f"missing required field {key!r}", key)
    label = obj["label"]
    if isinstance(label, bool) or label not in (0, 1):
        raise RecordError(line_no, f"field 'label' must be 0 or 1, got {label!r}", "label")
    for key in ("image_id", "subject", "object", "relation"):
        if not isinstance(obj[key], str):
            raise RecordError(line_no, f"field {key!r} must be a string", key)
    return RawRecord(
        image_id=obj["image_id"],
        subject=obj["subject"],
        relation=obj["relation"],
        object=obj["object"],
        label=int(label),
        subject_grounding=_grounding(obj, "subject", line_no),
        object_grounding=_grounding(obj, "object", line_no),
    )


def parse_records(stream: Iterable[str]) -> list[RawRecord]:
    """Parse a line-delimited JSON stream. Blank lines are skipped."""
    records = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        records.append(parse_record(line, line_no))
    return records


def merge_clause(original: str) -> SpatialRelation:
    key = " ".join(original.strip().lower().split())
    try:
        return CLAUSE_MAP[key]
    except KeyError:
        raise MergeError(f"clause {original!r} has no merged class") from None


def prepare(records: Iterable[RawRecord], min_confidence: float = 0.0) -> tuple[list[ClauseInstance], PrepareSummary]:
    """Keep positive records whose clause merges and which carry groundings."""
    summary = PrepareSummary()
    out = []
    for rec in records:
        summary.total += 1
        if rec.label != 1:
            summary.dropped["negative_label"] += 1
            continue
        try:
            relation = merge_clause(rec.relation)
        except MergeError:
            summary.dropped["unmapped_clause"] += 1
            continue
        if rec.subject_grounding is None or rec.object_grounding is None:
            summary.dropped["missing_grounding"] += 1
            continue
        if min(rec.subject_grounding.confidence, rec.object_grounding.confidence) < min_confidence:
            summary.dropped["low_confidence"] += 1
            continue
        out.append(
            ClauseInstance(
                image_id=rec.image_id,
                subject_name=rec.subject.strip(),
                object_name=rec.object.strip(),
                relation=relation,
                subject=rec.subject_grounding,
                object=rec.object_grounding,
            )
        )
        summary.per_class[relation.label] += 1
    summary.kept = len(out)
    return out, summary


def _largest_remainder(counts: dict, total_target: int) -> dict:
    # per-class floor(n * ratio), then hand leftover slots to the largest
    # fractional parts so the global split is as close to ratio as possible
    base = {c: int(np.floor(q)) for c, q in counts.items()}
    leftover = total_target - sum(base.values())
    order = sorted(counts, key=lambda c: (-(counts[c] - base[c]), int(c)))
    for c in order[:leftover]:
        base[c] += 1
    return base


def stratified_split(instances: list[ClauseInstance], ratio: float = 0.8, seed: int = 0) -> SplitPair:
    if not 0.0 < ratio < 1.0:
        raise SplitError(f"ratio must be in (0, 1), got {ratio}")
    by_class: dict[SpatialRelation, list[ClauseInstance]] = defaultdict(list)
    for inst in instances:
        by_class[inst.relation].append(inst)
    for rel, members in by_class.items():
        if len(members) < 2:
            raise SplitError(f"class {rel.label!r} has {len(members)} instance(s); need at least 2")

    quotas = {rel: len(m) * ratio for rel, m in by_class.items()}
    n_train_total = int(round(len(instances) * ratio))
    n_train = _largest_remainder(quotas, n_train_total)

    rng = np.random.default_rng(seed)
    train, test = [], []
    for rel in sorted(by_class):
        members = sorted(by_class[rel], key=lambda i: i.key)
        k = min(max(n_train[rel], 1), len(members) - 1)
        perm = rng.permutation(len(members))
        train.extend(members[i] for i in perm[:k])
        test.extend(members[i] for i in perm[k:])
    return SplitPair(train=train, test=test, seed=seed)


def augment(train: list[ClauseInstance], outside_symmetric: bool = True) -> list[ClauseInstance]:
    """Original instances followed by their subject/object-swapped copies.

    With ``outside_symmetric=False`` outside instances are not swapped (there
    is no inverse class for them), so the output is shorter than 2x.
    """
    swapped = [
        inst.swapped(inst.relation.inverse())
        for inst in train
        if inst.relation.is_symmetric(outside_symmetric) or inst.relation.inverse() != inst.relation
    ]
    return list(train) + swapped


# -- JSONL serialization ------------------------------------------------------

def instance_to_dict(inst: ClauseInstance) -> dict:
    return {
        "image_id": inst.image_id,
        "subject": inst.subject_name,
        "object": inst.object_name,
        "relation": inst.relation.label.replace("_", " "),
        "label": 1,
        "subject_box": inst.subject.box.to_list(),
        "subject_conf": inst.subject.confidence,
        "object_box": inst.object.box.to_list(),
        "object_conf": inst.object.confidence,
    }


def instance_from_dict(obj: dict, line_no: int = 1) -> ClauseInstance:
    rec = parse_record(json.dumps(obj), line_no)
    if rec.subject_grounding is None or rec.object_grounding is None:
        raise RecordError(line_no, "missing groundings", "subject_box")
    try:
        relation = SpatialRelation.from_label(rec.relation)
    except ValueError:
        try:
            relation = merge_clause(rec.relation)
        except MergeError as exc:
            raise RecordError(line_no, str(exc), "relation") from None
    return ClauseInstance(rec.image_id, rec.subject, rec.object, relation,
                          rec.subject_grounding, rec.object_grounding)


def read_instances(path: str) -> list[ClauseInstance]:
    """Read an already-prepared JSONL file (relation is a merged class name)."""
    out = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise RecordError(line_no, "record is not a JSON object")
            out.append(instance_from_dict(obj, line_no))
    return out


def dumps_instances(instances: Iterable[ClauseInstance]) -> str:
    return "".join(json.dumps(instance_to_dict(i), sort_keys=True) + "\n" for i in instances)


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_instances(path: str, instances: Iterable[ClauseInstance]) -> None:
    atomic_write(path, dumps_instances(instances))


def write_json(path: str, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
