"""Top-k metrics against random chance, ablation reports, and the detector-coverage
and binary-accuracy analyses for externally produced predictions."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .core import NUM_CLASSES, ClauseInstance, SpatialRelation
from .mlp import MlpModel
from .ranking import PriorTable, ScoredRelation, rank_clause


def random_chance(k: int, num_classes: int = NUM_CLASSES) -> float:
    if not 1 <= k <= num_classes:
        raise ValueError(f"k must be in [1, {num_classes}], got {k}")
    return k / num_classes


def top_k_accuracy(
    rankings: Sequence[Sequence[ScoredRelation]],
    gold: Sequence[SpatialRelation],
    k: int,
) -> float:
    if len(rankings) != len(gold):
        raise ValueError(f"{len(rankings)} rankings but {len(gold)} gold labels")
    if not 1 <= k <= NUM_CLASSES:
        raise ValueError(f"k must be in [1, {NUM_CLASSES}], got {k}")
    if not gold:
        raise ValueError("top_k_accuracy of an empty set is undefined")
    hits = sum(any(s.relation == g for s in ranking[:k]) for ranking, g in zip(rankings, gold))
    return hits / len(gold)


@dataclass
class RankingReport:
    n: int
    top1: float
    top3: float
    chance_top1: float
    chance_top3: float
    delta_top1: float
    delta_top3: float
    geo: bool
    aug: bool
    rerank: bool
    per_class: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        label = "Bbox w/ Re-ranking" if self.rerank else "Bbox w/o Re-ranking"
        if self.geo:
            label += " + geo"
        if self.aug:
            label += " + aug"
        return label

    def to_dict(self) -> dict:
        d = asdict(self)
        d["name"] = self.name
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        return format_table([self])


def _pct(x: float) -> str:
    return f"{100.0 * x:6.2f}"


def format_table(reports: Sequence[RankingReport]) -> str:
    """Aligned text table: chance row, one row per report, best delta row."""
    width = max([len("Random Chance (multiclass)")] + [len(r.name) for r in reports]) + 2
    lines = [f"{'Model':<{width}}{'Top-1':>8}{'Top-3':>8}", "-" * (width + 16)]
    if reports:
        c = reports[0]
        lines.append(f"{'Random Chance (multiclass)':<{width}}{_pct(c.chance_top1):>8}{_pct(c.chance_top3):>8}")
    for r in reports:
        lines.append(f"{r.name:<{width}}{_pct(r.top1):>8}{_pct(r.top3):>8}")
    if reports:
        lines.append("-" * (width + 16))
        best1 = max(r.delta_top1 for r in reports)
        best3 = max(r.delta_top3 for r in reports)
        lines.append(f"{'Best delta over chance':<{width}}{_pct(best1):>8}{_pct(best3):>8}")
    return "\n".join(lines) + "\n"


def evaluate(
    model: MlpModel,
    test: Sequence[ClauseInstance],
    priors: Optional[PriorTable] = None,
    use_geo: bool = False,
    aug: bool = False,
) -> RankingReport:
    rankings = [rank_clause(model, inst, priors, use_geo) for inst in test]
    gold = [inst.relation for inst in test]
    top1 = top_k_accuracy(rankings, gold, 1)
    top3 = top_k_accuracy(rankings, gold, 3)
    per_class = {}
    for rel in SpatialRelation:
        idx = [i for i, g in enumerate(gold) if g == rel]
        if not idx:
            continue
        sub_r = [rankings[i] for i in idx]
        sub_g = [gold[i] for i in idx]
        per_class[rel.label] = {
            "n": len(idx),
            "top1": top_k_accuracy(sub_r, sub_g, 1),
            "top3": top_k_accuracy(sub_r, sub_g, 3),
        }
    c1, c3 = random_chance(1), random_chance(3)
    return RankingReport(
        n=len(test),
        top1=top1,
        top3=top3,
        chance_top1=c1,
        chance_top3=c3,
        delta_top1=top1 - c1,
        delta_top3=top3 - c3,
        geo=use_geo,
        aug=aug,
        rerank=priors is not None,
        per_class=per_class,
    )


def binary_accuracy(predictions: Sequence[int], labels: Sequence[int]) -> tuple[float, float]:
    """(accuracy, accuracy - 0.5) for binary predictions."""
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions but {len(labels)} labels")
    if not labels:
        raise ValueError("binary_accuracy of an empty set is undefined")
    for v in list(predictions) + list(labels):
        if v not in (0, 1):
            raise ValueError(f"binary values must be 0 or 1, got {v!r}")
    acc = sum(int(p) == int(l) for p, l in zip(predictions, labels)) / len(labels)
    return acc, acc - 0.5


# -- detector coverage ---------------------------------------------------------

DETECTED = ("both", "one", "none")


@dataclass(frozen=True)
class CoverageCase:
    correct: bool
    subject: str
    object: str
    detected_labels: frozenset


@dataclass
class CoverageBreakdown:
    """Percentages keyed by (correct, detected) -> (exact %, synonym %).

    A correctness half with no cases reports 0.0 everywhere.
    """

    cells: dict
    counts: dict

    def get(self, correct: bool, detected: str) -> tuple[float, float]:
        return self.cells[(correct, detected)]

    def to_dict(self) -> dict:
        return {
            f"{'correct' if c else 'incorrect'}/{d}": {"exact": v[0], "synonym": v[1]}
            for (c, d), v in self.cells.items()
        } | {"counts": {"correct": self.counts[True], "incorrect": self.counts[False]}}

    def to_text(self) -> str:
        rows = [f"{'Row':<5}{'Correct':>9}{'Detected':>10}{'Exact %':>10}{'Synonym %':>11}"]
        for i, (c, d) in enumerate(((c, d) for c in (True, False) for d in DETECTED), start=1):
            e, s = self.cells[(c, d)]
            rows.append(f"{i:<5}{'yes' if c else 'no':>9}{d:>10}{e:>10.2f}{s:>11.2f}")
        return "\n".join(rows) + "\n"


def _norm(phrase: str) -> str:
    return " ".join(phrase.strip().lower().split())


def _bucket(hits: int) -> str:
    return DETECTED[2 - hits]


def detector_coverage_analysis(
    cases: Iterable[CoverageCase | Mapping],
    lexicon: Mapping[str, Iterable[str]],
) -> CoverageBreakdown:
    """Tally how many of each case's subject/object phrases the detector found.

    Exact match: the phrase itself is among the detected labels. Synonym match:
    the phrase or any lexicon synonym of it is.
    """
    lex = {_norm(k): {_norm(s) for s in v} for k, v in lexicon.items()}
    tally = {(c, d, kind): 0 for c in (True, False) for d in DETECTED for kind in ("exact", "synonym")}
    counts = {True: 0, False: 0}
    for case in cases:
        if isinstance(case, Mapping):
            case = CoverageCase(bool(case["correct"]), case["subject"], case["object"],
                                frozenset(case["detected_labels"]))
        detected = {_norm(x) for x in case.detected_labels}
        phrases = (_norm(case.subject), _norm(case.object))
        exact = sum(p in detected for p in phrases)
        syn = sum(bool(({p} | lex.get(p, set())) & detected) for p in phrases)
        counts[case.correct] += 1
        tally[(case.correct, _bucket(exact), "exact")] += 1
        tally[(case.correct, _bucket(syn), "synonym")] += 1
    cells = {}
    for c in (True, False):
        total = counts[c]
        for d in DETECTED:
            if total == 0:
                cells[(c, d)] = (0.0, 0.0)
            else:
                cells[(c, d)] = (
                    round(100.0 * tally[(c, d, "exact")] / total, 2),
                    round(100.0 * tally[(c, d, "synonym")] / total, 2),
                )
    return CoverageBreakdown(cells, counts)
