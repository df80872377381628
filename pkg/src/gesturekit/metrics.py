"""Evaluation metrics: classification PRF, detection AP/F1/IoU, BLEU, Pareto.

Conventions: any 0/0 ratio is 0; detection matching is greedy in
descending confidence with duplicates on a claimed truth counted as false
positives; average precision uses all-point interpolation (the precision
envelope integrated over recall).
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass
from math import exp, fsum, log
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tensors import BBox, iou

__all__ = [
    "ConfusionTally",
    "PRF1Report",
    "DetectionRecord",
    "ModelPoint",
    "prf1",
    "tally_from_labels",
    "detection_f1",
    "detection_prf",
    "average_precision",
    "mean_ap",
    "avg_iou",
    "bleu",
    "corpus_bleu",
    "pareto_front",
    "detector_classification_tally",
]


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


class ConfusionTally:
    """Per-class true-positive / false-positive / false-negative counts."""

    def __init__(self) -> None:
        self._counts: dict[str, list[int]] = {}

    def _row(self, cls: str) -> list[int]:
        return self._counts.setdefault(cls, [0, 0, 0])

    def add_tp(self, cls: str, n: int = 1) -> None:
        self._row(cls)[0] += n

    def add_fp(self, cls: str, n: int = 1) -> None:
        self._row(cls)[1] += n

    def add_fn(self, cls: str, n: int = 1) -> None:
        self._row(cls)[2] += n

    def counts(self, cls: str) -> tuple[int, int, int]:
        tp, fp, fn = self._counts.get(cls, (0, 0, 0))
        return tp, fp, fn

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(self._counts))


def tally_from_labels(preds: Sequence[str], truths: Sequence[str]) -> ConfusionTally:
    """Multi-class tally from aligned label sequences."""
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions vs {len(truths)} truths")
    tally = ConfusionTally()
    for p, t in zip(preds, truths):
        if p == t:
            tally.add_tp(t)
        else:
            tally.add_fp(p)
            tally.add_fn(t)
    return tally


@dataclass(frozen=True)
class PRF1Report:
    per_class: dict[str, tuple[float, float, float]]
    macro_precision: float
    macro_recall: float
    macro_f1: float


def prf1(tally: ConfusionTally) -> PRF1Report:
    """Precision, recall and F1 per class plus unweighted macro means."""
    per_class = {}
    for cls in tally.classes:
        tp, fp, fn = tally.counts(cls)
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * p * r, p + r)
        per_class[cls] = (p, r, f1)
    if not per_class:
        return PRF1Report({}, 0.0, 0.0, 0.0)
    n = len(per_class)
    return PRF1Report(
        per_class,
        sum(v[0] for v in per_class.values()) / n,
        sum(v[1] for v in per_class.values()) / n,
        sum(v[2] for v in per_class.values()) / n,
    )


@dataclass(frozen=True)
class DetectionRecord:
    """One image's predictions (box, confidence) and its ground-truth boxes."""

    predictions: Sequence[tuple[BBox, float]]
    truths: Sequence[BBox]


def _match_record(record: DetectionRecord, lam: float) -> tuple[list[bool], list[float], int]:
    """Greedy confidence-descending matching within one image.

    Returns per-prediction hit flags (in confidence order), matched IoUs,
    and the number of unmatched truths.
    """
    order = sorted(range(len(record.predictions)), key=lambda i: (-record.predictions[i][1], i))
    claimed = [False] * len(record.truths)
    hits: list[bool] = []
    matched_ious: list[float] = []
    for i in order:
        box, _ = record.predictions[i]
        best_iou = 0.0
        best_j = -1
        for j, truth in enumerate(record.truths):
            ov = iou(box, truth)
            if ov > best_iou:
                best_iou = ov
                best_j = j
        if best_iou >= lam and best_j >= 0 and not claimed[best_j]:
            claimed[best_j] = True
            hits.append(True)
            matched_ious.append(best_iou)
        else:
            # Below threshold, or a duplicate on an already-claimed truth.
            hits.append(False)
    return hits, matched_ious, claimed.count(False)


def detection_prf(records: Sequence[DetectionRecord], lam: float = 0.5) -> tuple[float, float, float]:
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lam must be in (0, 1], got {lam}")
    tp = fp = fn = 0
    for record in records:
        hits, _, misses = _match_record(record, lam)
        tp += sum(hits)
        fp += len(hits) - sum(hits)
        fn += misses
    p = _safe_div(tp, tp + fp)
    r = _safe_div(tp, tp + fn)
    return p, r, _safe_div(2 * p * r, p + r)


def detection_f1(records: Sequence[DetectionRecord], lam: float = 0.5) -> float:
    return detection_prf(records, lam)[2]


def average_precision(records: Sequence[DetectionRecord], lam: float = 0.5) -> float:
    """All-point interpolated AP over the pooled, rank-ordered predictions."""
    n_truth = sum(len(r.truths) for r in records)
    if n_truth == 0:
        raise ValueError("average precision needs at least one ground-truth box")
    pooled: list[tuple[float, int, int]] = []  # (-conf, record idx, pred idx)
    for ri, record in enumerate(records):
        for pi, (_, conf) in enumerate(record.predictions):
            pooled.append((-conf, ri, pi))
    pooled.sort()
    if not pooled:
        return 0.0
    claimed = [[False] * len(r.truths) for r in records]
    tp_flags = []
    for _, ri, pi in pooled:
        box, _ = records[ri].predictions[pi]
        best_iou = 0.0
        best_j = -1
        for j, truth in enumerate(records[ri].truths):
            ov = iou(box, truth)
            if ov > best_iou:
                best_iou = ov
                best_j = j
        if best_iou >= lam and best_j >= 0 and not claimed[ri][best_j]:
            claimed[ri][best_j] = True
            tp_flags.append(1.0)
        else:
            tp_flags.append(0.0)
    tps = np.cumsum(tp_flags)
    ranks = np.arange(1, len(tp_flags) + 1)
    precision = tps / ranks
    recall = tps / n_truth
    # Precision envelope: best precision achievable at recall >= r.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for k in range(len(recall)):
        if recall[k] > prev_r:
            ap += (recall[k] - prev_r) * envelope[k]
            prev_r = recall[k]
    return float(ap)


def mean_ap(aps: Mapping[str, float] | Sequence[float]) -> float:
    values = list(aps.values()) if isinstance(aps, Mapping) else list(aps)
    if not values:
        raise ValueError("mean_ap over an empty collection")
    return sum(values) / len(values)


def avg_iou(records: Sequence[DetectionRecord], lam: float = 0.5) -> float:
    """Mean IoU where every unmatched prediction or truth contributes a zero."""
    total = 0.0
    terms = 0
    for record in records:
        hits, matched, misses = _match_record(record, lam)
        total += sum(matched)
        terms += len(hits) + misses  # matched pairs + unmatched preds + unmatched truths
    if terms == 0:
        warnings.warn("avg_iou over empty records", stacklevel=2)
        return 0.0
    return total / terms


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(
    candidate: Sequence[str], references: Sequence[Sequence[str]], max_n: int
) -> tuple[list[int], list[int], int, int]:
    c = len(candidate)
    # Closest reference length; ties prefer the shorter one.
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    clipped = []
    totals = []
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(candidate, n)
        max_ref: Counter = Counter()
        for ref in references:
            for gram, cnt in _ngram_counts(ref, n).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        clipped.append(sum(min(cnt, max_ref[gram]) for gram, cnt in cand_counts.items()))
        totals.append(max(len(candidate) - n + 1, 0))
    return clipped, totals, c, r


def _bleu_from_stats(clipped: list[int], totals: list[int], c: int, r: int) -> float:
    if c == 0:
        return 0.0
    if any(t == 0 or k == 0 for k, t in zip(clipped, totals)):
        return 0.0  # no smoothing: any empty precision zeroes the score
    geo = exp(fsum(log(k / t) for k, t in zip(clipped, totals)) / len(clipped))
    bp = 1.0 if c >= r else exp(1.0 - r / c)
    return bp * geo


def bleu(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int = 4) -> float:
    """Sentence BLEU-n with uniform weights and the standard brevity penalty."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not references or any(len(ref) == 0 for ref in references):
        raise ValueError("references must be non-empty")
    return _bleu_from_stats(*_bleu_stats(candidate, references, n))


def corpus_bleu(
    candidates: Sequence[Sequence[str]], references: Sequence[Sequence[Sequence[str]]], n: int = 4
) -> float:
    """Corpus BLEU-n: n-gram counts pooled over sentences before the mean."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} reference sets")
    if not candidates:
        raise ValueError("empty corpus")
    clipped = [0] * n
    totals = [0] * n
    c_total = 0
    r_total = 0
    for cand, refs in zip(candidates, references):
        if not refs or any(len(ref) == 0 for ref in refs):
            raise ValueError("references must be non-empty")
        k, t, c, r = _bleu_stats(cand, refs, n)
        clipped = [a + b for a, b in zip(clipped, k)]
        totals = [a + b for a, b in zip(totals, t)]
        c_total += c
        r_total += r
    return _bleu_from_stats(clipped, totals, c_total, r_total)


@dataclass(frozen=True)
class ModelPoint:
    """A model on the accuracy/size plane: F1 up is better, params down is better."""

    name: str
    f1: float
    params: float


def _dominates(a: ModelPoint, b: ModelPoint) -> bool:
    return a.f1 >= b.f1 and a.params <= b.params and (a.f1 > b.f1 or a.params < b.params)


def pareto_front(points: Sequence[ModelPoint]) -> list[ModelPoint]:
    """Non-dominated points, sorted by ascending parameter count.

    Duplicate coordinates do not dominate each other, so both survive.
    """
    if not points:
        raise ValueError("pareto_front over an empty set")
    front = [p for p in points if not any(_dominates(q, p) for q in points)]
    front.sort(key=lambda p: (p.params, -p.f1, p.name))
    return front


def detector_classification_tally(
    items: Sequence[tuple[str | None, Sequence[BBox], Sequence[tuple[str, float, BBox]]]],
    lam: float = 0.5,
) -> ConfusionTally:
    """Score a detector as a frame classifier.

    Each item is (truth label or None for a no-gesture frame, truth boxes,
    predictions as (label, confidence, box)). Only the highest-confidence
    prediction counts; it is a true positive when its label matches and its
    best IoU against the truth boxes reaches lam.
    """
    tally = ConfusionTally()
    for truth_label, truth_boxes, preds in items:
        top = max(preds, key=lambda p: p[1]) if preds else None
        if truth_label is None:
            if top is not None:
                tally.add_fp(top[0])
            continue
        if top is None:
            tally.add_fn(truth_label)
            continue
        label, _, box = top
        best = max((iou(box, t) for t in truth_boxes), default=0.0)
        if label == truth_label and best >= lam:
            tally.add_tp(truth_label)
        else:
            tally.add_fp(label)
            tally.add_fn(truth_label)
    return tally
