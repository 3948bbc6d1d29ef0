"""Center-distance matching, AP/mAP, F1-optimal thresholds and rank correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .scene import Dataset, ObjectBox, Submission

DEFAULT_DIST_THRESHOLDS: Tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
F1_DIST_THRESHOLD = 2.0
_RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class MatchResult:
    pairs: Tuple[Tuple[int, int, float], ...]
    unmatched_gt: Tuple[int, ...]
    unmatched_pred: Tuple[int, ...]


def _score_order(preds: Sequence[ObjectBox]) -> List[int]:
    # descending score, ties by lower index
    return sorted(range(len(preds)), key=lambda i: (-(preds[i].score or 0.0), i))


def match_boxes(
    gt: Sequence[ObjectBox], pred: Sequence[ObjectBox], class_name: str, dist_threshold: float
) -> MatchResult:
    """Greedy same-class matching in descending score order.

    Indices refer to the input lists; boxes of other classes are ignored (they
    appear in neither pairs nor unmatched lists).
    """
    if dist_threshold <= 0:
        raise ValueError("dist_threshold must be positive")
    gt_idx = [i for i, b in enumerate(gt) if b.class_name == class_name]
    pred_idx = [i for i, b in enumerate(pred) if b.class_name == class_name]
    if gt_idx:
        gxy = np.array([(gt[i].center_x, gt[i].center_y) for i in gt_idx])
    taken = np.zeros(len(gt_idx), dtype=bool)
    pairs = []
    matched_pred = set()
    sub = [pred[i] for i in pred_idx]
    for j in _score_order(sub):
        if not gt_idx:
            break
        p = sub[j]
        dist = np.hypot(gxy[:, 0] - p.center_x, gxy[:, 1] - p.center_y)
        dist[taken] = np.inf
        k = int(np.argmin(dist))  # first minimum -> lower GT index
        if dist[k] <= dist_threshold:
            taken[k] = True
            pairs.append((gt_idx[k], pred_idx[j], float(dist[k])))
            matched_pred.add(pred_idx[j])
    unmatched_gt = tuple(g for g, t in zip(gt_idx, taken) if not t)
    unmatched_pred = tuple(i for i in pred_idx if i not in matched_pred)
    return MatchResult(tuple(pairs), unmatched_gt, unmatched_pred)


@dataclass
class _ClassMatches:
    """Per-sample match outcomes for one (class, distance) pair."""

    scores: Dict[str, np.ndarray] = field(default_factory=dict)
    is_tp: Dict[str, np.ndarray] = field(default_factory=dict)
    n_gt: Dict[str, int] = field(default_factory=dict)


class DetectionEvaluator:
    """Caches matching so AP can be recomputed cheaply over sample subsets."""

    def __init__(self, dataset: Dataset, submission: Submission):
        self.dataset = dataset
        self.submission = submission
        self._cache: Dict[Tuple[str, float], _ClassMatches] = {}
        self._order = {s.sample_id: i for i, s in enumerate(dataset.samples)}
        self._gt_classes = {s.sample_id: {b.class_name for b in s.gt_boxes} for s in dataset.samples}

    def _matches(self, class_name: str, dist_threshold: float) -> _ClassMatches:
        key = (class_name, float(dist_threshold))
        cm = self._cache.get(key)
        if cm is not None:
            return cm
        cm = _ClassMatches()
        for sample in self.dataset.samples:
            sid = sample.sample_id
            preds = self.submission.for_sample(sid)
            res = match_boxes(sample.gt_boxes, preds, class_name, dist_threshold)
            pred_idx = [i for i, b in enumerate(preds) if b.class_name == class_name]
            tp_set = {p for _, p, _ in res.pairs}
            cm.scores[sid] = np.array([preds[i].score for i in pred_idx], dtype=np.float64)
            cm.is_tp[sid] = np.array([i in tp_set for i in pred_idx], dtype=bool)
            cm.n_gt[sid] = sum(1 for b in sample.gt_boxes if b.class_name == class_name)
        self._cache[key] = cm
        return cm

    def _ranked(self, class_name, dist_threshold, sample_ids):
        cm = self._matches(class_name, dist_threshold)
        ids = self.dataset.sample_ids if sample_ids is None else list(sample_ids)
        n_gt = sum(cm.n_gt[s] for s in ids)
        scores, tps, keys = [], [], []
        for s in ids:
            sc = cm.scores[s]
            scores.append(sc)
            tps.append(cm.is_tp[s])
            keys.append(np.full(len(sc), self._order[s]))
        if scores:
            scores_a = np.concatenate(scores)
            tps_a = np.concatenate(tps)
            sample_key = np.concatenate(keys)
        else:
            scores_a = np.zeros(0)
            tps_a = np.zeros(0, dtype=bool)
            sample_key = np.zeros(0)
        # descending score; ties by dataset order (stable within a sample)
        order = np.lexsort((sample_key, -scores_a))
        return scores_a[order], tps_a[order], n_gt

    def average_precision(self, class_name: str, dist_threshold: float, sample_ids=None) -> float:
        _, tps, n_gt = self._ranked(class_name, dist_threshold, sample_ids)
        return _interpolated_ap(tps, n_gt)

    def has_gt(self, class_name: str, sample_ids=None) -> bool:
        ids = self.dataset.sample_ids if sample_ids is None else sample_ids
        return any(class_name in self._gt_classes[sid] for sid in ids)

    def mean_ap(self, dist_thresholds: Sequence[float] = DEFAULT_DIST_THRESHOLDS, sample_ids=None) -> float:
        if len(dist_thresholds) == 0:
            raise ValueError("dist_thresholds must be non-empty")
        ids = None if sample_ids is None else list(sample_ids)
        present = [c for c in self.dataset.classes if self.has_gt(c, ids)]
        if not present:
            return 0.0
        aps = [self.average_precision(c, d, ids) for c in present for d in dist_thresholds]
        return float(np.mean(aps))

    def f1_optimal_threshold(self, class_name: str, dist_threshold: float = F1_DIST_THRESHOLD) -> float:
        scores, tps, n_gt = self._ranked(class_name, dist_threshold, None)
        return _best_f1_threshold(scores, tps, n_gt)


def _interpolated_ap(tps: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP: mean over recall r of max precision at recall >= r."""
    if n_gt == 0 or len(tps) == 0:
        return 0.0
    tp_cum = np.cumsum(tps)
    fp_cum = np.cumsum(~tps)
    precision = tp_cum / (tp_cum + fp_cum)
    recall = tp_cum / n_gt
    # running max from the right gives the precision envelope
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_GRID - 1e-12, side="left")
    interp = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(interp.mean())


def _best_f1_threshold(scores: np.ndarray, tps: np.ndarray, n_gt: int) -> float:
    if len(scores) == 0:
        return 0.0
    # scores sorted descending; threshold t keeps the prefix with score >= t
    tp_cum = np.cumsum(tps)
    count = np.arange(1, len(scores) + 1)
    candidates = list(np.unique(scores)[::-1])
    if candidates[-1] != 0.0:
        candidates.append(0.0)
    best_t, best_f1 = None, -1.0
    for t in candidates:
        k = int(np.searchsorted(-scores, -t, side="right"))  # number with score >= t
        if k == 0:
            f1 = 0.0
        else:
            tp = tp_cum[k - 1]
            f1 = 2.0 * tp / (count[k - 1] + n_gt) if (count[k - 1] + n_gt) else 0.0
        if f1 > best_f1:  # candidates descend, so ties keep the larger threshold
            best_t, best_f1 = float(t), f1
    return best_t


def average_precision(
    dataset: Dataset, submission: Submission, class_name: str, dist_threshold: float,
    sample_ids: Optional[Iterable[str]] = None,
) -> float:
    return DetectionEvaluator(dataset, submission).average_precision(class_name, dist_threshold, sample_ids)


def mean_ap(
    dataset: Dataset, submission: Submission,
    dist_thresholds: Sequence[float] = DEFAULT_DIST_THRESHOLDS,
    sample_ids: Optional[Iterable[str]] = None,
) -> float:
    """Mean of AP over classes present in ground truth and over matching distances."""
    return DetectionEvaluator(dataset, submission).mean_ap(dist_thresholds, sample_ids)


def f1_optimal_threshold(
    dataset: Dataset, submission: Submission, class_name: str,
    dist_threshold: float = F1_DIST_THRESHOLD,
) -> float:
    """Score threshold (from observed scores and 0) maximising dataset-level F1.

    Ties go to the larger threshold; returns 0 when the class has no predictions.
    """
    return DetectionEvaluator(dataset, submission).f1_optimal_threshold(class_name, dist_threshold)


class ThresholdTable(dict):
    """``class_name -> score threshold`` with every value in [0, 1]."""

    def __init__(self, values: Mapping[str, float] = (), **kwargs):
        super().__init__()
        for k, v in dict(values, **kwargs).items():
            self[k] = v

    def __setitem__(self, key: str, value: float) -> None:
        value = float(value)
        if not 0.0 <= value <= 1.0 or math.isnan(value):
            raise ValueError(f"threshold for {key!r} must lie in [0, 1], got {value}")
        super().__setitem__(key, value)

    def with_override(self, class_name: str, value: float) -> "ThresholdTable":
        table = ThresholdTable(self)
        table[class_name] = value
        return table


def optimal_thresholds(
    dataset: Dataset, submission: Submission, dist_threshold: float = F1_DIST_THRESHOLD,
    evaluator: Optional[DetectionEvaluator] = None,
) -> ThresholdTable:
    """F1-optimal threshold for every class of the vocabulary (0 without predictions)."""
    ev = evaluator or DetectionEvaluator(dataset, submission)
    classes = list(dataset.classes)
    for boxes in submission.boxes.values():
        for b in boxes:
            if b.class_name not in classes:
                classes.append(b.class_name)
    return ThresholdTable({c: ev.f1_optimal_threshold(c, dist_threshold) for c in classes})


def apply_thresholds(submission: Submission, thresholds: Mapping[str, float]) -> Submission:
    """Keep boxes whose score is at least their class threshold."""
    table = thresholds if isinstance(thresholds, ThresholdTable) else ThresholdTable(thresholds)
    kept = {}
    for sid, boxes in submission.boxes.items():
        out = []
        for b in boxes:
            if b.class_name not in table:
                raise KeyError(f"no threshold for class {b.class_name!r}")
            if b.score >= table[b.class_name]:
                out.append(b)
        kept[sid] = tuple(out)
    return Submission(submission.method_name, submission.modality, kept)


def spearman_rank_correlation(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average ranks.  Undefined (nan) if either input is constant."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("need at least two observations")
    rx = rankdata(np.asarray(xs, dtype=np.float64), method="average")
    ry = rankdata(np.asarray(ys, dtype=np.float64), method="average")
    n = len(rx)
    if len(np.unique(rx)) == n and len(np.unique(ry)) == n:
        # tie-free: the closed form is exact in integer arithmetic
        d2 = int(np.sum((rx.astype(np.int64) - ry.astype(np.int64)) ** 2))
        return 1.0 - 6.0 * d2 / (n * (n * n - 1))
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return float("nan")
    return max(-1.0, min(1.0, float(dx @ dy) / denom))
