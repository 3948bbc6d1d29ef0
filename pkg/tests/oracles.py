"""Brute-force reference implementations used as test oracles."""

import math

import numpy as np

from pkleval.scene import ObjectBox


def brute_match(gt, pred, cls, thr):
    """Reference greedy matcher written with plain loops."""
    g = [i for i, b in enumerate(gt) if b.class_name == cls]
    p = [i for i, b in enumerate(pred) if b.class_name == cls]
    p.sort(key=lambda i: (-pred[i].score, i))
    taken, pairs = set(), []
    for j in p:
        best, best_d = None, math.inf
        for i in g:
            if i in taken:
                continue
            d = math.hypot(gt[i].center_x - pred[j].center_x, gt[i].center_y - pred[j].center_y)
            if d < best_d:
                best, best_d = i, d
        if best is not None and best_d <= thr:
            taken.add(best)
            pairs.append((best, j))
    return pairs


def ranked_tps(gt_per_sample, pred_per_sample, cls, thr):
    rows = []
    for s, (gts, preds) in enumerate(zip(gt_per_sample, pred_per_sample)):
        tp = {j for _, j in brute_match(gts, preds, cls, thr)}
        rows += [(preds[j].score, s, j in tp) for j in range(len(preds)) if preds[j].class_name == cls]
    rows.sort(key=lambda r: (-r[0], r[1]))
    n_gt = sum(1 for gts in gt_per_sample for b in gts if b.class_name == cls)
    return rows, n_gt


def brute_ap(gt_per_sample, pred_per_sample, cls, thr):
    rows, n_gt = ranked_tps(gt_per_sample, pred_per_sample, cls, thr)
    if n_gt == 0 or not rows:
        return 0.0
    pts, tp = [], 0
    for k, (_, _, is_tp) in enumerate(rows, 1):
        tp += is_tp
        pts.append((tp / n_gt, tp / k))
    total = 0.0
    for r in np.linspace(0, 1, 101):
        cands = [prec for rec, prec in pts if rec >= r - 1e-12]
        total += max(cands) if cands else 0.0
    return total / 101


def brute_f1_threshold(gt_per_sample, pred_per_sample, cls, thr):
    scores = sorted({b.score for preds in pred_per_sample for b in preds if b.class_name == cls} | {0.0})
    if not any(b.class_name == cls for preds in pred_per_sample for b in preds):
        return 0.0
    n_gt = sum(1 for gts in gt_per_sample for b in gts if b.class_name == cls)
    best_t, best_f1 = None, -1.0
    for t in sorted(scores, reverse=True):
        tp = fp = 0
        for gts, preds in zip(gt_per_sample, pred_per_sample):
            kept = [b for b in preds if b.score >= t]
            m = len(brute_match(gts, kept, cls, thr))
            tp += m
            fp += sum(1 for b in kept if b.class_name == cls) - m
        fn = n_gt - tp
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    return best_t


def random_instance(rng, n_samples=3, max_boxes=10, classes=("car", "pedestrian"), distinct=True):
    gts, preds = [], []
    used = set()
    for _ in range(n_samples):
        g = [ObjectBox(*rng.uniform(0, 10, 2), 1.0, 2.0, 0.0, str(rng.choice(classes)))
             for _ in range(rng.integers(0, max_boxes + 1))]
        p = []
        for _ in range(rng.integers(0, max_boxes + 1)):
            if distinct:
                sc = float(rng.random())
                while sc in used:
                    sc = float(rng.random())
                used.add(sc)
            else:
                sc = float(rng.choice([0.2, 0.4, 0.6, 0.8, 1.0]))
            p.append(ObjectBox(*rng.uniform(0, 10, 2), 1.0, 2.0, 0.0, str(rng.choice(classes)), sc))
        gts.append(g)
        preds.append(p)
    return gts, preds
