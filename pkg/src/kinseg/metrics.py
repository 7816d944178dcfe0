"""Frame-wise and segmental evaluation metrics.

All scores are percentages in [0, 100].  Segmental metrics operate on
run-length segment lists; a segment covers frames [start, end] inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Segment:
    label: int
    start: int
    end: int  # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def run_length(labels) -> list[Segment]:
    """Maximal constant runs of a label sequence."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [labels.size - 1]])
    return [Segment(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def validate_segments(segs: list[Segment], n_frames: int | None = None) -> None:
    prev_end = -1
    prev_label = None
    for seg in segs:
        if seg.start != prev_end + 1:
            raise ValueError(f"segments not contiguous at frame {seg.start}")
        if seg.end < seg.start:
            raise ValueError("segment end before start")
        if prev_label is not None and seg.label == prev_label:
            raise ValueError("adjacent segments share a label")
        prev_end, prev_label = seg.end, seg.label
    if n_frames is not None and segs and prev_end != n_frames - 1:
        raise ValueError("segments do not cover the sequence")


def frame_accuracy(pred, gt) -> float:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("prediction/ground-truth length mismatch")
    return 100.0 * float(np.mean(pred == gt))


def macro_f1(pred, gt, num_classes: int, exclude: tuple[int, ...] = ()) -> float:
    """Mean per-class frame-wise F1.

    Classes absent from both sequences are excluded (a 0/0 F1 carries no
    information); ``exclude`` drops listed class ids (e.g. background)
    regardless.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("prediction/ground-truth length mismatch")
    scores = []
    for c in range(num_classes):
        if c in exclude:
            continue
        p = pred == c
        g = gt == c
        if not p.any() and not g.any():
            continue
        tp = float(np.sum(p & g))
        denom = p.sum() + g.sum()
        scores.append(2.0 * tp / denom if denom else 0.0)
    return 100.0 * float(np.mean(scores)) if scores else 0.0


def _levenshtein(a: list[int], b: list[int]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_score(pred_segs: list[Segment], gt_segs: list[Segment]) -> float:
    """100 * (1 - Levenshtein(pred labels, gt labels) / max(len, len))."""
    p = [s.label for s in pred_segs]
    g = [s.label for s in gt_segs]
    if not p and not g:
        return 100.0
    return 100.0 * (1.0 - _levenshtein(p, g) / max(len(p), len(g)))


def f1_at_k(pred_segs: list[Segment], gt_segs: list[Segment], k: int) -> float:
    """Segmental F1 at IoU threshold k/100.

    Each predicted segment is scored by its best IoU over same-class
    ground-truth segments (greedily, in temporal order); it is a true
    positive when that IoU clears the threshold and the matched segment is
    still unclaimed.  Unclaimed ground-truth segments are false negatives.
    """
    if not pred_segs and not gt_segs:
        return 100.0
    thr = k / 100.0
    g_start = np.array([s.start for s in gt_segs], dtype=np.float64)
    g_end = np.array([s.end for s in gt_segs], dtype=np.float64)
    g_label = np.array([s.label for s in gt_segs])
    claimed = np.zeros(len(gt_segs), dtype=bool)
    tp = fp = 0
    for seg in pred_segs:
        if len(gt_segs) == 0:
            fp += 1
            continue
        inter = np.minimum(seg.end, g_end) - np.maximum(seg.start, g_start) + 1.0
        union = np.maximum(seg.end, g_end) - np.minimum(seg.start, g_start) + 1.0
        iou = (inter / union) * (g_label == seg.label)
        iou[inter <= 0] = 0.0
        best = int(np.argmax(iou))
        if iou[best] >= thr and not claimed[best]:
            tp += 1
            claimed[best] = True
        else:
            fp += 1
    fn = len(gt_segs) - int(claimed.sum())
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0.0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


METRIC_NAMES = ("accuracy", "f1_macro", "edit", "f1_10", "f1_25", "f1_50")


def evaluate_frames(pred, gt, num_classes: int,
                    macro_exclude: tuple[int, ...] = ()) -> dict[str, float]:
    """All six standard metrics for one predicted label sequence."""
    pred_segs = run_length(pred)
    gt_segs = run_length(gt)
    out = {
        "accuracy": frame_accuracy(pred, gt),
        "f1_macro": macro_f1(pred, gt, num_classes, exclude=macro_exclude),
        "edit": edit_score(pred_segs, gt_segs),
    }
    for k in (10, 25, 50):
        out[f"f1_{k}"] = f1_at_k(pred_segs, gt_segs, k)
    return out
