"""Role mean average precision over <human, action, object> triplets.

A prediction counts as a true positive only when some not-yet-matched
ground-truth triplet in the same image carries the same action, its human
box overlaps at IoU >= 0.5 (configurable), and its object box does too
(or both sides agree the action has no object). Matching is greedy in
descending score order; per-action AP integrates the precision envelope
over all recall points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import BBox, iou

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruthTriplet:
    image_id: str
    human_box: BBox
    action: str
    object_box: BBox | None  # None for actions that involve no object


@dataclass(frozen=True)
class PredictionTriplet:
    image_id: str
    human_box: BBox
    action: str
    object_box: BBox | None
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"prediction score must be finite, got {self.score}")


def match(preds: list[PredictionTriplet], gts: list[GroundTruthTriplet],
          iou_thresh: float = 0.5) -> list[bool]:
    """Flag each prediction TP/FP, in descending-score order.

    Predictions are sorted by score (stable, so ties keep input order).
    Each ground truth matches at most one prediction; among eligible ground
    truths the one with the highest min(human IoU, object IoU) wins.
    Returns the TP flags aligned with the sorted order.
    """
    order = sorted(range(len(preds)), key=lambda idx: -preds[idx].score)
    matched: set[int] = set()
    flags: list[bool] = []
    for idx in order:
        p = preds[idx]
        best_gt = -1
        best_quality = -1.0
        for g_idx, g in enumerate(gts):
            if g_idx in matched or g.image_id != p.image_id or g.action != p.action:
                continue
            h_iou = iou(p.human_box, g.human_box)
            if h_iou < iou_thresh:
                continue
            if (p.object_box is None) != (g.object_box is None):
                continue
            if p.object_box is None:
                quality = h_iou
            else:
                o_iou = iou(p.object_box, g.object_box)
                if o_iou < iou_thresh:
                    continue
                quality = min(h_iou, o_iou)
            if quality > best_quality:
                best_quality = quality
                best_gt = g_idx
        if best_gt >= 0:
            matched.add(best_gt)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags: list[bool], total_gt: int) -> float:
    """Area under the precision-recall curve (all-point interpolation).

    ``flags`` are TP indicators in rank order. The precision curve is made
    monotonically non-increasing from the right before integrating.
    Returns 0 (with a warning) when there is no ground truth.
    """
    if total_gt < 0:
        raise ValueError("total_gt must be non-negative")
    if total_gt == 0:
        log.warning("average_precision called with zero ground-truth instances")
        return 0.0
    if not flags:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    fp = np.cumsum(~np.asarray(flags, dtype=bool))
    recall = tp / total_gt
    precision = tp / (tp + fp)
    # envelope: precision at recall r is the best precision at recall >= r
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recall, precision):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return float(ap)


def role_map(preds: list[PredictionTriplet], gts: list[GroundTruthTriplet],
             action_names: list[str], iou_thresh: float = 0.5) -> tuple[dict[str, float], float]:
    """Per-action APs and their mean over actions with ground truth.

    Actions without a single ground-truth instance are excluded from both
    the table and the mean.
    """
    per_action: dict[str, float] = {}
    for action in action_names:
        action_gts = [g for g in gts if g.action == action]
        if not action_gts:
            continue
        action_preds = [p for p in preds if p.action == action]
        flags = match(action_preds, action_gts, iou_thresh)
        per_action[action] = average_precision(flags, len(action_gts))
    mean = float(np.mean(list(per_action.values()))) if per_action else 0.0
    return per_action, mean
