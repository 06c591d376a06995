"""Multi-label loss, pair sampling with box jitter, and SGD with momentum.

Training treats each action class as an independent binary decision: each
stream's per-action sigmoid scores incur a summed binary cross-entropy
against the pair's label vector, and the stream losses add up. Pairs that
match no ground truth are negatives, kept at a 3:1 negative-to-positive
ratio per image; positive pairs are augmented by jittering both boxes
while keeping IoU with the originals above 0.7.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .geometry import Detection, jitter_box
from .streams import ActionCatalog

log = logging.getLogger(__name__)

SCORE_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainingExample:
    """One sampled pair: detections (jittered for positives) plus labels."""

    human: Detection
    object: Detection
    labels: np.ndarray          # (A,) in {0,1}
    is_positive: bool
    human_index: int = -1       # indices into the image's detection lists,
    object_index: int = -1      # for appearance-feature lookup

    def __post_init__(self):
        if self.is_positive and not np.any(self.labels):
            raise ValueError("positive example needs at least one active label")
        if not self.is_positive and np.any(self.labels):
            raise ValueError("negative example must have an all-zero label vector")


def multilabel_loss(scores: T.Tensor, labels: np.ndarray) -> T.Tensor:
    """Summed per-class binary cross-entropy, clamped at 1e-12."""
    labels = np.asarray(labels, dtype=np.float64)
    if scores.data.shape != labels.shape:
        raise T.DimensionError(f"scores {scores.shape} vs labels {labels.shape}")
    s = T.clamp(scores, SCORE_FLOOR, 1.0 - SCORE_FLOOR)
    pos = T.mul(T.log(s), T.constant(labels))
    neg = T.mul(T.log(T.affine(s, -1.0, 1.0)), T.constant(1.0 - labels))
    return T.affine(T.sum_all(T.add(pos, neg)), -1.0)


def total_loss(stream_scores: dict[str, T.Tensor], labels: np.ndarray,
               catalog: ActionCatalog) -> T.Tensor:
    """Sum of the per-stream losses for one pair example.

    The human stream is supervised on every action; the object and both
    subgraph streams only on actions that involve an object.
    """
    required = ("human", "object", "sp_human", "sp_object")
    missing = [name for name in required if name not in stream_scores]
    if missing:
        raise ValueError(f"missing stream scores: {missing}")
    labels = np.asarray(labels, dtype=np.float64)
    obj_ids = catalog.object_action_ids
    loss = multilabel_loss(stream_scores["human"], labels)
    for name in ("object", "sp_human", "sp_object"):
        loss = T.add(loss, multilabel_loss(T.take(stream_scores[name], obj_ids),
                                           labels[obj_ids]))
    return loss


def sample_batch(positives: list[TrainingExample], negatives: list[TrainingExample],
                 rng: np.random.Generator, ratio: int = 3,
                 jitter: bool = True) -> list[TrainingExample]:
    """Assemble one image's examples: every positive (боxes jittered) plus
    up to ``ratio`` times as many negatives drawn without replacement."""
    if not positives:
        return []
    batch: list[TrainingExample] = []
    for ex in positives:
        if jitter:
            ex = TrainingExample(
                human=Detection(jitter_box(ex.human.box, rng), ex.human.category,
                                ex.human.score),
                object=Detection(jitter_box(ex.object.box, rng), ex.object.category,
                                 ex.object.score),
                labels=ex.labels, is_positive=True,
                human_index=ex.human_index, object_index=ex.object_index)
        batch.append(ex)
    want = ratio * len(positives)
    if len(negatives) < want:
        log.warning("only %d negatives available for %d positives (wanted %d)",
                    len(negatives), len(positives), want)
        picked = list(range(len(negatives)))
    else:
        picked = sorted(rng.choice(len(negatives), size=want, replace=False).tolist())
    batch.extend(negatives[k] for k in picked)
    return batch


@dataclass
class OptimState:
    """SGD with heavy-ball momentum and coupled weight decay."""

    lr: float = 0.0025
    momentum: float = 0.9
    weight_decay: float = 0.0001
    velocities: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_step(params: dict[str, T.Tensor], state: OptimState) -> None:
    """v <- momentum*v + grad + wd*theta; theta <- theta - lr*v.

    Consumes ``grad`` on each parameter (and resets it); raises on a
    non-finite gradient without touching any parameter.
    """
    grads: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise T.NumericError(f"non-finite gradient for {name!r}")
        grads[name] = g
    for name, p in params.items():
        v = state.velocities.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = state.momentum * v + grads[name] + state.weight_decay * p.data
        state.velocities[name] = v
        p.data = p.data - state.lr * v
        p.zero_grad()


def label_pairs(humans: list[Detection], objects: list[Detection],
                gt_triplets, catalog: ActionCatalog,
                iou_thresh: float = 0.5) -> dict[tuple[int, int], np.ndarray]:
    """Object-action label vector per (human, object) pair.

    A pair carries action a when some ground-truth triplet for a has both
    boxes overlapping the pair's boxes at IoU >= ``iou_thresh``.
    """
    from .geometry import iou

    labels = {(i, j): np.zeros(catalog.size)
              for i in range(len(humans)) for j in range(len(objects))}
    for g in gt_triplets:
        if g.object_box is None:
            continue
        a = catalog.index(g.action)
        for i, h in enumerate(humans):
            if iou(h.box, g.human_box) < iou_thresh:
                continue
            for j, o in enumerate(objects):
                if iou(o.box, g.object_box) >= iou_thresh:
                    labels[(i, j)][a] = 1.0
    return labels


def label_humans(humans: list[Detection], gt_triplets, catalog: ActionCatalog,
                 iou_thresh: float = 0.5) -> dict[int, np.ndarray]:
    """Human-only action label vector per human detection."""
    from .geometry import iou

    labels = {i: np.zeros(catalog.size) for i in range(len(humans))}
    for g in gt_triplets:
        if g.object_box is not None:
            continue
        a = catalog.index(g.action)
        for i, h in enumerate(humans):
            if iou(h.box, g.human_box) >= iou_thresh:
                labels[i][a] = 1.0
    return labels
