"""Per-stream action scoring and inference-time score fusion.

Three kinds of evidence score each human-object pair: the human appearance
feature, the object appearance feature, and the graph-refined pair
features (one score vector per subgraph). Each stream is a one-layer MLP
with ReLU followed by a per-action sigmoid classifier. At inference all
factors multiply together with the two detector confidences; actions that
involve no object are scored from the human stream alone, once per human.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .evaluation import PredictionTriplet
from .geometry import Detection
from .graph import GraphParams, build_graph, run_passes


@dataclass(frozen=True)
class ActionCatalog:
    """Names of the action classes and which of them involve an object."""

    names: tuple[str, ...]
    requires_object: tuple[bool, ...]

    def __post_init__(self):
        if len(self.names) != len(self.requires_object):
            raise ValueError("catalog names and flags differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("catalog contains duplicate action names")

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def object_action_ids(self) -> list[int]:
        return [i for i, req in enumerate(self.requires_object) if req]

    @property
    def human_only_ids(self) -> list[int]:
        return [i for i, req in enumerate(self.requires_object) if not req]

    def index(self, name: str) -> int:
        return self.names.index(name)


# The 29 action classes of the V-COCO protocol: role-split verbs plus the
# five classes that involve no object.
VCOCO_ACTIONS: tuple[tuple[str, bool], ...] = (
    ("hold", True), ("sit", True), ("ride", True), ("look", True),
    ("hit_instr", True), ("hit_obj", True), ("eat_obj", True), ("eat_instr", True),
    ("jump", True), ("lay", True), ("talk_on_phone", True), ("carry", True),
    ("throw", True), ("catch", True), ("cut_instr", True), ("cut_obj", True),
    ("work_on_computer", True), ("ski", True), ("surf", True), ("skateboard", True),
    ("drink", True), ("kick", True), ("read", True), ("snowboard", True),
    ("stand", False), ("walk", False), ("run", False), ("smile", False),
    ("point", False),
)


def vcoco_catalog() -> ActionCatalog:
    names, flags = zip(*VCOCO_ACTIONS)
    return ActionCatalog(names=names, requires_object=flags)


@dataclass
class StreamHead:
    """One-layer MLP plus a per-action sigmoid classifier."""

    mlp_weight: T.Tensor  # (hidden, d_in)
    mlp_bias: T.Tensor    # (hidden,)
    cls_weight: T.Tensor  # (A, hidden)
    cls_bias: T.Tensor    # (A,)

    def tensors(self, prefix: str) -> dict[str, T.Tensor]:
        return {
            f"{prefix}.mlp_weight": self.mlp_weight,
            f"{prefix}.mlp_bias": self.mlp_bias,
            f"{prefix}.cls_weight": self.cls_weight,
            f"{prefix}.cls_bias": self.cls_bias,
        }


def init_stream_head(rng: np.random.Generator, d_in: int, hidden: int,
                     n_actions: int, trainable: bool = True) -> StreamHead:
    make = T.parameter if trainable else T.constant
    return StreamHead(
        mlp_weight=make(rng.standard_normal((hidden, d_in)) * np.sqrt(2.0 / d_in)),
        mlp_bias=make(np.zeros(hidden)),
        cls_weight=make(rng.standard_normal((n_actions, hidden)) * np.sqrt(1.0 / hidden)),
        cls_bias=make(np.zeros(n_actions)),
    )


def stream_scores(x: T.Tensor, head: StreamHead) -> T.Tensor:
    """Per-action scores in (0,1): sigmoid(classifier(relu(mlp(x))))."""
    hidden = T.relu(T.add(T.matmul(head.mlp_weight, x), head.mlp_bias))
    return T.sigmoid(T.add(T.matmul(head.cls_weight, hidden), head.cls_bias))


def fuse(s_h: float, s_o: float, a_h: T.Tensor, a_o: T.Tensor,
         a_sph: T.Tensor | None, a_spo: T.Tensor | None,
         catalog: ActionCatalog) -> T.Tensor:
    """Final per-action pair scores.

    Object-involving actions multiply the two detector confidences with
    every available stream score; a disabled subgraph stream (None) simply
    drops its factor. Actions without an object score as s_h * a_h.
    """
    if not (0.0 <= s_h <= 1.0 and 0.0 <= s_o <= 1.0):
        raise ValueError("detector confidences must lie in [0,1]")
    paired = T.affine(T.mul(a_h, a_o), s_h * s_o)
    if a_sph is not None:
        paired = T.mul(paired, a_sph)
    if a_spo is not None:
        paired = T.mul(paired, a_spo)
    human_only = T.affine(a_h, s_h)
    obj_mask = np.asarray(catalog.requires_object, dtype=np.float64)
    return T.add(T.affine(paired, obj_mask), T.affine(human_only, 1.0 - obj_mask))


@dataclass
class InferenceSettings:
    """Knobs of a single-image inference pass."""

    iters_human: int = 2
    iters_object: int = 2
    enable_human_graph: bool = True
    enable_object_graph: bool = True
    raster_size: int = 64


def infer_image(image_id: str,
                humans: list[Detection], objects: list[Detection],
                human_apps: list[np.ndarray], object_apps: list[np.ndarray],
                featurizer, graph_params: GraphParams,
                heads: dict[str, StreamHead], catalog: ActionCatalog,
                settings: InferenceSettings) -> list[PredictionTriplet]:
    """Score every pair and every human of one image.

    ``humans``/``objects`` must already be score-thresholded; ``featurizer``
    maps a (human, object) pair to its node feature. Output order is
    (human index, object index, action index), with the human-only triplets
    of each human emitted after its pairs.
    """
    triplets: list[PredictionTriplet] = []
    human_scores = [stream_scores(T.constant(app), heads["human"]) for app in human_apps]

    pair_scores: dict[tuple[int, int], np.ndarray] = {}
    if humans and objects:
        graph = build_graph(humans, objects, featurizer)
        h_feats, o_feats = run_passes(graph, graph_params,
                                      settings.iters_human if settings.enable_human_graph else 0,
                                      settings.iters_object if settings.enable_object_graph else 0)
        object_scores = [stream_scores(T.constant(app), heads["object"])
                         for app in object_apps]
        for (i, j) in graph.keys():
            a_sph = (stream_scores(h_feats[(i, j)], heads["sp_human"])
                     if settings.enable_human_graph else None)
            a_spo = (stream_scores(o_feats[(i, j)], heads["sp_object"])
                     if settings.enable_object_graph else None)
            fused = fuse(humans[i].score, objects[j].score,
                         human_scores[i], object_scores[j], a_sph, a_spo, catalog)
            pair_scores[(i, j)] = fused.data

    object_ids = catalog.object_action_ids
    human_only_ids = catalog.human_only_ids
    for i, human in enumerate(humans):
        for j, obj in enumerate(objects):
            scores = pair_scores[(i, j)]
            for a in object_ids:
                triplets.append(PredictionTriplet(
                    image_id=image_id, human_box=human.box, action=catalog.names[a],
                    object_box=obj.box, score=float(scores[a])))
        h_scores = human_scores[i].data
        for a in human_only_ids:
            triplets.append(PredictionTriplet(
                image_id=image_id, human_box=human.box, action=catalog.names[a],
                object_box=None, score=float(human.score * h_scores[a])))
    return triplets
