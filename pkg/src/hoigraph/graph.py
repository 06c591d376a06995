"""Pair graph construction and attentional feature aggregation.

Every detected human i is paired with every detected object j; node (i,j)
carries the pair's spatial-semantic feature. Two neighbor structures are
refined independently:

  * human-centric: (i,j) attends over {(i,j') : j' != j}, the other pairs
    of the same person;
  * object-centric: (i,j) attends over {(i',j) : i' != i}, the other pairs
    of the same object (there are no object-object edges).

One refinement step computes scaled dot-product attention over the
neighborhood (query projection on the neighbor, key projection on the
center), takes the attention-weighted sum of linearly transformed neighbor
features, applies ReLU, adds the node's own feature back, and layer-
normalizes the sum. Nodes with an empty neighborhood pass through
untouched. All updates within a step read the previous step's features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tensor as T
from .geometry import Detection

NodeKey = tuple[int, int]
NodeFeatures = dict[NodeKey, T.Tensor]


class EmptyGraphError(ValueError):
    """No humans or no objects: callers fall back to human-only scoring."""


class SubgraphKind(Enum):
    HUMAN_CENTRIC = "human_centric"
    OBJECT_CENTRIC = "object_centric"


@dataclass
class SubgraphParams:
    """Attention and normalization weights of one subgraph."""

    transform: T.Tensor  # (d, d) applied to neighbor features
    query: T.Tensor      # (d_k, d) applied to neighbor features
    key: T.Tensor        # (d_k, d) applied to the center feature
    norm_gain: T.Tensor  # (d,)
    norm_bias: T.Tensor  # (d,)

    @property
    def key_dim(self) -> int:
        return self.query.data.shape[0]


@dataclass
class GraphParams:
    """Independent weight sets for the two subgraphs."""

    human: SubgraphParams
    object: SubgraphParams

    def for_kind(self, kind: SubgraphKind) -> SubgraphParams:
        return self.human if kind is SubgraphKind.HUMAN_CENTRIC else self.object

    def tensors(self) -> dict[str, T.Tensor]:
        named = {}
        for prefix, sub in (("human_graph", self.human), ("object_graph", self.object)):
            named[f"{prefix}.transform"] = sub.transform
            named[f"{prefix}.query"] = sub.query
            named[f"{prefix}.key"] = sub.key
            named[f"{prefix}.norm_gain"] = sub.norm_gain
            named[f"{prefix}.norm_bias"] = sub.norm_bias
        return named


def init_subgraph(rng: np.random.Generator, dim: int, key_dim: int,
                  trainable: bool = True) -> SubgraphParams:
    make = T.parameter if trainable else T.constant
    return SubgraphParams(
        transform=make(rng.standard_normal((dim, dim)) / math.sqrt(dim)),
        query=make(rng.standard_normal((key_dim, dim)) / math.sqrt(dim)),
        key=make(rng.standard_normal((key_dim, dim)) / math.sqrt(dim)),
        norm_gain=make(np.ones(dim)),
        norm_bias=make(np.zeros(dim)),
    )


def init_graph_params(rng: np.random.Generator, dim: int, key_dim: int,
                      trainable: bool = True) -> GraphParams:
    return GraphParams(human=init_subgraph(rng, dim, key_dim, trainable),
                       object=init_subgraph(rng, dim, key_dim, trainable))


@dataclass
class HOIGraph:
    """All human-object pairs of one image plus their node features."""

    humans: list[Detection]
    objects: list[Detection]
    nodes: NodeFeatures

    def keys(self) -> list[NodeKey]:
        return sorted(self.nodes.keys())


def build_graph(humans: list[Detection], objects: list[Detection], featurizer) -> HOIGraph:
    """Pair every human with every object; ``featurizer(h, o)`` supplies the
    node feature. Raises ``EmptyGraphError`` when either side is empty."""
    if not humans or not objects:
        raise EmptyGraphError(f"cannot pair {len(humans)} humans with {len(objects)} objects")
    nodes: NodeFeatures = {}
    for i, h in enumerate(humans):
        for j, o in enumerate(objects):
            nodes[(i, j)] = featurizer(h, o)
    return HOIGraph(humans=humans, objects=objects, nodes=nodes)


def neighbor_keys(key: NodeKey, n_humans: int, n_objects: int,
                  kind: SubgraphKind) -> list[NodeKey]:
    i, j = key
    if kind is SubgraphKind.HUMAN_CENTRIC:
        return [(i, jp) for jp in range(n_objects) if jp != j]
    return [(ip, j) for ip in range(n_humans) if ip != i]


def _attention_logits(center_key: T.Tensor, neighbor_queries: list[T.Tensor],
                      key_dim: int) -> T.Tensor:
    scale = 1.0 / math.sqrt(key_dim)
    return T.stack_scalars([T.affine(T.dot(q, center_key), scale)
                            for q in neighbor_queries])


def attention_weights(center: T.Tensor, neighbors: list[T.Tensor],
                      p: GraphParams, kind: SubgraphKind) -> T.Tensor:
    """Scaled dot-product attention over a neighborhood.

    The query projection applies to each neighbor and the key projection to
    the center node; logits are scaled by 1/sqrt(key_dim) and softmaxed.
    """
    if not neighbors:
        raise T.DimensionError("attention over an empty neighborhood is undefined")
    sub = p.for_kind(kind)
    center_key = T.matmul(sub.key, center)
    queries = [T.matmul(sub.query, n) for n in neighbors]
    return T.softmax(_attention_logits(center_key, queries, sub.key_dim))


def aggregate_once(feats: NodeFeatures, kind: SubgraphKind, p: GraphParams,
                   n_humans: int | None = None, n_objects: int | None = None,
                   eps: float = 1e-5) -> NodeFeatures:
    """One synchronous refinement step over the given subgraph.

    Per-node projections are computed once and shared across
    neighborhoods; nodes with no neighbors are returned as-is.
    """
    if n_humans is None:
        n_humans = 1 + max(i for i, _ in feats)
    if n_objects is None:
        n_objects = 1 + max(j for _, j in feats)
    sub = p.for_kind(kind)

    keys = sorted(feats.keys())
    transformed = {k: T.matmul(sub.transform, feats[k]) for k in keys}
    queries = {k: T.matmul(sub.query, feats[k]) for k in keys}
    center_keys = {k: T.matmul(sub.key, feats[k]) for k in keys}

    out: NodeFeatures = {}
    for k in keys:
        nbrs = [n for n in neighbor_keys(k, n_humans, n_objects, kind) if n in feats]
        if not nbrs:
            out[k] = feats[k]
            continue
        logits = _attention_logits(center_keys[k], [queries[n] for n in nbrs], sub.key_dim)
        alpha = T.softmax(logits)
        aggregated = T.weighted_sum_rows(T.stack_rows([transformed[n] for n in nbrs]), alpha)
        residual = T.add(feats[k], T.relu(aggregated))
        out[k] = T.layer_norm(residual, sub.norm_gain, sub.norm_bias, eps=eps)
    return out


def run_passes(graph: HOIGraph, p: GraphParams, iters_human: int,
               iters_object: int) -> tuple[NodeFeatures, NodeFeatures]:
    """Refine the raw node features independently on each subgraph.

    Returns (human-centric output, object-centric output); zero iterations
    on a subgraph returns the raw features for that side.
    """
    if iters_human < 0 or iters_object < 0:
        raise ValueError("iteration counts must be non-negative")
    n_h, n_o = len(graph.humans), len(graph.objects)
    human_out: NodeFeatures = dict(graph.nodes)
    for _ in range(iters_human):
        human_out = aggregate_once(human_out, SubgraphKind.HUMAN_CENTRIC, p, n_h, n_o)
    object_out: NodeFeatures = dict(graph.nodes)
    for _ in range(iters_object):
        object_out = aggregate_once(object_out, SubgraphKind.OBJECT_CENTRIC, p, n_h, n_o)
    return human_out, object_out
