"""The full trainable parameter set and its named-tensor manifest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .features import SpatialConvParams, init_spatial_conv, spatial_output_dim
from .graph import GraphParams, init_graph_params
from .streams import StreamHead, init_stream_head

STREAM_NAMES = ("human", "object", "sp_human", "sp_object")


@dataclass
class ModelParams:
    """Conv featurizer, both subgraph weight sets, and the four stream heads."""

    conv: SpatialConvParams
    graph: GraphParams
    heads: dict[str, StreamHead]

    def tensors(self) -> dict[str, T.Tensor]:
        """Stable name -> tensor map; the checkpoint manifest order."""
        named: dict[str, T.Tensor] = {}
        named.update(self.conv.tensors())
        named.update(self.graph.tensors())
        for stream in STREAM_NAMES:
            named.update(self.heads[stream].tensors(f"head.{stream}"))
        return named

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: t.data.shape for name, t in self.tensors().items()}


def init_model(rng: np.random.Generator, *, raster_size: int,
               conv_channels: tuple[int, int], conv_kernels: tuple[int, int],
               embed_dim: int, key_dim: int, appearance_dim: int,
               head_hidden: int, n_actions: int, trainable: bool = True) -> ModelParams:
    """Seeded initialization of every parameter tensor."""
    node_dim = spatial_output_dim(raster_size, conv_channels, conv_kernels) + embed_dim
    conv = init_spatial_conv(rng, conv_channels, conv_kernels, trainable)
    graph = init_graph_params(rng, node_dim, key_dim, trainable)
    heads = {
        "human": init_stream_head(rng, appearance_dim, head_hidden, n_actions, trainable),
        "object": init_stream_head(rng, appearance_dim, head_hidden, n_actions, trainable),
        "sp_human": init_stream_head(rng, node_dim, head_hidden, n_actions, trainable),
        "sp_object": init_stream_head(rng, node_dim, head_hidden, n_actions, trainable),
    }
    return ModelParams(conv=conv, graph=graph, heads=heads)
