"""Spatial-semantic pair features.

A human/object box pair becomes one node vector: the pair layout is
rasterized to a two-channel binary image, pushed through a small two-layer
conv stack (conv -> relu -> 2x2 maxpool, twice, then flatten), and the
object category's word-embedding vector is appended. With the default
geometry (64x64 raster, 5x5 kernels, 64 then 32 channels, 300-d
embeddings) the node vector has 32*13*13 + 300 = 5708 entries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .geometry import Detection, SpatialMap, rasterize_pair

log = logging.getLogger(__name__)


class EmbeddingParseError(ValueError):
    """Raised for malformed embedding files; carries the offending line."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


class MissingEmbeddingError(KeyError):
    """Raised when a detection category has no embedding entry."""

    def __init__(self, category: str):
        super().__init__(category)
        self.category = category

    def __str__(self):
        return f"no embedding for category {self.category!r}"


class EmbeddingTable:
    """Immutable category -> vector map with multi-word fallback lookup."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        self.dim = dim
        self._vectors = {}
        for name, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dim,):
                raise ValueError(f"embedding for {name!r} has length {arr.shape}, "
                                 f"expected ({dim},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"embedding for {name!r} contains non-finite values")
            arr.flags.writeable = False
            self._vectors[name] = arr

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, category: str) -> bool:
        return category in self._vectors

    def lookup(self, category: str) -> np.ndarray:
        """Resolve a category to its vector.

        Multi-word categories first try the underscore-joined token; when
        absent, the mean of the per-word vectors is used (with a warning).
        """
        token = category.replace(" ", "_")
        if token in self._vectors:
            return self._vectors[token]
        words = category.split()
        if len(words) > 1 and all(w in self._vectors for w in words):
            log.warning("category %r missing from embeddings; averaging %s",
                        category, words)
            return np.mean([self._vectors[w] for w in words], axis=0)
        raise MissingEmbeddingError(category)


def load_embeddings(path, expected_dim: int = 300) -> EmbeddingTable:
    """Read a plain-text embedding file: one category per line, the token
    followed by ``expected_dim`` whitespace-separated decimals."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            token = parts[0]
            if len(parts) - 1 != expected_dim:
                raise EmbeddingParseError(
                    path, line_no,
                    f"expected {expected_dim} values for {token!r}, got {len(parts) - 1}")
            if token in vectors:
                raise EmbeddingParseError(path, line_no, f"duplicate category {token!r}")
            try:
                vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingParseError(path, line_no, f"bad number: {exc}") from exc
            if not np.all(np.isfinite(vec)):
                raise EmbeddingParseError(path, line_no, f"non-finite value for {token!r}")
            vectors[token] = vec
    return EmbeddingTable(vectors, expected_dim)


@dataclass
class SpatialConvParams:
    """Weights of the two conv layers applied to the layout image."""

    conv1_kernels: T.Tensor  # (c1, 2, k1, k1)
    conv1_bias: T.Tensor     # (c1,)
    conv2_kernels: T.Tensor  # (c2, c1, k2, k2)
    conv2_bias: T.Tensor     # (c2,)

    def tensors(self) -> dict[str, T.Tensor]:
        return {
            "spatial_conv.conv1.kernels": self.conv1_kernels,
            "spatial_conv.conv1.bias": self.conv1_bias,
            "spatial_conv.conv2.kernels": self.conv2_kernels,
            "spatial_conv.conv2.bias": self.conv2_bias,
        }


def init_spatial_conv(rng: np.random.Generator, channels: tuple[int, int] = (64, 32),
                      kernels: tuple[int, int] = (5, 5), trainable: bool = True) -> SpatialConvParams:
    """He-scaled random initialization for the conv stack."""
    c1, c2 = channels
    k1, k2 = kernels
    make = T.parameter if trainable else T.constant
    w1 = rng.standard_normal((c1, 2, k1, k1)) * np.sqrt(2.0 / (2 * k1 * k1))
    w2 = rng.standard_normal((c2, c1, k2, k2)) * np.sqrt(2.0 / (c1 * k2 * k2))
    return SpatialConvParams(
        conv1_kernels=make(w1), conv1_bias=make(np.zeros(c1)),
        conv2_kernels=make(w2), conv2_bias=make(np.zeros(c2)),
    )


def spatial_output_dim(size: int, channels: tuple[int, int], kernels: tuple[int, int]) -> int:
    """Flattened length after conv/pool/conv/pool on a size x size map."""
    s = size
    for k in kernels:
        s = s - k + 1
        if s <= 0:
            raise T.DimensionError(f"kernel {k} too large for map extent at {size}")
        if s % 2:
            raise T.DimensionError(f"map extent {s} not divisible by 2 before pooling")
        s //= 2
    return channels[1] * s * s


def spatial_features(spatial_map: SpatialMap, p: SpatialConvParams) -> T.Tensor:
    """conv -> relu -> maxpool, twice, then flatten."""
    x = T.constant(spatial_map.channels)
    x = T.maxpool2(T.relu(T.conv2d_valid(x, p.conv1_kernels, p.conv1_bias)))
    x = T.maxpool2(T.relu(T.conv2d_valid(x, p.conv2_kernels, p.conv2_bias)))
    return T.flatten(x)


def build_feature(h: Detection, o: Detection, table: EmbeddingTable,
                  p: SpatialConvParams, raster_size: int = 64) -> T.Tensor:
    """Full pair-node feature: layout features then the category embedding."""
    embedding = table.lookup(o.category)
    spatial = spatial_features(rasterize_pair(h.box, o.box, raster_size), p)
    return T.concat([spatial, T.constant(embedding)])
