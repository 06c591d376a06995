"""Bounding-box arithmetic, pair-layout rasterization, and box jitter."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, corners (x1,y1) < (x2,y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(f"degenerate box {coords}: need x2 > x1 and y2 > y1")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class Detection:
    """One detector output: a box, its category name, and a confidence."""

    box: BBox
    category: str
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must lie in [0,1], got {self.score}")
        if not self.category:
            raise ValueError("detection category must be a non-empty string")


class SpatialMap:
    """Two-channel binary layout image: channel 0 human, channel 1 object."""

    __slots__ = ("channels",)

    def __init__(self, channels: np.ndarray):
        channels = np.asarray(channels, dtype=np.float64)
        if channels.ndim != 3 or channels.shape[0] != 2:
            raise ValueError(f"spatial map needs shape (2,S,S), got {channels.shape}")
        if not np.all((channels == 0.0) | (channels == 1.0)):
            raise ValueError("spatial map values must be binary")
        self.channels = channels

    @property
    def size(self) -> int:
        return self.channels.shape[1]


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def union_box(a: BBox, b: BBox) -> BBox:
    """Tightest axis-aligned box covering both inputs."""
    return BBox(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


def rasterize_pair(h: BBox, o: BBox, size: int) -> SpatialMap:
    """Render a human/object box pair into a size x size binary image pair.

    The union of the two boxes is stretched onto [0,size]^2 (each axis
    independently). A cell is set when its center falls inside the
    transformed box, with half-open membership [x1, x2) x [y1, y2). This
    makes the map invariant to translating or uniformly rescaling both
    boxes together.
    """
    if size < 8:
        raise ValueError(f"rasterization size must be at least 8, got {size}")
    ref = union_box(h, o)
    sx = size / ref.width
    sy = size / ref.height
    centers = np.arange(size, dtype=np.float64) + 0.5
    channels = np.zeros((2, size, size), dtype=np.float64)
    for ch, box in ((0, h), (1, o)):
        tx1 = (box.x1 - ref.x1) * sx
        tx2 = (box.x2 - ref.x1) * sx
        ty1 = (box.y1 - ref.y1) * sy
        ty2 = (box.y2 - ref.y1) * sy
        cols = (centers >= tx1) & (centers < tx2)
        rows = (centers >= ty1) & (centers < ty2)
        channels[ch] = rows[:, None] & cols[None, :]
    return SpatialMap(channels)


def jitter_box(b: BBox, rng: np.random.Generator, max_tries: int = 20,
               max_shift: float = 0.1, scale_range: tuple[float, float] = (0.9, 1.1),
               min_iou: float = 0.7) -> BBox:
    """Randomly translate and rescale a box, keeping IoU with the original
    above ``min_iou``; returns the input unchanged after ``max_tries``
    rejected samples. The caller owns the random state."""
    for _ in range(max_tries):
        dx = rng.uniform(-max_shift, max_shift) * b.width
        dy = rng.uniform(-max_shift, max_shift) * b.height
        s = rng.uniform(*scale_range)
        cx = (b.x1 + b.x2) / 2.0 + dx
        cy = (b.y1 + b.y2) / 2.0 + dy
        half_w = b.width * s / 2.0
        half_h = b.height * s / 2.0
        candidate = BBox(cx - half_w, cy - half_h, cx + half_w, cy + half_h)
        if iou(candidate, b) > min_iou:
            return candidate
    return b
