"""Axis-aligned box arithmetic shared by every other module.

Boxes use the (x, y, w, h) top-left pixel convention with a top-left frame
origin. All coordinates are continuous; rasterization happens elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Box:
    """Axis-aligned region: left edge, top edge, width, height (pixels)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError("box coordinates must be finite")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    @staticmethod
    def from_center(cx: float, cy: float, w: float, h: float) -> "Box":
        return Box(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True)
class FrameBounds:
    """Frame extent in pixels (positive integers)."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame bounds must be >= 1, got {self.width}x{self.height}")


def intersection_area(a: Box, b: Box) -> float:
    """Overlap area of two boxes; 0 when disjoint or merely touching."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    """Intersection over union, in [0, 1]. Touching boxes score 0."""
    # equal boxes would otherwise drift an ulp off 1.0: the intersection
    # recomputes the extent as (x + w) - x, which need not round back to w
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    # nearly identical boxes can still overshoot 1.0 through the subtraction
    return min(inter / (a.area + b.area - inter), 1.0)


def center_distance(a: Box, b: Box) -> float:
    """Euclidean distance between box centers, in pixels."""
    ax, ay = a.center
    bx, by = b.center
    return math.hypot(ax - bx, ay - by)


def clamp_to_frame(b: Box, f: FrameBounds) -> Box:
    """Intersect a box with the frame rectangle.

    If the intersection is empty, returns a 1x1 box at the frame corner
    nearest to the original box center.
    """
    x1 = max(b.x, 0.0)
    y1 = max(b.y, 0.0)
    x2 = min(b.x2, float(f.width))
    y2 = min(b.y2, float(f.height))
    if x2 - x1 > 0 and y2 - y1 > 0:
        return Box(x1, y1, x2 - x1, y2 - y1)
    cx, cy = b.center
    corner_x = 0.0 if cx <= f.width / 2.0 else float(f.width - 1)
    corner_y = 0.0 if cy <= f.height / 2.0 else float(f.height - 1)
    return Box(corner_x, corner_y, 1.0, 1.0)
