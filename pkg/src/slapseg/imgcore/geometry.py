"""Axis-aligned box primitives shared by every other module.

Coordinate convention: continuous coordinates, x grows right, y grows down.
The pixel at row i / column j occupies the cell [j, j+1) x [i, i+1) and has
its center at (j + 0.5, i + 0.5). Box edges may sit at any real position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Box:
    """An axis-aligned rectangle with strictly positive area."""

    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        if not (self.left < self.right and self.top < self.bottom):
            raise ValueError(
                f"degenerate box: left={self.left} top={self.top} "
                f"right={self.right} bottom={self.bottom}"
            )

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.left + self.right), 0.5 * (self.top + self.bottom))

    def translated(self, dx: float, dy: float) -> "Box":
        return Box(self.left + dx, self.top + dy, self.right + dx, self.bottom + dy)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)

    @staticmethod
    def from_tuple(t: Sequence[float]) -> "Box":
        left, top, right, bottom = t
        return Box(float(left), float(top), float(right), float(bottom))


@dataclass(frozen=True)
class ScoredBox:
    """A box with a detection confidence in [0, 1]."""

    box: Box
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score outside [0, 1]: {self.score}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.right, b.right) - max(a.left, b.left)
    iy = min(a.bottom, b.bottom) - max(a.top, b.top)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def nms(candidates: Iterable[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy non-maximum suppression.

    Candidates are visited in descending score order (ties broken by input
    order); a candidate is dropped iff its IoU with an already kept box
    exceeds ``iou_threshold``. The kept list comes back sorted by
    descending score.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold outside [0, 1]: {iou_threshold}")
    # sorted() is stable, so equal scores keep their input order
    ordered = sorted(candidates, key=lambda sb: -sb.score)
    kept: list[ScoredBox] = []
    for cand in ordered:
        if all(iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def rotate_box(box: Box, angle_deg: float, pivot: tuple[float, float]) -> Box:
    """Axis-aligned hull of the box corners rotated about ``pivot``.

    Positive angles follow the same convention as image rotation: with y
    growing down, a positive angle turns +x towards +y.
    """
    rad = math.radians(angle_deg)
    c, s = math.cos(rad), math.sin(rad)
    px, py = pivot
    xs = []
    ys = []
    for x, y in (
        (box.left, box.top),
        (box.right, box.top),
        (box.right, box.bottom),
        (box.left, box.bottom),
    ):
        dx, dy = x - px, y - py
        xs.append(px + c * dx - s * dy)
        ys.append(py + s * dx + c * dy)
    return Box(min(xs), min(ys), max(xs), max(ys))


def clip_box(box: Box, width: float, height: float) -> Box:
    """Clamp a box into [0, width] x [0, height].

    Raises ValueError when the box does not intersect the bounds at all.
    """
    left = max(box.left, 0.0)
    top = max(box.top, 0.0)
    right = min(box.right, float(width))
    bottom = min(box.bottom, float(height))
    if left >= right or top >= bottom:
        raise ValueError(f"box {box.as_tuple()} outside bounds {width}x{height}")
    return Box(left, top, right, bottom)
