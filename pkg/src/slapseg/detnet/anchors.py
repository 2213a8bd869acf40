"""Anchor grids, IoU-threshold labeling, and box delta coding.

Anchors are reference boxes tiled over the feature grid: one per
(position, scale, aspect ratio). Labels follow the two-threshold rule:
above 0.7 against any ground truth box is positive, below 0.3 against
all of them is negative, anything else stays neutral and is excluded
from the loss. The best anchor of each ground truth box is forced
positive so every object receives at least one positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imgcore import Box

POSITIVE_IOU = 0.7
NEGATIVE_IOU = 0.3

LABEL_POSITIVE = 1
LABEL_NEUTRAL = 0
LABEL_NEGATIVE = -1


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple[float, ...] = (24.0, 32.0, 48.0, 64.0, 96.0)
    aspect_ratios: tuple[float, ...] = (0.5, 1.0, 2.0)  # width / height
    stride: int = 16

    def __post_init__(self):
        if len(self.scales) != 5:
            raise ValueError(f"expected 5 scales, got {len(self.scales)}")
        if len(self.aspect_ratios) != 3:
            raise ValueError(f"expected 3 aspect ratios, got {len(self.aspect_ratios)}")
        if any(s <= 0 for s in self.scales) or any(r <= 0 for r in self.aspect_ratios):
            raise ValueError("scales and ratios must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def per_position(self) -> int:
        return len(self.scales) * len(self.aspect_ratios)

    def base_sizes(self) -> np.ndarray:
        """(per_position, 2) array of (width, height); area stays scale**2."""
        sizes = []
        for scale in self.scales:
            for ratio in self.aspect_ratios:
                w = scale * np.sqrt(ratio)
                h = scale / np.sqrt(ratio)
                sizes.append((w, h))
        return np.asarray(sizes, dtype=np.float64)


def grid_shape(image_size: tuple[int, int], stride: int) -> tuple[int, int]:
    """(cols, rows) of the anchor grid covering an image."""
    w, h = image_size
    return (w // stride, h // stride)


def generate_anchors(image_size: tuple[int, int], cfg: AnchorConfig) -> np.ndarray:
    """All anchors for an image as an (N, 4) array of (l, t, r, b).

    Centers sit on the stride grid offset by stride/2; anchors may exceed
    the image bounds. Ordering is row-major over positions, then scale
    major over the per-position set, matching the RPN head channel layout.
    """
    cols, rows = grid_shape(image_size, cfg.stride)
    if cols < 1 or rows < 1:
        raise ValueError(f"stride {cfg.stride} does not fit into image {image_size}")
    cx = (np.arange(cols, dtype=np.float64) + 0.5) * cfg.stride
    cy = (np.arange(rows, dtype=np.float64) + 0.5) * cfg.stride
    gx, gy = np.meshgrid(cx, cy)
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)  # (P, 2)

    sizes = cfg.base_sizes()  # (K, 2)
    half = sizes / 2.0
    # (P, K, 4)
    lt = centers[:, None, :] - half[None, :, :]
    rb = centers[:, None, :] + half[None, :, :]
    anchors = np.concatenate([lt, rb], axis=2)
    return anchors.reshape(-1, 4)


def boxes_to_array(boxes: list[Box]) -> np.ndarray:
    return np.asarray([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) box arrays."""
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0, inter / union, 0.0)


def label_anchors(
    anchors: np.ndarray, gt_boxes: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(labels, matched_gt, t_star) for every anchor.

    labels hold LABEL_POSITIVE/NEGATIVE/NEUTRAL; matched_gt is the argmax
    ground truth index (only meaningful for positives); t_star holds the
    encoded regression target per anchor against its matched box.
    """
    if gt_boxes.shape[0] < 1:
        raise ValueError("label_anchors needs at least one ground truth box")
    overlaps = iou_matrix(anchors, gt_boxes)  # (A, G)
    best_gt = overlaps.argmax(axis=1)
    best_iou = overlaps[np.arange(len(anchors)), best_gt]

    labels = np.full(len(anchors), LABEL_NEUTRAL, dtype=np.int8)
    labels[best_iou > POSITIVE_IOU] = LABEL_POSITIVE
    labels[best_iou < NEGATIVE_IOU] = LABEL_NEGATIVE

    # force the best anchor of every gt positive so small objects train;
    # each gt claims a distinct anchor (higher-IoU gts pick first)
    order = np.argsort(-overlaps.max(axis=0))
    taken: list[int] = []
    for g in order:
        col = overlaps[:, g].copy()
        col[taken] = -1.0
        a = int(col.argmax())
        taken.append(a)
        labels[a] = LABEL_POSITIVE
        best_gt[a] = g

    t_star = encode_deltas(gt_boxes[best_gt], anchors)
    return labels, best_gt, t_star


def encode_deltas(boxes: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Box regression targets: center offsets in anchor units, log sizes."""
    boxes = np.atleast_2d(boxes)
    anchors = np.atleast_2d(anchors)
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = (anchors[:, 0] + anchors[:, 2]) / 2.0
    acy = (anchors[:, 1] + anchors[:, 3]) / 2.0
    bw = boxes[:, 2] - boxes[:, 0]
    bh = boxes[:, 3] - boxes[:, 1]
    bcx = (boxes[:, 0] + boxes[:, 2]) / 2.0
    bcy = (boxes[:, 1] + boxes[:, 3]) / 2.0
    return np.stack(
        [(bcx - acx) / aw, (bcy - acy) / ah, np.log(bw / aw), np.log(bh / ah)], axis=1
    )


def decode_deltas(t: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Inverse of :func:`encode_deltas`."""
    t = np.atleast_2d(t)
    anchors = np.atleast_2d(anchors)
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = (anchors[:, 0] + anchors[:, 2]) / 2.0
    acy = (anchors[:, 1] + anchors[:, 3]) / 2.0
    cx = acx + t[:, 0] * aw
    cy = acy + t[:, 1] * ah
    w = aw * np.exp(t[:, 2])
    h = ah * np.exp(t[:, 3])
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)
