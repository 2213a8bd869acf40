"""Array-level proposal utilities shared by training and inference."""

from __future__ import annotations

import numpy as np

from .anchors import decode_deltas, iou_matrix

PROPOSAL_NMS_IOU = 0.7
TRAIN_PRE_NMS = 600
TRAIN_POST_NMS = 300
INFER_PROPOSALS_BACKBONE = 300
INFER_PROPOSALS_PYRAMID = 1000
MIN_BOX_SIDE = 1.0


def clip_boxes(boxes: np.ndarray, width: float, height: float) -> np.ndarray:
    out = boxes.copy()
    out[:, 0] = np.clip(out[:, 0], 0.0, width)
    out[:, 1] = np.clip(out[:, 1], 0.0, height)
    out[:, 2] = np.clip(out[:, 2], 0.0, width)
    out[:, 3] = np.clip(out[:, 3], 0.0, height)
    return out


def valid_mask(boxes: np.ndarray, min_side: float = MIN_BOX_SIDE) -> np.ndarray:
    return (boxes[:, 2] - boxes[:, 0] >= min_side) & (boxes[:, 3] - boxes[:, 1] >= min_side)


def greedy_nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float,
               max_keep: int | None = None) -> np.ndarray:
    """Kept indices, descending score; ties keep the earlier index."""
    order = np.argsort(-scores, kind="stable")
    suppressed = np.zeros(len(boxes), dtype=bool)
    keep: list[int] = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        if max_keep is not None and len(keep) >= max_keep:
            break
        rest = order[~suppressed[order]]
        if len(rest):
            ious = iou_matrix(boxes[i : i + 1], boxes[rest])[0]
            suppressed[rest[ious > iou_threshold]] = True
    return np.asarray(keep, dtype=np.int64)


def training_proposals(
    logits: np.ndarray,
    deltas: np.ndarray,
    anchors: np.ndarray,
    image_size: tuple[int, int],
) -> np.ndarray:
    """Decoded, clipped, NMS-filtered proposals for roi sampling."""
    w, h = image_size
    top = np.argsort(-logits, kind="stable")[:TRAIN_PRE_NMS]
    boxes = clip_boxes(decode_deltas(deltas[top], anchors[top]), w, h)
    ok = valid_mask(boxes)
    boxes = boxes[ok]
    scores = logits[top][ok]
    keep = greedy_nms(boxes, scores, PROPOSAL_NMS_IOU, max_keep=TRAIN_POST_NMS)
    return boxes[keep]


def inference_proposals(
    logits: np.ndarray,
    deltas: np.ndarray,
    anchors: np.ndarray,
    image_size: tuple[int, int],
    pyramid: bool,
) -> np.ndarray:
    """Top-k decoded proposals, no proposal-stage suppression."""
    w, h = image_size
    k = INFER_PROPOSALS_PYRAMID if pyramid else INFER_PROPOSALS_BACKBONE
    top = np.argsort(-logits, kind="stable")[:k]
    boxes = clip_boxes(decode_deltas(deltas[top], anchors[top]), w, h)
    return boxes[valid_mask(boxes)]
