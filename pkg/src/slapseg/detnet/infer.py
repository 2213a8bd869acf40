"""Inference: rotate upright, propose, refine, suppress, mask the best.

The caller supplies the slap's upright angle (from the classical
segmenter's moment estimate, or a verified annotation); detections come
back in the frame of the input capture, with the internal upright-frame
box kept alongside for evaluation against upright ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imgcore import Box, GrayImage, map_box_between_frames, rotate_image
from .anchors import decode_deltas
from .layers import sigmoid
from .model import (
    DetectionNetwork,
    ModelParams,
    network_from_params,
    normalize_image,
    pad_to_stride,
)
from .proposals import clip_boxes, greedy_nms, inference_proposals, valid_mask

DETECTION_NMS_IOU = 0.5
MASK_TOP_K = 50
DEFAULT_SCORE_THRESHOLD = 0.5


@dataclass
class Detection:
    box: Box                     # capture frame
    score: float
    mask: np.ndarray | None      # (m, m) probabilities, box-aligned; top-50 only
    upright_box: Box             # the detector's upright working frame


def infer(
    model: ModelParams | DetectionNetwork,
    image: GrayImage,
    upright_angle: float,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> list[Detection]:
    net = network_from_params(model) if isinstance(model, ModelParams) else model
    upright = rotate_image(image, -upright_angle)
    x = pad_to_stride(normalize_image(upright), net.arch.total_stride)
    padded_size = (x.shape[2], x.shape[1])

    state = net.forward_backbone(x)
    logits, deltas = net.forward_rpn(state)
    anchors = net.all_anchors(padded_size)
    props = inference_proposals(logits, deltas, anchors, padded_size, net.arch.pyramid)
    if len(props) == 0:
        return []

    head_logits, head_deltas = net.forward_box_head(state, props)
    scores = sigmoid(head_logits)
    boxes = clip_boxes(decode_deltas(head_deltas, props), upright.width, upright.height)
    ok = valid_mask(boxes) & (scores >= score_threshold)
    boxes, scores = boxes[ok], scores[ok]
    if len(boxes) == 0:
        return []

    keep = greedy_nms(boxes, scores, DETECTION_NMS_IOU)
    boxes, scores = boxes[keep], scores[keep]

    # mask branch runs over at most the top scoring detections
    n_mask = min(MASK_TOP_K, len(boxes))
    masks: list[np.ndarray | None] = [None] * len(boxes)
    if n_mask:
        logits_m = net.forward_mask_head(state, boxes[:n_mask])
        probs = sigmoid(logits_m)
        for i in range(n_mask):
            masks[i] = probs[i, 0]

    out = []
    for arr, score, mask in zip(boxes, scores, masks):
        upright_box = Box.from_tuple(arr)
        capture_box = map_box_between_frames(
            upright_box, -upright_angle, 0.0, image.size
        )
        out.append(Detection(box=capture_box, score=float(score), mask=mask, upright_box=upright_box))
    return out
