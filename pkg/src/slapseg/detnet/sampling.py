"""ROI sampling for the refinement stage.

A fixed budget of rois is drawn per image with at most a quarter
positives (IoU >= 0.5 against some ground truth box); any positive
deficit is filled with negatives, preserving the 1:3 ratio whenever
positives are abundant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anchors import encode_deltas, iou_matrix

ROI_POSITIVE_IOU = 0.5


@dataclass(frozen=True)
class RoiSample:
    rois: np.ndarray        # (n, 4)
    p_star: np.ndarray      # (n,) binary objectness target
    matched_gt: np.ndarray  # (n,) gt index, meaningful where p_star == 1
    t_star: np.ndarray      # (n, 4) regression target, meaningful for positives


def sample_rois(
    proposals: np.ndarray,
    gt_boxes: np.ndarray,
    n: int,
    positive_fraction: float = 0.25,
    rng: np.random.Generator | None = None,
) -> RoiSample:
    if rng is None:
        rng = np.random.default_rng(0)
    if len(proposals) == 0:
        raise ValueError("sample_rois needs at least one proposal")
    overlaps = iou_matrix(proposals, gt_boxes)
    best_gt = overlaps.argmax(axis=1)
    best_iou = overlaps[np.arange(len(proposals)), best_gt]
    pos_idx = np.nonzero(best_iou >= ROI_POSITIVE_IOU)[0]
    neg_idx = np.nonzero(best_iou < ROI_POSITIVE_IOU)[0]

    n_pos = min(int(round(n * positive_fraction)), len(pos_idx))
    take_pos = rng.choice(pos_idx, size=n_pos, replace=False) if n_pos else np.empty(0, dtype=np.int64)
    n_neg = n - n_pos
    if len(neg_idx) == 0:
        # degenerate scene: pad with positives so the budget is met
        take_neg = rng.choice(pos_idx, size=0, replace=False)
        extra = rng.choice(pos_idx, size=n_neg, replace=True)
        chosen = np.concatenate([take_pos, extra])
        flags = np.ones(len(chosen), dtype=np.int8)
    else:
        take_neg = rng.choice(neg_idx, size=n_neg, replace=len(neg_idx) < n_neg)
        chosen = np.concatenate([take_pos, take_neg])
        flags = np.concatenate([
            np.ones(len(take_pos), dtype=np.int8),
            np.zeros(len(take_neg), dtype=np.int8),
        ])

    rois = proposals[chosen]
    matched = best_gt[chosen]
    t_star = encode_deltas(gt_boxes[matched], rois)
    return RoiSample(rois=rois, p_star=flags.astype(np.float64), matched_gt=matched, t_star=t_star)
