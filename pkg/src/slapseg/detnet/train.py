"""Image-centric training: one slap per optimization step.

Every step rotates the capture upright with the annotated angle, scores
all anchors, samples a fixed anchor batch and a fixed roi batch (1:3
positive to negative), builds the combined loss, and applies one SGD
update. Classification units of both stages share one normalizer; the
box term runs over positive units only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..imgcore import Box, RoiOutsideGridError, roi_align, rotate_image
from ..synthgen import DatasetManifest, SplitAssignment
from .anchors import AnchorConfig, LABEL_NEGATIVE, LABEL_POSITIVE, label_anchors
from .layers import sigmoid
from .losses import (
    LossBreakdown,
    LossWeights,
    MaskTarget,
    StageOutputs,
    StageTargets,
    cls_loss_from_logits,
    mask_bce_from_logits,
    smooth_l1_grad,
    total_loss,
)
from .model import (
    ArchConfig,
    DetectionNetwork,
    ModelParams,
    network_to_params,
    pad_to_stride,
)
from .proposals import training_proposals
from .sampling import sample_rois
from .sgd import DivergenceError, SgdState, TrainConfig, sgd_step


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, last_good: ModelParams, history):
        super().__init__(message)
        self.last_good = last_good
        self.history = history


@dataclass
class EpochStats:
    epoch: int
    l_cls: float
    l_box: float
    l_mask: float
    total: float


@dataclass
class TrainingSample:
    """One slap prepared for stepping: upright input plus targets."""

    slap_id: str
    x: np.ndarray                 # (1, H, W) padded
    gt_boxes: np.ndarray          # (G, 4) upright frame
    raster: np.ndarray | None     # composite-frame label raster
    upright_offset: tuple[float, float]
    content_size: tuple[int, int]  # unpadded upright (w, h)


def prepare_sample(manifest: DatasetManifest, slap_id: str, total_stride: int) -> TrainingSample:
    """Rotate the capture upright and crop the white rotation margins away.

    The content of the upright canvas is the original composite centered
    at the recorded offset, so cropping by the integer part of that
    offset keeps boxes aligned after a matching translation.
    """
    entry = manifest.slaps[slap_id]
    capture = manifest.load_capture(slap_id)
    upright = rotate_image(capture, -entry.rotation)
    ox, oy = entry.upright_offset
    cw, ch = entry.composite_size
    cx = int(np.floor(ox))
    cy = int(np.floor(oy))
    cropped = upright.pixels[cy : cy + ch, cx : cx + cw]
    x = pad_to_stride(
        ((255.0 - cropped.astype(np.float64)) / 255.0)[None, :, :], total_stride
    )
    gt = np.asarray(
        [ab.box.translated(-cx, -cy).as_tuple() for ab in entry.boxes], dtype=np.float64
    )
    return TrainingSample(
        slap_id=slap_id,
        x=x,
        gt_boxes=gt,
        raster=manifest.load_raster(slap_id),
        upright_offset=(ox - cx, oy - cy),
        content_size=(cropped.shape[1], cropped.shape[0]),
    )


def mask_target_grid(
    sample: TrainingSample, roi: np.ndarray, finger_idx: int, mask_size: int
) -> np.ndarray:
    """Binary (m, m) grid of the matched finger's mask inside the roi."""
    if sample.raster is None:
        return np.zeros((mask_size, mask_size))
    ox, oy = sample.upright_offset
    shifted = Box(roi[0] - ox, roi[1] - oy, roi[2] - ox, roi[3] - oy)
    binary = (sample.raster == finger_idx + 1).astype(np.float64)
    try:
        grid = roi_align(binary, shifted, mask_size, samples_per_bin=1)
    except RoiOutsideGridError:
        return np.zeros((mask_size, mask_size))
    return (grid >= 0.5).astype(np.float64)


def _sample_anchor_batch(labels, n, positive_fraction, rng):
    pos = np.nonzero(labels == LABEL_POSITIVE)[0]
    neg = np.nonzero(labels == LABEL_NEGATIVE)[0]
    n_pos = min(int(round(n * positive_fraction)), len(pos))
    n_neg = min(n - n_pos, len(neg))
    take_pos = rng.choice(pos, size=n_pos, replace=False) if n_pos else np.empty(0, dtype=np.int64)
    take_neg = rng.choice(neg, size=n_neg, replace=False) if n_neg else np.empty(0, dtype=np.int64)
    return take_pos, take_neg


def train_step(
    net: DetectionNetwork,
    sample: TrainingSample,
    cfg: TrainConfig,
    anchors: np.ndarray,
    anchor_labels,
    rng: np.random.Generator,
    sgd_state: SgdState,
) -> LossBreakdown:
    labels, _, t_star_all = anchor_labels
    state = net.forward_backbone(sample.x)
    rpn_logits, rpn_deltas = net.forward_rpn(state)

    # -- anchor batch
    take_pos, take_neg = _sample_anchor_batch(labels, cfg.anchors_per_image, cfg.positive_fraction, rng)
    a_idx = np.concatenate([take_pos, take_neg])
    a_pstar = np.concatenate([np.ones(len(take_pos)), np.zeros(len(take_neg))])

    # -- proposals and roi batch
    _, h = sample.x.shape[2], sample.x.shape[1]
    padded_size = (sample.x.shape[2], sample.x.shape[1])
    props = training_proposals(rpn_logits, rpn_deltas, anchors, padded_size)
    props = np.concatenate([props, sample.gt_boxes], axis=0)
    rois = sample_rois(props, sample.gt_boxes, n=cfg.rois_per_image,
                       positive_fraction=cfg.positive_fraction, rng=rng)

    head_logits, head_deltas = net.forward_box_head(state, rois.rois)

    pos_roi = np.nonzero(rois.p_star == 1)[0]
    mask_logits = None
    mask_targets: list[MaskTarget] = []
    if len(pos_roi):
        mask_logits = net.forward_mask_head(state, rois.rois[pos_roi])
        for i in pos_roi:
            grid = mask_target_grid(sample, rois.rois[i], int(rois.matched_gt[i]), net.arch.mask_size)
            mask_targets.append(MaskTarget(y=grid, k=0))

    # -- normalizers shared across both stages
    n_cls = len(a_idx) + len(rois.rois)
    n_box = max(int(a_pstar.sum() + rois.p_star.sum()), 1)
    weights = LossWeights(lam=1.0, n_cls=n_cls, n_box=n_box)

    # -- loss value via the reference combination
    breakdown = total_loss(
        StageOutputs(objectness=sigmoid(rpn_logits[a_idx]), deltas=rpn_deltas[a_idx]),
        StageOutputs(objectness=sigmoid(head_logits), deltas=head_deltas),
        (
            StageTargets(p_star=a_pstar, t_star=t_star_all[a_idx]),
            StageTargets(p_star=rois.p_star, t_star=rois.t_star),
        ),
        weights,
        mask_preds=[sigmoid(ml) for ml in mask_logits] if mask_logits is not None else None,
        mask_targets=mask_targets or None,
    )
    if not np.isfinite(breakdown.total):
        raise DivergenceError(f"non-finite loss on {sample.slap_id}")

    # -- gradients
    dlogits = np.zeros_like(rpn_logits)
    _, g = cls_loss_from_logits(rpn_logits[a_idx], a_pstar)
    dlogits[a_idx] = g / n_cls
    ddeltas = np.zeros_like(rpn_deltas)
    if len(take_pos):
        diff = rpn_deltas[take_pos] - t_star_all[take_pos]
        ddeltas[take_pos] = smooth_l1_grad(diff) * (weights.lam / n_box)

    _, gh = cls_loss_from_logits(head_logits, rois.p_star)
    dhead_cls = gh / n_cls
    dhead_box = np.zeros_like(head_deltas)
    if len(pos_roi):
        diff = head_deltas[pos_roi] - rois.t_star[pos_roi]
        dhead_box[pos_roi] = smooth_l1_grad(diff) * (weights.lam / n_box)

    net.zero_grads()
    if mask_logits is not None:
        dmask = np.zeros_like(mask_logits)
        for j, target in enumerate(mask_targets):
            _, gm = mask_bce_from_logits(mask_logits[j], target)
            dmask[j] = gm / len(mask_targets)
        net.backward_mask_head(state, dmask)
    net.backward_box_head(state, dhead_cls, dhead_box)
    net.backward_rpn(state, dlogits, ddeltas)
    net.backward_backbone(state)

    sgd_step(net.params(), cfg, sgd_state)
    return breakdown


def train(
    manifest: DatasetManifest,
    split: SplitAssignment,
    cfg: TrainConfig,
    arch: ArchConfig | None = None,
    anchor_cfg: AnchorConfig | None = None,
    progress=None,
) -> tuple[ModelParams, list[EpochStats]]:
    """Train on the split's train partition; returns params and the loss curve."""
    arch = arch or ArchConfig(pyramid=cfg.rois_per_image == 512)
    anchor_cfg = anchor_cfg or AnchorConfig()
    rng = np.random.default_rng(cfg.rng_seed)
    net = DetectionNetwork(arch, anchor_cfg, rng)
    sgd_state = SgdState()

    train_ids = split.slap_ids(manifest, "train")
    if not train_ids:
        raise ValueError("train partition is empty")

    samples = {sid: prepare_sample(manifest, sid, arch.total_stride) for sid in train_ids}
    anchors_by_size: dict[tuple[int, int], np.ndarray] = {}
    labels_by_slap = {}
    for sid, sample in samples.items():
        size = (sample.x.shape[2], sample.x.shape[1])
        if size not in anchors_by_size:
            anchors_by_size[size] = net.all_anchors(size)
        labels_by_slap[sid] = label_anchors(anchors_by_size[size], sample.gt_boxes)

    history: list[EpochStats] = []
    last_good = network_to_params(net)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_ids))
        sums = np.zeros(3)
        try:
            for idx in order:
                sid = train_ids[int(idx)]
                sample = samples[sid]
                size = (sample.x.shape[2], sample.x.shape[1])
                lb = train_step(net, sample, cfg, anchors_by_size[size],
                                labels_by_slap[sid], rng, sgd_state)
                sums += (lb.l_cls, lb.l_box, lb.l_mask)
        except DivergenceError as exc:
            raise TrainingDivergedError(str(exc), last_good, history) from exc
        means = sums / len(train_ids)
        history.append(EpochStats(epoch, float(means[0]), float(means[1]), float(means[2]), float(means.sum())))
        last_good = network_to_params(net)
        if progress is not None:
            progress(history[-1])
    return network_to_params(net), history


def write_loss_curve(history: list[EpochStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "l_cls", "l_box", "l_mask", "total"])
        for row in history:
            writer.writerow([row.epoch, f"{row.l_cls:.6f}", f"{row.l_box:.6f}",
                             f"{row.l_mask:.6f}", f"{row.total:.6f}"])
