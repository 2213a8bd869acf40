"""Detection loss components and their combination.

The step objective is the sum of three parts: a binary log loss over all
sampled classification units (anchors of the proposal stage and rois of
the refinement stage alike), a smooth L1 box term over the positive
units only, and an average per-cell binary cross entropy over predicted
masks of the positive rois. Probabilities are clamped to
[EPS, 1 - EPS] before any log.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import sigmoid

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lam: float = 1.0       # balance weight on the box term
    n_cls: int = 1         # classification normalizer (sampled unit count)
    n_box: int = 1         # box normalizer (positive unit count)

    def __post_init__(self):
        if self.lam <= 0 or self.n_cls <= 0 or self.n_box <= 0:
            raise ValueError("loss weights must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    l_cls: float
    l_box: float
    l_mask: float

    @property
    def total(self) -> float:
        return self.l_cls + self.l_box + self.l_mask

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        return LossBreakdown(
            self.l_cls + other.l_cls,
            self.l_box + other.l_box,
            self.l_mask + other.l_mask,
        )


@dataclass(frozen=True)
class MaskTarget:
    y: np.ndarray  # (m, m) binary grid
    k: int         # ground truth category index

    def __post_init__(self):
        arr = np.asarray(self.y)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"mask target must be square, got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask target entries must be 0 or 1")


def clamp_prob(p: np.ndarray | float) -> np.ndarray:
    return np.clip(p, EPS, 1.0 - EPS)


def cls_log_loss(p, p_star) -> np.ndarray:
    """Binary log loss; inputs broadcast elementwise."""
    p = clamp_prob(np.asarray(p, dtype=np.float64))
    y = np.asarray(p_star, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def cls_loss_from_logits(z, p_star) -> tuple[np.ndarray, np.ndarray]:
    """(loss, dloss/dz) of the clamped log loss composed with a sigmoid.

    Where the clamp is active the gradient is exactly zero (the clamp is
    flat there); everywhere else it is sigmoid(z) - p_star.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(p_star, dtype=np.float64)
    p = sigmoid(z)
    loss = cls_log_loss(p, y)
    grad = np.where((p > EPS) & (p < 1.0 - EPS), p - y, 0.0)
    return loss, grad


def smooth_l1(x) -> np.ndarray:
    """0.5 x^2 inside the unit interval, |x| - 0.5 outside."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1_grad(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def mask_bce(pred: np.ndarray, target: MaskTarget) -> float:
    """Average binary cross entropy over the target category's channel.

    ``pred`` is (n_classes, m, m) of probabilities, or (m, m) for a single
    class. Channels other than target.k never contribute, which keeps the
    classes from competing.
    """
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim == 2:
        pred = pred[None]
    chan = clamp_prob(pred[target.k])
    y = np.asarray(target.y, dtype=np.float64)
    m2 = y.size
    return float(-(y * np.log(chan) + (1 - y) * np.log1p(-chan)).sum() / m2)


def mask_bce_from_logits(
    logits: np.ndarray, target: MaskTarget
) -> tuple[float, np.ndarray]:
    """(loss, dloss/dlogits) with gradients only on the target channel."""
    logits = np.asarray(logits, dtype=np.float64)
    squeeze = logits.ndim == 2
    z = logits[None] if squeeze else logits
    p = sigmoid(z)
    loss = mask_bce(p, target)
    grad = np.zeros_like(z)
    y = np.asarray(target.y, dtype=np.float64)
    chan = p[target.k]
    live = (chan > EPS) & (chan < 1.0 - EPS)
    grad[target.k] = np.where(live, chan - y, 0.0) / y.size
    return loss, grad[0] if squeeze else grad


@dataclass(frozen=True)
class StageOutputs:
    """One detection stage's sampled outputs: objectness and box deltas."""

    objectness: np.ndarray  # (N,) probabilities
    deltas: np.ndarray      # (N, 4)


@dataclass(frozen=True)
class StageTargets:
    p_star: np.ndarray  # (N,) binary labels
    t_star: np.ndarray  # (N, 4), meaningful where p_star == 1


def total_loss(
    rpn: StageOutputs | None,
    head: StageOutputs | None,
    targets: tuple[StageTargets | None, StageTargets | None],
    weights: LossWeights,
    mask_preds: list[np.ndarray] | None = None,
    mask_targets: list[MaskTarget] | None = None,
) -> LossBreakdown:
    """Combine both stages into one breakdown.

    Classification sums over every sampled unit and divides by n_cls; the
    box term sums smooth L1 over the four delta coordinates of positive
    units, scaled by lam/n_box; the mask term averages the per-roi binary
    cross entropies. With no positive units the box term is 0.
    """
    rpn_t, head_t = targets
    l_cls = 0.0
    l_box = 0.0
    for out, tgt in ((rpn, rpn_t), (head, head_t)):
        if out is None:
            continue
        if tgt is None or len(tgt.p_star) != len(out.objectness):
            raise ValueError("stage outputs and targets are inconsistent")
        l_cls += float(cls_log_loss(out.objectness, tgt.p_star).sum())
        pos = tgt.p_star == 1
        if pos.any():
            diff = out.deltas[pos] - tgt.t_star[pos]
            l_box += float(smooth_l1(diff).sum())
    l_cls /= weights.n_cls
    l_box *= weights.lam / weights.n_box

    l_mask = 0.0
    if mask_preds:
        if mask_targets is None or len(mask_targets) != len(mask_preds):
            raise ValueError("mask predictions and targets are inconsistent")
        per_roi = [mask_bce(p, t) for p, t in zip(mask_preds, mask_targets)]
        l_mask = float(np.mean(per_roi))

    return LossBreakdown(l_cls=l_cls, l_box=l_box, l_mask=l_mask)
