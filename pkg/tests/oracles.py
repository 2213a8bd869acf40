"""Independent reference implementations used to pin expected values.

Everything here is deliberately brute force and shares no code with the
library paths it checks.
"""

from __future__ import annotations

import numpy as np

from slapseg.imgcore import Box, ScoredBox


def iou_rasterized(a: Box, b: Box, cells_per_unit: int = 8) -> float:
    """IoU by counting sub-pixel cells on a fine grid covering both boxes."""
    left = min(a.left, b.left)
    top = min(a.top, b.top)
    right = max(a.right, b.right)
    bottom = max(a.bottom, b.bottom)
    nx = max(1, int(np.ceil((right - left) * cells_per_unit)))
    ny = max(1, int(np.ceil((bottom - top) * cells_per_unit)))
    xs = left + (np.arange(nx) + 0.5) * (right - left) / nx
    ys = top + (np.arange(ny) + 0.5) * (bottom - top) / ny
    gx, gy = np.meshgrid(xs, ys)

    def inside(box):
        return (gx >= box.left) & (gx < box.right) & (gy >= box.top) & (gy < box.bottom)

    in_a = inside(a)
    in_b = inside(b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def nms_reference(candidates: list[ScoredBox], threshold: float) -> list[ScoredBox]:
    """O(n^2) restatement of greedy suppression, independent of the library.

    Walks candidates in descending score (ties by input position) and keeps
    one iff every previously kept box overlaps it by at most the threshold.
    """
    from slapseg.imgcore import iou  # the iou op itself is oracle-checked separately

    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].score, i))
    kept: list[ScoredBox] = []
    for i in order:
        cand = candidates[i]
        suppressed = False
        for k in kept:
            if iou(cand.box, k.box) > threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(cand)
    return kept


def bilinear_point(arr: np.ndarray, x: float, y: float) -> float:
    """Direct bilinear evaluation at one continuous point, clamped borders."""
    h, w = arr.shape
    u = min(max(x - 0.5, 0.0), w - 1.0)
    v = min(max(y - 0.5, 0.0), h - 1.0)
    u0 = min(int(np.floor(u)), w - 2) if w > 1 else 0
    v0 = min(int(np.floor(v)), h - 2) if h > 1 else 0
    fu, fv = u - u0, v - v0
    u1 = min(u0 + 1, w - 1)
    v1 = min(v0 + 1, h - 1)
    return float(
        arr[v0, u0] * (1 - fu) * (1 - fv)
        + arr[v0, u1] * fu * (1 - fv)
        + arr[v1, u0] * (1 - fu) * fv
        + arr[v1, u1] * fu * fv
    )


def random_box(rng: np.random.Generator, lo=0.0, hi=100.0, min_side=0.5) -> Box:
    while True:
        x = np.sort(rng.uniform(lo, hi, size=2))
        y = np.sort(rng.uniform(lo, hi, size=2))
        if x[1] - x[0] >= min_side and y[1] - y[0] >= min_side:
            return Box(float(x[0]), float(y[0]), float(x[1]), float(y[1]))


def random_disjoint_gt(rng: np.random.Generator, image_size, max_boxes=4) -> np.ndarray:
    """Slap-like ground truth: 1..max_boxes pairwise disjoint boxes."""
    from slapseg.imgcore import Box as _Box
    from slapseg.imgcore import iou as _iou

    w, h = image_size
    n = int(rng.integers(1, max_boxes + 1))
    boxes: list[_Box] = []
    attempts = 0
    while len(boxes) < n and attempts < 200:
        attempts += 1
        bw = rng.uniform(12, 60)
        bh = rng.uniform(12, 60)
        x = rng.uniform(0, w - bw)
        y = rng.uniform(0, h - bh)
        cand = _Box(x, y, x + bw, y + bh)
        if all(_iou(cand, b) == 0.0 for b in boxes):
            boxes.append(cand)
    return np.asarray([b.as_tuple() for b in boxes])
