"""The two-stage detection network.

A four-block strided CNN produces a stride-16 feature map; a shared RPN
head emits per-anchor objectness logits and box deltas; the refinement
stage pools each roi with quantization-free bilinear sampling and runs a
small fully connected head (score + box deltas) and a convolutional mask
head. An optional second pyramid level (stride 32 with a top-down merge)
stands in for a full feature pyramid.

Images are single-channel; the network consumes (1, H, W) float input
with ink mapped to 1 and platen background to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..imgcore import GrayImage
from .anchors import AnchorConfig, generate_anchors
from .layers import (
    Conv2d,
    ConvTranspose2x2,
    Linear,
    Param,
    RoiAlignLayer,
    relu_backward,
    relu_forward,
    upsample2_backward,
    upsample2_forward,
)

HEAD_INIT_SCALE = 0.01  # near-zero logits at start: p ~ 0.5, deltas ~ 0


@dataclass(frozen=True)
class ArchConfig:
    channels: tuple[int, ...] = (8, 16, 32, 64)
    fc_dim: int = 128
    n_classes: int = 1
    mask_size: int = 28
    roi_pool: int = 7
    mask_pool: int = 14
    samples_per_bin: int = 2
    pyramid: bool = False
    pyramid_roi_cutoff: float = 96.0  # sqrt(roi area) above this pools from the coarse level

    def __post_init__(self):
        if len(self.channels) != 4:
            raise ValueError("backbone uses exactly 4 blocks")
        if self.mask_size != self.mask_pool * 2:
            raise ValueError("mask head upsamples once: mask_size must be 2*mask_pool")

    @property
    def stride(self) -> int:
        return 16

    @property
    def total_stride(self) -> int:
        return 32 if self.pyramid else 16


def normalize_image(img: GrayImage) -> np.ndarray:
    """(1, H, W) float input: ink -> 1, white platen -> 0."""
    return ((255.0 - img.pixels.astype(np.float64)) / 255.0)[None, :, :]


def pad_to_stride(x: np.ndarray, stride: int) -> np.ndarray:
    """Pad (1, H, W) input on the right/bottom with background (0)."""
    _, h, w = x.shape
    ph = (-h) % stride
    pw = (-w) % stride
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, ph), (0, pw)))


@dataclass
class ForwardState:
    """Caches of one full forward pass, consumed by the backward calls."""

    image_size: tuple[int, int]  # padded (w, h)
    backbone: list = field(default_factory=list)
    features: dict[int, np.ndarray] = field(default_factory=dict)  # stride -> (C, h, w)
    pyramid_caches: dict = field(default_factory=dict)
    dfeatures: dict[int, np.ndarray] = field(default_factory=dict)
    rpn: dict = field(default_factory=dict)
    box_head: dict = field(default_factory=dict)
    mask_head: dict = field(default_factory=dict)


class DetectionNetwork:
    def __init__(self, arch: ArchConfig, anchor_cfg: AnchorConfig, rng: np.random.Generator):
        if anchor_cfg.stride != arch.stride:
            raise ValueError("anchor stride must match the backbone stride")
        self.arch = arch
        self.anchor_cfg = anchor_cfg
        ch = arch.channels
        k = anchor_cfg.per_position

        self.conv_blocks = [
            Conv2d(rng, 1, ch[0], 3, stride=2, pad=1, name="backbone.conv1"),
            Conv2d(rng, ch[0], ch[1], 3, stride=2, pad=1, name="backbone.conv2"),
            Conv2d(rng, ch[1], ch[2], 3, stride=2, pad=1, name="backbone.conv3"),
            Conv2d(rng, ch[2], ch[3], 3, stride=2, pad=1, name="backbone.conv4"),
        ]
        c = ch[3]
        if arch.pyramid:
            self.conv5 = Conv2d(rng, c, c, 3, stride=2, pad=1, name="pyramid.conv5")
            self.lat4 = Conv2d(rng, c, c, 1, name="pyramid.lat4")
            self.lat5 = Conv2d(rng, c, c, 1, name="pyramid.lat5")
        self.rpn_conv = Conv2d(rng, c, c, 3, stride=1, pad=1, name="rpn.conv")
        self.rpn_cls = Conv2d(rng, c, k, 1, name="rpn.cls", weight_scale=HEAD_INIT_SCALE)
        self.rpn_box = Conv2d(rng, c, 4 * k, 1, name="rpn.box", weight_scale=HEAD_INIT_SCALE)

        self.roi_pool = RoiAlignLayer(arch.roi_pool, arch.samples_per_bin)
        self.fc1 = Linear(rng, c * arch.roi_pool**2, arch.fc_dim, name="head.fc1")
        self.fc_cls = Linear(rng, arch.fc_dim, 1, name="head.cls", weight_scale=HEAD_INIT_SCALE)
        self.fc_box = Linear(rng, arch.fc_dim, 4, name="head.box", weight_scale=HEAD_INIT_SCALE)

        self.mask_pool = RoiAlignLayer(arch.mask_pool, arch.samples_per_bin)
        mc = max(ch[2], 8)
        self.mask_conv = Conv2d(rng, c, mc, 3, stride=1, pad=1, name="mask.conv")
        self.mask_deconv = ConvTranspose2x2(rng, mc, mc, name="mask.deconv")
        self.mask_out = Conv2d(rng, mc, arch.n_classes, 1, name="mask.out", weight_scale=HEAD_INIT_SCALE)

    # -- parameters ---------------------------------------------------------

    def layers(self):
        out = list(self.conv_blocks)
        if self.arch.pyramid:
            out += [self.conv5, self.lat4, self.lat5]
        out += [self.rpn_conv, self.rpn_cls, self.rpn_box, self.fc1, self.fc_cls, self.fc_box]
        out += [self.mask_conv, self.mask_deconv, self.mask_out]
        return out

    def params(self) -> list[Param]:
        return [p for layer in self.layers() for p in layer.params()]

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    # -- forward ------------------------------------------------------------

    def forward_backbone(self, x: np.ndarray) -> ForwardState:
        _, h, w = x.shape
        if h % self.arch.total_stride or w % self.arch.total_stride:
            raise ValueError(
                f"image {w}x{h} not a multiple of the network stride "
                f"{self.arch.total_stride}; pad it first"
            )
        state = ForwardState(image_size=(w, h))
        cur = x
        for block in self.conv_blocks:
            y, conv_cache = block.forward(cur)
            a, relu_cache = relu_forward(y)
            state.backbone.append((conv_cache, relu_cache))
            cur = a
        c4 = cur
        if not self.arch.pyramid:
            state.features[16] = c4
            return state

        y5, cache5 = self.conv5.forward(c4)
        a5, relu5 = relu_forward(y5)
        p5, lat5_cache = self.lat5.forward(a5)
        l4, lat4_cache = self.lat4.forward(c4)
        up, up_shape = upsample2_forward(p5)
        up = up[:, : l4.shape[1], : l4.shape[2]]  # odd dims crop
        p4 = l4 + up
        state.features[16] = p4
        state.features[32] = p5
        state.pyramid_caches = {
            "conv5": cache5,
            "relu5": relu5,
            "lat5": lat5_cache,
            "lat4": lat4_cache,
            "up_shape": up_shape,
            "p5_shape": p5.shape,
            "c4_shape": c4.shape,
        }
        return state

    def anchor_levels(self) -> list[tuple[int, AnchorConfig]]:
        """(stride, anchor config) per RPN level, fine to coarse."""
        levels = [(16, self.anchor_cfg)]
        if self.arch.pyramid:
            coarse = replace(
                self.anchor_cfg,
                scales=tuple(2 * s for s in self.anchor_cfg.scales),
                stride=self.anchor_cfg.stride * 2,
            )
            levels.append((32, coarse))
        return levels

    def all_anchors(self, image_size: tuple[int, int]) -> np.ndarray:
        """Anchors of every level, concatenated fine to coarse."""
        return np.concatenate(
            [generate_anchors(image_size, cfg) for _, cfg in self.anchor_levels()], axis=0
        )

    def forward_rpn(self, state: ForwardState) -> tuple[np.ndarray, np.ndarray]:
        """(objectness logits (A,), box deltas (A, 4)) over all levels."""
        k = self.anchor_cfg.per_position
        logits_parts = []
        delta_parts = []
        state.rpn["levels"] = []
        for stride, _ in self.anchor_levels():
            feats = state.features[stride]
            y, conv_cache = self.rpn_conv.forward(feats)
            a, relu_cache = relu_forward(y)
            cls, cls_cache = self.rpn_cls.forward(a)      # (K, h, w)
            box, box_cache = self.rpn_box.forward(a)      # (4K, h, w)
            _, fh, fw = cls.shape
            logits_parts.append(cls.transpose(1, 2, 0).reshape(-1))
            delta_parts.append(box.transpose(1, 2, 0).reshape(fh * fw * k, 4))
            state.rpn["levels"].append(
                {
                    "stride": stride,
                    "conv": conv_cache,
                    "relu": relu_cache,
                    "cls": cls_cache,
                    "box": box_cache,
                    "shape": (fh, fw),
                }
            )
        return np.concatenate(logits_parts), np.concatenate(delta_parts, axis=0)

    def _roi_levels(self, rois: np.ndarray) -> np.ndarray:
        """Pooling level (stride) per roi."""
        if not self.arch.pyramid:
            return np.full(len(rois), 16, dtype=np.int64)
        scale = np.sqrt((rois[:, 2] - rois[:, 0]) * (rois[:, 3] - rois[:, 1]))
        return np.where(scale > self.arch.pyramid_roi_cutoff, 32, 16)

    def _pooled_by_level(self, state, rois, pool: RoiAlignLayer, tag: str):
        levels = self._roi_levels(rois)
        n = len(rois)
        m = pool.out_size
        c = self.arch.channels[3]
        out = np.empty((n, c, m, m))
        caches = []
        for stride in sorted(set(levels.tolist())):
            sel = np.nonzero(levels == stride)[0]
            pooled, cache = pool.forward(state.features[stride], rois[sel] / stride)
            out[sel] = pooled
            caches.append((stride, sel, cache))
        state.__getattribute__(tag)["pool"] = caches
        state.__getattribute__(tag)["levels"] = levels
        return out

    def forward_box_head(self, state: ForwardState, rois: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(cls logits (N,), box deltas (N, 4)) for given rois (image coords)."""
        pooled = self._pooled_by_level(state, rois, self.roi_pool, "box_head")
        n = len(rois)
        flat = pooled.reshape(n, -1)
        h1, fc1_cache = self.fc1.forward(flat)
        a1, relu_cache = relu_forward(h1)
        cls, cls_cache = self.fc_cls.forward(a1)
        box, box_cache = self.fc_box.forward(a1)
        state.box_head.update(
            {"fc1": fc1_cache, "relu": relu_cache, "cls": cls_cache, "box": box_cache,
             "pooled_shape": pooled.shape}
        )
        return cls[:, 0], box

    def forward_mask_head(self, state: ForwardState, rois: np.ndarray) -> np.ndarray:
        """Mask logits (N, n_classes, m, m) for given rois."""
        pooled = self._pooled_by_level(state, rois, self.mask_pool, "mask_head")
        per_roi = []
        logits = []
        for feat in pooled:
            y1, c1 = self.mask_conv.forward(feat)
            a1, r1 = relu_forward(y1)
            y2, c2 = self.mask_deconv.forward(a1)
            a2, r2 = relu_forward(y2)
            out, c3 = self.mask_out.forward(a2)
            per_roi.append((c1, r1, c2, r2, c3))
            logits.append(out)
        state.mask_head["per_roi"] = per_roi
        state.mask_head["pooled_shape"] = pooled.shape
        return np.stack(logits) if logits else np.zeros((0, self.arch.n_classes, self.arch.mask_size, self.arch.mask_size))

    # -- backward -----------------------------------------------------------

    def _dfeat(self, state: ForwardState, stride: int) -> np.ndarray:
        if stride not in state.dfeatures:
            state.dfeatures[stride] = np.zeros_like(state.features[stride])
        return state.dfeatures[stride]

    def backward_rpn(self, state: ForwardState, dlogits: np.ndarray, ddeltas: np.ndarray):
        k = self.anchor_cfg.per_position
        at = 0
        for level in state.rpn["levels"]:
            fh, fw = level["shape"]
            count = fh * fw * k
            dl = dlogits[at : at + count].reshape(fh, fw, k).transpose(2, 0, 1)
            dd = ddeltas[at : at + count].reshape(fh, fw, 4 * k).transpose(2, 0, 1)
            at += count
            da = self.rpn_cls.backward(dl, level["cls"]) + self.rpn_box.backward(dd, level["box"])
            dy = relu_backward(da, level["relu"])
            self._dfeat(state, level["stride"])[...] += self.rpn_conv.backward(dy, level["conv"])

    def _backward_pool(self, state: ForwardState, tag: str, dpooled: np.ndarray, pool: RoiAlignLayer):
        for stride, sel, cache in state.__getattribute__(tag)["pool"]:
            self._dfeat(state, stride)[...] += pool.backward(dpooled[sel], cache)

    def backward_box_head(self, state: ForwardState, dcls: np.ndarray, dbox: np.ndarray):
        da = self.fc_cls.backward(dcls[:, None], state.box_head["cls"])
        da += self.fc_box.backward(dbox, state.box_head["box"])
        dh = relu_backward(da, state.box_head["relu"])
        dflat = self.fc1.backward(dh, state.box_head["fc1"])
        dpooled = dflat.reshape(state.box_head["pooled_shape"])
        self._backward_pool(state, "box_head", dpooled, self.roi_pool)

    def backward_mask_head(self, state: ForwardState, dlogits: np.ndarray):
        per_roi = state.mask_head["per_roi"]
        dpooled = np.empty(state.mask_head["pooled_shape"])
        for i, (c1, r1, c2, r2, c3) in enumerate(per_roi):
            da2 = self.mask_out.backward(dlogits[i], c3)
            dy2 = relu_backward(da2, r2)
            da1 = self.mask_deconv.backward(dy2, c2)
            dy1 = relu_backward(da1, r1)
            dpooled[i] = self.mask_conv.backward(dy1, c1)
        self._backward_pool(state, "mask_head", dpooled, self.mask_pool)

    def backward_backbone(self, state: ForwardState) -> np.ndarray:
        """Push accumulated feature gradients back to the image."""
        if self.arch.pyramid:
            caches = state.pyramid_caches
            dp4 = state.dfeatures.get(16)
            dp5 = state.dfeatures.get(32)
            c4_shape = caches["c4_shape"]
            if dp4 is None:
                dp4 = np.zeros((c4_shape[0], c4_shape[1], c4_shape[2]))
            if dp5 is None:
                dp5 = np.zeros(caches["p5_shape"])
            # P4 = lat4(C4) + crop(upsample(P5)); P5 = lat5(relu(conv5(C4)))
            dup_full = np.zeros((caches["p5_shape"][0],) + tuple(2 * d for d in caches["p5_shape"][1:]))
            dup_full[:, : dp4.shape[1], : dp4.shape[2]] = dp4
            dp5 = dp5 + upsample2_backward(dup_full, caches["up_shape"])
            dc4 = self.lat4.backward(dp4, caches["lat4"])
            da5 = self.lat5.backward(dp5, caches["lat5"])
            dy5 = relu_backward(da5, caches["relu5"])
            dc4 += self.conv5.backward(dy5, caches["conv5"])
        else:
            dc4 = state.dfeatures.get(16)
            if dc4 is None:
                raise ValueError("no feature gradients accumulated")
        cur = dc4
        for block, (conv_cache, relu_cache) in zip(reversed(self.conv_blocks), reversed(state.backbone)):
            cur = block.backward(relu_backward(cur, relu_cache), conv_cache)
        return cur


# ---------------------------------------------------------------------------
# serializable parameter container


@dataclass
class ModelParams:
    arch: ArchConfig
    anchors: AnchorConfig
    tensors: dict[str, np.ndarray]

    def validate(self):
        for name, value in self.tensors.items():
            if not np.isfinite(value).all():
                raise ValueError(f"non-finite values in tensor {name}")
        k = self.anchors.per_position
        rpn_cls_w = self.tensors.get("rpn.cls.weight")
        if rpn_cls_w is None or rpn_cls_w.shape[1] != k:
            raise ValueError(
                "anchor config inconsistent with rpn head shapes: "
                f"expected {k} outputs, got {None if rpn_cls_w is None else rpn_cls_w.shape[1]}"
            )


def network_to_params(net: DetectionNetwork) -> ModelParams:
    return ModelParams(
        arch=net.arch,
        anchors=net.anchor_cfg,
        tensors={p.name: p.value.copy() for p in net.params()},
    )


def network_from_params(params: ModelParams) -> DetectionNetwork:
    params.validate()
    net = DetectionNetwork(params.arch, params.anchors, rng=np.random.default_rng(0))
    own = {p.name: p for p in net.params()}
    if set(own) != set(params.tensors):
        missing = set(own) ^ set(params.tensors)
        raise ValueError(f"tensor set mismatch: {sorted(missing)}")
    for name, value in params.tensors.items():
        if own[name].value.shape != value.shape:
            raise ValueError(
                f"tensor {name} has shape {value.shape}, expected {own[name].value.shape}"
            )
        own[name].value = value.astype(np.float64).copy()
    return net


def params_digest(params: ModelParams) -> str:
    """Stable digest over tensors in name order."""
    import hashlib

    h = hashlib.sha256()
    for name in sorted(params.tensors):
        h.update(name.encode())
        t = params.tensors[name]
        h.update(str(t.shape).encode())
        h.update(np.ascontiguousarray(t, dtype=np.float64).tobytes())
    return h.hexdigest()
