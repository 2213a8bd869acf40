import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slapseg.detnet.anchors import (
    LABEL_NEGATIVE,
    LABEL_NEUTRAL,
    LABEL_POSITIVE,
    AnchorConfig,
    decode_deltas,
    encode_deltas,
    generate_anchors,
    iou_matrix,
    label_anchors,
)
from slapseg.detnet.losses import (
    EPS,
    LossWeights,
    MaskTarget,
    StageOutputs,
    StageTargets,
    cls_log_loss,
    cls_loss_from_logits,
    mask_bce,
    smooth_l1,
    total_loss,
)
from slapseg.detnet.sampling import sample_rois
from slapseg.detnet.sgd import DivergenceError, SgdState, TrainConfig, sgd_step
from slapseg.detnet.layers import Param
from slapseg.imgcore import Box, iou
from gradcheck import fd_gradient, max_rel_err
from oracles import random_disjoint_gt


class TestAnchorGeneration:
    def test_count_64x64(self):
        cfg = AnchorConfig(stride=16)
        anchors = generate_anchors((64, 64), cfg)
        assert anchors.shape == (16 * 15, 4)

    def test_centers_on_stride_grid(self):
        cfg = AnchorConfig(stride=16)
        anchors = generate_anchors((64, 48), cfg)
        cx = (anchors[:, 0] + anchors[:, 2]) / 2
        cy = (anchors[:, 1] + anchors[:, 3]) / 2
        # distance to the nearest stride-grid point offset by stride/2
        rx = (cx - 8.0) % 16.0
        ry = (cy - 8.0) % 16.0
        assert np.minimum(rx, 16.0 - rx).max() < 1e-9
        assert np.minimum(ry, 16.0 - ry).max() < 1e-9

    def test_aspect_ratios_exact(self):
        cfg = AnchorConfig()
        anchors = generate_anchors((32, 32), cfg)
        w = anchors[:, 2] - anchors[:, 0]
        h = anchors[:, 3] - anchors[:, 1]
        ratios = (w / h).reshape(-1, 5, 3)
        for r_idx, r in enumerate(cfg.aspect_ratios):
            assert np.allclose(ratios[:, :, r_idx], r, atol=1e-6)

    def test_area_is_scale_squared(self):
        cfg = AnchorConfig()
        anchors = generate_anchors((32, 32), cfg)
        areas = ((anchors[:, 2] - anchors[:, 0]) * (anchors[:, 3] - anchors[:, 1])).reshape(-1, 5, 3)
        for s_idx, s in enumerate(cfg.scales):
            assert np.allclose(areas[:, s_idx, :], s * s, rtol=1e-9)

    def test_rejects_five_scales_violation(self):
        with pytest.raises(ValueError):
            AnchorConfig(scales=(8, 16, 32))


class TestLabelAnchors:
    def test_threshold_rules(self):
        gt = np.array([[0.0, 0.0, 10.0, 10.0]])
        anchors = np.array(
            [
                [0.0, 0.0, 10.0, 12.5],   # IoU 0.8
                [0.0, 0.0, 10.0, 20.0],   # IoU 0.5
                [0.0, 0.0, 10.0, 50.0],   # IoU 0.2
                [0.0, 0.0, 10.0, 10.0],   # IoU 1.0 (also the forced best)
            ]
        )
        labels, matched, _ = label_anchors(anchors, gt)
        assert labels[0] == LABEL_POSITIVE
        assert labels[1] == LABEL_NEUTRAL
        assert labels[2] == LABEL_NEGATIVE
        assert labels[3] == LABEL_POSITIVE
        assert matched[0] == 0

    def test_forced_positive_for_low_iou_gt(self):
        gt = np.array([[0.0, 0.0, 4.0, 4.0]])
        anchors = np.array(
            [
                [0.0, 0.0, 16.0, 16.0],   # IoU 1/16 < 0.3: would be negative
                [100.0, 100.0, 116.0, 116.0],
            ]
        )
        labels, matched, _ = label_anchors(anchors, gt)
        assert labels[0] == LABEL_POSITIVE  # best anchor of the gt is forced
        assert matched[0] == 0
        assert labels[1] == LABEL_NEGATIVE

    def test_partition_on_random_scenes(self):
        rng = np.random.default_rng(0)
        cfg = AnchorConfig(scales=(16, 24, 32, 48, 64))
        anchors = generate_anchors((160, 128), cfg)
        for _ in range(50):
            gt = random_disjoint_gt(rng, (160, 128))
            labels, matched, _ = label_anchors(anchors, gt)
            best = iou_matrix(anchors, gt).max(axis=1)
            pos = labels == LABEL_POSITIVE
            neg = labels == LABEL_NEGATIVE
            # thresholds hold exactly, up to the forced best anchor per gt
            assert pos[best > 0.7].all()
            assert (best[neg] < 0.3).all()
            forced_extra = pos & ~(best > 0.7)
            assert forced_extra.sum() <= len(gt)
            # every gt has at least one positive
            assert set(range(len(gt))) <= set(matched[pos].tolist())


class TestDeltaCoding:
    def test_identity(self):
        a = np.array([[0.0, 0.0, 10.0, 10.0]])
        t = encode_deltas(a, a)
        assert np.allclose(t, 0.0)

    def test_hand_value(self):
        anchor = np.array([[0.0, 0.0, 10.0, 10.0]])
        box = np.array([[0.0, 0.0, 20.0, 20.0]])
        t = encode_deltas(box, anchor)
        assert np.allclose(t, [0.5, 0.5, math.log(2), math.log(2)])

    def test_round_trip_many(self):
        rng = np.random.default_rng(4)
        n = 10_000
        boxes = np.stack(
            [rng.uniform(0, 100, n), rng.uniform(0, 100, n)], axis=1
        )
        boxes = np.concatenate([boxes, boxes + rng.uniform(1, 60, (n, 2))], axis=1)
        anchors = np.stack(
            [rng.uniform(0, 100, n), rng.uniform(0, 100, n)], axis=1
        )
        anchors = np.concatenate([anchors, anchors + rng.uniform(1, 60, (n, 2))], axis=1)
        decoded = decode_deltas(encode_deltas(boxes, anchors), anchors)
        assert np.abs(decoded - boxes).max() < 1e-9

    @given(
        st.floats(-3, 3), st.floats(-3, 3),
        st.floats(0.1, 4), st.floats(0.1, 4),
    )
    @settings(max_examples=100, deadline=None)
    def test_decode_encode_round_trip(self, dx, dy, sw, sh):
        anchor = np.array([[5.0, 5.0, 20.0, 30.0]])
        t = np.array([[dx, dy, math.log(sw), math.log(sh)]])
        back = encode_deltas(decode_deltas(t, anchor), anchor)
        assert np.allclose(back, t, atol=1e-9)


class TestClsLogLoss:
    def test_perfect_prediction_near_zero(self):
        assert cls_log_loss(1.0 - EPS, 1.0) == pytest.approx(0.0, abs=1e-6)
        assert cls_log_loss(EPS, 0.0) == pytest.approx(0.0, abs=1e-6)

    def test_uninformative_is_ln2(self):
        assert cls_log_loss(0.5, 1.0) == pytest.approx(math.log(2))
        assert cls_log_loss(0.5, 0.0) == pytest.approx(math.log(2))

    def test_clamp_keeps_loss_finite(self):
        assert np.isfinite(cls_log_loss(0.0, 1.0))
        assert np.isfinite(cls_log_loss(1.0, 0.0))

    def test_logit_gradient_matches_fd(self):
        rng = np.random.default_rng(1)
        z = rng.uniform(-4, 4, size=32)
        y = (rng.uniform(size=32) > 0.5).astype(float)
        _, grad = cls_loss_from_logits(z, y)
        num = fd_gradient(lambda zz: cls_loss_from_logits(zz, y)[0].sum(), z)
        assert max_rel_err(grad, num) < 1e-4


class TestSmoothL1:
    def test_values(self):
        assert smooth_l1(0.0) == 0.0
        assert smooth_l1(0.5) == pytest.approx(0.125)
        assert smooth_l1(2.0) == pytest.approx(1.5)
        assert smooth_l1(-2.0) == pytest.approx(1.5)

    def test_branch_continuity(self):
        assert smooth_l1(1.0) == pytest.approx(0.5)
        assert smooth_l1(-1.0) == pytest.approx(0.5)
        assert smooth_l1(1.0 - 1e-9) == pytest.approx(0.5, abs=1e-8)


class TestMaskBce:
    def test_perfect_prediction(self):
        y = (np.arange(16).reshape(4, 4) % 2).astype(float)
        target = MaskTarget(y=y, k=0)
        assert mask_bce(np.clip(y, EPS, 1 - EPS), target) == pytest.approx(0.0, abs=1e-5)

    def test_uniform_half_is_ln2(self):
        y = np.zeros((4, 4))
        target = MaskTarget(y=y, k=0)
        assert mask_bce(np.full((4, 4), 0.5), target) == pytest.approx(math.log(2))
        target1 = MaskTarget(y=np.ones((4, 4)), k=0)
        assert mask_bce(np.full((4, 4), 0.5), target1) == pytest.approx(math.log(2))

    def test_non_target_channels_ignored(self):
        rng = np.random.default_rng(2)
        y = (rng.uniform(size=(4, 4)) > 0.5).astype(float)
        target = MaskTarget(y=y, k=1)
        pred = rng.uniform(0.1, 0.9, size=(3, 4, 4))
        base = mask_bce(pred, target)
        pred2 = pred.copy()
        pred2[0] = rng.uniform(0.1, 0.9, size=(4, 4))
        pred2[2] = rng.uniform(0.1, 0.9, size=(4, 4))
        assert mask_bce(pred2, target) == base

    def test_rejects_non_binary_target(self):
        with pytest.raises(ValueError):
            MaskTarget(y=np.full((4, 4), 0.5), k=0)


class TestTotalLoss:
    def _stage(self, rng, n, n_pos):
        p_star = np.zeros(n)
        p_star[:n_pos] = 1.0
        out = StageOutputs(
            objectness=rng.uniform(0.05, 0.95, n),
            deltas=rng.normal(0, 0.5, (n, 4)),
        )
        tgt = StageTargets(p_star=p_star, t_star=rng.normal(0, 0.5, (n, 4)))
        return out, tgt

    def test_all_zero_components(self):
        out = StageOutputs(objectness=np.array([EPS]), deltas=np.zeros((1, 4)))
        tgt = StageTargets(p_star=np.zeros(1), t_star=np.zeros((1, 4)))
        lb = total_loss(out, None, (tgt, None), LossWeights(n_cls=1, n_box=1))
        assert lb.l_box == 0.0
        assert lb.l_mask == 0.0
        assert lb.total == pytest.approx(lb.l_cls)

    def test_total_is_sum_of_components(self):
        rng = np.random.default_rng(3)
        rpn_out, rpn_tgt = self._stage(rng, 24, 6)
        head_out, head_tgt = self._stage(rng, 16, 4)
        masks = [rng.uniform(0.1, 0.9, (1, 8, 8)) for _ in range(4)]
        targets = [MaskTarget(y=(rng.uniform(size=(8, 8)) > 0.5).astype(float), k=0) for _ in range(4)]
        w = LossWeights(lam=1.0, n_cls=40, n_box=10)
        lb = total_loss(rpn_out, head_out, (rpn_tgt, head_tgt), w, masks, targets)
        # recompute the parts independently
        l_cls = (
            cls_log_loss(rpn_out.objectness, rpn_tgt.p_star).sum()
            + cls_log_loss(head_out.objectness, head_tgt.p_star).sum()
        ) / 40
        l_box = (
            smooth_l1(rpn_out.deltas[:6] - rpn_tgt.t_star[:6]).sum()
            + smooth_l1(head_out.deltas[:4] - head_tgt.t_star[:4]).sum()
        ) / 10
        l_mask = np.mean([mask_bce(m, t) for m, t in zip(masks, targets)])
        assert lb.l_cls == pytest.approx(l_cls)
        assert lb.l_box == pytest.approx(l_box)
        assert lb.l_mask == pytest.approx(l_mask)
        assert lb.total == lb.l_cls + lb.l_box + lb.l_mask

    def test_lambda_linearity(self):
        rng = np.random.default_rng(5)
        out, tgt = self._stage(rng, 24, 6)
        w1 = LossWeights(lam=1.0, n_cls=24, n_box=6)
        w2 = LossWeights(lam=2.0, n_cls=24, n_box=6)
        lb1 = total_loss(out, None, (tgt, None), w1)
        lb2 = total_loss(out, None, (tgt, None), w2)
        assert lb2.l_box == pytest.approx(2 * lb1.l_box)
        assert lb2.l_cls == lb1.l_cls
        assert lb2.l_mask == lb1.l_mask

    def test_no_positive_anchors_zero_box(self):
        rng = np.random.default_rng(6)
        out, _ = self._stage(rng, 10, 0)
        tgt = StageTargets(p_star=np.zeros(10), t_star=np.zeros((10, 4)))
        lb = total_loss(out, None, (tgt, None), LossWeights(n_cls=10, n_box=1))
        assert lb.l_box == 0.0


class TestSampleRois:
    def _scene(self, rng, n_props=300):
        gt = np.array([[20.0, 20.0, 60.0, 80.0], [100.0, 30.0, 140.0, 90.0]])
        props = []
        for _ in range(n_props):
            base = gt[int(rng.integers(0, 2))]
            if rng.uniform() < 0.4:
                jitter = rng.normal(0, 3, 4)
                props.append(base + jitter)
            else:
                w, h = rng.uniform(20, 50, 2)
                x, y = rng.uniform(0, 150), rng.uniform(0, 100)
                props.append([x, y, x + w, y + h])
        return np.asarray(props), gt

    def test_ratio_with_abundant_positives(self):
        rng = np.random.default_rng(1)
        props, gt = self._scene(rng)
        sample = sample_rois(props, gt, n=64, positive_fraction=0.25, rng=rng)
        assert len(sample.rois) == 64
        assert sample.p_star.sum() == 16

    def test_all_negatives_when_no_positive(self):
        rng = np.random.default_rng(2)
        props = np.array([[200.0, 200.0, 220.0, 230.0], [250.0, 250.0, 270.0, 290.0]])
        gt = np.array([[0.0, 0.0, 10.0, 10.0]])
        sample = sample_rois(props, gt, n=64, rng=rng)
        assert len(sample.rois) == 64
        assert sample.p_star.sum() == 0

    def test_positives_verified_against_iou(self):
        rng = np.random.default_rng(3)
        props, gt = self._scene(rng)
        sample = sample_rois(props, gt, n=64, rng=rng)
        gt_boxes = [Box.from_tuple(g) for g in gt]
        for roi, flag in zip(sample.rois, sample.p_star):
            best = max(iou(Box.from_tuple(roi), g) for g in gt_boxes)
            if flag == 1:
                assert best >= 0.5
            else:
                assert best < 0.5


class TestSgdStep:
    def test_no_grad_no_decay_is_identity(self):
        p = Param("w", np.array([1.0, -2.0]))
        cfg = TrainConfig(weight_decay=0.0)
        sgd_step([p], cfg, SgdState())
        assert np.allclose(p.value, [1.0, -2.0])

    def test_single_step_closed_form(self):
        p = Param("w", np.array([2.0]))
        p.grad[...] = np.array([0.5])
        cfg = TrainConfig(learning_rate=0.001, momentum=0.9, weight_decay=0.0001)
        sgd_step([p], cfg, SgdState())
        expected = 2.0 - 0.001 * (0.5 + 0.0001 * 2.0)
        assert p.value[0] == pytest.approx(expected)

    def test_decay_shrinks_monotonically(self):
        p = Param("w", np.array([5.0]))
        cfg = TrainConfig(learning_rate=0.01, momentum=0.9, weight_decay=0.01)
        state = SgdState()
        prev = abs(p.value[0])
        for _ in range(20):
            p.zero_grad()
            sgd_step([p], cfg, state)
            cur = abs(p.value[0])
            assert cur < prev
            prev = cur

    def test_non_finite_gradient_aborts(self):
        p = Param("w", np.array([1.0]))
        p.grad[...] = np.array([np.nan])
        with pytest.raises(DivergenceError):
            sgd_step([p], TrainConfig(), SgdState())

    def test_rejects_bad_roi_budget(self):
        with pytest.raises(ValueError):
            TrainConfig(rois_per_image=100)
