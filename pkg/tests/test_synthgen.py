import json

import numpy as np
import pytest

from slapseg.imgcore import Box, iou, rotate_image
from slapseg.imgcore.image import _bilinear_sample
from slapseg.synthgen import (
    FingerSpec,
    GenerationError,
    ManifestError,
    SlapSpec,
    generate_dataset,
    ground_truth_of,
    make_splits,
    read_manifest,
    read_splits,
    synth_fingerprint,
    synth_slap,
    write_manifest,
    write_splits,
)


def four_fingers(period=9.0, blob=False, seed0=100):
    fingers = []
    xpos = 30
    for i, lab in enumerate(("index", "middle", "ring", "little")):
        fingers.append(
            FingerSpec(
                center=(xpos, 70),
                width=42,
                height=84,
                ridge_period=period,
                orientation_seed=seed0 + i,
                finger_label=lab,
                joint_blob=blob,
            )
        )
        xpos += 58
    return tuple(fingers)


def adult_slap_spec(rotation=0.0, noise=0.0, blob=False):
    return SlapSpec(
        cohort="adult",
        hand="right",
        rotation=rotation,
        fingers=four_fingers(blob=blob),
        noise_sigma=noise,
        canvas=(280, 224),
    )


class TestFingerSpec:
    def test_rejects_small_period(self):
        with pytest.raises(ValueError):
            FingerSpec((0, 0), 40, 80, 3.5, 1, "index")

    def test_rejects_unknown_label(self):
        with pytest.raises(ValueError):
            FingerSpec((0, 0), 40, 80, 9, 1, "pinky")


class TestSynthFingerprint:
    def test_deterministic(self):
        spec = FingerSpec((30, 50), 46, 88, 9.0, orientation_seed=42, finger_label="index")
        p1, m1 = synth_fingerprint(spec, rng_seed=7)
        p2, m2 = synth_fingerprint(spec, rng_seed=7)
        assert np.array_equal(p1.pixels, p2.pixels)
        assert np.array_equal(m1, m2)

    def test_different_seed_changes_pattern(self):
        spec = FingerSpec((30, 50), 46, 88, 9.0, orientation_seed=42, finger_label="index")
        p1, _ = synth_fingerprint(spec, rng_seed=7)
        p2, _ = synth_fingerprint(spec, rng_seed=8)
        assert not np.array_equal(p1.pixels, p2.pixels)

    def test_spectral_peak_near_ridge_frequency(self):
        # oracle: radial profile of the 2-D amplitude spectrum over the
        # full-pressure core of the print (the rim fades by design and
        # contributes envelope energy, not ridge energy)
        spec = FingerSpec((30, 50), 46, 88, ridge_period=9.0, orientation_seed=42, finger_label="index")
        patch, mask = synth_fingerprint(spec, rng_seed=7)
        h, w = patch.pixels.shape
        cx, cy = w / 2.0, 44.0  # distal envelope center
        half_w, half_h = int(0.55 * 23), int(0.55 * 44)
        core = patch.pixels[
            int(cy) - half_h : int(cy) + half_h, int(round(cx)) - half_w : int(round(cx)) + half_w
        ].astype(float)
        x = np.zeros((64, 64))
        x[: core.shape[0], : core.shape[1]] = core - core.mean()
        amp = np.abs(np.fft.fft2(x))
        fr = np.hypot(
            np.fft.fftfreq(x.shape[0])[:, None], np.fft.fftfreq(x.shape[1])[None, :]
        )
        width = 0.005
        bins = np.arange(0.0, 0.5, width)
        profile = np.array(
            [amp[(fr >= lo) & (fr < lo + width)].mean() if ((fr >= lo) & (fr < lo + width)).any() else 0.0 for lo in bins]
        )
        lo_cut = int(0.04 / width)  # skip the window's low-frequency energy
        hi_cut = int(0.30 / width)
        peak = bins[lo_cut + int(np.argmax(profile[lo_cut:hi_cut]))] + width / 2
        assert abs(peak - 1 / 9) <= 0.15 * (1 / 9)

    def test_mask_area_matches_ellipse(self):
        spec = FingerSpec((30, 50), 46, 88, 9.0, orientation_seed=3, finger_label="middle")
        _, mask = synth_fingerprint(spec, rng_seed=1)
        expected = np.pi / 4 * 46 * 88
        assert abs(mask.sum() - expected) <= 0.05 * expected

    def test_blob_extends_mask_downwards(self):
        base = FingerSpec((30, 50), 46, 88, 9.0, orientation_seed=3, finger_label="index")
        blob = FingerSpec((30, 50), 46, 88, 9.0, orientation_seed=3, finger_label="index", joint_blob=True)
        _, m0 = synth_fingerprint(base, rng_seed=1)
        _, m1 = synth_fingerprint(blob, rng_seed=1)
        assert m1.shape[0] > m0.shape[0]
        assert m1.sum() > m0.sum()
        # the blob sits below the distal envelope with a gap at the crease
        rows = m1.any(axis=1)
        active = np.nonzero(rows)[0]
        assert not rows[active[0] : active[-1] + 1].all()


class TestSynthSlap:
    def test_zero_rotation_zero_noise_is_direct_composite(self):
        spec = adult_slap_spec()
        img, truth = synth_slap(spec, rng_seed=5)
        expected = np.full((224, 280), 255, dtype=np.uint8)
        for finger in spec.fingers:
            patch, mask = synth_fingerprint(finger, rng_seed=finger.orientation_seed)
            left, top, _, _ = finger.footprint()
            px0, py0 = int(round(left)), int(round(top))
            region = expected[py0 : py0 + patch.height, px0 : px0 + patch.width]
            region[mask] = patch.pixels[mask]
        assert np.array_equal(img.pixels, expected)

    def test_four_boxes_pairwise_disjoint(self):
        _, truth = synth_slap(adult_slap_spec(rotation=7.0, noise=4.0), rng_seed=5)
        assert len(truth.boxes) == 4
        for i in range(4):
            for j in range(i + 1, 4):
                assert iou(truth.boxes[i], truth.boxes[j]) == 0.0

    def test_boxes_are_mask_hulls(self):
        _, truth = synth_slap(adult_slap_spec(rotation=-9.0, noise=3.0, blob=True), rng_seed=2)
        ox, oy = truth.upright_offset
        for i, box in enumerate(truth.boxes):
            ys, xs = np.nonzero(truth.mask(i))
            hull = Box(xs.min() + ox, ys.min() + oy, xs.max() + 1 + ox, ys.max() + 1 + oy)
            assert box.as_tuple() == pytest.approx(hull.as_tuple())

    def test_thumbs_slap_has_two_fingers(self):
        thumbs = tuple(
            FingerSpec((90 + 80 * i, 70), 55, 84, 9.0, orientation_seed=50 + i, finger_label="thumb")
            for i in range(2)
        )
        spec = SlapSpec("adult", "thumbs", 0.0, thumbs, 0.0, (280, 224))
        _, truth = synth_slap(spec, rng_seed=1)
        assert len(truth.boxes) == 2

    def test_overlapping_fingers_rejected(self):
        fingers = list(four_fingers())
        fingers[1] = FingerSpec(
            center=fingers[0].center,
            width=42,
            height=84,
            ridge_period=9.0,
            orientation_seed=7,
            finger_label="middle",
        )
        spec = SlapSpec("adult", "right", 0.0, tuple(fingers), 0.0, (280, 224))
        with pytest.raises(GenerationError):
            synth_slap(spec, rng_seed=1)

    def test_wrong_finger_count_rejected(self):
        with pytest.raises(ValueError):
            SlapSpec("adult", "right", 0.0, four_fingers()[:2], 0.0, (280, 224))

    def test_rotate_and_back_interpolation_loss(self):
        # sub-pixel aligned comparison after a +10/-10 round trip
        img, truth = synth_slap(adult_slap_spec(), rng_seed=3)
        back = rotate_image(rotate_image(img, 10.0), -10.0)
        ox = (back.width - img.width) / 2.0
        oy = (back.height - img.height) / 2.0
        jj, ii = np.meshgrid(np.arange(img.width), np.arange(img.height))
        crop = _bilinear_sample(back.pixels, jj + ox, ii + oy, fill=255)
        fg = truth.label_raster > 0
        assert np.abs(crop - img.pixels.astype(float))[fg].mean() < 10.0

    def test_capture_rotated_content(self):
        img0, _ = synth_slap(adult_slap_spec(rotation=0.0), rng_seed=3)
        img10, truth10 = synth_slap(adult_slap_spec(rotation=10.0), rng_seed=3)
        assert img10.size != img0.size
        up_w, up_h = truth10.upright_size
        assert up_w >= img0.width and up_h >= img0.height


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    manifest = generate_dataset(2, 2, 3, master_seed=7, out_dir=out)
    return out, manifest


class TestGenerateDataset:
    def test_counts(self, small_dataset):
        _, manifest = small_dataset
        assert len(manifest.subjects) == 4
        assert len(manifest.slaps) == 12
        assert sum(len(s.slap_ids) for s in manifest.subjects) == 12

    def test_manifest_validates(self, small_dataset):
        out, _ = small_dataset
        read_manifest(out / "manifest.json")

    def test_deterministic_across_runs(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        generate_dataset(2, 2, 2, master_seed=11, out_dir=a)
        generate_dataset(2, 2, 2, master_seed=11, out_dir=b)
        assert (a / "manifest.json").read_text() == (b / "manifest.json").read_text()

    def test_ground_truth_reconstruction(self, small_dataset):
        _, manifest = small_dataset
        sid = sorted(manifest.slaps)[0]
        truth = ground_truth_of(manifest, sid)
        assert len(truth.boxes) == 4
        entry = manifest.slaps[sid]
        img = manifest.load_capture(sid)
        assert img.size == tuple(entry.capture_size)


@pytest.fixture(scope="module")
def cohort_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohorts")
    return generate_dataset(25, 25, 1, master_seed=3, out_dir=out)


class TestCohortStatistics:
    def test_adult_boxes_larger(self, cohort_manifest):
        areas = {"adult": [], "juvenile": []}
        for entry in cohort_manifest.slaps.values():
            for ab in entry.boxes:
                areas[entry.cohort].append(ab.box.area)
        assert np.mean(areas["adult"]) > np.mean(areas["juvenile"])

    def test_juvenile_linear_scale(self, cohort_manifest):
        dims = {"adult": [], "juvenile": []}
        count = 0
        for entry in cohort_manifest.slaps.values():
            for ab in entry.boxes:
                dims[entry.cohort].append((ab.box.width, ab.box.height))
                count += 1
        assert count >= 200
        aw, ah = np.mean(dims["adult"], axis=0)
        jw, jh = np.mean(dims["juvenile"], axis=0)
        assert abs(jw / aw - 0.6) <= 0.06
        assert abs(jh / ah - 0.6) <= 0.06


class TestManifestIo:
    def test_round_trip(self, small_dataset, tmp_path):
        out, manifest = small_dataset
        copy_path = tmp_path / "copy.json"
        write_manifest(manifest, copy_path)
        original = (out / "manifest.json").read_text()
        assert copy_path.read_text() == original

    def test_missing_image_is_error(self, small_dataset, tmp_path):
        out, _ = small_dataset
        doc = json.loads((out / "manifest.json").read_text())
        first = next(iter(doc["slaps"].values()))
        first["image_path"] = "images/missing.png"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ManifestError, match="image_path"):
            read_manifest(bad)

    def test_slap_owned_by_two_subjects_is_error(self, small_dataset, tmp_path):
        out, _ = small_dataset
        doc = json.loads((out / "manifest.json").read_text())
        stolen = doc["subjects"][0]["slap_ids"][0]
        doc["subjects"][1]["slap_ids"].append(stolen)
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ManifestError, match="already referenced"):
            read_manifest(bad)

    def test_invalid_box_names_field(self, small_dataset, tmp_path):
        out, _ = small_dataset
        doc = json.loads((out / "manifest.json").read_text())
        first = next(iter(doc["slaps"].values()))
        first["boxes"][0]["right"] = first["boxes"][0]["left"] - 1
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ManifestError, match=r"boxes\[0\]"):
            read_manifest(bad, check_files=False)


@pytest.fixture(scope="module")
def manifest10(tmp_path_factory):
    out = tmp_path_factory.mktemp("splits_ds")
    return generate_dataset(10, 10, 1, master_seed=5, out_dir=out)


class TestSplits:
    def test_fold_proportions(self, manifest10):
        assignments = make_splits(manifest10, folds=10, seed=1)
        assert len(assignments) == 10
        for a in assignments:
            for prefix in ("A", "J"):
                cohort_parts = {s: p for s, p in a.partition.items() if s.startswith(prefix)}
                counts = {p: list(cohort_parts.values()).count(p) for p in ("train", "validation", "test")}
                assert counts == {"train": 8, "validation": 1, "test": 1}

    def test_partitions_cover_all_subjects(self, manifest10):
        all_subjects = {s.subject_id for s in manifest10.subjects}
        for a in make_splits(manifest10, folds=10, seed=1):
            assert set(a.partition) == all_subjects

    def test_each_subject_tested_once(self, manifest10):
        tested: dict[str, int] = {}
        for a in make_splits(manifest10, folds=10, seed=1):
            for sid in a.subjects("test"):
                tested[sid] = tested.get(sid, 0) + 1
        assert all(v == 1 for v in tested.values())
        assert len(tested) == len(manifest10.subjects)

    def test_too_few_subjects(self, small_dataset):
        _, manifest = small_dataset
        with pytest.raises(ValueError, match="needs >="):
            make_splits(manifest, folds=10, seed=1)

    def test_splits_io_round_trip(self, manifest10, tmp_path):
        assignments = make_splits(manifest10, folds=10, seed=2)
        p = tmp_path / "splits.json"
        write_splits(assignments, p, seed=2)
        back = read_splits(p)
        assert [a.partition for a in back] == [a.partition for a in assignments]
