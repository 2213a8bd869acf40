"""Labeled dataset generation and the JSON manifest that indexes it.

The manifest is a single JSON document with relative image paths and
pixel digests, so two runs with identical arguments produce byte
identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imgcore import Box, GrayImage, load_image, save_image
from .fingers import FingerSpec
from .slaps import GroundTruth, SlapSpec, synth_slap

MANIFEST_FORMAT = "slapseg-manifest/1"

BOX_SOURCES = ("synthetic", "baseline", "model", "human")

# adult finger statistics (px); juveniles scale these down
ADULT_WIDTH = 46.0
ADULT_HEIGHT = 88.0
ADULT_RIDGE_PERIOD = 9.0
JUVENILE_SIZE_SCALE = 0.6
JUVENILE_RIDGE_SCALE = 0.65
# juvenile captures are cropped tighter by the operator, keeping the
# foreground fraction comparable across cohorts
JUVENILE_CANVAS_SCALE = 0.65

DEFAULT_CANVAS = (320, 224)
DEFAULT_ROTATION_RANGE = 12.0
ARCH_DROP = {"index": 10.0, "middle": 0.0, "ring": 4.0, "little": 16.0}


class ManifestError(ValueError):
    """A manifest file failed validation; the message names the field."""


@dataclass
class AnnotatedBox:
    box: Box
    label: str
    source: str = "synthetic"


@dataclass
class SubjectRecord:
    subject_id: str
    cohort: str
    slap_ids: list[str] = field(default_factory=list)


@dataclass
class SlapEntry:
    slap_id: str
    subject_id: str
    cohort: str
    hand: str
    image_path: str
    image_sha256: str
    rotation: float
    composite_size: tuple[int, int]
    capture_size: tuple[int, int]
    upright_size: tuple[int, int]
    upright_offset: tuple[float, float]
    ppi: float
    boxes: list[AnnotatedBox]
    raster_path: str | None = None


@dataclass
class DatasetManifest:
    generator_seed: int
    subjects: list[SubjectRecord]
    slaps: dict[str, SlapEntry]
    root: Path | None = None

    def subject_of(self, slap_id: str) -> SubjectRecord:
        sid = self.slaps[slap_id].subject_id
        for rec in self.subjects:
            if rec.subject_id == sid:
                return rec
        raise KeyError(sid)

    def resolve(self, relative: str) -> Path:
        if self.root is None:
            raise ValueError("manifest has no root directory set")
        return self.root / relative

    def load_capture(self, slap_id: str) -> GrayImage:
        entry = self.slaps[slap_id]
        return load_image(self.resolve(entry.image_path), ppi=entry.ppi)

    def load_raster(self, slap_id: str) -> np.ndarray | None:
        entry = self.slaps[slap_id]
        if entry.raster_path is None:
            return None
        return load_image(self.resolve(entry.raster_path)).pixels


def pixel_digest(img: GrayImage) -> str:
    """Digest of the raw raster (dims + row-major bytes), codec independent."""
    h = hashlib.sha256()
    h.update(f"{img.width}x{img.height}:".encode())
    h.update(img.pixels.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# generation


def _finger_layout(
    cohort: str,
    hand: str,
    canvas: tuple[int, int],
    pattern: dict[str, dict],
    rng: np.random.Generator,
) -> tuple[FingerSpec, ...]:
    """Place the per-subject finger patterns on the canvas for one capture."""
    labels = ("thumb", "thumb") if hand == "thumbs" else ("index", "middle", "ring", "little")
    cw, ch = canvas
    gaps = rng.uniform(8.0, 16.0, size=len(labels) - 1)
    widths = [pattern[f"{hand}:{lab}:{i}"]["width"] for i, lab in enumerate(labels)]
    group_w = sum(widths) + gaps.sum()
    x = (cw - group_w) / 2.0 + rng.uniform(-6.0, 6.0)
    base_top = ch * 0.14 + rng.uniform(-4.0, 4.0)

    fingers = []
    for i, lab in enumerate(labels):
        p = pattern[f"{hand}:{lab}:{i}"]
        top = base_top + ARCH_DROP.get(lab, 6.0) * (p["height"] / ADULT_HEIGHT) + rng.uniform(-3.0, 3.0)
        spec = FingerSpec(
            center=(x + p["width"] / 2.0, top + p["height"] / 2.0),
            width=p["width"],
            height=p["height"],
            ridge_period=p["ridge_period"],
            orientation_seed=p["seed"],
            finger_label=lab,
            joint_blob=p["joint_blob"],
        )
        # tall draws (especially with the joint blob) must stay on canvas
        overshoot = spec.footprint()[3] - (ch - 2.0)
        if overshoot > 0:
            spec = FingerSpec(
                center=(spec.center[0], max(spec.center[1] - overshoot, spec.height / 2.0 + 2.0)),
                width=spec.width,
                height=spec.height,
                ridge_period=spec.ridge_period,
                orientation_seed=spec.orientation_seed,
                finger_label=lab,
                joint_blob=spec.joint_blob,
            )
        fingers.append(spec)
        x += p["width"] + (gaps[i] if i < len(gaps) else 0.0)
    return tuple(fingers)


def _subject_pattern(
    cohort: str, rng: np.random.Generator, joint_blob_prob: float
) -> dict[str, dict]:
    """Stable per-subject anatomy: size, ridge period, pattern seed, blob."""
    size_scale = 1.0 if cohort == "adult" else JUVENILE_SIZE_SCALE
    ridge_scale = 1.0 if cohort == "adult" else JUVENILE_RIDGE_SCALE
    pattern = {}
    for hand in ("left", "right", "thumbs"):
        labels = ("thumb", "thumb") if hand == "thumbs" else ("index", "middle", "ring", "little")
        for i, lab in enumerate(labels):
            width = max(14.0, rng.normal(ADULT_WIDTH, 2.5)) * size_scale
            if lab == "thumb":
                width *= 1.2
            height = max(24.0, rng.normal(ADULT_HEIGHT, 5.0)) * size_scale
            period = max(4.0, rng.normal(ADULT_RIDGE_PERIOD, 0.5) * ridge_scale)
            pattern[f"{hand}:{lab}:{i}"] = {
                "width": width,
                "height": height,
                "ridge_period": period,
                "seed": int(rng.integers(0, 2**32)),
                "joint_blob": bool(rng.uniform() < joint_blob_prob),
            }
    return pattern


def generate_dataset(
    n_adult_subjects: int,
    n_juvenile_subjects: int,
    slaps_per_subject: int,
    master_seed: int,
    out_dir: str | Path,
    joint_blob_prob: float = 0.0,
    rotation_range: float = DEFAULT_ROTATION_RANGE,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
    ppi: float = 500.0,
) -> DatasetManifest:
    """Write a seed-deterministic synthetic dataset under ``out_dir``.

    Per subject the finger anatomy is fixed while placement, rotation, and
    noise vary per capture, so repeat captures of one finger share their
    ridge pattern. Captures alternate right and left hands.
    """
    if n_adult_subjects < 1 or n_juvenile_subjects < 1 or slaps_per_subject < 1:
        raise ValueError("subject and capture counts must be >= 1")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "rasters").mkdir(parents=True, exist_ok=True)

    cohort_counts = (("adult", n_adult_subjects), ("juvenile", n_juvenile_subjects))
    subjects: list[SubjectRecord] = []
    slaps: dict[str, SlapEntry] = {}

    root_ss = np.random.SeedSequence(master_seed)
    subject_seeds = root_ss.spawn(n_adult_subjects + n_juvenile_subjects)
    seed_iter = iter(subject_seeds)

    for cohort, count in cohort_counts:
        prefix = "A" if cohort == "adult" else "J"
        cohort_canvas = canvas
        if cohort == "juvenile":
            cohort_canvas = (
                int(round(canvas[0] * JUVENILE_CANVAS_SCALE)),
                int(round(canvas[1] * JUVENILE_CANVAS_SCALE)),
            )
        for s in range(count):
            subject_id = f"{prefix}{s:04d}"
            subj_ss = next(seed_iter)
            subj_rng = np.random.default_rng(subj_ss)
            pattern = _subject_pattern(cohort, subj_rng, joint_blob_prob)
            record = SubjectRecord(subject_id=subject_id, cohort=cohort)

            for k in range(slaps_per_subject):
                slap_id = f"{subject_id}-{k:02d}"
                hand = "right" if k % 2 == 0 else "left"
                spec = SlapSpec(
                    cohort=cohort,
                    hand=hand,
                    rotation=float(subj_rng.uniform(-rotation_range, rotation_range)),
                    fingers=_finger_layout(cohort, hand, cohort_canvas, pattern, subj_rng),
                    noise_sigma=float(subj_rng.uniform(2.0, 5.0)),
                    canvas=cohort_canvas,
                )
                capture_seed = int(subj_rng.integers(0, 2**32))
                capture, truth = synth_slap(spec, rng_seed=capture_seed)

                image_rel = f"images/{slap_id}.png"
                raster_rel = f"rasters/{slap_id}.pgm"
                save_image(capture, out_dir / image_rel)
                save_image(GrayImage(truth.label_raster), out_dir / raster_rel)

                slaps[slap_id] = SlapEntry(
                    slap_id=slap_id,
                    subject_id=subject_id,
                    cohort=cohort,
                    hand=hand,
                    image_path=image_rel,
                    image_sha256=pixel_digest(capture),
                    rotation=spec.rotation,
                    composite_size=truth.composite_size,
                    capture_size=capture.size,
                    upright_size=truth.upright_size,
                    upright_offset=truth.upright_offset,
                    ppi=ppi,
                    boxes=[
                        AnnotatedBox(box=b, label=lab, source="synthetic")
                        for b, lab in zip(truth.boxes, truth.labels)
                    ],
                    raster_path=raster_rel,
                )
                record.slap_ids.append(slap_id)
            subjects.append(record)

    manifest = DatasetManifest(
        generator_seed=master_seed, subjects=subjects, slaps=slaps, root=out_dir
    )
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest


def ground_truth_of(manifest: DatasetManifest, slap_id: str) -> GroundTruth:
    """Rebuild the in-memory ground truth for one manifest entry."""
    entry = manifest.slaps[slap_id]
    raster = manifest.load_raster(slap_id)
    if raster is None:
        raster = np.zeros((entry.composite_size[1], entry.composite_size[0]), dtype=np.uint8)
    return GroundTruth(
        boxes=tuple(ab.box for ab in entry.boxes),
        labels=tuple(ab.label for ab in entry.boxes),
        rotation=entry.rotation,
        label_raster=raster,
        composite_size=tuple(entry.composite_size),
        upright_size=tuple(entry.upright_size),
        upright_offset=tuple(entry.upright_offset),
    )


# ---------------------------------------------------------------------------
# manifest serialization


def _box_to_json(ab: AnnotatedBox) -> dict:
    return {
        "left": ab.box.left,
        "top": ab.box.top,
        "right": ab.box.right,
        "bottom": ab.box.bottom,
        "label": ab.label,
        "source": ab.source,
    }


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    doc = {
        "format": MANIFEST_FORMAT,
        "generator_seed": manifest.generator_seed,
        "subjects": [
            {"subject_id": s.subject_id, "cohort": s.cohort, "slap_ids": list(s.slap_ids)}
            for s in manifest.subjects
        ],
        "slaps": {
            sid: {
                "subject_id": e.subject_id,
                "cohort": e.cohort,
                "hand": e.hand,
                "image_path": e.image_path,
                "image_sha256": e.image_sha256,
                "raster_path": e.raster_path,
                "rotation": e.rotation,
                "composite_size": list(e.composite_size),
                "capture_size": list(e.capture_size),
                "upright_size": list(e.upright_size),
                "upright_offset": list(e.upright_offset),
                "ppi": e.ppi,
                "boxes": [_box_to_json(ab) for ab in e.boxes],
            }
            for sid, e in sorted(manifest.slaps.items())
        },
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def _require(doc: dict, key: str, ctx: str):
    if key not in doc:
        raise ManifestError(f"{ctx}.{key}: missing")
    return doc[key]


def read_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest; errors name the offending field."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"format: expected {MANIFEST_FORMAT!r}, got {doc.get('format')!r}")

    root = path.parent
    subjects = []
    seen_subjects = set()
    owner: dict[str, str] = {}
    for i, s in enumerate(_require(doc, "subjects", "manifest")):
        ctx = f"subjects[{i}]"
        sid = _require(s, "subject_id", ctx)
        if sid in seen_subjects:
            raise ManifestError(f"{ctx}.subject_id: duplicate {sid!r}")
        seen_subjects.add(sid)
        cohort = _require(s, "cohort", ctx)
        if cohort not in ("adult", "juvenile"):
            raise ManifestError(f"{ctx}.cohort: unknown cohort {cohort!r}")
        slap_ids = _require(s, "slap_ids", ctx)
        for slap_id in slap_ids:
            if slap_id in owner:
                raise ManifestError(
                    f"{ctx}.slap_ids: slap {slap_id!r} already referenced by {owner[slap_id]!r}"
                )
            owner[slap_id] = sid
        subjects.append(SubjectRecord(subject_id=sid, cohort=cohort, slap_ids=list(slap_ids)))

    slaps: dict[str, SlapEntry] = {}
    for sid, e in _require(doc, "slaps", "manifest").items():
        ctx = f"slaps[{sid!r}]"
        subject_id = _require(e, "subject_id", ctx)
        if owner.get(sid) != subject_id:
            raise ManifestError(f"{ctx}.subject_id: slap not referenced by subject {subject_id!r}")
        boxes = []
        for bi, bj in enumerate(_require(e, "boxes", ctx)):
            bctx = f"{ctx}.boxes[{bi}]"
            try:
                box = Box(
                    float(_require(bj, "left", bctx)),
                    float(_require(bj, "top", bctx)),
                    float(_require(bj, "right", bctx)),
                    float(_require(bj, "bottom", bctx)),
                )
            except ValueError as exc:
                raise ManifestError(f"{bctx}: {exc}") from exc
            source = bj.get("source", "synthetic")
            if source not in BOX_SOURCES:
                raise ManifestError(f"{bctx}.source: unknown source {source!r}")
            boxes.append(AnnotatedBox(box=box, label=_require(bj, "label", bctx), source=source))
        image_path = _require(e, "image_path", ctx)
        if check_files and not (root / image_path).is_file():
            raise ManifestError(f"{ctx}.image_path: file not found: {image_path}")
        raster_path = e.get("raster_path")
        if check_files and raster_path is not None and not (root / raster_path).is_file():
            raise ManifestError(f"{ctx}.raster_path: file not found: {raster_path}")
        slaps[sid] = SlapEntry(
            slap_id=sid,
            subject_id=subject_id,
            cohort=_require(e, "cohort", ctx),
            hand=_require(e, "hand", ctx),
            image_path=image_path,
            image_sha256=_require(e, "image_sha256", ctx),
            rotation=float(_require(e, "rotation", ctx)),
            composite_size=tuple(_require(e, "composite_size", ctx)),
            capture_size=tuple(_require(e, "capture_size", ctx)),
            upright_size=tuple(_require(e, "upright_size", ctx)),
            upright_offset=tuple(_require(e, "upright_offset", ctx)),
            ppi=float(_require(e, "ppi", ctx)),
            boxes=boxes,
            raster_path=raster_path,
        )

    for slap_id in owner:
        if slap_id not in slaps:
            raise ManifestError(f"subjects: slap {slap_id!r} listed but not defined in slaps")

    return DatasetManifest(
        generator_seed=int(doc.get("generator_seed", 0)),
        subjects=subjects,
        slaps=slaps,
        root=root,
    )
