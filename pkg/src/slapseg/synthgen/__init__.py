"""Synthetic slap generation, manifests, and identity-disjoint splits."""

from .dataset import (
    AnnotatedBox,
    DatasetManifest,
    ManifestError,
    SlapEntry,
    SubjectRecord,
    generate_dataset,
    ground_truth_of,
    pixel_digest,
    read_manifest,
    write_manifest,
)
from .fingers import FINGER_LABELS, FingerSpec, synth_fingerprint
from .slaps import (
    COHORTS,
    HANDS,
    GenerationError,
    GroundTruth,
    SlapSpec,
    synth_slap,
    upright_geometry,
)
from .splits import SplitAssignment, make_splits, read_splits, write_splits

__all__ = [
    "AnnotatedBox",
    "COHORTS",
    "DatasetManifest",
    "FINGER_LABELS",
    "FingerSpec",
    "GenerationError",
    "GroundTruth",
    "HANDS",
    "ManifestError",
    "SlapEntry",
    "SplitAssignment",
    "SubjectRecord",
    "generate_dataset",
    "ground_truth_of",
    "make_splits",
    "pixel_digest",
    "read_manifest",
    "read_splits",
    "synth_fingerprint",
    "synth_slap",
    "upright_geometry",
    "write_manifest",
    "write_splits",
]
