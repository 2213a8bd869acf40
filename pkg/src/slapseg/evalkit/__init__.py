"""Segmentation evaluation: per-side errors, tolerance flags, matching."""

from .compare import (
    BaselineSegmenter,
    CompareReport,
    DetectorSegmenter,
    GroundTruthSegmenter,
    compare_models,
    greedy_match,
)
from .errors import (
    SIDE_LIMIT,
    SIDES,
    VERTICAL_LIMIT,
    MaeReport,
    SideError,
    ToleranceFlags,
    error_histogram,
    mae,
    side_errors,
    tolerance_flags,
    write_histogram_csv,
    write_mae_csv,
)
from .matching import (
    IMPOSTORS_PER_PRINT,
    MatchTrial,
    PrintRecord,
    RocReport,
    crop_box,
    match_protocol,
    ncc_score,
    resample_to_frame,
    roc,
    tpr_at_fpr,
    write_roc_csv,
)

__all__ = [
    "BaselineSegmenter",
    "CompareReport",
    "DetectorSegmenter",
    "GroundTruthSegmenter",
    "IMPOSTORS_PER_PRINT",
    "MaeReport",
    "MatchTrial",
    "PrintRecord",
    "RocReport",
    "SIDES",
    "SIDE_LIMIT",
    "SideError",
    "ToleranceFlags",
    "VERTICAL_LIMIT",
    "compare_models",
    "crop_box",
    "error_histogram",
    "greedy_match",
    "mae",
    "match_protocol",
    "ncc_score",
    "resample_to_frame",
    "roc",
    "side_errors",
    "tolerance_flags",
    "tpr_at_fpr",
    "write_histogram_csv",
    "write_mae_csv",
    "write_roc_csv",
]
