"""Two-stage slap fingerprint detector trained from scratch."""

from .anchors import (
    AnchorConfig,
    decode_deltas,
    encode_deltas,
    generate_anchors,
    label_anchors,
)
from .checkpoint import (
    CheckpointError,
    CheckpointVersionError,
    CorruptCheckpointError,
    load_model,
    save_model,
)
from .infer import Detection, infer
from .losses import (
    LossBreakdown,
    LossWeights,
    MaskTarget,
    StageOutputs,
    StageTargets,
    cls_log_loss,
    mask_bce,
    smooth_l1,
    total_loss,
)
from .model import (
    ArchConfig,
    DetectionNetwork,
    ModelParams,
    network_from_params,
    network_to_params,
    normalize_image,
    params_digest,
)
from .sampling import sample_rois
from .sgd import DivergenceError, SgdState, TrainConfig, sgd_step
from .train import EpochStats, TrainingDivergedError, train, write_loss_curve

__all__ = [
    "AnchorConfig",
    "ArchConfig",
    "CheckpointError",
    "CheckpointVersionError",
    "CorruptCheckpointError",
    "Detection",
    "DetectionNetwork",
    "DivergenceError",
    "EpochStats",
    "LossBreakdown",
    "LossWeights",
    "MaskTarget",
    "ModelParams",
    "SgdState",
    "StageOutputs",
    "StageTargets",
    "TrainConfig",
    "TrainingDivergedError",
    "cls_log_loss",
    "decode_deltas",
    "encode_deltas",
    "generate_anchors",
    "infer",
    "label_anchors",
    "load_model",
    "mask_bce",
    "network_from_params",
    "network_to_params",
    "normalize_image",
    "params_digest",
    "sample_rois",
    "save_model",
    "sgd_step",
    "smooth_l1",
    "total_loss",
    "train",
    "write_loss_curve",
]
