"""Image raster type and box/geometry primitives."""

from .geometry import Box, ScoredBox, clip_box, iou, nms, rotate_box
from .image import (
    BACKGROUND,
    DEFAULT_PPI,
    GrayImage,
    frame_center,
    load_image,
    map_box_between_frames,
    rotate_image,
    rotated_extent,
    save_image,
)
from .roialign import RoiOutsideGridError, roi_align, roi_sample_coords

__all__ = [
    "BACKGROUND",
    "Box",
    "DEFAULT_PPI",
    "GrayImage",
    "RoiOutsideGridError",
    "ScoredBox",
    "clip_box",
    "frame_center",
    "iou",
    "load_image",
    "map_box_between_frames",
    "nms",
    "roi_align",
    "roi_sample_coords",
    "rotate_box",
    "rotate_image",
    "rotated_extent",
    "save_image",
]
