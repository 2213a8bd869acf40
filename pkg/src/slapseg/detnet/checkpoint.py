"""Versioned binary checkpoint: magic, version, JSON header, tensor blob.

Header carries the architecture, the anchor configuration, and a tensor
table (name, dtype, shape, byte offset); tensors follow as little-endian
float64, concatenated in table order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .anchors import AnchorConfig
from .model import ArchConfig, ModelParams

MAGIC = b"SSEGNET\x01"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def save_model(params: ModelParams, path: str | Path) -> None:
    params.validate()
    names = sorted(params.tensors)
    table = []
    offset = 0
    for name in names:
        t = params.tensors[name]
        nbytes = t.size * 8
        table.append({"name": name, "shape": list(t.shape), "dtype": "f8", "offset": offset})
        offset += nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "arch": asdict(params.arch),
        "anchors": asdict(params.anchors),
        "tensors": table,
        "blob_bytes": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for name in names:
            fh.write(np.ascontiguousarray(params.tensors[name], dtype="<f8").tobytes())


def load_model(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError(f"{path}: not a model checkpoint")
    at = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, at)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    at += 4
    (header_len,) = struct.unpack_from("<I", raw, at)
    at += 4
    if len(raw) < at + header_len:
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[at : at + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header: {exc}") from exc
    at += header_len

    blob = raw[at:]
    if len(blob) != header.get("blob_bytes"):
        raise CorruptCheckpointError(
            f"{path}: tensor blob is {len(blob)} bytes, header says {header.get('blob_bytes')}"
        )
    try:
        arch = ArchConfig(
            **{**header["arch"], "channels": tuple(header["arch"]["channels"])}
        )
        anchors = AnchorConfig(
            scales=tuple(header["anchors"]["scales"]),
            aspect_ratios=tuple(header["anchors"]["aspect_ratios"]),
            stride=header["anchors"]["stride"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"{path}: bad config header: {exc}") from exc

    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 8
        if end > len(blob):
            raise CorruptCheckpointError(f"{path}: tensor {entry['name']} out of blob bounds")
        tensors[entry["name"]] = np.frombuffer(blob[start:end], dtype="<f8").reshape(shape).copy()

    params = ModelParams(arch=arch, anchors=anchors, tensors=tensors)
    try:
        params.validate()
    except ValueError as exc:
        raise CheckpointVersionError(f"{path}: {exc}") from exc
    return params
