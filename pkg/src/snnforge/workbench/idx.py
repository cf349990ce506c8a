"""IDX reader/writer for unsigned-byte image and label files.

Layout (big endian)::

    u32 magic      0x00000803 images, 0x00000801 labels
    u32 dims[n]    n = low byte of magic
    u8  payload    prod(dims) bytes, row-major
"""

from __future__ import annotations

import logging
import struct
import warnings
from math import prod
from pathlib import Path

import numpy as np

from ..dataset import Dataset
from ..errors import DataError, FormatError

log = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
MAX_ELEMENTS = 2**31 - 1


class TrailingBytesWarning(UserWarning):
    pass


def parse_idx(data: bytes, expected_magic: int, source: str = "<bytes>", strict: bool = False) -> np.ndarray:
    """Decode one IDX blob into a uint8 array shaped by its header."""
    if len(data) == 0:
        raise FormatError(f"{source}: empty file")
    if len(data) < 4:
        raise FormatError(f"{source}: truncated header ({len(data)} bytes, need at least 4)")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise FormatError(f"{source}: bad magic, expected 0x{expected_magic:08X}, found 0x{magic:08X}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{source}: truncated header ({len(data)} bytes, need {header} for {ndim} dims)")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    size = prod(dims)
    if size > MAX_ELEMENTS:
        raise FormatError(f"{source}: dimensions {dims} overflow the {MAX_ELEMENTS}-element limit")
    payload = len(data) - header
    if payload < size:
        raise FormatError(f"{source}: truncated payload, header promises {size} bytes, found {payload}")
    if payload > size:
        msg = f"{source}: {payload - size} trailing bytes after the payload"
        if strict:
            raise FormatError(msg)
        warnings.warn(msg, TrailingBytesWarning, stacklevel=3)
        log.warning(msg)
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path, strict: bool = False, num_classes: int = 10) -> Dataset:
    """Read an image/label IDX pair; pixels are scaled to [0, 1] by 1/255."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    images = parse_idx(images_path.read_bytes(), IMAGES_MAGIC, str(images_path), strict)
    labels = parse_idx(labels_path.read_bytes(), LABELS_MAGIC, str(labels_path), strict)
    if len(images) != len(labels):
        raise DataError(f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels")
    inputs = images.astype(np.float64)[:, None, :, :] / 255.0
    return Dataset(inputs, labels.astype(np.int64), num_classes, name=images_path.stem,
                   provenance={"images": images_path.name, "labels": labels_path.name})


def encode_idx(array: np.ndarray, magic: int) -> bytes:
    array = np.asarray(array, dtype=np.uint8)
    if array.ndim != (magic & 0xFF):
        raise FormatError(f"magic 0x{magic:08X} implies {magic & 0xFF} dims, array has {array.ndim}")
    return struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()


def write_idx(path, array: np.ndarray, magic: int) -> None:
    Path(path).write_bytes(encode_idx(array, magic))
