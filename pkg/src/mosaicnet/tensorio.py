"""Portable binary serialization for 4-D tensors.

Layout (all integers little-endian):

    bytes 0..7    magic  b"MNT4DTNS"
    bytes 8..11   format version, uint32 (currently 1)
    bytes 12..15  reserved, zero
    bytes 16..47  four uint64 shape extents (n, c, h, w)
    bytes 48..51  precision tag, uint32: 32 = float32, 64 = float64
    bytes 52..    raw little-endian element payload, C order

Vectors and scalars are stored by the callers as (1, c, 1, 1) and
(1, 1, 1, 1) tensors so every blob is exactly 4-D.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MNT4DTNS"
VERSION = 1
HEADER = struct.Struct("<8sII4QI")

_TAG_TO_DTYPE = {32: np.dtype("<f4"), 64: np.dtype("<f8")}
_DTYPE_TO_TAG = {np.dtype(np.float32): 32, np.dtype(np.float64): 64}


class TensorFormatError(ValueError):
    """Raised when a blob does not parse as a tensor file."""


def tensor_to_bytes(x: np.ndarray) -> bytes:
    if x.ndim != 4:
        raise TensorFormatError(f"only 4-D tensors are serialized, got shape {x.shape}")
    tag = _DTYPE_TO_TAG.get(np.dtype(x.dtype))
    if tag is None:
        raise TensorFormatError(f"unsupported dtype {x.dtype}")
    header = HEADER.pack(MAGIC, VERSION, 0, *x.shape, tag)
    payload = np.ascontiguousarray(x, dtype=_TAG_TO_DTYPE[tag]).tobytes()
    return header + payload


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < HEADER.size:
        raise TensorFormatError("blob shorter than header")
    magic, version, _reserved, n, c, h, w, tag = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    dtype = _TAG_TO_DTYPE.get(tag)
    if dtype is None:
        raise TensorFormatError(f"unknown precision tag {tag}")
    count = n * c * h * w
    expected = HEADER.size + count * dtype.itemsize
    if len(blob) != expected:
        raise TensorFormatError(f"payload size {len(blob)} != expected {expected}")
    data = np.frombuffer(blob, dtype=dtype, offset=HEADER.size).reshape(n, c, h, w)
    return np.ascontiguousarray(data)


def save_tensor(path, x: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(x))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())
