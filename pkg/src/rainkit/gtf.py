"""GTF1 binary tensor files.

Layout (all little-endian)::

    bytes 0-3    magic b"GTF1"
    bytes 4-7    rank, uint32
    rank * 4     dims, uint32 each
    prod(dims)   float32 values, row-major, channel axis slowest

Only rank 2 (a single field) and rank 3 (a channel stack) are valid.
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO, Union

import numpy as np

MAGIC = b"GTF1"
HEADER_SIZE = 8
MAX_ELEMENTS = 2**31 - 1

PathLike = Union[str, os.PathLike]


class FormatError(ValueError):
    """Malformed GTF1 content. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def encode(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.ndim not in (2, 3):
        raise ValueError(f"GTF1 stores rank 2 or 3 arrays, got rank {arr.ndim}")
    if any(d <= 0 for d in arr.shape):
        raise ValueError(f"dimensions must be positive, got {arr.shape}")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    head = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + payload.tobytes()


def read_from(stream: BinaryIO, base_offset: int = 0) -> np.ndarray:
    """Read one GTF1 record from an open binary stream positioned at its start."""
    head = stream.read(HEADER_SIZE)
    if len(head) < HEADER_SIZE:
        raise FormatError("truncated header", base_offset + len(head))
    if head[:4] != MAGIC:
        raise FormatError(f"bad magic {head[:4]!r}", base_offset)
    (rank,) = struct.unpack("<I", head[4:8])
    if rank not in (2, 3):
        raise FormatError(f"unsupported rank {rank}", base_offset + 4)
    raw_dims = stream.read(4 * rank)
    if len(raw_dims) < 4 * rank:
        raise FormatError("truncated dimension block", base_offset + HEADER_SIZE + len(raw_dims))
    dims = struct.unpack(f"<{rank}I", raw_dims)
    if any(d == 0 for d in dims):
        raise FormatError(f"zero dimension in {dims}", base_offset + HEADER_SIZE)
    count = 1
    for d in dims:
        count *= d
    if count > MAX_ELEMENTS:
        raise FormatError(f"dimension overflow: {dims}", base_offset + HEADER_SIZE)
    payload_offset = base_offset + HEADER_SIZE + 4 * rank
    payload = stream.read(4 * count)
    if len(payload) < 4 * count:
        raise FormatError(
            f"truncated payload: expected {4 * count} bytes, found {len(payload)}",
            payload_offset + len(payload),
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def decode(data: bytes) -> np.ndarray:
    return read_from(io.BytesIO(data))


def write_grid_file(array: np.ndarray, path: PathLike) -> None:
    blob = encode(array)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_grid_file(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = read_from(fh)
        trailing = fh.read(1)
    if trailing:
        raise FormatError("trailing bytes after payload", HEADER_SIZE + 4 * arr.ndim + 4 * arr.size)
    return arr
