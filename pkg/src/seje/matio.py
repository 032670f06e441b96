"""Binary matrix container used for feature files, embedding dumps, checkpoints.

Layout: an 8-byte magic, then two little-endian uint32 (rows, cols) — a
16-byte header — followed by rows*cols little-endian floats in row-major
order.  Magic ``SEJEMAT1`` stores float32 payloads (feature/embedding files);
magic ``SEJEMAT8`` stores float64 (training checkpoints, intermediate
artifacts that must survive byte-exact round trips).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import DimensionMismatch, MalformedRecord

MAGIC_F32 = b"SEJEMAT1"
MAGIC_F64 = b"SEJEMAT8"
_HEADER = struct.Struct("<8sII")

_DTYPES = {MAGIC_F32: np.dtype("<f4"), MAGIC_F64: np.dtype("<f8")}


def write_block(fh: BinaryIO, matrix: np.ndarray, *, float64: bool = False) -> None:
    """Append one matrix block to an open binary file."""
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise DimensionMismatch(f"matrix block must be 2-D, got shape {arr.shape}")
    magic = MAGIC_F64 if float64 else MAGIC_F32
    data = np.ascontiguousarray(arr, dtype=_DTYPES[magic])
    fh.write(_HEADER.pack(magic, arr.shape[0], arr.shape[1]))
    fh.write(data.tobytes())


def read_block(fh: BinaryIO) -> np.ndarray:
    """Read one matrix block; float32 payloads are widened to float64."""
    header = fh.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise MalformedRecord(
            f"truncated matrix header: got {len(header)} of {_HEADER.size} bytes"
        )
    magic, rows, cols = _HEADER.unpack(header)
    if magic not in _DTYPES:
        raise MalformedRecord(f"unknown matrix magic {magic!r}")
    dtype = _DTYPES[magic]
    payload = fh.read(rows * cols * dtype.itemsize)
    if len(payload) != rows * cols * dtype.itemsize:
        raise DimensionMismatch(
            f"matrix payload truncated: expected {rows}x{cols} {dtype} "
            f"({rows * cols * dtype.itemsize} bytes), got {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(rows, cols)
    return arr.astype(np.float64)


def write_matrix(path: str | Path, matrix: np.ndarray, *, float64: bool = False) -> None:
    """Write a single-block matrix file."""
    with open(path, "wb") as fh:
        write_block(fh, matrix, float64=float64)


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a single-block matrix file (trailing bytes are an error)."""
    with open(path, "rb") as fh:
        arr = read_block(fh)
        if fh.read(1):
            raise MalformedRecord(f"{path}: trailing bytes after matrix payload")
    return arr
