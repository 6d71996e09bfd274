"""Embedding container: a small binary format for frozen embedding matrices.

Layout, all little-endian:

    offset 0   4 bytes   magic b"QEMB"
    offset 4   1 byte    format version, currently 0x01
    offset 5   4 bytes   dim   (uint32)
    offset 9   8 bytes   count (uint64)
    offset 17  payload   count * dim float32 values, row-major

Total size is exactly 17 + 4 * count * dim bytes. Readers reject wrong
magic, unknown versions, any length mismatch, and non-finite payloads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError, FormatError, TruncationError

MAGIC = b"QEMB"
VERSION = 1
HEADER_SIZE = 17
_HEADER = struct.Struct("<4sBIQ")


@dataclass
class EmbeddingMatrix:
    """A (count, dim) float32 matrix of frozen embeddings.

    Rows align one-to-one with manifest rows; the container stores no ids.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise DataValidationError(
                f"embedding matrix must be 2-D, got shape {arr.shape}"
            )
        self.values = np.ascontiguousarray(arr, dtype=np.float32)

    @property
    def count(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def validate(self) -> None:
        """Raise unless every value is finite."""
        if self.values.size and not np.isfinite(self.values).all():
            bad = int(np.flatnonzero(~np.isfinite(self.values).all(axis=1))[0])
            raise DataValidationError(
                f"embedding matrix holds non-finite values (first bad row {bad})"
            )

    def nonfinite_rows(self) -> list[int]:
        """Row indices holding any NaN or Inf value."""
        if not self.values.size:
            return []
        return np.flatnonzero(~np.isfinite(self.values).all(axis=1)).tolist()


def write_qemb(path: str | Path, matrix: EmbeddingMatrix) -> None:
    """Serialize matrix to path. Errors on non-finite values; never writes
    a partial file (content is assembled in memory first)."""
    matrix.validate()
    if matrix.dim == 0:
        raise FormatError("embedding dim must be positive")
    header = _HEADER.pack(MAGIC, VERSION, matrix.dim, matrix.count)
    payload = matrix.values.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + payload)


def read_qemb(path: str | Path, check_finite: bool = True) -> EmbeddingMatrix:
    """Parse a container file back into an EmbeddingMatrix.

    Raises FormatError on wrong magic or unknown version, TruncationError
    on any length mismatch, DataValidationError on NaN/Inf payloads.
    check_finite=False defers the payload check to the caller, letting
    validation tooling report bad rows instead of failing the read.
    """
    blob = Path(path).read_bytes()
    if len(blob) < HEADER_SIZE:
        raise TruncationError(
            f"file is {len(blob)} bytes, shorter than the {HEADER_SIZE}-byte header"
        )
    magic, version, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unknown format version {version}")
    if dim == 0:
        raise FormatError("declared dim is zero")
    expected = HEADER_SIZE + 4 * count * dim
    if len(blob) != expected:
        raise TruncationError(
            f"payload length mismatch: file is {len(blob)} bytes, "
            f"header declares {expected}"
        )
    values = np.frombuffer(blob, dtype="<f4", offset=HEADER_SIZE).reshape(count, dim)
    matrix = EmbeddingMatrix(values.copy())
    if check_finite:
        matrix.validate()
    return matrix
