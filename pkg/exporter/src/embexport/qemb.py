"""Writer for the binary embedding container the audit toolkit reads.

Layout: 4-byte magic "QEMB", one version byte, vector width as
little-endian u32, row count as little-endian u64, then the payload as
row-major little-endian float32. The file is assembled in memory first
so a failed export never leaves a partial container behind.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import NonFiniteError, WidthError

MAGIC = b"QEMB"
VERSION = 1
_HEADER = struct.Struct("<4sBIQ")
HEADER_SIZE = _HEADER.size


def write_qemb(path: str | Path, matrix: np.ndarray) -> None:
    """Serialize a (count, width) float matrix to path."""
    arr = np.ascontiguousarray(np.asarray(matrix), dtype="<f4")
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise WidthError(
            f"need a 2-D matrix with positive width, got shape {arr.shape}"
        )
    if not np.isfinite(arr).all():
        row = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise NonFiniteError(f"non-finite value in row {row}")
    header = _HEADER.pack(MAGIC, VERSION, arr.shape[1], arr.shape[0])
    Path(path).write_bytes(header + arr.tobytes(order="C"))
