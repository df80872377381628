"""Write-only emitter for the .atn tensor container.

Layout, little-endian throughout: magic ``ATNS``, version u32 (=1),
ndim u32, ndim x u32 dims, then product(dims) float32 values row-major.

Deliberately free of any dependency on the consuming engine: the bytes
are the whole contract between the two packages.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ATNS"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "tensor_bytes", "write_tensor"]


def tensor_bytes(array) -> bytes:
    # ascontiguousarray promotes 0-d to (1,), so the rank check comes first.
    if np.asarray(array).ndim < 1:
        raise ValueError("scalar tensors are not representable")
    arr = np.ascontiguousarray(array, dtype="<f4")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"dims must be >= 1, got {arr.shape}")
    head = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes(order="C")


def write_tensor(array, path) -> None:
    Path(path).write_bytes(tensor_bytes(array))
