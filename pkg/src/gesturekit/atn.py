"""Binary tensor container I/O (.atn) and named-tensor manifests.

Wire format, little-endian throughout: magic ``ATNS``, version u32 (=1),
ndim u32, ndim x u32 dims, then product(dims) float32 values row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensors import Tensor

MAGIC = b"ATNS"
VERSION = 1

# Sanity bounds: reject absurd headers before allocating anything.
MAX_NDIM = 16
MAX_ELEMENTS = 1 << 31


class AtnFormatError(ValueError):
    """Raised for malformed .atn payloads."""


def tensor_bytes(t: Tensor) -> bytes:
    arr = t.array
    head = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype("<f4", copy=False).tobytes(order="C")


def save_tensor(t: Tensor, path) -> None:
    Path(path).write_bytes(tensor_bytes(t))


def tensor_from_bytes(data: bytes) -> Tensor:
    if len(data) < 12:
        raise AtnFormatError("truncated header")
    if data[:4] != MAGIC:
        raise AtnFormatError(f"bad magic {data[:4]!r}")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise AtnFormatError(f"unsupported version {version}")
    if ndim < 1 or ndim > MAX_NDIM:
        raise AtnFormatError(f"dim count out of range: {ndim}")
    if len(data) < 12 + 4 * ndim:
        raise AtnFormatError("truncated dim list")
    dims = struct.unpack_from(f"<{ndim}I", data, 12)
    if any(d < 1 for d in dims):
        raise AtnFormatError(f"dims must be >= 1, got {dims}")
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise AtnFormatError(f"element count overflow: {dims}")
    offset = 12 + 4 * ndim
    payload = len(data) - offset
    if payload < 4 * count:
        raise AtnFormatError(f"truncated payload: need {4 * count} bytes, have {payload}")
    if payload > 4 * count:
        raise AtnFormatError(f"trailing bytes after payload: {payload - 4 * count}")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    return Tensor(arr.reshape(dims))


def load_tensor(path) -> Tensor:
    return tensor_from_bytes(Path(path).read_bytes())


MANIFEST_FORMAT = "atn-manifest/1"


def save_tensor_dict(tensors: dict[str, Tensor], directory, manifest_name: str = "weights.json") -> Path:
    """Write one .atn per entry plus a JSON manifest mapping names to files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for name, tensor in tensors.items():
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)
        fname = f"{safe}.atn"
        save_tensor(tensor, directory / fname)
        files[name] = fname
    manifest = directory / manifest_name
    manifest.write_text(json.dumps({"format": MANIFEST_FORMAT, "tensors": files}, indent=2) + "\n")
    return manifest


def load_tensor_dict(manifest_path) -> dict[str, Tensor]:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise AtnFormatError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT:
        raise AtnFormatError(f"unrecognized manifest format in {manifest_path}")
    out: dict[str, Tensor] = {}
    for name, rel in doc["tensors"].items():
        out[name] = load_tensor(manifest_path.parent / rel)
    return out
