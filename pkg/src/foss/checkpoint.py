"""Binary checkpoint container.

Layout (little-endian throughout):

    magic  b"FOSS1"
    u32    tensor count
    per tensor:
        u16  name length, then UTF-8 name
        u8   dtype code (0 = float32, 1 = float64)
        u8   rank
        u32  dims[rank]
        raw  values, little-endian, C order
    u32    metadata length, then UTF-8 JSON metadata

Loads reject wrong magic, truncation, and duplicate names with distinct
error types so callers can tell corruption modes apart.
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"FOSS1"

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(Exception):
    """Base class for checkpoint container failures."""


class MagicError(CheckpointError):
    """The file does not start with the FOSS1 magic bytes."""


class TruncationError(CheckpointError):
    """The file ended before the declared content."""


class DuplicateNameError(CheckpointError):
    """The same tensor name appears more than once."""


class MissingParameterError(CheckpointError):
    """A required parameter name is absent from the checkpoint."""


def save(path: str, tensors: dict[str, np.ndarray], metadata: dict) -> None:
    names = list(tensors)
    if len(names) != len(set(names)):
        raise DuplicateNameError("duplicate tensor names")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            arr = np.ascontiguousarray(tensors[name])
            if arr.dtype not in _CODE_FOR:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", _CODE_FOR[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())
        blob = json.dumps(metadata, separators=(",", ":")).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncationError(
                f"need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(len(MAGIC)) != MAGIC:
        raise MagicError(f"{path}: bad magic bytes")
    (count,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        if name in tensors:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        code, rank = r.unpack("<BB")
        if code not in _DTYPE_CODES:
            raise CheckpointError(f"unknown dtype code {code} for {name!r}")
        dims = r.unpack(f"<{rank}I")
        dtype = _DTYPE_CODES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(
            r.take(nbytes), dtype=dtype).reshape(dims).copy()
    (meta_len,) = r.unpack("<I")
    metadata = json.loads(r.take(meta_len).decode("utf-8"))
    return tensors, metadata


def save_model(path: str, model, metadata: dict | None = None) -> None:
    md = dict(metadata or {})
    md.setdefault("config", vars(model.config) if hasattr(model.config, "__dict__")
                  else model.config)
    save(path, {p.name: p.data for p in model.params()}, md)


def load_model(path: str, model) -> dict:
    """Load weights into an existing model; returns the metadata dict."""
    tensors, metadata = load(path)
    for p in model.params():
        if p.name not in tensors:
            raise MissingParameterError(f"checkpoint lacks parameter {p.name!r}")
        arr = tensors[p.name]
        if arr.shape != p.data.shape:
            raise CheckpointError(
                f"parameter {p.name!r}: shape {arr.shape} != {p.data.shape}")
        p.data = arr.astype(p.data.dtype)
    return metadata
