"""Reader/writer for the IDX files MNIST ships in (optionally gzipped)."""
from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


def _read(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(buf: bytes, magic: int) -> np.ndarray:
    """Decode an unsigned-byte IDX buffer; dims come from the header."""
    if len(buf) < 4:
        raise IdxFormatError("missing magic number", len(buf))
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise IdxFormatError(f"magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(buf) < head:
        raise IdxFormatError("header truncated", len(buf))
    dims = struct.unpack(f">{ndim}I", buf[4:head])
    size = int(np.prod(dims))
    if len(buf) < head + size:
        raise IdxFormatError(f"data truncated: need {head + size} bytes, have {len(buf)}", len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=head).reshape(dims)


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Images as ``(count, rows*cols)`` floats in [0, 1] and integer labels."""
    images = parse_idx(_read(images_path), IMAGES_MAGIC)
    labels = parse_idx(_read(labels_path), LABELS_MAGIC)
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    return images.reshape(len(images), -1).astype(float) / 255.0, labels.astype(np.int64)


def encode_idx(arr: np.ndarray, magic: int) -> bytes:
    arr = np.asarray(arr, dtype=np.uint8)
    ndim = magic & 0xFF
    if arr.ndim != ndim:
        raise ValueError(f"magic 0x{magic:08x} needs {ndim} dims, array has {arr.ndim}")
    return struct.pack(">I", magic) + struct.pack(f">{ndim}I", *arr.shape) + arr.tobytes()


def write_idx(path, arr: np.ndarray, magic: int) -> None:
    data = encode_idx(arr, magic)
    path = Path(path)
    if path.suffix == ".gz":
        # fixed mtime keeps the archive byte-identical across runs
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)
