"""CSEN1CKPT model checkpoints.

Layout (little-endian)::

    b"CSEN1CKPT"  u32 version  u32 H  u32 W  u32 n_layers
    n_layers x (u8 kind, u8 activation, u32 in_channels, u32 out_channels)
    u32 len + utf-8 model name
    u32 len + utf-8 JSON metadata
    per conv layer: CSM1 block of the kernel as (9*in, out), CSM1 block of
    the bias as (1, out)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..numerics import decode_matrix, encode_matrix
from .model import Activation, CsenModel, LayerKind, LayerSpec

MAGIC = b"CSEN1CKPT"
VERSION = 1
_KINDS = list(LayerKind)
_ACTS = list(Activation)


def encode_checkpoint(model: CsenModel) -> bytes:
    H, W = model.grid
    out = [MAGIC, struct.pack("<IIII", VERSION, H, W, len(model.layers))]
    for spec in model.layers:
        out.append(struct.pack("<BBII", _KINDS.index(spec.kind), _ACTS.index(spec.activation),
                               spec.in_channels, spec.out_channels))
    for blob in (model.name.encode(), json.dumps(model.meta, sort_keys=True, default=str).encode()):
        out.append(struct.pack("<I", len(blob)) + blob)
    for spec, prm in zip(model.layers, model.params):
        if spec.kind is LayerKind.CONV3X3:
            Wk, b = prm
            out.append(encode_matrix(Wk.reshape(9 * spec.in_channels, spec.out_channels)))
            out.append(encode_matrix(b.reshape(1, -1)))
    return b"".join(out)


def decode_checkpoint(buf: bytes) -> CsenModel:
    if buf[:len(MAGIC)] != MAGIC:
        raise ValueError("not a CSEN1CKPT checkpoint")
    off = len(MAGIC)
    version, H, W, n = struct.unpack_from("<IIII", buf, off)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off += 16
    layers = []
    for _ in range(n):
        k, a, ci, co = struct.unpack_from("<BBII", buf, off)
        off += 10
        layers.append(LayerSpec(_KINDS[k], ci, co, _ACTS[a]))
    blobs = []
    for _ in range(2):
        (size,) = struct.unpack_from("<I", buf, off)
        blobs.append(buf[off + 4:off + 4 + size].decode())
        off += 4 + size
    params = []
    for spec in layers:
        if spec.kind is not LayerKind.CONV3X3:
            params.append(None)
            continue
        Wm, off = decode_matrix(buf, off)
        b, off = decode_matrix(buf, off)
        params.append((Wm.reshape(3, 3, spec.in_channels, spec.out_channels), b.ravel()))
    return CsenModel(layers, params, (H, W), blobs[0], json.loads(blobs[1]))


def save_checkpoint(model: CsenModel, path) -> None:
    Path(path).write_bytes(encode_checkpoint(model))


def load_checkpoint(path) -> CsenModel:
    return decode_checkpoint(Path(path).read_bytes())
