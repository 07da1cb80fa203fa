"""NHWC kernels for 3x3 zero-padded convolution, 2x max pooling and 2x
nearest-neighbour upsampling, each with an exact backward pass.

Convolution weights have shape ``(3, 3, in, out)`` and the layer computes
``out[y, x] = sum_{dy, dx} pad(inp)[y + dy, x + dx] @ W[dy, dx]``.

Two equivalent strategies are used depending on channel counts: explicit
patch extraction (im2col) when the side being expanded has few channels,
and a single matmul over the padded map followed by nine shifted adds
otherwise. Both keep a fixed summation order, so results are reproducible.
"""
from __future__ import annotations

import numpy as np

_OFFSETS = [(dy, dx) for dy in range(3) for dx in range(3)]


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))


def _patches(xp: np.ndarray, H: int, W: int) -> np.ndarray:
    """(B, H, W, 9 * C) patch matrix from a padded map."""
    B, _, _, C = xp.shape
    cols = np.empty((B, H, W, 9, C), dtype=xp.dtype)
    for k, (dy, dx) in enumerate(_OFFSETS):
        cols[:, :, :, k, :] = xp[:, dy:dy + H, dx:dx + W, :]
    return cols.reshape(B, H, W, 9 * C)


def _shift_sum(Y: np.ndarray, H: int, W: int, flip: bool) -> np.ndarray:
    """Sum ``Y[:, y+dy, x+dx, k]`` (or the flipped offsets) over the 9 taps."""
    out = None
    for k, (dy, dx) in enumerate(_OFFSETS):
        if flip:
            dy, dx = 2 - dy, 2 - dx
        piece = Y[:, dy:dy + H, dx:dx + W, k, :]
        out = piece.copy() if out is None else out.__iadd__(piece)
    return out


def conv3x3_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Returns ``(out, cache)``; ``cache`` feeds :func:`conv3x3_backward`."""
    B, H, Wd, Ci = x.shape
    Co = W.shape[3]
    xp = _pad(x)
    if Ci <= Co:
        cols = _patches(xp, H, Wd)
        out = cols.reshape(-1, 9 * Ci) @ W.reshape(9 * Ci, Co)
        out = out.reshape(B, H, Wd, Co)
        cache = (xp, cols)
    else:
        Wm = W.transpose(2, 0, 1, 3).reshape(Ci, 9 * Co)
        Y = (xp.reshape(-1, Ci) @ Wm).reshape(B, H + 2, Wd + 2, 9, Co)
        out = _shift_sum(Y, H, Wd, flip=False)
        cache = (xp, None)
    out += b
    return out, cache


def conv3x3_backward(g: np.ndarray, cache, W: np.ndarray, need_input_grad: bool = True):
    """Gradients ``(dx, dW, db)`` for upstream gradient ``g`` of shape (B, H, W, Co)."""
    xp, cols = cache
    B, H, Wd, Co = g.shape
    Ci = W.shape[2]
    g2 = g.reshape(-1, Co)
    db = g2.sum(axis=0)
    if cols is not None:
        dW = (cols.reshape(-1, 9 * Ci).T @ g2).reshape(3, 3, Ci, Co)
    else:
        # shift g onto the padded grid instead of expanding the wider input
        gs = np.zeros((B, H + 2, Wd + 2, 9, Co), dtype=g.dtype)
        for k, (dy, dx) in enumerate(_OFFSETS):
            gs[:, dy:dy + H, dx:dx + Wd, k, :] = g
        dW = (xp.reshape(-1, Ci).T @ gs.reshape(-1, 9 * Co)).reshape(Ci, 3, 3, Co).transpose(1, 2, 0, 3)
    dx = None
    if need_input_grad:
        gp = _pad(g)
        if Co <= Ci:
            # dx[y, x] = sum_k g[y + 1 - dy, x + 1 - dx] @ W[dy, dx].T
            Wf = W[::-1, ::-1].transpose(0, 1, 3, 2).reshape(9 * Co, Ci)
            dx = (_patches(gp, H, Wd).reshape(-1, 9 * Co) @ Wf).reshape(B, H, Wd, Ci)
        else:
            Wm = W.transpose(3, 0, 1, 2).reshape(Co, 9 * Ci)
            Z = (gp.reshape(-1, Co) @ Wm).reshape(B, H + 2, Wd + 2, 9, Ci)
            dx = _shift_sum(Z, H, Wd, flip=True)
    return dx, np.ascontiguousarray(dW), db


def maxpool2_forward(x: np.ndarray):
    B, H, W, C = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"max pooling needs even spatial dims, got {(H, W)}")
    blocks = x.reshape(B, H // 2, 2, W // 2, 2, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, H // 2, W // 2, C, 4)
    arg = blocks.argmax(axis=-1)  # first maximum on ties
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def maxpool2_backward(g: np.ndarray, cache) -> np.ndarray:
    arg, shape = cache
    B, H, W, C = shape
    blocks = np.zeros((B, H // 2, W // 2, C, 4), dtype=g.dtype)
    np.put_along_axis(blocks, arg[..., None], g[..., None], axis=-1)
    return blocks.reshape(B, H // 2, W // 2, C, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(B, H, W, C)


def upsample2_forward(x: np.ndarray):
    return x.repeat(2, axis=1).repeat(2, axis=2), None


def upsample2_backward(g: np.ndarray, cache=None) -> np.ndarray:
    B, H, W, C = g.shape
    return g.reshape(B, H // 2, 2, W // 2, 2, C).sum(axis=(2, 4))
