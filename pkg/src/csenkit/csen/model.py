"""CSEN architectures: layer table, parameters, forward and backward passes.

A model maps a proxy plane of shape (H, W) to a support-probability map of
the same shape. Every convolution is 3x3 with zero padding and is followed
by its activation and then (optionally) a 2x down- or up-sampling layer, so
the layer list mirrors ``S(ReLU(b + conv(w, f)))``. The last activation is
clamped into [0, 1].
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..numerics import make_rng
from . import layers as K


class LayerKind(str, enum.Enum):
    CONV3X3 = "conv3x3"
    DOWNSAMPLE2X = "down2x"
    UPSAMPLE2X = "up2x"


class Activation(str, enum.Enum):
    RELU = "relu"
    LINEAR = "linear"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_channels: int
    out_channels: int
    activation: Activation = Activation.LINEAR


def conv(cin: int, cout: int, act: Activation = Activation.RELU) -> LayerSpec:
    return LayerSpec(LayerKind.CONV3X3, cin, cout, act)


def down(c: int) -> LayerSpec:
    return LayerSpec(LayerKind.DOWNSAMPLE2X, c, c)


def up(c: int) -> LayerSpec:
    return LayerSpec(LayerKind.UPSAMPLE2X, c, c)


@dataclass
class CsenModel:
    layers: list[LayerSpec]
    params: list[tuple[np.ndarray, np.ndarray] | None]
    grid: tuple[int, int]
    name: str = "csen"
    meta: dict = field(default_factory=dict)
    adam: object | None = field(default=None, repr=False)

    def __post_init__(self):
        validate_layers(self.layers, self.grid)
        if len(self.params) != len(self.layers):
            raise ValueError("one parameter slot per layer required")

    @property
    def param_count(self) -> int:
        return sum(W.size + b.size for W, b in filter(None, self.params))

    def copy(self) -> "CsenModel":
        params = [None if p is None else (p[0].copy(), p[1].copy()) for p in self.params]
        return CsenModel(list(self.layers), params, self.grid, self.name, dict(self.meta))

    def flat_params(self) -> list[np.ndarray]:
        out = []
        for p in self.params:
            if p is not None:
                out.extend(p)
        return out


def validate_layers(layers: list[LayerSpec], grid: tuple[int, int]) -> None:
    h, w = grid
    ch = 1
    for i, spec in enumerate(layers):
        if spec.in_channels != ch:
            raise ValueError(f"layer {i} expects {spec.in_channels} channels, gets {ch}")
        if spec.kind is LayerKind.DOWNSAMPLE2X:
            if h % 2 or w % 2:
                raise ValueError(f"layer {i} cannot halve odd map {(h, w)}")
            h, w = h // 2, w // 2
        elif spec.kind is LayerKind.UPSAMPLE2X:
            h, w = 2 * h, 2 * w
        ch = spec.out_channels
    if (h, w) != tuple(grid) or ch != 1:
        raise ValueError(f"network maps {tuple(grid)} to {(h, w, ch)}, not {(*grid, 1)}")


def init_params(layers: list[LayerSpec], seed: int) -> list:
    """He-normal kernels (variance 2 / fan_in), zero biases."""
    rng = make_rng(seed)
    params = []
    for spec in layers:
        if spec.kind is not LayerKind.CONV3X3:
            params.append(None)
            continue
        fan_in = 9 * spec.in_channels
        W = rng.standard_normal((3, 3, spec.in_channels, spec.out_channels)) * np.sqrt(2.0 / fan_in)
        params.append((W, np.zeros(spec.out_channels)))
    return params


def build(layers: list[LayerSpec], grid, seed: int, name: str) -> CsenModel:
    grid = (int(grid[0]), int(grid[1]))
    validate_layers(layers, grid)
    return CsenModel(layers, init_params(layers, seed), grid, name)


def csen1_layers() -> list[LayerSpec]:
    return [conv(1, 48), conv(48, 24), conv(24, 1)]


def csen2_layers() -> list[LayerSpec]:
    return [conv(1, 48), down(48), conv(48, 24), up(24), conv(24, 24), conv(24, 1)]


def csen1_init(grid, seed: int = 0) -> CsenModel:
    """Three 3x3 convolutions with 48 and 24 hidden channels."""
    if min(grid) < 3:
        raise ValueError(f"grid {grid} smaller than the 3x3 kernel")
    return build(csen1_layers(), grid, seed, "csen1")


def csen2_init(grid, seed: int = 0) -> CsenModel:
    """CSEN1 with a 2x max-pool after the first layer and a 2x upsampling
    before an extra 24-channel convolution."""
    if grid[0] % 2 or grid[1] % 2:
        raise ValueError(f"CSEN2 needs even grid dims, got {tuple(grid)}")
    return build(csen2_layers(), grid, seed, "csen2")


# ------------------------------------------------------------- evaluation


def _as_batch(model: CsenModel, proxy) -> tuple[np.ndarray, bool]:
    x = np.asarray(proxy)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[1:] != tuple(model.grid):
        raise ValueError(f"proxy shape {x.shape[1:]} != model grid {model.grid}")
    return x[..., None], single


def _forward(model: CsenModel, x: np.ndarray, dtype, keep: bool):
    """Run the layer stack on a (B, H, W, 1) batch; returns (p, caches)."""
    caches = []
    h = x.astype(dtype, copy=False)
    for spec, prm in zip(model.layers, model.params):
        if spec.kind is LayerKind.CONV3X3:
            W, b = prm
            h, cache = K.conv3x3_forward(h, W.astype(dtype, copy=False), b.astype(dtype, copy=False))
            if spec.activation is Activation.RELU:
                active = h > 0
                h = h * active
            else:
                active = None
            caches.append((cache, active) if keep else None)
        elif spec.kind is LayerKind.DOWNSAMPLE2X:
            h, cache = K.maxpool2_forward(h)
            caches.append(cache if keep else None)
        else:
            h, cache = K.upsample2_forward(h)
            caches.append(None)
    p = np.clip(h[..., 0], 0.0, 1.0)
    inside = (h[..., 0] > 0) & (h[..., 0] < 1)
    return p, (caches, inside)


def forward(model: CsenModel, proxy, dtype=np.float64) -> np.ndarray:
    """Probability map for one (H, W) proxy or a (count, H, W) batch."""
    x, single = _as_batch(model, proxy)
    p, _ = _forward(model, x, dtype, keep=False)
    return p[0] if single else p


def predict(model: CsenModel, proxies, batch_size: int = 256, dtype=np.float64) -> np.ndarray:
    """Batched :func:`forward` over many proxies, in fixed chunks."""
    proxies = np.asarray(proxies)
    out = [forward(model, proxies[i:i + batch_size], dtype) for i in range(0, len(proxies), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, *model.grid))


def _backward(model: CsenModel, dp: np.ndarray, state, dtype) -> list:
    """Backpropagate ``dp = dLoss/dp`` (B, H, W) through the stack."""
    caches, inside = state
    g = (dp * inside)[..., None].astype(dtype, copy=False)
    grads: list = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        spec = model.layers[i]
        if spec.kind is LayerKind.CONV3X3:
            cache, active = caches[i]
            if active is not None:
                g = g * active
            W = model.params[i][0].astype(dtype, copy=False)
            g, dW, db = K.conv3x3_backward(g, cache, W, need_input_grad=i > 0)
            grads[i] = (dW, db)
        elif spec.kind is LayerKind.DOWNSAMPLE2X:
            g = K.maxpool2_backward(g, caches[i])
        else:
            g = K.upsample2_backward(g)
    return grads


def loss_mse(p, v) -> float:
    """Sum of squared differences over all pixels (and samples, for batches)."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if p.shape != v.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {v.shape}")
    return float(np.sum((p - v) ** 2))


def backward_gradients(model: CsenModel, proxy, mask, dtype=np.float64):
    """Exact gradients of :func:`loss_mse` w.r.t. every kernel and bias.

    Returns ``(loss, grads)`` where ``grads`` parallels ``model.params``
    (``None`` for parameter-free layers). Batched inputs give the gradient
    of the summed loss.
    """
    x, _ = _as_batch(model, proxy)
    v = np.asarray(mask, dtype=float).reshape(x.shape[:3])
    p, state = _forward(model, x, dtype, keep=True)
    loss = float(np.sum((p - v) ** 2))
    grads = _backward(model, 2.0 * (p - v), state, dtype)
    return loss, grads


def threshold_support(p, tau: float = 0.5) -> np.ndarray:
    """Row-major flat indices with ``p > tau``."""
    return np.flatnonzero(np.asarray(p).ravel() > tau)


# -------------------------------------------------------- classification


def _check_groups(groups, n: int) -> list[np.ndarray]:
    idx = [np.asarray(g, dtype=int).ravel() for g in groups]
    seen = np.concatenate(idx) if idx else np.zeros(0, int)
    if seen.size != n or np.unique(seen).size != n or seen.min(initial=0) < 0 or seen.max(initial=0) >= n:
        raise ValueError("groups must partition the grid")
    return idx


def group_means(p, groups) -> np.ndarray:
    """Per-class mean of a (H, W) map or a (count, H, W) batch."""
    p = np.asarray(p, dtype=float)
    flat = p.reshape(-1, p.shape[-2] * p.shape[-1]) if p.ndim == 3 else p.reshape(1, -1)
    idx = _check_groups(groups, flat.shape[1])
    means = np.stack([flat[:, g].mean(axis=1) for g in idx], axis=1)
    return means if p.ndim == 3 else means[0]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def classify_head(p, groups) -> np.ndarray:
    """Average-pool ``p`` over each class group, then softmax."""
    return softmax(group_means(p, groups))


def cross_entropy_gradients(model: CsenModel, proxy, labels, groups, dtype=np.float64):
    """Loss and gradients for the grouped cross-entropy head.

    ``proxy`` is a (count, H, W) batch and ``labels`` integer classes.
    """
    x, _ = _as_batch(model, proxy)
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    p, state = _forward(model, x, dtype, keep=True)
    n = p.shape[1] * p.shape[2]
    idx = _check_groups(groups, n)
    flat = p.reshape(len(p), n).astype(float)
    means = np.stack([flat[:, g].mean(axis=1) for g in idx], axis=1)
    probs = softmax(means)
    rows = np.arange(len(labels))
    loss = float(-np.sum(np.log(np.maximum(probs[rows, labels], 1e-300))))
    dz = probs.copy()
    dz[rows, labels] -= 1.0
    dflat = np.zeros_like(flat)
    for c, g in enumerate(idx):
        dflat[:, g] = (dz[:, c] / g.size)[:, None]
    grads = _backward(model, dflat.reshape(p.shape), state, dtype)
    return loss, grads
