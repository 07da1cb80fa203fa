"""Adam training loop and threshold tuning for CSEN models."""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..metrics import mask_metrics
from ..numerics import make_rng
from .model import CsenModel, _as_batch, _backward, _forward, cross_entropy_gradients, predict

log = logging.getLogger(__name__)


class LossKind(str, enum.Enum):
    MSE = "mse"
    CROSS_ENTROPY_GROUPED = "ce_grouped"


class TrainingDiverged(FloatingPointError):
    pass


class DeadNetwork(RuntimeError):
    """The output map is zero on every training sample and no gradient moved.

    With the output ReLU inactive on every training pixel no parameter can
    ever change again, so further epochs are wasted; callers may
    reinitialise. (Zero gradients alone can also mean a perfect or
    clamp-saturated fit, which is not an error.)
    """


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 128
    loss: LossKind = LossKind.MSE
    seed: int = 0
    dtype: str = "float64"
    # samples per forward/backward pass inside a mini-batch; bounds memory only
    chunk: int = 32

    def as_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = LossKind(self.loss).value
        return d


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])

    def update(self, params: list[np.ndarray], grads: list[np.ndarray], cfg: TrainConfig) -> None:
        self.step += 1
        c1 = 1.0 - cfg.beta1**self.step
        c2 = 1.0 - cfg.beta2**self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)


@dataclass
class TrainHistory:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    seconds: float = 0.0

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("epoch,train_loss,val_loss,val_f1\n")
            for row in zip(self.epoch, self.train_loss, self.val_loss, self.val_f1):
                f.write(",".join(repr(float(v)) if i else str(v) for i, v in enumerate(row)) + "\n")


def _flat_grads(grads) -> list[np.ndarray]:
    out = []
    for g in grads:
        if g is not None:
            out.extend(g)
    return out


def _mse_batch_grads(model, x, v, dtype):
    xb, _ = _as_batch(model, x)
    p, state = _forward(model, xb, dtype, keep=True)
    p = p.astype(float)
    loss = float(np.sum((p - v) ** 2))
    return loss, _backward(model, 2.0 * (p - v), state, dtype)


def batch_gradients(model: CsenModel, x, target, cfg: TrainConfig, groups=None):
    """Summed loss and gradients over a batch, accumulated chunk by chunk in
    a fixed order so the result does not depend on chunking at run time."""
    dtype = np.dtype(cfg.dtype)
    total = 0.0
    acc = None
    for s in range(0, len(x), cfg.chunk):
        xs, ts = x[s:s + cfg.chunk], target[s:s + cfg.chunk]
        if LossKind(cfg.loss) is LossKind.MSE:
            loss, grads = _mse_batch_grads(model, xs, ts, dtype)
        else:
            loss, grads = cross_entropy_gradients(model, xs, ts, groups, dtype)
        flat = [g.astype(float) for g in _flat_grads(grads)]
        acc = flat if acc is None else [a + g for a, g in zip(acc, flat)]
        total += loss
    return total, acc


def evaluate_loss(model: CsenModel, x, masks, dtype="float64", batch_size: int = 256) -> float:
    p = predict(model, x, batch_size, np.dtype(dtype))
    return float(np.sum((p - masks) ** 2) / max(len(x), 1))


def mean_f1(p: np.ndarray, masks: np.ndarray, tau: float) -> float:
    return float(mask_metrics(p > tau, masks)[:, 2].mean())


def tune_threshold(p: np.ndarray, masks: np.ndarray, taus=None) -> tuple[float, float]:
    """Grid search for the F1-maximizing threshold; returns (tau, f1).

    Ties go to the smallest tau.
    """
    if taus is None:
        taus = np.round(np.arange(0.05, 0.951, 0.05), 2)
    best = (float(taus[0]), -1.0)
    for tau in taus:
        f1 = mean_f1(p, masks, float(tau))
        if f1 > best[1]:
            best = (float(tau), f1)
    return best


def train(model: CsenModel, x, target, cfg: TrainConfig, x_val=None, v_val=None,
          groups=None, tau: float = 0.5, progress: bool = False):
    """Train a copy of ``model`` with Adam; returns ``(trained, history)``.

    ``target`` holds binary masks (MSE loss) or integer class labels
    (grouped cross-entropy, which also needs ``groups``). The per-batch loss
    is the mean over samples of the per-sample loss. Raises
    :class:`TrainingDiverged` if the loss becomes non-finite and
    :class:`DeadNetwork` if the output stays identically zero with no
    gradient during an epoch.
    """
    x = np.asarray(x, dtype=float)
    target = np.asarray(target)
    if len(x) == 0:
        raise ValueError("empty training set")
    if LossKind(cfg.loss) is LossKind.CROSS_ENTROPY_GROUPED and groups is None:
        raise ValueError("grouped cross-entropy needs class groups")
    model = model.copy()
    params = model.flat_params()
    adam = AdamState.zeros_like(params)
    rng = make_rng(cfg.seed)
    hist = TrainHistory()
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        ep_loss = 0.0
        alive = False
        for s in range(0, len(x), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = batch_gradients(model, x[idx], target[idx], cfg, groups)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {s}")
            scale = 1.0 / len(idx)
            alive = alive or any(np.any(g) for g in grads)
            adam.update(params, [g * scale for g in grads], cfg)
            ep_loss += loss
        if not alive and not np.any(predict(model, x, 256, np.dtype(cfg.dtype))):
            raise DeadNetwork(f"output map identically zero with zero gradients at epoch {epoch}")
        hist.epoch.append(epoch)
        hist.train_loss.append(ep_loss / len(x))
        if x_val is not None and LossKind(cfg.loss) is LossKind.MSE:
            p_val = predict(model, x_val, 256, np.dtype(cfg.dtype)).astype(float)
            hist.val_loss.append(float(np.sum((p_val - v_val) ** 2) / len(x_val)))
            hist.val_f1.append(mean_f1(p_val, v_val, tau))
        else:
            hist.val_loss.append(float("nan"))
            hist.val_f1.append(float("nan"))
        if progress:
            log.info("epoch %d loss %.4f val_loss %.4f val_f1 %.4f (%.0fs)", epoch, hist.train_loss[-1],
                     hist.val_loss[-1], hist.val_f1[-1], time.perf_counter() - t0)
    hist.seconds = time.perf_counter() - t0
    model.meta["train_config"] = cfg.as_dict()
    model.meta["adam_step"] = adam.step
    model.adam = adam
    return model, hist
