"""Central finite-difference verification of the analytic CSEN gradients."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..numerics import make_rng
from .model import CsenModel, backward_gradients, loss_mse, forward


class GradCheck(NamedTuple):
    max_rel_error: float
    rel_errors: np.ndarray
    probes: list  # (layer, "W"|"b", flat index)


def _loss(model: CsenModel, proxy, mask) -> float:
    return loss_mse(forward(model, proxy), mask)


def finite_difference_check(model: CsenModel, proxy, mask, probes: int = 100, h: float = 1e-5,
                            seed: int = 0, floor: float = 1e-8) -> GradCheck:
    """Compare analytic gradients with ``(L(t+h) - L(t-h)) / 2h`` at random
    parameter coordinates.

    The relative error is ``|a - f| / max(|a|, |f|, floor)``; the floor keeps
    exactly-zero gradients (dead units) from dividing by zero.
    """
    _, grads = backward_gradients(model, proxy, mask)
    slots = [(i, part) for i, p in enumerate(model.params) if p is not None for part in (0, 1)]
    sizes = np.array([model.params[i][part].size for i, part in slots], dtype=float)
    rng = make_rng(seed)
    work = model.copy()
    errs, where = [], []
    for _ in range(probes):
        s = int(rng.choice(len(slots), p=sizes / sizes.sum()))
        i, part = slots[s]
        arr = work.params[i][part]
        j = int(rng.integers(arr.size))
        flat = arr.reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        up = _loss(work, proxy, mask)
        flat[j] = orig - h
        down = _loss(work, proxy, mask)
        flat[j] = orig
        fd = (up - down) / (2 * h)
        an = float(grads[i][part].reshape(-1)[j])
        errs.append(abs(an - fd) / max(abs(an), abs(fd), floor))
        where.append((i, "Wb"[part], j))
    errs = np.array(errs)
    return GradCheck(float(errs.max()), errs, where)


def toy_problem(arch: str, grid=(8, 8), seed: int = 0, batch: int = 2):
    """A small random (model, proxy, mask) triple whose outputs straddle the
    clamp range, so most probed weights carry non-zero gradient."""
    from .model import csen1_init, csen2_init

    model = (csen1_init if arch == "csen1" else csen2_init)(grid, seed)
    rng = make_rng(seed + 1)
    for k, p in enumerate(model.params):
        if p is not None:
            W, b = p
            b += 0.05 * rng.standard_normal(b.shape)  # break exact ReLU symmetries at zero
    proxy = rng.uniform(0.0, 1.0, (batch, *grid))
    mask = (rng.uniform(size=(batch, *grid)) > 0.6).astype(float)
    return model, proxy, mask
