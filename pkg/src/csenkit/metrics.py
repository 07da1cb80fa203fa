"""Support estimation and recovery quality measures."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

NMSE_FLOOR_DB = -300.0


@dataclass(frozen=True)
class SupportMetrics:
    precision: float
    recall: float
    f1: float
    ce: float

    def as_dict(self) -> dict:
        return asdict(self)


def _index_set(idx) -> set[int]:
    if isinstance(idx, (set, frozenset)):
        return {int(i) for i in idx}
    return {int(i) for i in np.asarray(idx, dtype=np.int64).ravel()}


def support_metrics(predicted, truth, n: int) -> SupportMetrics:
    """Precision, recall, F1 and CE of an estimated support.

    CE is the normalized symmetric difference ``(|P \\ T| + |T \\ P|) / n``,
    i.e. the Hamming distance between the two masks divided by ``n``.
    """
    P, T = _index_set(predicted), _index_set(truth)
    if any(i < 0 or i >= n for i in P | T):
        raise ValueError(f"index outside [0, {n})")
    hit = len(P & T)
    precision = hit / len(P) if P else 0.0
    recall = hit / len(T) if T else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    ce = len(P ^ T) / n
    return SupportMetrics(precision, recall, f1, ce)


def mask_metrics(pred_mask: np.ndarray, true_mask: np.ndarray) -> np.ndarray:
    """Vectorized :func:`support_metrics` over a batch of boolean masks.

    Returns an array of shape ``(count, 4)`` with columns precision, recall,
    f1, ce.
    """
    P = np.asarray(pred_mask, dtype=bool).reshape(len(pred_mask), -1)
    T = np.asarray(true_mask, dtype=bool).reshape(len(true_mask), -1)
    hit = np.sum(P & T, axis=1).astype(float)
    np_, nt = P.sum(axis=1), T.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(np_ > 0, hit / np.maximum(np_, 1), 0.0)
        recall = np.where(nt > 0, hit / np.maximum(nt, 1), 0.0)
        s = precision + recall
        f1 = np.where(s > 0, 2 * precision * recall / np.where(s > 0, s, 1), 0.0)
    ce = np.sum(P ^ T, axis=1) / P.shape[1]
    return np.column_stack([precision, recall, f1, ce])


def _check_nonzero(x: np.ndarray) -> float:
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ValueError("reference signal is zero")
    return nx


def relative_error(x_hat, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - np.asarray(x_hat, dtype=float)) / _check_nonzero(x))


def recovery_success(x_hat, x, tol: float = 0.1) -> bool:
    """True iff ``||x - x_hat||_2 / ||x||_2 <= tol``."""
    return relative_error(x_hat, x) <= tol


def nmse_db(x_hat, x) -> float:
    x = np.asarray(x, dtype=float)
    nx = _check_nonzero(x)
    err = np.linalg.norm(x - np.asarray(x_hat, dtype=float))
    if err == 0:
        return NMSE_FLOOR_DB
    return max(NMSE_FLOOR_DB, float(20 * np.log10(err / nx)))
