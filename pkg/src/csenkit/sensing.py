"""Sparse signal model, support masks and compressive measurement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import gaussian_matrix, make_rng


class UndefinedSNRError(ValueError):
    """Noise was requested for a zero measured signal."""


@dataclass(frozen=True)
class SparseInstance:
    x: np.ndarray
    support: np.ndarray
    mask: np.ndarray

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def k(self) -> int:
        return int(self.support.size)

    @property
    def rho(self) -> float:
        return self.k / self.n


def mask_from_signal(x, magnitude_tol: float = 0.0) -> SparseInstance:
    """Support ``{i : |x_i| > magnitude_tol}`` with its binary mask."""
    if magnitude_tol < 0:
        raise ValueError("magnitude_tol must be non-negative")
    x = np.asarray(x, dtype=float).ravel()
    mask = (np.abs(x) > magnitude_tol).astype(np.uint8)
    return SparseInstance(x, np.flatnonzero(mask), mask)


@dataclass(frozen=True)
class SensingModel:
    """Equivalent dictionary ``D = A @ Phi`` plus its factors."""

    A: np.ndarray
    Phi: np.ndarray | None = None
    D: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        D = self.A if self.Phi is None else self.A @ self.Phi
        object.__setattr__(self, "D", np.asarray(D, dtype=float))
        if not 0 < self.mr <= 1:
            raise ValueError(f"measurement rate {self.mr} outside (0, 1]")

    @property
    def m(self) -> int:
        return self.D.shape[0]

    @property
    def n(self) -> int:
        return self.D.shape[1]

    @property
    def mr(self) -> float:
        return self.m / self.n

    @classmethod
    def gaussian(cls, n: int, mr: float, seed: int) -> "SensingModel":
        """Canonical-basis model (Phi = I) with ``m = round(mr * n)`` Gaussian rows."""
        m = max(1, int(round(mr * n)))
        return cls(gaussian_matrix(m, n, seed))


@dataclass(frozen=True)
class MeasurementBatch:
    y: np.ndarray
    snr_db: float | None = None
    noise_seed: int | None = None


def noise_for_snr(clean: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """White Gaussian noise with ``E||z||^2 = ||clean||^2 / 10^(snr_db/10)`` per row."""
    clean = np.atleast_2d(clean)
    power = np.sum(clean**2, axis=1)
    if np.any(power == 0):
        raise UndefinedSNRError("SNR undefined for a zero measured signal")
    sigma = np.sqrt(power / clean.shape[1] / 10.0 ** (snr_db / 10.0))
    return rng.standard_normal(clean.shape) * sigma[:, None]


def sense(model: SensingModel, x, snr_db: float | None = None, seed: int = 0) -> MeasurementBatch:
    """Measure ``y = D x (+ z)``. ``x`` is one signal or a ``(count, n)`` batch.

    SNR is defined on the measured signal ``D x``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n:
        raise ValueError(f"signal length {x.shape[-1]} != n={model.n}")
    y = x @ model.D.T
    if snr_db is None:
        return MeasurementBatch(y)
    z = noise_for_snr(y, snr_db, make_rng(seed))
    return MeasurementBatch(y + z.reshape(y.shape), float(snr_db), seed)


def sparsity_stats(instances, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of sparsity ratios; edges are uniform on ``[0, max rho]``."""
    rhos = np.array([inst.rho for inst in instances], dtype=float)
    if rhos.size == 0:
        raise ValueError("need at least one instance")
    top = rhos.max()
    if top == 0:
        top = 1.0
    return np.histogram(rhos, bins=bins, range=(0.0, top))


def random_sparse_problem(m: int, n: int, k: int, seed: int):
    """Seeded noise-free test problem ``(D, x, y)``.

    ``D`` is i.i.d. N(0, 1/m); ``x`` has ``k`` non-zeros at uniformly random
    positions with N(0, 1) amplitudes; ``y = D x``.
    """
    from .numerics import derive_seed

    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    D = gaussian_matrix(m, n, derive_seed(seed, 0))
    rng = make_rng(derive_seed(seed, 1))
    x = np.zeros(n)
    idx = rng.choice(n, k, replace=False)
    x[idx] = rng.standard_normal(k)
    return D, x, D @ x
