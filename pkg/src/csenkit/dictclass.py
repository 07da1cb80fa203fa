"""Representation-based classification with class-grouped dictionaries.

Atoms are stacked class by class (``D[:, groups[c]]`` holds class ``c``).
For CSEN each class is also given a rectangular block of a 2-D grid, so the
non-zero coefficients of a query cluster spatially. ``col_to_pixel`` maps a
dictionary column to its row-major grid index; :attr:`ClassDictionary.grid_D`
is the dictionary with columns in grid order, which is what the proxy
operator for a CSEN classifier is built from.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .csen.model import CsenModel, classify_head, forward
from .numerics import ProxyOperator, apply_proxy, make_rng, normalize_columns
from .solvers import crc_solution, debias_ls, fista_lasso


@dataclass(frozen=True)
class ClassDictionary:
    D: np.ndarray
    groups: tuple[range, ...]
    grid: tuple[int, int]
    col_to_pixel: np.ndarray

    @property
    def class_count(self) -> int:
        return len(self.groups)

    @property
    def pixel_to_col(self) -> np.ndarray:
        return np.argsort(self.col_to_pixel)

    @property
    def grid_D(self) -> np.ndarray:
        return self.D[:, self.pixel_to_col]

    @property
    def pixel_groups(self) -> list[np.ndarray]:
        return [self.col_to_pixel[list(g)] for g in self.groups]

    def to_grid(self, coeffs) -> np.ndarray:
        """Place a coefficient vector (stacked order) onto the grid."""
        out = np.zeros(self.grid[0] * self.grid[1])
        out[self.col_to_pixel] = coeffs
        return out.reshape(self.grid)

    def from_grid(self, plane) -> np.ndarray:
        return np.asarray(plane).ravel()[self.col_to_pixel]


def block_layout(class_count: int, atoms: int, block: tuple[int, int],
                 classes_per_row: int | None = None) -> tuple[tuple[int, int], np.ndarray]:
    """Grid shape and column->pixel map placing each class in a ``block``.

    Atom ``j`` of a class fills its block row-major; blocks are tiled left to
    right, ``classes_per_row`` per row (default: all classes in one row).
    """
    bh, bw = block
    if bh * bw != atoms:
        raise ValueError(f"block {block} holds {bh * bw} atoms, need {atoms}")
    per_row = classes_per_row or class_count
    rows = -(-class_count // per_row)
    H, W = rows * bh, per_row * bw
    if rows * per_row != class_count:
        raise ValueError("classes must fill the block rows exactly")
    c, j = np.divmod(np.arange(class_count * atoms), atoms)
    r = (c // per_row) * bh + j // bw
    q = (c % per_row) * bw + j % bw
    return (H, W), r * W + q


def build_class_dictionary(samples, block: tuple[int, int] | None = None,
                           classes_per_row: int | None = None) -> ClassDictionary:
    """Stack per-class feature vectors into a normalized grouped dictionary.

    ``samples`` maps class index (0..c-1) to a list/array of feature vectors,
    or is a sequence indexed by class. Every class needs the same number of
    atoms. ``block`` defaults to one column per class, ``(atoms, 1)``.
    """
    if isinstance(samples, dict):
        keys = sorted(samples)
        if keys != list(range(len(keys))):
            raise ValueError("class ids must be 0..c-1")
        per_class = [np.atleast_2d(np.asarray(samples[k], dtype=float)) for k in keys]
    else:
        per_class = [np.atleast_2d(np.asarray(s, dtype=float)) for s in samples]
    counts = {len(a) for a in per_class}
    dims = {a.shape[1] for a in per_class}
    if len(counts) != 1:
        raise ValueError(f"unequal samples per class: {sorted(counts)}")
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dims: {sorted(dims)}")
    atoms = counts.pop()
    D = normalize_columns(np.concatenate(per_class).T)
    groups = tuple(range(c * atoms, (c + 1) * atoms) for c in range(len(per_class)))
    grid, c2p = block_layout(len(per_class), atoms, block or (atoms, 1), classes_per_row)
    return ClassDictionary(D, groups, grid, c2p)


@dataclass
class Classification:
    label: int
    scores: np.ndarray  # residuals (SRC/CRC, lower wins) or probabilities (CSEN)
    converged: bool = True
    seconds: float = 0.0


def class_residuals(cd: ClassDictionary, y, x_hat, debias: bool = False) -> np.ndarray:
    """``e_i = ||y - D_i x_i||`` using each class's own coefficients."""
    e = np.empty(cd.class_count)
    for c, g in enumerate(cd.groups):
        cols = list(g)
        if debias:
            nz = [j for j in cols if x_hat[j] != 0]
            coef = debias_ls(cd.D[:, nz], y, range(len(nz))) if nz else np.zeros(0)
            e[c] = np.linalg.norm(y - cd.D[:, nz] @ coef)
        else:
            e[c] = np.linalg.norm(y - cd.D[:, cols] @ x_hat[cols])
    return e


def _unit(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    ny = np.linalg.norm(y)
    return y / ny if ny > 0 else y


def src_classify(cd: ClassDictionary, y, lam: float = 5e-2, max_iters: int = 2000,
                 rel_tol: float = 1e-7, debias: bool = False) -> Classification:
    """Sparse-representation classification (l1 code, then min class residual)."""
    t0 = time.perf_counter()
    y = _unit(y)
    res = fista_lasso(cd.D, y, lam, max_iters=max_iters, rel_tol=rel_tol)
    e = class_residuals(cd, y, res.x_hat, debias)
    return Classification(int(np.argmin(e)), e, res.converged, time.perf_counter() - t0)


def crc_classify(cd: ClassDictionary, y, lam: float = 1e-2) -> Classification:
    """Collaborative-representation classification (ridge code)."""
    t0 = time.perf_counter()
    y = _unit(y)
    x = crc_solution(cd.D, y, lam).x_hat
    e = class_residuals(cd, y, x)
    return Classification(int(np.argmin(e)), e, True, time.perf_counter() - t0)


def csen_classify(model: CsenModel, cd: ClassDictionary, y, proxy_op: ProxyOperator) -> Classification:
    """Class probabilities from a CSEN's average-pooled output map."""
    if tuple(model.grid) != tuple(cd.grid) or tuple(proxy_op.grid) != tuple(cd.grid):
        raise ValueError(f"model grid {model.grid} / proxy grid {proxy_op.grid} != dictionary grid {cd.grid}")
    t0 = time.perf_counter()
    p = forward(model, apply_proxy(proxy_op, _unit(y)))
    probs = classify_head(p, cd.pixel_groups)
    return Classification(int(np.argmax(probs)), probs, True, time.perf_counter() - t0)


def nearest_subspace(cd: ClassDictionary, y) -> int:
    """Class whose atoms' span is closest to ``y`` (per-class LS projection)."""
    y = _unit(y)
    e = []
    for g in cd.groups:
        sub = cd.D[:, list(g)]
        c, *_ = np.linalg.lstsq(sub, y, rcond=None)
        e.append(np.linalg.norm(y - sub @ c))
    return int(np.argmin(e))


class SyntheticClasses(NamedTuple):
    samples: dict          # class -> (atoms, dim) dictionary atoms
    queries: np.ndarray    # (class_count * queries, dim), shuffled
    labels: np.ndarray
    train_queries: np.ndarray
    train_labels: np.ndarray


def synthetic_classes(class_count: int, atoms: int, dim: int, queries: int, seed: int,
                      subspace_dim: int = 3, noise: float = 1.0, train_queries: int = 0) -> SyntheticClasses:
    """Gaussian class clouds around random low-dimensional affine subspaces.

    Draws, in order: the dictionary atoms (``atoms`` per class), the test
    queries (``queries`` per class) and, optionally, an independent training
    set (``train_queries`` per class) for learned classifiers. Asking for
    training queries leaves the atoms and test queries unchanged.
    """
    rng = make_rng(seed)
    bases = [np.linalg.qr(rng.standard_normal((dim, subspace_dim)))[0] for _ in range(class_count)]
    centers = [rng.standard_normal(dim) for _ in range(class_count)]

    def draw(c, count, g):
        coef = g.standard_normal((count, subspace_dim))
        return centers[c] + coef @ bases[c].T + noise * g.standard_normal((count, dim))

    def labelled(count, g):
        qs = [draw(c, count, g) for c in range(class_count)]
        labels = np.repeat(np.arange(class_count), count)
        order = g.permutation(len(labels))
        return np.concatenate(qs)[order], labels[order]

    samples = {c: draw(c, atoms, rng) for c in range(class_count)}
    q, lab = labelled(queries, rng)
    tq, tl = labelled(train_queries, make_rng(seed + 1)) if train_queries else (np.zeros((0, dim)), np.zeros(0, int))
    return SyntheticClasses(samples, q, lab, tq, tl)
