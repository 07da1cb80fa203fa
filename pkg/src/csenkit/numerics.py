"""Dense kernels, seeded random ensembles and the linear proxy operators.

Matrices are plain 2-D ``float64`` numpy arrays. Randomness goes through
:func:`make_rng`, a Philox counter-based generator keyed by a seed, so draws
are reproducible across platforms; per-trial seeds come from
:func:`derive_seed`.
"""
from __future__ import annotations

import enum
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg

CSM1_MAGIC = b"CSENMAT1"

DEFAULT_LMMSE_LAMBDA = 1e-2


class NumericFailure(ArithmeticError):
    """A linear solve missed its residual bound."""


class DegenerateAtomError(ValueError):
    """A dictionary column has zero norm."""

    def __init__(self, column: int):
        super().__init__(f"column {column} has zero norm")
        self.column = column


# ---------------------------------------------------------------- randomness


def make_rng(seed: int) -> np.random.Generator:
    """Philox-4x64 generator keyed by ``seed`` (any non-negative int)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def derive_seed(master_seed: int, *indices: int) -> int:
    """Mix a master seed with integer indices into an independent 63-bit seed.

    Uses numpy's ``SeedSequence`` hashing with the indices as spawn key, so
    ``derive_seed(s, i, j)`` never collides with ``derive_seed(s, j, i)``.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(i) for i in indices))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return int((int(hi) << 32 | int(lo)) & 0x7FFF_FFFF_FFFF_FFFF)


def gaussian_matrix(m: int, n: int, seed: int) -> np.ndarray:
    """m x n matrix with i.i.d. N(0, 1/m) entries."""
    if m < 1 or n < 1:
        raise ValueError(f"dimensions must be positive, got ({m}, {n})")
    return make_rng(seed).standard_normal((m, n)) / np.sqrt(m)


# ------------------------------------------------------------------- kernels


def normalize_columns(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateAtomError(int(zero[0]))
    return M / norms


class PowerResult(NamedTuple):
    value: float
    iterations: int
    converged: bool


def spectral_norm_sq(M: np.ndarray, iters: int = 500, tol: float = 1e-10, seed: int = 0) -> PowerResult:
    """Largest eigenvalue of ``M.T @ M`` by power iteration.

    On non-convergence a ``RuntimeWarning`` is issued and the last estimate
    is returned with ``converged=False``.
    """
    M = np.asarray(M, dtype=float)
    if not np.any(M):
        raise ValueError("matrix is zero")
    v = make_rng(seed).standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, iters + 1):
        w = M.T @ (M @ v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            # v landed in the null space; restart from a fresh direction
            v = make_rng(seed + it).standard_normal(M.shape[1])
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        if abs(new - est) <= tol * abs(new):
            return PowerResult(new, it, True)
        est = new
    warnings.warn(f"power iteration did not converge in {iters} iterations", RuntimeWarning)
    return PowerResult(est, iters, False)


def soft_threshold(v, t):
    """Elementwise ``sign(v) * max(|v| - t, 0)``; ``t`` may be a vector."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t_arr, 0.0)


def spd_solve(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``G X = rhs`` for symmetric positive definite ``G``.

    Cholesky first; falls back to pivoted LU if the factorization fails.
    """
    try:
        c = scipy.linalg.cho_factor(G, lower=False, check_finite=False)
        return scipy.linalg.cho_solve(c, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.solve(G, rhs, check_finite=False)


def regularized_solve(D: np.ndarray, rhs: np.ndarray, lam: float, tol: float = 1e-8) -> np.ndarray:
    """Solve ``(D^T D + lam I) X = rhs`` and verify the residual."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    G = D.T @ D
    G[np.diag_indices_from(G)] += lam
    X = spd_solve(G, rhs)
    resid = np.max(np.abs(G @ X - rhs)) if X.size else 0.0
    if not np.isfinite(resid) or resid > tol:
        raise NumericFailure(f"regularized solve residual {resid:.3e} exceeds {tol:.0e}")
    return X


# ------------------------------------------------------------------- proxies


class ProxyKind(str, enum.Enum):
    MAX_CORRELATION = "mc"
    LMMSE = "lmmse"


@dataclass(frozen=True)
class ProxyOperator:
    kind: ProxyKind
    B: np.ndarray
    grid: tuple[int, int]
    lam: float | None = None

    def __post_init__(self):
        h, w = self.grid
        if h * w != self.B.shape[0]:
            raise ValueError(f"grid {self.grid} does not cover n={self.B.shape[0]}")


def build_proxy_operator(D: np.ndarray, kind, lam: float = DEFAULT_LMMSE_LAMBDA,
                         grid: tuple[int, int] | None = None) -> ProxyOperator:
    """Denoiser matrix B mapping measurements to the n-dimensional proxy.

    ``mc`` gives ``B = D^T``; ``lmmse`` gives ``B = (D^T D + lam I)^{-1} D^T``.
    ``grid`` defaults to ``(1, n)``.
    """
    D = np.asarray(D, dtype=float)
    kind = ProxyKind(kind)
    n = D.shape[1]
    grid = tuple(grid) if grid is not None else (1, n)
    if kind is ProxyKind.MAX_CORRELATION:
        return ProxyOperator(kind, D.T.copy(), grid)
    B = regularized_solve(D, D.T.copy(), lam)
    return ProxyOperator(kind, B, grid, float(lam))


def apply_proxy(P: ProxyOperator, y) -> np.ndarray:
    """Proxy ``B y`` reshaped row-major to ``P.grid``.

    ``y`` may also be a batch of shape ``(count, m)``; the result then has
    shape ``(count, H, W)``.
    """
    y = np.asarray(y, dtype=float)
    m = P.B.shape[1]
    if y.shape[-1] != m:
        raise ValueError(f"measurement length {y.shape[-1]} != {m}")
    if y.ndim == 1:
        return (P.B @ y).reshape(P.grid)
    return (y @ P.B.T).reshape((-1, *P.grid))


# ---------------------------------------------------------------------- CSM1


def write_matrix(path, M: np.ndarray) -> None:
    """Write ``M`` in the CSM1 layout: magic, u64 rows, u64 cols, f64 LE data."""
    M = np.atleast_2d(np.asarray(M, dtype="<f8"))
    with open(path, "wb") as f:
        f.write(encode_matrix(M))


def encode_matrix(M: np.ndarray) -> bytes:
    M = np.atleast_2d(np.asarray(M, dtype="<f8"))
    rows, cols = M.shape
    return CSM1_MAGIC + struct.pack("<QQ", rows, cols) + np.ascontiguousarray(M).tobytes()


def decode_matrix(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one CSM1 block starting at ``offset``; returns (matrix, end offset)."""
    head = buf[offset:offset + 24]
    if len(head) < 24 or head[:8] != CSM1_MAGIC:
        raise ValueError(f"bad CSM1 header at byte {offset}")
    rows, cols = struct.unpack("<QQ", head[8:])
    start = offset + 24
    end = start + 8 * rows * cols
    if len(buf) < end:
        raise ValueError(f"CSM1 data truncated at byte {len(buf)}, expected {end}")
    M = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=start).reshape(rows, cols)
    if not np.all(np.isfinite(M)):
        raise ValueError("CSM1 matrix contains non-finite values")
    return M.astype(float), end


def read_matrix(path) -> np.ndarray:
    M, _ = decode_matrix(Path(path).read_bytes())
    return M
