"""Classical sparse recovery: OMP, FISTA-Lasso, weighted l1, CRC, LS debiasing.

All Lasso objectives use the un-halved data term
``||D x - y||^2 + lam * ||w * x||_1``; gradients and thresholds follow from
that scaling (gradient ``2 D^T (D x - y)``, Lipschitz constant ``2 ||D||^2``).
"""
from __future__ import annotations

import enum
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .numerics import NumericFailure, normalize_columns, regularized_solve, soft_threshold, spectral_norm_sq


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class SolverResult:
    x_hat: np.ndarray
    iterations: int
    converged: bool
    objective: float
    wall_time: float
    support: np.ndarray | None = None
    history: np.ndarray | None = None


class WeightSource(str, enum.Enum):
    UNIFORM = "uniform"
    PROBABILITY_MAP = "probability_map"


@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray
    epsilon: float | None = None
    source: WeightSource = WeightSource.UNIFORM
    clamped: int = 0

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.ones(n))


def weights_from_probability(p, epsilon: float = 1e-2) -> WeightVector:
    """``w_i = 1 / (p_i + epsilon)``; p is clamped into [0, 1] first."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    p = np.asarray(p, dtype=float).ravel()
    clipped = np.clip(p, 0.0, 1.0)
    n_clamped = int(np.count_nonzero(clipped != p))
    return WeightVector(1.0 / (clipped + epsilon), float(epsilon), WeightSource.PROBABILITY_MAP, n_clamped)


# ----------------------------------------------------------------------- OMP


def omp(D, y, k_max: int, res_tol: float = 1e-10) -> SolverResult:
    """Orthogonal matching pursuit.

    Columns are normalized internally; the returned coefficients refer to the
    original (unnormalized) ``D``. Correlation ties go to the lowest index.
    """
    t0 = time.perf_counter()
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = D.shape
    if k_max > m:
        raise ValueError(f"k_max={k_max} exceeds m={m}")
    norms = np.linalg.norm(D, axis=0)
    Dn = normalize_columns(D)
    x = np.zeros(n)
    support: list[int] = []
    coef = np.zeros(0)
    r = y.copy()
    rnorm = np.linalg.norm(r)
    converged = rnorm <= res_tol
    while not converged and len(support) < k_max:
        corr = np.abs(Dn.T @ r)
        corr[support] = -1.0
        j = int(np.argmax(corr))  # first maximum, i.e. lowest index on ties
        trial = support + [j]
        sub = Dn[:, trial]
        if np.linalg.matrix_rank(sub) < len(trial):
            break
        c, *_ = scipy.linalg.lstsq(sub, y, check_finite=False)
        r_new = y - sub @ c
        new_norm = np.linalg.norm(r_new)
        if new_norm >= rnorm:
            break
        support, coef, r, rnorm = trial, c, r_new, new_norm
        converged = rnorm <= res_tol
    if support:
        x[support] = coef / norms[support]
    obj = float(rnorm**2)
    return SolverResult(x, len(support), bool(converged or len(support) == k_max), obj,
                        time.perf_counter() - t0, np.array(sorted(support), dtype=int))


# --------------------------------------------------------------------- FISTA



def lipschitz_constant(D) -> float:
    """``||D||_2^2``: exact singular values for moderate sizes, power iteration beyond."""
    D = np.asarray(D, dtype=float)
    if min(D.shape) <= 4096:
        return float(scipy.linalg.svdvals(D)[0] ** 2)
    return spectral_norm_sq(D).value


def lasso_objective(D, y, x, lam, w=None) -> float:
    r = D @ x - y
    l1 = np.abs(x) if w is None else np.abs(w * x)
    return float(r @ r + lam * l1.sum())


def subgradient_residual(D, y, x, lam, w=None) -> float:
    """Infinity norm of the minimum-norm subgradient of the weighted Lasso."""
    g = 2.0 * (D.T @ (D @ x - y))
    t = lam * (np.ones_like(x) if w is None else w)
    nz = x != 0
    res = np.where(nz, np.abs(g + t * np.sign(x)), np.maximum(np.abs(g) - t, 0.0))
    return float(res.max()) if res.size else 0.0


def _fista_core(D, y, thresh_w, lam, max_iters, rel_tol, lipschitz, x0, callback=None):
    """Shared iteration for the plain and weighted solvers.

    ``thresh_w`` is the per-coordinate weight vector (all ones for plain
    Lasso). Momentum restarts whenever the objective would increase, and the
    step is then retaken from the last iterate as a plain proximal-gradient
    step, which cannot increase the objective; the accepted sequence is
    therefore non-increasing up to floating-point round-off.
    """
    t0 = time.perf_counter()
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float)
    n = D.shape[1]
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if lipschitz is None:
        lipschitz = lipschitz_constant(D)
    L = 2.0 * lipschitz
    step = 1.0 / L
    thr = (lam * step) * thresh_w
    Dty = D.T @ y
    G = D.T @ D if D.shape[0] >= n // 2 else None

    def grad(v):
        if G is not None:
            return 2.0 * (G @ v - Dty)
        return 2.0 * (D.T @ (D @ v) - Dty)

    def obj(v):
        r = D @ v - y
        return float(r @ r + lam * np.abs(thresh_w * v).sum())

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    f = obj(x)
    z = x.copy()
    t = 1.0
    history = [f]
    converged = False
    it = 0
    cert_tol = 10.0 * rel_tol * lam * float(np.min(thresh_w))
    for it in range(1, max_iters + 1):
        x_new = soft_threshold(z - step * grad(z), thr)
        f_new = obj(x_new)
        if f_new > f:
            t = 1.0
            x_new = soft_threshold(x - step * grad(x), thr)
            f_new = obj(x_new)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        rel = abs(f - f_new) / max(abs(f), np.finfo(float).tiny)
        x, f, t = x_new, f_new, t_new
        history.append(f)
        if callback is not None:
            callback(it, x)
        if rel < rel_tol and subgradient_residual(D, y, x, lam, thresh_w) <= cert_tol:
            converged = True
            break
    return SolverResult(x, it, converged, f, time.perf_counter() - t0, history=np.array(history))


def fista_lasso(D, y, lam: float, max_iters: int = 5000, rel_tol: float = 1e-8,
                lipschitz: float | None = None, x0=None, callback=None) -> SolverResult:
    """Minimize ``||D x - y||^2 + lam ||x||_1`` with FISTA and adaptive restart.

    Convergence needs both a relative objective change below ``rel_tol`` and
    a subgradient residual below ``10 * rel_tol * lam``. ``callback(it, x)``
    is called with every accepted iterate (``x`` is not copied).
    """
    n = np.shape(D)[1]
    return _fista_core(D, y, np.ones(n), lam, max_iters, rel_tol, lipschitz, x0, callback)


def weighted_fista_lasso(D, y, lam: float, w: WeightVector, max_iters: int = 5000,
                         rel_tol: float = 1e-8, lipschitz: float | None = None, x0=None,
                         callback=None) -> SolverResult:
    """Minimize ``||D x - y||^2 + lam ||w * x||_1``."""
    wv = np.asarray(w.w if isinstance(w, WeightVector) else w, dtype=float)
    if np.any(wv <= 0):
        raise ValueError("weights must be positive")
    return _fista_core(D, y, wv, lam, max_iters, rel_tol, lipschitz, x0, callback)


def lasso_path(D, y, lam_final: float, weights=None, steps: int = 6, decay: float = 0.1,
               max_iters: int = 3000, rel_tol: float = 1e-8, lipschitz: float | None = None) -> SolverResult:
    """Lasso with warm-started geometric continuation down to ``lam_final``.

    Starts at ``lam_max = 2 ||D^T y / w||_inf`` (the smallest value giving
    the zero solution) or earlier and decreases by ``decay`` per stage. With
    a small ``lam_final`` this approximates basis pursuit.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[1]
    wv = np.ones(n) if weights is None else np.asarray(getattr(weights, "w", weights), dtype=float)
    if lipschitz is None:
        lipschitz = lipschitz_constant(D)
    lam_max = 2.0 * float(np.max(np.abs(D.T @ y) / wv))
    lams = [lam_final]
    while len(lams) < steps and lams[-1] / decay < lam_max:
        lams.append(lams[-1] / decay)
    x = None
    total = 0
    wall = 0.0
    for lam in reversed(lams):
        res = _fista_core(D, y, wv, lam, max_iters, rel_tol, lipschitz, x)
        x, total, wall = res.x_hat, total + res.iterations, wall + res.wall_time
    res.iterations, res.wall_time = total, wall
    return res


# ------------------------------------------------------------ closed forms


def crc_solution(D, y, lam: float) -> SolverResult:
    """Collaborative representation code ``(D^T D + lam I)^{-1} D^T y``."""
    t0 = time.perf_counter()
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float)
    x = regularized_solve(D, D.T @ y, lam)
    r = D @ x - y
    obj = float(r @ r + lam * x @ x)
    return SolverResult(x, 1, True, obj, time.perf_counter() - t0)


def debias_ls(D, y, support) -> np.ndarray:
    """Least-squares refit restricted to ``support``; zeros elsewhere."""
    D = np.asarray(D, dtype=float)
    support = np.asarray(sorted(int(i) for i in support), dtype=int)
    x = np.zeros(D.shape[1])
    if support.size == 0:
        return x
    if support.size > D.shape[0]:
        raise RankDeficientError(f"support of size {support.size} exceeds m={D.shape[0]}")
    sub = D[:, support]
    c, _, rank, _ = scipy.linalg.lstsq(sub, y, check_finite=False)
    if rank < support.size:
        raise RankDeficientError(f"columns {support.tolist()} are linearly dependent")
    x[support] = c
    return x


def exhaustive_support_oracle(D, y, k: int, guard: int = 10**6, atol: float = 1e-10) -> np.ndarray:
    """Brute-force l0 support of size <= k with minimal restricted-LS residual.

    Supports are scanned by size, then lexicographically; a strictly smaller
    residual (beyond ``atol``) is needed to displace an earlier candidate.
    """
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float)
    n = D.shape[1]
    total = sum(math.comb(n, j) for j in range(k + 1))
    if total > guard:
        raise ValueError(f"{total} candidate supports exceed the guard of {guard}")
    best = ()
    best_res = float(np.linalg.norm(y))
    for size in range(1, k + 1):
        for cand in itertools.combinations(range(n), size):
            sub = D[:, cand]
            c, *_ = np.linalg.lstsq(sub, y, rcond=None)
            res = float(np.linalg.norm(y - sub @ c))
            if res < best_res - atol:
                best, best_res = cand, res
    return np.array(best, dtype=int)


# ------------------------------------------------------------------ batched


@dataclass
class BatchResult:
    X: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    objective: np.ndarray
    wall_time: float


def fista_lasso_batch(D, Y, lam, weights=None, max_iters: int = 5000, rel_tol: float = 1e-8,
                      lipschitz: float | None = None, X0=None) -> BatchResult:
    """Column-wise weighted Lasso for a block of measurements ``Y`` (m x B).

    Same iteration, restart rule and stopping test as :func:`fista_lasso`,
    applied independently per column; converged columns are frozen.
    ``weights`` is None, an (n,) vector or an (n, B) array.
    """
    t0 = time.perf_counter()
    D = np.asarray(D, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, B = D.shape[1], Y.shape[1]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (B,)).copy()
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive")
    Wt = np.ones((n, B)) if weights is None else np.broadcast_to(
        np.asarray(getattr(weights, "w", weights), dtype=float).reshape(n, -1), (n, B)).copy()
    if np.any(Wt <= 0):
        raise ValueError("weights must be positive")
    if lipschitz is None:
        lipschitz = lipschitz_constant(D)
    step = 1.0 / (2.0 * lipschitz)
    DtY = D.T @ Y
    if 2 * D.shape[0] < n:
        def gram(Z):
            return D.T @ (D @ Z)
    else:
        G = D.T @ D

        def gram(Z):
            return G @ Z

    def obj(X, cols):
        R = D @ X - Y[:, cols]
        return np.einsum("ij,ij->j", R, R) + lam[cols] * np.abs(Wt[:, cols] * X).sum(axis=0)

    X = np.zeros((n, B)) if X0 is None else np.asarray(X0, dtype=float).copy()
    f = obj(X, np.arange(B))
    iters = np.zeros(B, dtype=int)
    conv = np.zeros(B, dtype=bool)
    act = np.arange(B)
    Z = X.copy()
    t = np.ones(B)
    thr = (step * lam)[None, :] * Wt
    cert = 10.0 * rel_tol * lam * Wt.min(axis=0)
    for it in range(1, max_iters + 1):
        if act.size == 0:
            break
        Xa, Za, ta, fa = X[:, act], Z[:, act], t[act], f[act]
        Xn = soft_threshold(Za - step * 2.0 * (gram(Za) - DtY[:, act]), thr[:, act])
        fn = obj(Xn, act)
        bad = fn > fa
        if np.any(bad):
            ta = np.where(bad, 1.0, ta)
            cols = act[bad]
            Xb = soft_threshold(Xa[:, bad] - step * 2.0 * (gram(Xa[:, bad]) - DtY[:, cols]), thr[:, cols])
            Xn[:, bad] = Xb
            fn[bad] = obj(Xb, cols)
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * ta * ta))
        Z[:, act] = Xn + ((ta - 1.0) / tn) * (Xn - Xa)
        rel = np.abs(fa - fn) / np.maximum(np.abs(fa), np.finfo(float).tiny)
        X[:, act], f[act], t[act] = Xn, fn, tn
        iters[act] = it
        cand = rel < rel_tol
        if np.any(cand):
            cols = act[cand]
            Gr = 2.0 * (gram(X[:, cols]) - DtY[:, cols])
            tt = lam[cols] * Wt[:, cols]
            Xc = X[:, cols]
            res = np.where(Xc != 0, np.abs(Gr + tt * np.sign(Xc)), np.maximum(np.abs(Gr) - tt, 0.0)).max(axis=0)
            done = res <= cert[cols]
            conv[cols[done]] = True
            act = act[~np.isin(act, cols[done])]
    return BatchResult(X, iters, conv, f, time.perf_counter() - t0)


def lasso_path_batch(D, Y, lam_final: float, weights=None, steps: int = 6, decay: float = 0.1,
                     max_iters: int = 3000, rel_tol: float = 1e-8, lipschitz: float | None = None) -> BatchResult:
    """Batched :func:`lasso_path`: one shared lambda schedule for all columns."""
    D = np.asarray(D, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = D.shape[1]
    Wt = None if weights is None else np.asarray(getattr(weights, "w", weights), dtype=float).reshape(n, -1)
    if lipschitz is None:
        lipschitz = lipschitz_constant(D)
    scaled = np.abs(D.T @ Y) / (1.0 if Wt is None else Wt)
    lam_max = 2.0 * float(scaled.max()) if scaled.size else lam_final
    lams = [lam_final]
    while len(lams) < steps and lams[-1] / decay < lam_max:
        lams.append(lams[-1] / decay)
    X = None
    total = np.zeros(Y.shape[1], dtype=int)
    wall = 0.0
    for lam in reversed(lams):
        res = fista_lasso_batch(D, Y, lam, Wt, max_iters, rel_tol, lipschitz, X)
        X, total, wall = res.X, total + res.iterations, wall + res.wall_time
    return BatchResult(X, total, res.converged, res.objective, wall)


__all__ = [
    "NumericFailure",
    "RankDeficientError",
    "BatchResult",
    "SolverResult",
    "WeightSource",
    "WeightVector",
    "crc_solution",
    "debias_ls",
    "exhaustive_support_oracle",
    "fista_lasso",
    "fista_lasso_batch",
    "lasso_objective",
    "lipschitz_constant",
    "lasso_path",
    "lasso_path_batch",
    "omp",
    "subgradient_residual",
    "weighted_fista_lasso",
    "weights_from_probability",
]
