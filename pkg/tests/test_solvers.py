import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csenkit.numerics import build_proxy_operator, gaussian_matrix, make_rng, soft_threshold
from csenkit.sensing import random_sparse_problem
from csenkit.solvers import (
    RankDeficientError,
    WeightSource,
    WeightVector,
    crc_solution,
    debias_ls,
    exhaustive_support_oracle,
    fista_lasso,
    fista_lasso_batch,
    lasso_objective,
    lasso_path,
    lasso_path_batch,
    lipschitz_constant,
    omp,
    subgradient_residual,
    weighted_fista_lasso,
    weights_from_probability,
)


def sparse_instance(seed, m=8, n=12, k=2):
    return random_sparse_problem(m, n, k, seed)


# ------------------------------------------------------------------------ OMP


def test_omp_single_atom():
    D = gaussian_matrix(10, 8, 1)
    res = omp(D, 3 * D[:, 5], 1)
    np.testing.assert_array_equal(res.support, [5])
    assert res.x_hat[5] == pytest.approx(3.0, abs=1e-8)
    assert res.converged


def test_omp_zero_measurement():
    res = omp(gaussian_matrix(5, 7, 0), np.zeros(5), 3)
    assert res.iterations == 0 and not res.x_hat.any()


def test_omp_lowest_index_tie_break():
    D = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])  # columns 0 and 1 identical
    res = omp(D, np.array([2.0, 0.0]), 1)
    np.testing.assert_array_equal(res.support, [0])


def test_omp_stops_on_rank_deficiency():
    D = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    res = omp(D, np.array([1.0, 1.0]) + np.array([0.0, 0.0]), 2)
    assert res.iterations == 2  # col 0 (or 1) then col 2
    D2 = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    res2 = omp(D2, np.array([1.0, 0.5, 0.3]), 2)
    assert res2.iterations == 1 and not res2.converged


def test_omp_kmax_validation():
    with pytest.raises(ValueError):
        omp(np.eye(3), np.ones(3), 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4))
def test_omp_support_bounded_and_residual_decreasing(seed, k):
    D = gaussian_matrix(8, 16, seed)
    y = make_rng(seed).standard_normal(8)
    prev = np.linalg.norm(y)
    for kk in range(1, k + 1):
        res = omp(D, y, kk)
        assert res.support.size <= kk
        r = np.linalg.norm(y - D @ res.x_hat)
        assert r <= prev + 1e-12
        prev = r


def test_omp_mostly_matches_oracle_on_small_instances():
    # Greedy recovery at m=8, n=12, k=2 succeeds on ~91% of Gaussian
    # instances (measured over 3000 draws); the oracle is always exact here.
    hits = exact = 0
    for s in range(100):
        D, x, y = sparse_instance(s)
        oracle = exhaustive_support_oracle(D, y, 2)
        exact += np.array_equal(oracle, np.flatnonzero(x))
        hits += np.array_equal(omp(D, y, 2).support, oracle)
    assert exact == 100
    assert hits >= 85


# ------------------------------------------------------------------- oracle


def test_oracle_examples():
    D = gaussian_matrix(6, 5, 3)
    np.testing.assert_array_equal(exhaustive_support_oracle(D, D[:, 2], 1), [2])
    assert exhaustive_support_oracle(D, D[:, 2], 0).size == 0
    with pytest.raises(ValueError):
        exhaustive_support_oracle(gaussian_matrix(5, 60, 0), np.ones(5), 5, guard=1000)


# -------------------------------------------------------------------- Lasso


def test_lasso_orthogonal_design_closed_form():
    y = np.array([3.0, -0.2, 0.7, -2.0])
    lam = 1.0
    res = fista_lasso(np.eye(4), y, lam)
    np.testing.assert_allclose(res.x_hat, soft_threshold(y, lam / 2), atol=1e-12)
    assert res.converged


def test_lasso_zero_above_lambda_max():
    D = gaussian_matrix(6, 10, 2)
    y = make_rng(2).standard_normal(6)
    lam = 2 * np.max(np.abs(D.T @ y))
    assert not fista_lasso(D, y, lam).x_hat.any()
    assert fista_lasso(D, y, 0.9 * lam).x_hat.any()


def _ista_reference(D, y, lam, iters):
    L = 2 * np.linalg.norm(D, 2) ** 2
    x = np.zeros(D.shape[1])
    for _ in range(iters):
        x = soft_threshold(x - 2 * D.T @ (D @ x - y) / L, lam / L)
    return x


def test_lasso_objective_matches_long_ista():
    D = gaussian_matrix(7, 10, 4)
    y = make_rng(4).standard_normal(7)
    lam = 0.1
    ref = lasso_objective(D, y, _ista_reference(D, y, lam, 200_000), lam)
    res = fista_lasso(D, y, lam, rel_tol=1e-12, max_iters=20000)
    assert res.objective == pytest.approx(ref, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1e-3, 1e-2, 1e-1]))
def test_lasso_monotone_and_certified(seed, lam):
    D = gaussian_matrix(8, 14, seed)
    y = make_rng(seed + 1).standard_normal(8)
    rel_tol = 1e-8
    res = fista_lasso(D, y, lam, max_iters=20000, rel_tol=rel_tol)
    # non-increasing up to round-off in evaluating the objective
    assert np.all(np.diff(res.history) <= 1e-14 * res.history[:-1])
    assert res.converged
    assert subgradient_residual(D, y, res.x_hat, lam) <= 10 * rel_tol * lam


def test_lasso_reports_non_convergence():
    D = gaussian_matrix(8, 14, 0)
    res = fista_lasso(D, make_rng(0).standard_normal(8), 1e-3, max_iters=3)
    assert not res.converged and res.iterations == 3


def test_lasso_rejects_bad_lambda():
    with pytest.raises(ValueError):
        fista_lasso(np.eye(2), np.ones(2), 0.0)


def test_lasso_path_approaches_basis_pursuit():
    D, x, y = sparse_instance(3, m=20, n=40, k=3)
    res = lasso_path(D, y, 1e-6, rel_tol=1e-10, max_iters=5000)
    np.testing.assert_allclose(res.x_hat, x, atol=1e-4)


def test_lipschitz_constant_exact():
    D = gaussian_matrix(5, 9, 0)
    assert lipschitz_constant(D) == pytest.approx(np.linalg.norm(D, 2) ** 2, rel=1e-12)


# ---------------------------------------------------------------- weighted


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_uniform_weights_reproduce_plain_iterates(seed):
    D = gaussian_matrix(8, 12, seed)
    y = make_rng(seed).standard_normal(8)
    xs_a, xs_b = [], []
    a = fista_lasso(D, y, 0.05, max_iters=500, callback=lambda it, x: xs_a.append(x.copy()))
    b = weighted_fista_lasso(D, y, 0.05, WeightVector.uniform(12), max_iters=500,
                             callback=lambda it, x: xs_b.append(x.copy()))
    assert len(xs_a) == len(xs_b) == a.iterations
    assert all(np.array_equal(u, v) for u, v in zip(xs_a, xs_b))
    assert np.array_equal(a.history, b.history)
    assert np.array_equal(a.x_hat, b.x_hat)
    assert a.iterations == b.iterations


def test_weights_examples():
    w = weights_from_probability(np.ones(4), 1.0)
    np.testing.assert_array_equal(w.w, 0.5)
    np.testing.assert_allclose(weights_from_probability(np.zeros(3), 1e-2).w, 100.0)
    assert w.source is WeightSource.PROBABILITY_MAP
    with pytest.raises(ValueError):
        weights_from_probability(np.ones(2), 0.0)
    clamped = weights_from_probability(np.array([-0.1, 0.5, 1.2]))
    assert clamped.clamped == 2
    np.testing.assert_allclose(clamped.w, [100.0, 1 / 0.51, 1 / 1.01])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=10))
def test_weights_monotone(p):
    p = np.array(p)
    w = weights_from_probability(p).w
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(w[order]) <= 0)  # non-increasing in p
    i, j = np.argmax(p), np.argmin(p)
    if p[i] - p[j] > 1e-9:  # strict once the gap survives rounding of p + eps
        assert w[i] < w[j]


def test_weighted_rejects_non_positive():
    with pytest.raises(ValueError):
        weighted_fista_lasso(np.eye(2), np.ones(2), 0.1, np.array([1.0, 0.0]))


def test_perfect_mask_weights_keep_support_inside_truth():
    for s in range(10):
        D, x, y = sparse_instance(s, m=15, n=40, k=4)
        w = weights_from_probability((x != 0).astype(float), 1e-2)
        res = weighted_fista_lasso(D, y, 1e-3, w, max_iters=5000)
        assert set(np.flatnonzero(res.x_hat)) <= set(np.flatnonzero(x))


def test_weighting_rescues_failed_lasso():
    rescued = 0
    for s in range(10):
        D, x, y = sparse_instance(s, m=12, n=40, k=6)
        plain = lasso_path(D, y, 1e-5)
        w = weights_from_probability((x != 0).astype(float))
        weighted = lasso_path(D, y, 1e-5, weights=w)
        err = lambda e: np.linalg.norm(e - x) / np.linalg.norm(x)
        if err(plain.x_hat) > 0.1 and err(weighted.x_hat) <= 0.1:
            rescued += 1
        assert err(weighted.x_hat) <= err(plain.x_hat) + 1e-6
    assert rescued >= 1


# ------------------------------------------------------------------ batched


def test_batch_matches_single_columns():
    D = gaussian_matrix(10, 30, 7)
    Y = make_rng(7).standard_normal((10, 4))
    W = 1 + make_rng(8).uniform(size=(30, 4))
    batch = fista_lasso_batch(D, Y, 0.01, W, max_iters=3000, rel_tol=1e-9)
    for j in range(4):
        single = weighted_fista_lasso(D, Y[:, j], 0.01, W[:, j], max_iters=3000, rel_tol=1e-9)
        np.testing.assert_allclose(batch.X[:, j], single.x_hat, atol=1e-7)
        assert batch.converged[j] == single.converged
    path = lasso_path_batch(D, Y, 0.01, W, rel_tol=1e-9)
    np.testing.assert_allclose(path.X, batch.X, atol=1e-6)


def test_batch_objective_never_increases():
    D = gaussian_matrix(10, 30, 1)
    Y = make_rng(1).standard_normal((10, 3))
    prev = None
    for iters in (1, 5, 20, 80):
        obj = fista_lasso_batch(D, Y, 0.01, max_iters=iters).objective
        if prev is not None:
            assert np.all(obj <= prev + 1e-12)
        prev = obj


# -------------------------------------------------------------- closed forms


def test_crc_orthonormal_limit_and_residual():
    Q = np.linalg.qr(make_rng(0).standard_normal((8, 4)))[0]
    y = make_rng(1).standard_normal(8)
    np.testing.assert_allclose(crc_solution(Q, y, 1e-9).x_hat, Q.T @ y, atol=1e-7)
    D = gaussian_matrix(6, 10, 2)
    lam = 0.3
    x = crc_solution(D, y[:6], lam).x_hat
    assert np.max(np.abs((D.T @ D + lam * np.eye(10)) @ x - D.T @ y[:6])) <= 1e-8
    P = build_proxy_operator(D, "lmmse", lam)
    np.testing.assert_allclose(x, P.B @ y[:6], atol=1e-12)


def test_debias_examples():
    D, x, y = sparse_instance(5, m=10, n=20, k=3)
    np.testing.assert_allclose(debias_ls(D, y, np.flatnonzero(x)), x, atol=1e-8)
    assert not debias_ls(D, y, []).any()
    A = make_rng(3).standard_normal((12, 4))
    b = make_rng(4).standard_normal(12)
    ref = np.linalg.solve(A.T @ A, A.T @ b)
    out = debias_ls(np.hstack([A, np.ones((12, 1))]), b, [0, 1, 2, 3])
    np.testing.assert_allclose(out[:4], ref, atol=1e-10)
    with pytest.raises(RankDeficientError, match=r"\[0, 1\]"):
        debias_ls(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]), np.ones(3), [0, 1])
