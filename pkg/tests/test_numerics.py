import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from csenkit.numerics import (
    DegenerateAtomError,
    NumericFailure,
    ProxyKind,
    apply_proxy,
    build_proxy_operator,
    decode_matrix,
    derive_seed,
    encode_matrix,
    gaussian_matrix,
    make_rng,
    normalize_columns,
    read_matrix,
    regularized_solve,
    soft_threshold,
    spd_solve,
    spectral_norm_sq,
    write_matrix,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# ------------------------------------------------------------ gaussian_matrix


def test_gaussian_column_energy_is_one_on_average():
    A = gaussian_matrix(200, 784, seed=7)
    assert abs(np.mean(np.sum(A**2, axis=0)) - 1.0) < 0.05


def test_gaussian_seed_determinism():
    assert gaussian_matrix(1, 1, 123)[0, 0] == gaussian_matrix(1, 1, 123)[0, 0]
    assert not np.array_equal(gaussian_matrix(5, 5, 1), gaussian_matrix(5, 5, 2))


def test_gaussian_frozen_entries():
    np.testing.assert_array_equal(
        gaussian_matrix(2, 2, 5).ravel(),
        [-0.5314370944996369, 0.6048364120620429, 0.2933492491185272, -0.3804442578799726])


def test_gaussian_measurement_rate():
    A = gaussian_matrix(196, 784, 0)
    assert A.shape[0] / A.shape[1] == 0.25


def test_gaussian_distribution_moments():
    m = 50
    A = gaussian_matrix(m, 2500, 11)  # 125k entries
    sigma = np.sqrt(1 / m)
    assert abs(A.mean()) < 3 * sigma / np.sqrt(A.size)
    assert abs(A.var() / (1 / m) - 1) < 0.05


def test_gaussian_rejects_empty():
    with pytest.raises(ValueError):
        gaussian_matrix(0, 5, 0)


def test_rng_is_philox():
    assert isinstance(make_rng(0).bit_generator, np.random.Philox)


def test_derive_seed_frozen_values():
    # frozen outputs guard against silent changes of the mixing rule
    assert derive_seed(0, 1, 2) == 4366340841339807501
    assert derive_seed(7) == 8949336737714337537
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)
    assert derive_seed(0, 1) != derive_seed(1, 1)
    assert 0 <= derive_seed(2**64 - 1, 5) < 2**63


# --------------------------------------------------------- normalize_columns


def test_normalize_345():
    np.testing.assert_allclose(normalize_columns(np.array([[3.0], [4.0]])).ravel(), [0.6, 0.8])


def test_normalize_unit_columns_unchanged():
    Q = np.linalg.qr(make_rng(0).standard_normal((6, 6)))[0]
    np.testing.assert_allclose(normalize_columns(Q), Q, atol=1e-12)


def test_normalize_random_norms():
    M = normalize_columns(make_rng(3).standard_normal((10, 5)))
    np.testing.assert_allclose(np.linalg.norm(M, axis=0), 1.0, atol=1e-12)


def test_normalize_zero_column_reports_index():
    M = np.ones((3, 4))
    M[:, 2] = 0
    with pytest.raises(DegenerateAtomError) as err:
        normalize_columns(M)
    assert err.value.column == 2


@settings(max_examples=50, deadline=None)
@given(arrays(float, (6, 4), elements=st.floats(0.1, 10)))
def test_normalize_idempotent(M):
    once = normalize_columns(M)
    np.testing.assert_allclose(normalize_columns(once), once, atol=1e-12)


# ------------------------------------------------------------- spectral norm


def test_spectral_identity_and_diag():
    assert spectral_norm_sq(np.eye(3)).value == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm_sq(np.diag([1.0, 2.0, 3.0])).value == pytest.approx(9.0, rel=1e-9)


def test_spectral_matches_eigendecomposition():
    M = make_rng(5).standard_normal((8, 12))
    exact = np.linalg.eigvalsh(M.T @ M)[-1]
    res = spectral_norm_sq(M)
    assert res.converged
    assert res.value == pytest.approx(exact, rel=1e-6)


def test_spectral_warns_when_not_converged():
    M = make_rng(1).standard_normal((30, 30))
    with pytest.warns(RuntimeWarning):
        res = spectral_norm_sq(M, iters=2)
    assert not res.converged


def test_spectral_zero_matrix():
    with pytest.raises(ValueError):
        spectral_norm_sq(np.zeros((3, 3)))


# ------------------------------------------------------------ soft threshold


def test_soft_threshold_example():
    np.testing.assert_array_equal(soft_threshold(np.array([2.0, -0.5, 1.0]), 1.0), [1.0, 0.0, 0.0])


def test_soft_threshold_zero_is_identity():
    v = make_rng(2).standard_normal(7)
    np.testing.assert_array_equal(soft_threshold(v, 0.0), v)


def test_soft_threshold_vector_threshold_and_negative():
    np.testing.assert_array_equal(soft_threshold(np.array([2.0, 2.0]), np.array([1.0, 3.0])), [1.0, 0.0])
    with pytest.raises(ValueError):
        soft_threshold(np.ones(2), -1.0)


@settings(max_examples=40, deadline=None)
@given(finite, st.floats(0, 10))
def test_soft_threshold_grid_search_oracle(v, t):
    grid = np.linspace(v - 2 * t - 1, v + 2 * t + 1, 20001)
    cost = 0.5 * (grid - v) ** 2 + t * np.abs(grid)
    u_grid = grid[np.argmin(cost)]
    u = float(soft_threshold(np.array([v]), t)[0])
    step = grid[1] - grid[0]
    assert abs(u - u_grid) <= step + 1e-12


@settings(max_examples=100, deadline=None)
@given(arrays(float, 8, elements=finite), st.floats(0, 50))
def test_soft_threshold_subgradient_condition(v, t):
    u = soft_threshold(v, t)
    g = u - v  # residual must lie in -t * d|u|
    nz = u != 0
    np.testing.assert_allclose(g[nz], -t * np.sign(u[nz]), atol=1e-10 * (1 + np.abs(v[nz]).max(initial=0)))
    assert np.all(np.abs(g[~nz]) <= t + 1e-10)


# -------------------------------------------------------------- linear solves


def test_spd_solve_matches_dense():
    rng = make_rng(4)
    M = rng.standard_normal((6, 6))
    G = M @ M.T + 6 * np.eye(6)
    b = rng.standard_normal(6)
    np.testing.assert_allclose(G @ spd_solve(G, b), b, atol=1e-10)


def test_spd_solve_falls_back_on_indefinite():
    G = np.array([[1.0, 2.0], [2.0, 1.0]])  # symmetric, indefinite
    b = np.array([1.0, 0.0])
    np.testing.assert_allclose(G @ spd_solve(G, b), b, atol=1e-12)


def test_regularized_solve_checks_lambda_and_residual():
    D = make_rng(0).standard_normal((4, 6))
    with pytest.raises(ValueError):
        regularized_solve(D, np.ones(6), 0.0)
    with pytest.raises(NumericFailure):
        regularized_solve(D, np.ones(6), 1.0, tol=0.0)


# ----------------------------------------------------------------- proxies


def test_mc_proxy_identity():
    P = build_proxy_operator(np.eye(4), "mc")
    np.testing.assert_array_equal(P.B, np.eye(4))
    assert P.kind is ProxyKind.MAX_CORRELATION


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 12), st.integers(2, 20), st.integers(0, 2**32), st.sampled_from([1e-4, 1e-2, 1.0]))
def test_lmmse_residual_bound(m, n, seed, lam):
    D = gaussian_matrix(m, n, seed)
    P = build_proxy_operator(D, ProxyKind.LMMSE, lam)
    resid = (D.T @ D + lam * np.eye(n)) @ P.B - D.T
    assert np.max(np.abs(resid)) <= 1e-8
    assert P.lam == lam


def test_lmmse_pseudo_inverse_limit():
    Q = np.linalg.qr(make_rng(9).standard_normal((8, 3)))[0].T  # orthonormal rows, 3x8
    y = make_rng(1).standard_normal(3)
    errs = [np.max(np.abs(build_proxy_operator(Q, "lmmse", lam).B @ y - Q.T @ y)) for lam in (1e-2, 1e-4, 1e-6)]
    # B y = Q^T y / (1 + lam) exactly for orthonormal rows
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-5


def test_apply_proxy_single_one():
    P = build_proxy_operator(np.eye(4), "mc", grid=(2, 2))
    plane = apply_proxy(P, np.eye(4)[3])
    expect = np.zeros((2, 2))
    expect[1, 1] = 1
    np.testing.assert_array_equal(plane, expect)


def test_apply_proxy_mnist_grid_and_flatten():
    D = gaussian_matrix(196, 784, 0)
    P = build_proxy_operator(D, "lmmse", grid=(28, 28))
    y = make_rng(0).standard_normal(196)
    plane = apply_proxy(P, y)
    assert plane.shape == (28, 28)
    np.testing.assert_array_equal(plane.ravel(), P.B @ y)
    batch = apply_proxy(P, np.stack([y, 2 * y]))
    assert batch.shape == (2, 28, 28)
    np.testing.assert_allclose(batch[0], plane, rtol=1e-12)


def test_proxy_grid_validation():
    with pytest.raises(ValueError):
        build_proxy_operator(np.eye(4), "mc", grid=(3, 2))
    P = build_proxy_operator(np.eye(4), "mc")
    with pytest.raises(ValueError):
        apply_proxy(P, np.ones(3))


# -------------------------------------------------------------------- CSM1


def test_csm1_layout_bytes():
    blob = encode_matrix(np.array([[1.0, 2.0]]))
    assert blob == (b"CSENMAT1" + (1).to_bytes(8, "little") + (2).to_bytes(8, "little")
                    + np.array([1.0, 2.0], "<f8").tobytes())


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_csm1_round_trip(M):
    out, end = decode_matrix(encode_matrix(M))
    np.testing.assert_array_equal(out, M)
    assert end == 24 + 8 * M.size


def test_csm1_file_round_trip(tmp_path):
    M = make_rng(0).standard_normal((3, 4))
    write_matrix(tmp_path / "m.csm", M)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.csm"), M)


def test_csm1_errors():
    with pytest.raises(ValueError, match="header"):
        decode_matrix(b"NOTMAGIC" + bytes(16))
    blob = encode_matrix(np.ones((2, 2)))
    with pytest.raises(ValueError, match="truncated"):
        decode_matrix(blob[:-1])
    bad = encode_matrix(np.array([[np.nan]]))
    with pytest.raises(ValueError, match="non-finite"):
        decode_matrix(bad)
