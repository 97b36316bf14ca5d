import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from matex.sparsela import (DimensionMismatch, ExpmOverflow, SingularMatrix, counters, expm_dense,
                            lu_decompose, solve)


def laplacian_plus_identity(n=100, seed=0):
    rng = np.random.default_rng(seed)
    k = int(np.sqrt(n))
    A = sp.lil_matrix((n, n))
    for i in range(n):
        for j in (i + 1, i + k):
            if j < n:
                g = 0.5 + rng.random()
                A[i, i] += g
                A[j, j] += g
                A[i, j] -= g
                A[j, i] -= g
    return (A + sp.identity(n)).tocsc()


def test_identity_factor():
    f = lu_decompose(sp.identity(5, format="csc"))
    assert (f.L != sp.identity(5)).nnz == 0
    assert (f.U != sp.identity(5)).nnz == 0
    b = np.arange(5.0)
    np.testing.assert_array_equal(solve(f, b), b)


def test_permutation_matrix():
    f = lu_decompose(sp.csc_matrix([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(solve(f, np.array([2.0, 3.0])), [3.0, 2.0])


def test_diag_two():
    f = lu_decompose(sp.csc_matrix([[2.0]]))
    assert solve(f, np.array([4.0])).tolist() == [2.0]


def test_factor_reconstructs_matrix():
    A = laplacian_plus_identity()
    f = lu_decompose(A)
    R = A.toarray()[f.row_perm][:, f.col_perm] - (f.L @ f.U).toarray()
    assert np.abs(R).max() <= 1e-10 * abs(A).max()


def test_grid_solve_matches_dense():
    A = laplacian_plus_identity()
    b = np.random.default_rng(1).random(A.shape[0])
    ref = np.linalg.solve(A.toarray(), b)
    x = solve(lu_decompose(A), b)
    assert np.max(np.abs(x - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_random_residual():
    rng = np.random.default_rng(2)
    A = sp.random(200, 200, density=0.05, random_state=3, format="csc") + 10 * sp.identity(200)
    b = rng.random(200)
    x = solve(lu_decompose(A.tocsc()), b)
    assert np.max(np.abs(A @ x - b)) / np.max(np.abs(b)) <= 1e-10


def test_errors():
    with pytest.raises(SingularMatrix):
        lu_decompose(sp.csc_matrix([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularMatrix):
        lu_decompose(sp.csc_matrix((3, 3)))
    f = lu_decompose(sp.identity(3, format="csc"))
    with pytest.raises(DimensionMismatch):
        solve(f, np.ones(4))


def test_counters_exact():
    counters.reset()
    f = lu_decompose(laplacian_plus_identity(25))
    for _ in range(7):
        solve(f, np.ones(25))
    assert counters.snapshot() == (1, 7)


def test_expm_basic():
    np.testing.assert_array_equal(expm_dense(np.zeros((4, 4))), np.eye(4))
    a = np.array([-1.0, -3.0, 0.5])
    np.testing.assert_allclose(expm_dense(np.diag(a), 0.7), np.diag(np.exp(0.7 * a)), rtol=1e-14)


def _taylor_expm(H, terms=200):
    out = np.eye(H.shape[0])
    term = np.eye(H.shape[0])
    comp = np.zeros_like(out)
    for k in range(1, terms):
        term = term @ H / k
        # Kahan summation per entry
        y = term - comp
        t = out + y
        comp = (t - out) - y
        out = t
    return out


def test_expm_matches_taylor_oracle():
    rng = np.random.default_rng(4)
    H = np.triu(rng.standard_normal((8, 8)), -1) * 0.4
    np.testing.assert_allclose(expm_dense(H, 1.0), _taylor_expm(H), rtol=0, atol=1e-11)


def test_expm_matches_eigen_oracle_on_normal():
    rng = np.random.default_rng(5)
    S = rng.standard_normal((10, 10))
    S = S + S.T
    lam, Q = np.linalg.eigh(S)
    ref = Q @ np.diag(np.exp(0.3 * lam)) @ Q.T
    got = expm_dense(S, 0.3)
    assert np.linalg.norm(got - ref) <= 1e-12 * np.linalg.norm(ref)


def test_expm_semigroup():
    rng = np.random.default_rng(6)
    H = np.triu(rng.standard_normal((6, 6)), -1)
    a, b = 0.3, 0.45
    lhs = expm_dense(H, a + b)
    rhs = expm_dense(H, a) @ expm_dense(H, b)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)


def test_expm_overflow():
    with pytest.raises(ExpmOverflow):
        expm_dense(np.array([[1e4]]), 1.0)
