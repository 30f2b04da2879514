import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cem_perforated.errors import NoConvergence, NotPositiveDefinite
from cem_perforated.linalg import (
    SparseSPDFactor,
    cholesky_solve,
    conjugate_gradient,
    csr,
    generalized_symmetric_eig,
)


def laplacian_2d(k):
    t = sp.diags([-1, 2, -1], [-1, 0, 1], shape=(k, k))
    i = sp.identity(k)
    return sp.csr_array(sp.kron(t, i) + sp.kron(i, t))


def test_cholesky_identity():
    b = np.random.default_rng(0).normal(size=(3, 2))
    assert np.allclose(cholesky_solve(np.eye(3), b), b)


def test_cholesky_hand_solved():
    x = cholesky_solve(np.array([[4.0, 2.0], [2.0, 3.0]]), np.array([[2.0], [1.0]]))
    assert np.allclose(x, [[0.5], [0.0]], atol=1e-14)


def test_cholesky_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_solve(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))


def test_cholesky_residual():
    rng = np.random.default_rng(1)
    g = rng.normal(size=(20, 20))
    a = g @ g.T + 20 * np.eye(20)
    b = rng.normal(size=(20, 3))
    x = cholesky_solve(a, b)
    assert np.abs(a @ x - b).max() <= 1e-10 * (1 + np.abs(b).max())


def test_cg_identity():
    b = np.arange(1.0, 6.0)
    assert np.allclose(conjugate_gradient(sp.identity(5), b, 1e-12, 100), b)


def test_cg_diagonal():
    x = conjugate_gradient(sp.diags(np.arange(1.0, 6.0)), np.ones(5), 1e-12, 100)
    assert np.allclose(x, 1 / np.arange(1.0, 6.0))


def test_cg_laplacian_matches_dense():
    a = laplacian_2d(10)
    b = np.random.default_rng(2).normal(size=100)
    x = conjugate_gradient(a, b, 1e-12)
    assert np.abs(x - np.linalg.solve(a.toarray(), b)).max() <= 1e-8


def test_cg_gives_up():
    with pytest.raises(NoConvergence):
        conjugate_gradient(laplacian_2d(10), np.ones(100), 1e-12, max_iter=3)


def test_eig_diagonal():
    pairs = generalized_symmetric_eig(np.diag([3.0, 1.0, 2.0]), np.eye(3), 3)
    assert np.allclose(pairs.values, [1, 2, 3])


def test_eig_identical_pencil():
    g = np.random.default_rng(3).normal(size=(6, 6))
    a = g @ g.T + np.eye(6)
    assert np.allclose(generalized_symmetric_eig(a, a, 6).values, 1.0)


def test_eig_brute_force_oracle():
    rng = np.random.default_rng(4)
    g = rng.normal(size=(8, 8))
    a = g + g.T
    h = rng.normal(size=(8, 8))
    b = h @ h.T + 8 * np.eye(8)
    pairs = generalized_symmetric_eig(a, b, 8)
    # symmetrized B^{-1} A: L^{-1} A L^{-T}
    low = np.linalg.cholesky(b)
    li = np.linalg.inv(low)
    oracle = np.sort(np.linalg.eigvals(li @ a @ li.T).real)
    assert np.abs(pairs.values - oracle).max() <= 1e-8
    v = pairs.vectors
    assert np.abs(v.T @ b @ v - np.eye(8)).max() <= 1e-8


def test_eig_subset_and_residual():
    rng = np.random.default_rng(5)
    g = rng.normal(size=(12, 12))
    a = g + g.T
    b = np.diag(rng.uniform(1, 2, 12))
    pairs = generalized_symmetric_eig(a, b, 4)
    full = generalized_symmetric_eig(a, b, 12)
    assert np.allclose(pairs.values, full.values[:4])
    assert np.all(np.diff(pairs.values) >= 0)
    for lam, x in zip(pairs.values, pairs.vectors.T):
        res = np.linalg.norm(a @ x - lam * b @ x)
        bound = 1e-8 * (np.linalg.norm(a, 2) + abs(lam) * np.linalg.norm(b, 2)) * np.linalg.norm(x)
        assert res <= bound


def test_eig_rejects_bad_input():
    with pytest.raises(ValueError):
        generalized_symmetric_eig(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2), 1)
    with pytest.raises(NotPositiveDefinite):
        generalized_symmetric_eig(np.eye(2), -np.eye(2), 1)
    with pytest.raises(ValueError):
        generalized_symmetric_eig(np.eye(2), np.eye(2), 3)


def test_sparse_factor_matches_dense():
    a = laplacian_2d(8)
    b = np.random.default_rng(6).normal(size=(64, 3))
    x = SparseSPDFactor(a).solve(b)
    assert np.abs(a @ x - b).max() <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_csr_matvec_matches_dense(seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(20, 20)) * (rng.random((20, 20)) < 0.3)
    x = rng.normal(size=20)
    assert np.abs(csr(d) @ x - d @ x).max() <= 1e-12
