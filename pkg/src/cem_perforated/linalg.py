"""Small linear algebra layer.

Sparse matrices are :class:`scipy.sparse.csr_array` objects with canonical
(sorted, duplicate-free) indices.  Dense factorizations and the generalized
symmetric eigensolver delegate to LAPACK through scipy; conjugate gradient is
implemented here so that iteration counts and stopping rules stay under our
control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, NotPositiveDefinite

PIVOT_RTOL = 1e-14


def csr(matrix, shape=None) -> sp.csr_array:
    """Canonical CSR copy: sorted unique column indices per row."""
    a = sp.csr_array(matrix, shape=shape)
    a.sum_duplicates()
    a.sort_indices()
    return a


def coo_to_csr(rows, cols, vals, shape) -> sp.csr_array:
    return csr(sp.coo_array((vals, (rows, cols)), shape=shape))


def cholesky_factor(a: np.ndarray, rtol: float = PIVOT_RTOL):
    """Lower Cholesky factor of a dense SPD matrix.

    Raises NotPositiveDefinite when a pivot falls below ``rtol`` times the
    largest diagonal entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = float(np.max(np.abs(np.diag(a)))) if a.size else 0.0
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    piv = np.diag(low) ** 2
    if a.size and (scale <= 0 or piv.min() <= rtol * scale):
        raise NotPositiveDefinite(
            f"Cholesky pivot {piv.min():.3e} below {rtol:g} x max diagonal {scale:.3e}"
        )
    return low


def cholesky_solve(a: np.ndarray, b: np.ndarray, rtol: float = PIVOT_RTOL) -> np.ndarray:
    low = cholesky_factor(a, rtol)
    return sla.cho_solve((low, True), np.asarray(b, dtype=float))


def conjugate_gradient(a, b, tol=1e-10, max_iter=None, x0=None) -> np.ndarray:
    """Jacobi-preconditioned CG; stops when ||b - A x|| <= tol ||b||."""
    a = sp.csr_array(a)
    b = np.asarray(b, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = max(10 * n, 100)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise NotPositiveDefinite("CG needs a positive diagonal")
    dinv = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    target = tol * bnorm
    for _ in range(max_iter):
        if np.linalg.norm(r) <= target:
            return x
        ap = a @ p
        pap = p @ ap
        if pap <= 0:
            raise NoConvergence("CG breakdown: matrix is not positive definite")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    # the recursive residual drifts; confirm with the true one before giving up
    if np.linalg.norm(b - a @ x) <= target:
        return x
    raise NoConvergence(f"CG did not reach tol={tol:g} in {max_iter} iterations")


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray


def generalized_symmetric_eig(a, b, k: int) -> EigenPairs:
    """The ``k`` smallest eigenpairs of ``A x = lambda B x``, B-orthonormal."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    anorm = np.abs(a).max() if a.size else 0.0
    if np.abs(a - a.T).max() > 1e-10 * max(anorm, 1e-300):
        raise ValueError("A is not symmetric")
    cholesky_factor(b)
    try:
        if k < n:
            w, v = sla.eigh(a, b, subset_by_index=(0, k - 1), driver="gvx")
        else:
            w, v = sla.eigh(a, b, driver="gvd")
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"generalized eigensolver failed: {exc}") from exc
    return EigenPairs(w, v)


class SparseSPDFactor:
    """Reusable factorization of a sparse SPD matrix.

    Uses SuperLU with a symmetric ordering and no off-diagonal pivoting, which
    for SPD input amounts to a Cholesky-style factorization.
    """

    def __init__(self, a):
        a = sp.csc_matrix(a)
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        self.n = a.shape[0]
        if self.n == 0:
            self._lu = None
            return
        d = a.diagonal()
        if np.any(d <= 0):
            raise NotPositiveDefinite("non-positive diagonal entry in SPD factorization")
        try:
            self._lu = spla.splu(
                a,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise NotPositiveDefinite(f"sparse factorization failed: {exc}") from exc
        u = self._lu.U.diagonal()
        if np.any(u <= PIVOT_RTOL * d.max()):
            raise NotPositiveDefinite("sparse factorization produced a non-positive pivot")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self.n == 0:
            return np.zeros_like(rhs)
        return self._lu.solve(rhs)
