"""Constraint-energy-minimizing multiscale basis functions.

For an oversampling region with free dofs ``P`` let ``A`` be the stiffness
matrix on ``P`` (zero Dirichlet data on the outer boundary and the cut
boundary of the region) and ``C`` the matrix whose columns are the weighted
auxiliary functions ``S_k phi^k_l`` of all blocks in the region, restricted
to ``P``.  With ``Y = A^{-1} C`` and ``M = C^T Y``:

* constraint variant: minimize ``psi^T A psi`` subject to ``C^T psi = e``.
  The Lagrange system gives ``psi = Y M^{-1} e``.
* relaxed variant: ``(A + C C^T) psi = C e``.  By the push-through identity
  ``(A + C C^T)^{-1} C = Y (I + M)^{-1}`` so ``psi = Y (I + M)^{-1} e``.

Both variants therefore share one sparse SPD factorization per region, and
all eigen indices of the owning block are solved together.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .coarse import CoarseGrid, oversample
from .errors import BasisBuildError, CemError, NotPositiveDefinite, SingularConstraintBlock
from .fem import FemSystem
from .linalg import SparseSPDFactor, cholesky_factor
from .spectral import AuxSpace

CONSTRAINT_PIVOT_RTOL = 1e-12
REDUNDANT_RTOL = 1e-10
CONSTRAINT_TOL = 1e-8


class Variant(str, enum.Enum):
    CONSTRAINT = "constraint"
    RELAXED = "relaxed"
    GLOBAL_CONSTRAINT = "global_constraint"
    GLOBAL_RELAXED = "global_relaxed"

    @property
    def is_global(self) -> bool:
        return self in (Variant.GLOBAL_CONSTRAINT, Variant.GLOBAL_RELAXED)

    @property
    def relaxed(self) -> bool:
        return self in (Variant.RELAXED, Variant.GLOBAL_RELAXED)

    def local(self) -> "Variant":
        return Variant.RELAXED if self.relaxed else Variant.CONSTRAINT

    def globalized(self) -> "Variant":
        return Variant.GLOBAL_RELAXED if self.relaxed else Variant.GLOBAL_CONSTRAINT


@dataclass(frozen=True, eq=False)
class MsBasisFunction:
    block: int
    eig: int
    layers: int | None  # None for global functions
    variant: Variant
    dofs: np.ndarray  # free-dof indices of the support
    values: np.ndarray

    def dense(self, n_free: int) -> np.ndarray:
        out = np.zeros(n_free)
        out[self.dofs] = self.values
        return out


@dataclass(frozen=True, eq=False)
class MsBasisSet:
    functions: tuple
    R: sp.csr_array  # one row per basis function over the fine free dofs
    variant: Variant
    layers: np.ndarray  # per block
    info: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True)
class _PatchSolution:
    dofs: np.ndarray
    cols: np.ndarray  # aux columns kept as constraints
    psi: np.ndarray  # (len(dofs), l_i) one column per eigen index of the owner


class BasisBuilder:
    """Builds multiscale basis functions for one mesh / coarse grid / aux space."""

    def __init__(self, system: FemSystem, grid: CoarseGrid, aux: AuxSpace):
        self.system = system
        self.grid = grid
        self.aux = aux
        self.K = sp.csr_array(system.stiffness)
        self.C = sp.csr_array(aux.weighted[system.dof_map.free_nodes])
        self.n_free = system.dof_map.n_free
        self._global = {}

    # -- core solve ---------------------------------------------------------

    def _aux_columns(self, blocks) -> np.ndarray:
        off = self.aux.offsets
        return np.concatenate([np.arange(off[b], off[b + 1]) for b in blocks])

    def _solve(self, owner: int, dofs: np.ndarray, blocks, relaxed: bool) -> _PatchSolution:
        cols = self._aux_columns(blocks)
        target = np.arange(self.aux.offsets[owner], self.aux.offsets[owner + 1])
        a = self.K[dofs][:, dofs]
        c = self.C[dofs][:, cols].toarray()
        y = SparseSPDFactor(a).solve(c)
        psi = _combine(c, y, np.searchsorted(cols, target), relaxed, owner)
        return _PatchSolution(dofs, cols, psi)

    def _local(self, i: int, m: int, variant: Variant) -> _PatchSolution:
        region = oversample(self.grid, self.system.dof_map.index, i, m)
        return self._solve(i, region.free_dofs, region.blocks, variant.relaxed)

    def _global_all(self, variant: Variant) -> np.ndarray:
        """Dense (n_free, N_aux) matrix of every global basis function."""
        variant = variant.globalized()
        if variant not in self._global:
            c = self.C.toarray()
            y = SparseSPDFactor(self.K).solve(c)
            if variant.relaxed:
                psi = _combine(c, y, np.arange(self.aux.size), True, None)
            else:
                # constraint: each block's functions need their own redundancy screening
                psi = np.empty_like(y)
                for i in range(self.grid.n_blocks):
                    sl = slice(self.aux.offsets[i], self.aux.offsets[i + 1])
                    psi[:, sl] = _combine(c, y, np.arange(sl.start, sl.stop), False, i)
            self._global[variant] = psi
        return self._global[variant]

    # -- public builders ----------------------------------------------------

    def block_functions(self, i: int, m: int, variant: Variant) -> list[MsBasisFunction]:
        variant = Variant(variant).local()
        sol = self._local(i, m, variant)
        return [
            MsBasisFunction(i, j, m, variant, sol.dofs, sol.psi[:, j].copy())
            for j in range(sol.psi.shape[1])
        ]

    def constraint_basis(self, i: int, j: int, m: int) -> MsBasisFunction:
        return self.block_functions(i, m, Variant.CONSTRAINT)[j]

    def relaxed_basis(self, i: int, j: int, m: int) -> MsBasisFunction:
        return self.block_functions(i, m, Variant.RELAXED)[j]

    def global_basis(self, i: int, j: int, variant: Variant) -> MsBasisFunction:
        """Global basis function; costs a full factorization plus an
        (n_free x N_aux) dense block, so meant for small meshes."""
        variant = Variant(variant).globalized()
        psi = self._global_all(variant)[:, self.aux.column(i, j)]
        return MsBasisFunction(i, j, None, variant, np.arange(self.n_free), psi.copy())

    # -- diagnostics ----------------------------------------------------------

    def energy(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ (self.K @ v), 0.0)))

    def pi_coefficients(self, v: np.ndarray) -> np.ndarray:
        """All ``s_k(v, phi^k_l)`` for a free-dof vector ``v``."""
        return self.C.T @ v

    def decay_profile(self, i: int, j: int, variant: Variant, m_list) -> list[tuple[int, float]]:
        """``(m, ||psi_global - psi_m||_a)`` for each layer count."""
        variant = Variant(variant)
        glo = self._global_all(variant)[:, self.aux.column(i, j)]
        out = []
        for m in m_list:
            psi = self.block_functions(i, m, variant)[j].dense(self.n_free)
            out.append((int(m), self.energy(glo - psi)))
        return out

    def build_basis_set(self, layers, variant: Variant, threads: int = 1) -> MsBasisSet:
        """One basis function per (block, eigen index).

        ``layers`` is a uniform integer or a per-block sequence.
        """
        variant = Variant(variant)
        nb = self.grid.n_blocks
        per_block = np.broadcast_to(np.asarray(layers, dtype=np.int64), (nb,)).copy()

        def work(i):
            try:
                if variant.is_global:
                    return [self.global_basis(i, j, variant) for j in range(self.aux.counts[i])]
                return self.block_functions(i, int(per_block[i]), variant)
            except CemError as exc:
                raise BasisBuildError(i, None, exc) from exc

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                groups = list(pool.map(work, range(nb)))
        else:
            groups = [work(i) for i in range(nb)]
        functions = tuple(f for g in groups for f in g)

        indptr = np.zeros(len(functions) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(f.dofs) for f in functions])
        indices = np.concatenate([f.dofs for f in functions])
        data = np.concatenate([f.values for f in functions])
        R = sp.csr_array((data, indices, indptr), shape=(len(functions), self.n_free))
        return MsBasisSet(functions, R, variant, per_block)


def gram_matrix(basis: MsBasisSet, stiffness) -> np.ndarray:
    """Coarse stiffness ``R A R^T`` as a dense symmetric matrix."""
    R = basis.R
    return (R @ (sp.csr_array(stiffness) @ R.T)).toarray()


def _independent_columns(m: np.ndarray, first: np.ndarray) -> np.ndarray:
    """Greedy Cholesky over the Gram matrix ``m``, visiting ``first`` before the rest.

    A column is dropped when its pivot falls below ``REDUNDANT_RTOL`` times its
    own diagonal, i.e. it lies (numerically) in the span of the kept columns.
    Returns the kept column positions in visiting order.
    """
    q = m.shape[0]
    rest = np.setdiff1d(np.arange(q), first)
    order = np.concatenate([first, rest])
    scale = np.abs(m).max()
    low = np.zeros((q, q))
    kept = []
    for k in order:
        row = low[k, : len(kept)]
        piv = m[k, k] - row @ row
        if piv <= REDUNDANT_RTOL * m[k, k] or piv <= CONSTRAINT_PIVOT_RTOL * scale:
            continue
        d = np.sqrt(piv)
        r = len(kept)
        low[k, r] = d
        others = order[np.isin(order, kept, invert=True) & (order != k)]
        if len(others):
            low[others, r] = (m[others, k] - low[others, :r] @ row) / d
        kept.append(k)
    return np.array(kept, dtype=np.int64)


def _combine(c: np.ndarray, y: np.ndarray, target: np.ndarray, relaxed: bool, owner):
    """Basis coefficients from ``Y = A^{-1} C`` for the target constraint columns."""
    m = c.T @ y
    m = 0.5 * (m + m.T)
    e = np.zeros((m.shape[0], len(target)))
    e[target, np.arange(len(target))] = 1.0
    if relaxed:
        low = cholesky_factor(np.eye(m.shape[0]) + m)
        return y @ sla.cho_solve((low, True), e)

    keep = _independent_columns(m, target)
    if not np.all(np.isin(target, keep)):
        raise SingularConstraintBlock(
            f"auxiliary functions of block {owner} are linearly dependent on the patch", owner
        )
    keep = np.sort(keep)
    try:
        low = cholesky_factor(m[np.ix_(keep, keep)], CONSTRAINT_PIVOT_RTOL)
    except NotPositiveDefinite as exc:
        raise SingularConstraintBlock(
            f"constraint block for coarse block {owner} is singular: {exc}", owner
        ) from exc
    psi = y[:, keep] @ sla.cho_solve((low, True), e[keep])
    # dropped constraints must still hold
    resid = np.abs(c.T @ psi - e).max()
    if resid > CONSTRAINT_TOL:
        raise SingularConstraintBlock(
            f"constraints for block {owner} cannot be met (residual {resid:.2e})", owner
        )
    return psi
