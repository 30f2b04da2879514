"""Local spectral problems and the auxiliary space.

On each non-empty coarse block we solve the Neumann eigenproblem
``a_i(phi, v) = lambda s_i(phi, v)`` with ``s_i`` the kappa-weighted mass
restricted to the block, and keep the ``l`` lowest modes.

Auxiliary functions live on their own block only.  Two neighbouring blocks
share a row of fine nodes, so an auxiliary function is *not* a continuous
nodal field; it is represented by its local vector on the block's node set
(:class:`BlockField` for collections of such pieces).  Pairings with
continuous fields go through :attr:`AuxSpace.weighted`, the vectors
``S_i phi`` scattered to global node numbering.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .coarse import CoarseGrid
from .fem import element_mass, element_stiffness
from .linalg import generalized_symmetric_eig

CLAMP_RTOL = 1e-10


def local_matrices(grid: CoarseGrid, kappa: np.ndarray, i: int, elements=None):
    """Dense ``(A_i, S_i)`` on the node set of block ``i`` (sorted global ids).

    ``elements`` optionally passes precomputed (stiffness, weighted mass)
    element matrices for the whole mesh.
    """
    mesh = grid.mesh
    tris = grid.block_triangles[i]
    nodes = grid.block_nodes[i]
    local = np.searchsorted(nodes, mesh.triangles[tris])
    if elements is None:
        elements = element_stiffness(mesh), element_mass(mesh, kappa)
    ke = elements[0][tris]
    me = elements[1][tris]
    n = len(nodes)
    a = np.zeros((n, n))
    s = np.zeros((n, n))
    rows = np.repeat(local, 3, axis=1)
    cols = np.tile(local, (1, 3))
    np.add.at(a, (rows, cols), ke.reshape(len(tris), 9))
    np.add.at(s, (rows, cols), me.reshape(len(tris), 9))
    return a, s


def solve_local_spectral(a: np.ndarray, s: np.ndarray, l: int):
    """``l`` lowest eigenpairs, s-orthonormal; near-zero eigenvalues clamped to 0."""
    pairs = generalized_symmetric_eig(a, s, l)
    values = pairs.values.copy()
    scale = max(np.trace(a) / np.trace(s), 1.0)
    values[np.abs(values) <= CLAMP_RTOL * scale] = 0.0
    values = np.maximum(values, 0.0)
    return values, pairs.vectors


@dataclass(frozen=True)
class BlockField:
    """Piecewise field: one local vector per block (on ``grid.block_nodes``)."""

    pieces: tuple


@dataclass(frozen=True, eq=False)
class AuxSpace:
    grid: CoarseGrid
    kappa: np.ndarray
    eigenvalues: tuple  # per block, ascending
    eigenvectors: tuple  # per block, (n_i, l_i) on block_nodes[i]
    weighted_local: tuple  # per block, S_i @ eigenvectors

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(v) for v in self.eigenvalues], dtype=np.int64)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Column offset of block ``i``'s functions in block-major order."""
        return np.concatenate([[0], np.cumsum(self.counts)])

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def column(self, i: int, j: int) -> int:
        if not 0 <= j < self.counts[i]:
            raise IndexError(f"block {i} has {self.counts[i]} auxiliary functions, asked for {j}")
        return int(self.offsets[i] + j)

    def pair_of(self, col: int) -> tuple[int, int]:
        i = int(np.searchsorted(self.offsets, col, side="right") - 1)
        return i, int(col - self.offsets[i])

    @cached_property
    def weighted(self) -> sp.csc_array:
        """Global (N_nodes, N_aux) matrix whose columns are ``S_i phi^i_j``.

        ``v @ weighted`` gives every pairing ``s_i(v, phi^i_j)`` of a
        continuous nodal field ``v``.
        """
        rows, cols, vals = [], [], []
        for i, w in enumerate(self.weighted_local):
            nodes = self.grid.block_nodes[i]
            n, k = w.shape
            rows.append(np.repeat(nodes, k))
            cols.append(np.tile(np.arange(k) + self.offsets[i], n))
            vals.append(w.ravel())
        shape = (self.grid.mesh.n_nodes, self.size)
        m = sp.coo_array(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        )
        return sp.csc_array(m)

    def as_block_field(self, i: int, j: int) -> BlockField:
        """The single auxiliary function ``phi^i_j`` as a piecewise field."""
        pieces = [np.zeros(len(n)) for n in self.grid.block_nodes]
        pieces[i] = self.eigenvectors[i][:, j].copy()
        return BlockField(tuple(pieces))

    def spectrum_csv(self) -> str:
        out = io.StringIO()
        lmax = int(self.counts.max())
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["block"] + [f"lambda_{k + 1}" for k in range(lmax)])
        for i, vals in enumerate(self.eigenvalues):
            w.writerow([i] + [repr(float(v)) for v in vals] + [""] * (lmax - len(vals)))
        return out.getvalue()


def build_aux_space(grid: CoarseGrid, kappa: np.ndarray, l: int = 3) -> AuxSpace:
    """Solve every local spectral problem and keep ``min(l, n_i)`` modes per block."""
    if l < 1:
        raise ValueError("need at least one eigenfunction per block")
    values, vectors, weighted = [], [], []
    elements = element_stiffness(grid.mesh), element_mass(grid.mesh, kappa)
    for i in range(grid.n_blocks):
        a, s = local_matrices(grid, kappa, i, elements)
        lam, phi = solve_local_spectral(a, s, min(l, a.shape[0]))
        values.append(lam)
        vectors.append(phi)
        weighted.append(s @ phi)
    return AuxSpace(grid, np.asarray(kappa), tuple(values), tuple(vectors), tuple(weighted))


def project_pi(aux: AuxSpace, v) -> np.ndarray:
    """Coefficients ``s_i(v, phi^i_j)`` in block-major order.

    ``v`` is a nodal field (length N_nodes) or a :class:`BlockField`.
    Denominators are 1 because each block's modes are s-orthonormal.
    """
    if isinstance(v, BlockField):
        return np.concatenate([p @ w for p, w in zip(v.pieces, aux.weighted_local)])
    v = np.asarray(v, dtype=float)
    return aux.weighted.T @ v


def reconstruct_pi(aux: AuxSpace, coeffs) -> BlockField:
    """Piecewise field ``sum c^i_j phi^i_j`` from block-major coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    pieces = tuple(
        phi @ coeffs[aux.offsets[i] : aux.offsets[i + 1]]
        for i, phi in enumerate(aux.eigenvectors)
    )
    return BlockField(pieces)
