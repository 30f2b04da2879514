"""Coarse square partition, bilinear partition of unity, and oversampling.

Blocks are addressed two ways: by lattice position ``(bx, by)`` in the
``N x N`` coarse grid, and by a compact index ``i`` running over the
non-empty blocks only.  Everything downstream uses the compact index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import NonNested
from .geometry import TriMesh

NEST_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CoarseGrid:
    mesh: TriMesh
    blocks_per_side: int
    tri_block: np.ndarray  # lattice block id per fine triangle
    block_lattice: np.ndarray  # compact index -> lattice id, non-empty blocks only
    block_triangles: tuple  # compact index -> fine triangle indices

    @property
    def H(self) -> float:
        return 1.0 / self.blocks_per_side

    @property
    def n_blocks(self) -> int:
        """Number of non-empty blocks (N_c)."""
        return len(self.block_lattice)

    @property
    def n_vertices(self) -> int:
        return (self.blocks_per_side + 1) ** 2

    @property
    def empty_lattice_blocks(self) -> np.ndarray:
        all_ids = np.arange(self.blocks_per_side**2)
        return np.setdiff1d(all_ids, self.block_lattice)

    def lattice_xy(self, i: int) -> tuple[int, int]:
        lid = int(self.block_lattice[i])
        return lid % self.blocks_per_side, lid // self.blocks_per_side

    @cached_property
    def compact_of_lattice(self) -> np.ndarray:
        out = np.full(self.blocks_per_side**2, -1, dtype=np.int64)
        out[self.block_lattice] = np.arange(self.n_blocks)
        return out

    @cached_property
    def block_nodes(self) -> tuple:
        """Sorted fine-node indices of each block."""
        t = self.mesh.triangles
        return tuple(np.unique(t[tris]) for tris in self.block_triangles)

    @cached_property
    def hats(self) -> sp.csr_array:
        """Bilinear hat functions sampled at the fine nodes, shape (N_v, N_nodes)."""
        nb = self.blocks_per_side
        x = self.mesh.nodes[:, 0] * nb
        y = self.mesh.nodes[:, 1] * nb
        cx = np.clip(np.floor(x), 0, nb - 1).astype(np.int64)
        cy = np.clip(np.floor(y), 0, nb - 1).astype(np.int64)
        xi, eta = x - cx, y - cy
        rows, vals = [], []
        for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
            wx = xi if dx else 1.0 - xi
            wy = eta if dy else 1.0 - eta
            rows.append((cy + dy) * (nb + 1) + (cx + dx))
            vals.append(wx * wy)
        cols = np.tile(np.arange(self.mesh.n_nodes), 4)
        m = sp.coo_array(
            (np.concatenate(vals), (np.concatenate(rows), cols)),
            shape=(self.n_vertices, self.mesh.n_nodes),
        )
        return sp.csr_array(m)

    def summary(self) -> dict:
        counts = [len(t) for t in self.block_triangles]
        return {
            "H": self.H,
            "blocks_per_side": self.blocks_per_side,
            "non_empty_blocks": self.n_blocks,
            "empty_blocks": int(len(self.empty_lattice_blocks)),
            "coarse_vertices": self.n_vertices,
            "min_triangles_per_block": int(min(counts)),
            "max_triangles_per_block": int(max(counts)),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def build_coarse_grid(mesh: TriMesh, blocks_per_side: int) -> CoarseGrid:
    nb = int(blocks_per_side)
    if nb < 1:
        raise NonNested(f"blocks_per_side must be positive, got {blocks_per_side}")
    if mesh.n is not None and mesh.n % nb:
        raise NonNested(f"{nb} coarse blocks per side do not nest in a {mesh.n}-cell fine grid")

    c = mesh.centroids * nb
    bx = np.clip(np.floor(c[:, 0]), 0, nb - 1).astype(np.int64)
    by = np.clip(np.floor(c[:, 1]), 0, nb - 1).astype(np.int64)
    if mesh.n is None:
        # unstructured meshes: every vertex must sit in the closed block of its centroid
        p = mesh.nodes[mesh.triangles] * nb
        ok = (
            (p[..., 0] >= bx[:, None] - NEST_TOL)
            & (p[..., 0] <= bx[:, None] + 1 + NEST_TOL)
            & (p[..., 1] >= by[:, None] - NEST_TOL)
            & (p[..., 1] <= by[:, None] + 1 + NEST_TOL)
        )
        if not ok.all():
            raise NonNested("fine triangles straddle coarse block lines")
    tri_block = by * nb + bx

    order = np.argsort(tri_block, kind="stable")
    ids, starts = np.unique(tri_block[order], return_index=True)
    groups = np.split(order, starts[1:])
    return CoarseGrid(mesh, nb, tri_block, ids, tuple(np.sort(g) for g in groups))


def kappa_tilde(grid: CoarseGrid, points=None) -> np.ndarray:
    """Sum of squared hat-function gradients.

    Evaluated at the fine-triangle centroids by default, or at ``points``.
    Inside one coarse cell only its four hats have nonzero gradient, which
    gives ``2 ((1-xi)^2 + xi^2 + (1-eta)^2 + eta^2) / H^2`` in local coordinates.
    """
    nb = grid.blocks_per_side
    p = grid.mesh.centroids if points is None else np.asarray(points, dtype=float)
    x, y = p[:, 0] * nb, p[:, 1] * nb
    xi = x - np.clip(np.floor(x), 0, nb - 1)
    eta = y - np.clip(np.floor(y), 0, nb - 1)
    return 2.0 * nb**2 * ((1 - xi) ** 2 + xi**2 + (1 - eta) ** 2 + eta**2)


@dataclass(frozen=True)
class OversampleRegion:
    block: int
    layers: int
    blocks: np.ndarray  # compact indices of blocks in the region
    triangles: np.ndarray  # fine triangle indices
    free_dofs: np.ndarray  # indices into the global free-dof numbering


def oversample(grid: CoarseGrid, dof_index: np.ndarray, i: int, m: int) -> OversampleRegion:
    """Enlarge block ``i`` by ``m`` coarse layers (Chebyshev distance, clipped).

    ``dof_index`` maps fine nodes to free-dof indices (-1 on Dirichlet nodes).
    Nodes touching any triangle outside the region are held at zero.
    """
    if m < 0:
        raise ValueError("layer count must be non-negative")
    nb = grid.blocks_per_side
    bx0, by0 = grid.lattice_xy(i)
    lat = grid.block_lattice
    lx, ly = lat % nb, lat // nb
    member = (np.abs(lx - bx0) <= m) & (np.abs(ly - by0) <= m)
    blocks = np.flatnonzero(member)
    tris = np.sort(np.concatenate([grid.block_triangles[b] for b in blocks]))

    mesh = grid.mesh
    inside = np.zeros(mesh.n_triangles, dtype=bool)
    inside[tris] = True
    touched_out = np.zeros(mesh.n_nodes, dtype=bool)
    touched_out[mesh.triangles[~inside].ravel()] = True
    nodes = np.unique(mesh.triangles[tris])
    nodes = nodes[~touched_out[nodes]]
    free = dof_index[nodes]
    free = np.sort(free[free >= 0])
    return OversampleRegion(i, m, blocks, tris, free)


def layers_for(rule, H: float) -> int:
    """Layer count from a rule: an integer, or "log" for ceil(log2(1/H))."""
    if rule == "log":
        return int(np.ceil(np.log2(1.0 / H) - 1e-12))
    return int(rule)

