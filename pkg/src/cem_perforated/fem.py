"""P1 finite elements on a :class:`TriMesh`.

Stiffness and mass matrices are integrated exactly; the load uses the
centroid rule, which is exact for per-triangle constant sources.  Dirichlet
nodes (the outer square) are eliminated, leaving an SPD system on the free
nodes, which include the perforation boundary (natural Neumann condition).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTriangle, NoDirichlet, ZeroReference
from .geometry import NodeTag, TriMesh
from .linalg import conjugate_gradient, coo_to_csr

AREA_MIN = 1e-14
MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def p1_gradients(mesh: TriMesh):
    """Constant gradients of the three P1 shape functions on every triangle.

    Returns ``(grads, areas)`` with ``grads`` of shape (T, 3, 2).
    """
    p = mesh.nodes[mesh.triangles]
    signed = mesh.signed_areas
    if np.any(np.abs(signed) < AREA_MIN):
        k = int(np.argmin(np.abs(signed)))
        raise DegenerateTriangle(f"triangle {k} has area {abs(signed[k]):.3e}")
    # grad(lambda_k) = rot90(opposite edge) / (2 * area)
    x, y = p[..., 0], p[..., 1]
    grads = np.empty(p.shape)
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= (2.0 * signed)[:, None, None]
    return grads, np.abs(signed)


def element_stiffness(mesh: TriMesh) -> np.ndarray:
    grads, areas = p1_gradients(mesh)
    return np.einsum("tid,tjd->tij", grads, grads) * areas[:, None, None]


def element_mass(mesh: TriMesh, weight=None) -> np.ndarray:
    areas = mesh.areas
    scale = areas if weight is None else areas * np.asarray(weight, dtype=float)
    return scale[:, None, None] * MASS_REF[None]


def _scatter(mesh: TriMesh, local: np.ndarray, tri_subset=None):
    t = mesh.triangles if tri_subset is None else mesh.triangles[tri_subset]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return coo_to_csr(rows, cols, local.ravel(), (n, n))


def assemble_stiffness(mesh: TriMesh, tri_subset=None):
    """Stiffness matrix over all mesh nodes (no boundary conditions)."""
    ke = element_stiffness(mesh)
    if tri_subset is not None:
        ke = ke[tri_subset]
    return _scatter(mesh, ke, tri_subset)


def assemble_weighted_mass(mesh: TriMesh, weight=None, tri_subset=None):
    """Mass matrix with per-triangle weight; ``weight=None`` means 1."""
    me = element_mass(mesh, weight)
    if tri_subset is not None:
        me = me[tri_subset]
    return _scatter(mesh, me, tri_subset)


def assemble_load(mesh: TriMesh, f) -> np.ndarray:
    """Load vector for a per-triangle constant (length T) or nodal (length N) source.

    Nodal sources are evaluated at the centroid by averaging the vertex values.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        f_tri = np.full(mesh.n_triangles, float(f))
    elif f.shape == (mesh.n_triangles,):
        f_tri = f
    elif f.shape == (mesh.n_nodes,):
        f_tri = f[mesh.triangles].mean(axis=1)
    else:
        raise ValueError(f"source has shape {f.shape}; expected per-triangle or per-node values")
    contrib = np.repeat((f_tri * mesh.areas / 3.0)[:, None], 3, axis=1)
    return np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.n_nodes)


@dataclass(frozen=True)
class DofMap:
    """Free-unknown numbering; ``index[node] == -1`` marks a Dirichlet node."""

    index: np.ndarray
    free_nodes: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: TriMesh) -> "DofMap":
        fixed = mesh.node_tags == NodeTag.OUTER_DIRICHLET
        free_nodes = np.flatnonzero(~fixed)
        index = np.full(mesh.n_nodes, -1, dtype=np.int64)
        index[free_nodes] = np.arange(len(free_nodes))
        return cls(index, free_nodes)

    @property
    def n_free(self) -> int:
        return len(self.free_nodes)

    @property
    def n_nodes(self) -> int:
        return len(self.index)

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        """Free-dof vector -> nodal field with zeros on Dirichlet nodes."""
        u = np.zeros(self.n_nodes)
        u[self.free_nodes] = u_free
        return u

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u)[self.free_nodes]


@dataclass(frozen=True)
class FemSystem:
    stiffness: object
    load: np.ndarray
    dof_map: DofMap


def assemble_system(mesh: TriMesh, f) -> FemSystem:
    dofs = DofMap.from_mesh(mesh)
    if dofs.n_free == mesh.n_nodes:
        raise NoDirichlet("mesh has no outer Dirichlet node; the Neumann system is singular")
    a = assemble_stiffness(mesh)
    free = dofs.free_nodes
    a_free = a[free][:, free]
    load = assemble_load(mesh, f)[free]
    return FemSystem(a_free.tocsr(), load, dofs)


def solve_fine(mesh: TriMesh, f, tol: float = 1e-10, system: FemSystem | None = None):
    """Fine-scale P1 solution as a nodal field (zero on the outer boundary)."""
    system = system or assemble_system(mesh, f)
    u = conjugate_gradient(system.stiffness, system.load, tol=tol)
    return system.dof_map.expand(u)


class Norms:
    """Energy, L2 and kappa-weighted norms of nodal fields on one mesh."""

    def __init__(self, mesh: TriMesh, kappa=None):
        self.mesh = mesh
        self.stiffness = assemble_stiffness(mesh)
        self.mass = assemble_weighted_mass(mesh)
        self.kappa_mass = None if kappa is None else assemble_weighted_mass(mesh, kappa)

    @staticmethod
    def _quad(m, u):
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(max(u @ (m @ u), 0.0)))

    def energy(self, u) -> float:
        return self._quad(self.stiffness, u)

    def l2(self, u) -> float:
        return self._quad(self.mass, u)

    def s(self, u) -> float:
        if self.kappa_mass is None:
            raise ValueError("kappa weight not provided")
        return self._quad(self.kappa_mass, u)

    def relative_errors(self, u_ref, u_approx) -> tuple[float, float]:
        """(e_L2, e_H1) of ``u_approx`` against the reference ``u_ref``."""
        d = np.asarray(u_ref) - np.asarray(u_approx)
        ref_l2, ref_a = self.l2(u_ref), self.energy(u_ref)
        if ref_l2 == 0.0 or ref_a == 0.0:
            raise ZeroReference("reference solution is zero; relative error undefined")
        return self.l2(d) / ref_l2, self.energy(d) / ref_a


def energy_norm(mesh, u):
    return Norms(mesh).energy(u)


def l2_norm(mesh, u):
    return Norms(mesh).l2(u)


def s_norm(mesh, u, kappa):
    return Norms(mesh, kappa).s(u)


def relative_errors(mesh, u_ref, u_approx):
    return Norms(mesh).relative_errors(u_ref, u_approx)
