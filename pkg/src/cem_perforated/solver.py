"""Coarse Galerkin solve and the convergence / layer-decay studies."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .basis import BasisBuilder, MsBasisSet, Variant, gram_matrix
from .coarse import build_coarse_grid, kappa_tilde, layers_for
from .errors import ConfigError
from .fem import FemSystem, Norms, assemble_system, solve_fine
from .geometry import TriMesh
from .linalg import cholesky_solve, conjugate_gradient
from .spectral import build_aux_space

DENSE_LIMIT = 10_000
REFERENCE_TOL = 1e-10
RANGE_RTOL = 1e-12

CSV_FIELDS = ["H", "m", "variant", "l", "e_L2", "e_H1", "n_fine_dofs", "n_ms_dofs", "wall_ms"]
DECAY_FIELDS = CSV_FIELDS + ["max_basis_decay"]


@dataclass(frozen=True, eq=False)
class MsSolution:
    u_coarse: np.ndarray
    u_free: np.ndarray  # multiscale solution on the fine free dofs
    u_ms: np.ndarray  # nodal field
    e_L2: float | None = None
    e_H1: float | None = None


def _range_solve(ac, fc):
    """Solve on the range of a symmetric PSD matrix (redundant spanning sets)."""
    w, v = np.linalg.eigh(ac)
    keep = w > RANGE_RTOL * w.max()
    return v[:, keep] @ ((v[:, keep].T @ fc) / w[keep])


def solve_multiscale(basis: MsBasisSet, system: FemSystem, reference=None, norms=None,
                     allow_redundant=False):
    """Galerkin solve in the span of the rows of ``basis.R``.

    With a nodal ``reference`` (and ``norms`` for its mesh) the relative
    errors are filled in.  A linearly dependent basis raises
    NotPositiveDefinite unless ``allow_redundant`` is set, in which case the
    coarse system is solved on the range of its matrix; the resulting
    ``u_ms`` is still the unique Galerkin solution in the span.
    """
    R = basis.R
    ac = gram_matrix(basis, system.stiffness)
    ac = 0.5 * (ac + ac.T)
    fc = R @ system.load
    if allow_redundant:
        uc = _range_solve(ac, fc)
    elif ac.shape[0] <= DENSE_LIMIT:
        uc = cholesky_solve(ac, fc)
    else:
        uc = conjugate_gradient(ac, fc, tol=1e-12)
    u_free = R.T @ uc
    u_ms = system.dof_map.expand(u_free)
    e_l2 = e_h1 = None
    if reference is not None:
        e_l2, e_h1 = norms.relative_errors(reference, u_ms)
    return MsSolution(uc, u_free, u_ms, e_l2, e_h1)


class FineProblem:
    """A mesh, a source, and the fine reference solution, shared across studies."""

    def __init__(self, mesh: TriMesh, source):
        self.mesh = mesh
        self.source = np.asarray(source, dtype=float)
        self.system = assemble_system(mesh, self.source)
        self.u_h = solve_fine(mesh, self.source, tol=REFERENCE_TOL, system=self.system)
        self.norms = Norms(mesh)
        self._builders = {}

    @property
    def n_fine_dofs(self) -> int:
        return self.system.dof_map.n_free

    def blocks_for(self, H: float) -> int:
        nb = int(round(1.0 / H))
        if nb < 1 or abs(nb * H - 1.0) > 1e-9:
            raise ConfigError(f"coarse size H={H} is not the reciprocal of an integer")
        return nb

    def builder(self, H: float, l: int) -> BasisBuilder:
        key = (self.blocks_for(H), l)
        if key not in self._builders:
            grid = build_coarse_grid(self.mesh, key[0])
            aux = build_aux_space(grid, kappa_tilde(grid), l)
            self._builders[key] = BasisBuilder(self.system, grid, aux)
        return self._builders[key]

    def solve(self, H, layers, l, variant, threads=1) -> tuple[MsSolution, MsBasisSet]:
        b = self.builder(H, l)
        basis = b.build_basis_set(layers, variant, threads=threads)
        # relative errors are undefined for a zero reference; leave them blank
        ref = self.u_h if self.u_h.any() else None
        return solve_multiscale(basis, self.system, ref, self.norms), basis


def _row(H, m, variant, l, sol, problem, basis, wall_ms):
    return {
        "H": H,
        "m": m,
        "variant": Variant(variant).value,
        "l": l,
        "e_L2": sol.e_L2,
        "e_H1": sol.e_H1,
        "n_fine_dofs": problem.n_fine_dofs,
        "n_ms_dofs": basis.size,
        "wall_ms": wall_ms,
    }


def convergence_study(problem: FineProblem, schedule, l=3, variants=("constraint",), threads=1,
                      timing=False):
    """Errors for each ``(H, m_rule)`` in ``schedule`` and each variant.

    ``m_rule`` may be an integer or ``"log"``.  ``wall_ms`` is recorded only
    when ``timing`` is set so that default output is reproducible bit for bit.
    """
    rows = []
    for H, rule in schedule:
        m = layers_for(rule, H)
        for variant in variants:
            t0 = time.perf_counter()
            sol, basis = problem.solve(H, m, l, variant, threads)
            wall = round(1000 * (time.perf_counter() - t0)) if timing else None
            rows.append(_row(H, m, variant, l, sol, problem, basis, wall))
    return rows


def decay_study(problem: FineProblem, H, l=3, variants=("constraint",), m_list=(1, 2, 3, 4),
                threads=1, timing=False, with_global=True):
    """Errors versus oversampling layers at fixed ``H``.

    ``max_basis_decay`` is the largest ``||psi_global - psi_m||_a`` over all
    basis functions; it needs the global basis (one full factorization plus a
    dense n_fine x N_aux block) and is skipped when ``with_global`` is false.
    """
    rows = []
    b = problem.builder(H, l)
    for variant in variants:
        glo = b._global_all(Variant(variant)) if with_global else None
        for m in m_list:
            t0 = time.perf_counter()
            sol, basis = problem.solve(H, m, l, variant, threads)
            wall = round(1000 * (time.perf_counter() - t0)) if timing else None
            row = _row(H, m, variant, l, sol, problem, basis, wall)
            if glo is not None:
                diff = glo.T - basis.R.toarray()
                energies = np.einsum("ij,ij->i", diff, (b.K @ diff.T).T)
                row["max_basis_decay"] = float(np.sqrt(max(energies.max(), 0.0)))
            else:
                row["max_basis_decay"] = None
            rows.append(row)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows, fields=CSV_FIELDS) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\r\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in fields])
    return out.getvalue()
