"""Perforated unit-square domains and their fine triangulations.

Domains are the unit square minus a set of circular disks.  Meshes come from
a structured ``n x n`` grid of squares, each split into two triangles, with
every triangle whose centroid falls inside a disk removed ("staircase" holes).
Boundary-conforming meshes can be brought in via :mod:`cem_perforated.mshio`.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    ConfigError,
    DomainDisconnected,
    DomainEmpty,
    InconsistentGeometry,
    PlacementFailure,
)

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-12
ATTEMPTS_PER_DISK = 2000


class NodeTag(enum.IntEnum):
    INTERIOR = 0
    OUTER_DIRICHLET = 1
    PERFORATION_NEUMANN = 2


@dataclass(frozen=True)
class DiskPerforation:
    center_x: float
    center_y: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"disk radius must be positive, got {self.radius}")
        if not (0.0 <= self.center_x <= 1.0 and 0.0 <= self.center_y <= 1.0):
            raise ConfigError(
                f"disk center ({self.center_x}, {self.center_y}) outside the unit square"
            )

    def inside_square(self) -> bool:
        """True when the closed disk lies strictly inside (0, 1)^2."""
        c = (self.center_x, self.center_y)
        return all(v - self.radius > 0 and v + self.radius < 1 for v in c)


@dataclass(frozen=True)
class PerforatedDomainSpec:
    disks: tuple[DiskPerforation, ...] = ()
    rng_seed: int | None = None
    allow_boundary_clip: bool = False

    def __post_init__(self):
        object.__setattr__(self, "disks", tuple(self.disks))
        if not self.allow_boundary_clip:
            for d in self.disks:
                if not d.inside_square():
                    raise ConfigError(
                        f"disk at ({d.center_x}, {d.center_y}) r={d.radius} touches the "
                        "outer boundary; set allow_boundary_clip to permit clipping"
                    )

    @property
    def arrays(self):
        """Centers (k, 2) and radii (k,) as arrays."""
        if not self.disks:
            return np.zeros((0, 2)), np.zeros(0)
        c = np.array([[d.center_x, d.center_y] for d in self.disks], dtype=float)
        r = np.array([d.radius for d in self.disks], dtype=float)
        return c, r

    def to_dict(self) -> dict:
        return {
            "disks": [
                {"cx": d.center_x, "cy": d.center_y, "r": d.radius} for d in self.disks
            ],
            "seed": self.rng_seed,
            "allow_boundary_clip": self.allow_boundary_clip,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "PerforatedDomainSpec":
        try:
            disks = tuple(
                DiskPerforation(float(d["cx"]), float(d["cy"]), float(d["r"]))
                for d in data.get("disks", [])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed disk entry: {exc}") from exc
        return cls(
            disks=disks,
            rng_seed=data.get("seed"),
            allow_boundary_clip=bool(data.get("allow_boundary_clip", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "PerforatedDomainSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"domain spec is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh of a perforated domain.

    ``n`` is the number of fine cells per side when the mesh came from
    :func:`triangulate`, and ``None`` for imported meshes.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    node_tags: np.ndarray
    n: int | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def edges(self):
        """Unique edges (E, 2) with sorted endpoints and per-edge triangle counts."""
        t = self.triangles
        all_edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        all_edges.sort(axis=1)
        uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
        return uniq, counts

    @property
    def boundary_edges(self) -> np.ndarray:
        uniq, counts = self.edges
        return uniq[counts == 1]

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def edge_tags(self) -> np.ndarray:
        """Tag per boundary edge: OUTER_DIRICHLET when the edge lies on a side
        of the unit square, PERFORATION_NEUMANN otherwise."""
        be = self.boundary_edges
        p = self.nodes[be]
        on_side = np.zeros(len(be), dtype=bool)
        for axis in (0, 1):
            for value in (0.0, 1.0):
                on = np.abs(p[:, :, axis] - value) <= BOUNDARY_TOL
                on_side |= on[:, 0] & on[:, 1]
        return np.where(on_side, NodeTag.OUTER_DIRICHLET, NodeTag.PERFORATION_NEUMANN).astype(
            np.int8
        )

    @property
    def h(self) -> float:
        """Longest edge length."""
        uniq, _ = self.edges
        d = self.nodes[uniq[:, 0]] - self.nodes[uniq[:, 1]]
        return float(np.sqrt((d * d).sum(axis=1)).max())

    def with_tags(self, tags: np.ndarray) -> "TriMesh":
        return TriMesh(self.nodes, self.triangles, np.asarray(tags, dtype=np.int8), self.n)

    def stats(self) -> dict:
        tags = self.node_tags
        return {
            "nodes": self.n_nodes,
            "triangles": self.n_triangles,
            "outer_dirichlet_nodes": int((tags == NodeTag.OUTER_DIRICHLET).sum()),
            "perforation_nodes": int((tags == NodeTag.PERFORATION_NEUMANN).sum()),
            "area": float(self.areas.sum()),
            "n": self.n,
        }


def generate_perforations(
    count: int,
    radius_range=(0.01, 0.04),
    min_gap: float = 0.005,
    seed: int = 0,
) -> PerforatedDomainSpec:
    """Place ``count`` non-overlapping disks by rejection sampling.

    Raises PlacementFailure when any single disk cannot be placed within
    ``ATTEMPTS_PER_DISK`` draws.
    """
    rmin, rmax = map(float, radius_range)
    if count < 0:
        raise ConfigError("disk count must be non-negative")
    if not (0 < rmin <= rmax < 0.5):
        raise ConfigError(f"invalid radius range {radius_range}")
    if min_gap < 0:
        raise ConfigError("min_gap must be non-negative")

    rng = np.random.default_rng(seed)
    centers = np.zeros((count, 2))
    radii = np.zeros(count)
    placed = 0
    while placed < count:
        for _ in range(ATTEMPTS_PER_DISK):
            r = rng.uniform(rmin, rmax)
            c = rng.uniform(r, 1.0 - r, size=2)
            if not np.all((c - r > 0) & (c + r < 1)):
                continue
            if placed:
                dist = np.hypot(*(centers[:placed] - c).T)
                if np.any(dist <= radii[:placed] + r + min_gap):
                    continue
            centers[placed] = c
            radii[placed] = r
            placed += 1
            break
        else:
            raise PlacementFailure(
                f"placed only {placed} of {count} disks (radius {rmin}..{rmax}, "
                f"gap {min_gap}) after {ATTEMPTS_PER_DISK} attempts for the next disk"
            )
    disks = tuple(
        DiskPerforation(float(cx), float(cy), float(r)) for (cx, cy), r in zip(centers, radii)
    )
    return PerforatedDomainSpec(disks=disks, rng_seed=seed)


def _structured_triangles(n: int) -> np.ndarray:
    # Diagonal direction alternates in a checkerboard so the mesh is symmetric
    # under both x -> 1-x and y -> 1-y when n is even.
    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ix = ix.ravel()
    iy = iy.ravel()
    a = iy * (n + 1) + ix
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    even = (ix + iy) % 2 == 0
    t1 = np.where(even[:, None], np.stack([a, b, c], 1), np.stack([a, b, d], 1))
    t2 = np.where(even[:, None], np.stack([a, c, d], 1), np.stack([b, c, d], 1))
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = t1
    tris[1::2] = t2
    return tris


def triangle_components(triangles: np.ndarray) -> tuple[int, np.ndarray]:
    """Connected components of the edge-adjacency graph of the triangles."""
    nt = len(triangles)
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    owner = np.tile(np.arange(nt), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e = e[order]
    owner = owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    i = owner[:-1][same]
    j = owner[1:][same]
    graph = coo_matrix((np.ones(len(i)), (i, j)), shape=(nt, nt))
    return connected_components(graph, directed=False)


def triangulate(spec: PerforatedDomainSpec, n: int, drop_islands: bool = False) -> TriMesh:
    """Structured staircase triangulation of the perforated domain.

    Two disks closer than the fine mesh size can pinch off a few triangles.
    That raises DomainDisconnected unless ``drop_islands`` is set, in which
    case only the largest connected piece is kept.
    """
    if n < 2:
        raise ConfigError(f"fine grid size n must be >= 2, got {n}")
    g = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(g, g, indexing="xy")
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    tris = _structured_triangles(n)

    centers, radii = spec.arrays
    if len(radii):
        cen = nodes[tris].mean(axis=1)
        keep = np.ones(len(tris), dtype=bool)
        for c, r in zip(centers, radii):
            keep &= np.hypot(cen[:, 0] - c[0], cen[:, 1] - c[1]) >= r
        tris = tris[keep]
    if len(tris) == 0:
        raise DomainEmpty("no triangle survives the perforation removal")

    ncomp, labels = triangle_components(tris)
    if ncomp != 1:
        if not drop_islands:
            raise DomainDisconnected(f"perforated domain splits into {ncomp} components")
        sizes = np.bincount(labels)
        main = int(np.argmax(sizes))
        log.warning(
            "dropping %d triangles in %d pinched-off pieces at n=%d",
            len(tris) - sizes[main], ncomp - 1, n,
        )
        tris = tris[labels == main]

    used = np.unique(tris)
    remap = np.full(len(nodes), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes = nodes[used]
    tris = remap[tris]

    mesh = TriMesh(nodes, tris, np.zeros(len(nodes), dtype=np.int8), n)
    return classify_boundary(mesh, spec)


def classify_boundary(mesh: TriMesh, spec: PerforatedDomainSpec) -> TriMesh:
    """Tag boundary nodes; Dirichlet wins where the outer square and a hole meet."""
    tags = np.full(mesh.n_nodes, NodeTag.INTERIOR, dtype=np.int8)
    bnodes = mesh.boundary_nodes
    p = mesh.nodes[bnodes]
    outer = np.any((np.abs(p) <= BOUNDARY_TOL) | (np.abs(p - 1.0) <= BOUNDARY_TOL), axis=1)

    inner = bnodes[~outer]
    if len(inner):
        centers, radii = spec.arrays
        if len(radii) == 0:
            raise InconsistentGeometry(
                f"{len(inner)} boundary nodes lie off the outer square but the domain has no disks"
            )
        tol = mesh.h
        q = mesh.nodes[inner]
        d = np.hypot(q[:, None, 0] - centers[None, :, 0], q[:, None, 1] - centers[None, :, 1])
        near = np.any(d <= radii[None, :] + tol, axis=1)
        if not np.all(near):
            bad = q[~near][0]
            raise InconsistentGeometry(
                f"boundary node at ({bad[0]:.6g}, {bad[1]:.6g}) is neither on the outer "
                "square nor next to a perforation"
            )
    tags[bnodes[outer]] = NodeTag.OUTER_DIRICHLET
    tags[inner] = NodeTag.PERFORATION_NEUMANN
    return mesh.with_tags(tags)


def validate_mesh(mesh: TriMesh) -> None:
    """Check structural invariants; raise on the first violation."""
    if mesh.n_triangles == 0:
        raise DomainEmpty("mesh has no triangles")
    t = mesh.triangles
    if t.min() < 0 or t.max() >= mesh.n_nodes:
        raise InconsistentGeometry("triangle references a node index out of range")
    if len(np.unique(t)) != mesh.n_nodes:
        raise InconsistentGeometry("mesh contains orphan nodes")
    if np.any(mesh.signed_areas <= 0):
        raise InconsistentGeometry("mesh contains non-positively oriented triangles")
    ncomp, _ = triangle_components(t)
    if ncomp != 1:
        raise DomainDisconnected(f"mesh splits into {ncomp} components")
