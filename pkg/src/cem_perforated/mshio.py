"""Gmsh MSH 2.2 ASCII reader/writer and VTK legacy writer.

Only the subset needed here is supported: ``$MeshFormat 2.2 0 8``,
``$Nodes`` and ``$Elements`` with 2-node lines (type 1) carrying boundary
physical tags and 3-node triangles (type 2).  Physical tag 1 marks the outer
Dirichlet boundary, tag 2 the perforation boundary.
"""

from __future__ import annotations

import io
import os

import numpy as np

from .errors import MissingTags, ParseError, UnsupportedVersion
from .geometry import NodeTag, TriMesh

LINE, TRIANGLE, POINT = 1, 2, 15
OUTER_TAG, PERFORATION_TAG, DOMAIN_TAG = 1, 2, 3


def _sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("$"):
            name = line[1:]
            if name.startswith("End"):
                if current is None or name[3:] != current:
                    raise ParseError(f"unexpected section terminator {line}")
                current = None
            else:
                if current is not None:
                    raise ParseError(f"section ${current} not terminated before {line}")
                current = name
                sections[current] = []
            continue
        if current is None:
            raise ParseError(f"content outside any section: {line[:40]!r}")
        sections[current].append(line)
    if current is not None:
        raise ParseError(f"section ${current} not terminated")
    return sections


def import_msh(data) -> TriMesh:
    """Read an MSH 2.2 ASCII mesh from bytes, text, or a binary/text stream."""
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError("MSH stream is not ASCII") from exc

    sec = _sections(data)
    for name in ("MeshFormat", "Nodes", "Elements"):
        if name not in sec:
            raise ParseError(f"missing ${name} section")
    fmt = sec["MeshFormat"][0].split()
    if not fmt or fmt[0] not in ("2.2", "2.2.0"):
        raise UnsupportedVersion(f"MSH version {fmt[0] if fmt else '?'} not supported (need 2.2)")
    if len(fmt) > 1 and fmt[1] != "0":
        raise UnsupportedVersion("binary MSH files are not supported")

    try:
        node_lines = sec["Nodes"]
        n_nodes = int(node_lines[0])
        if len(node_lines) - 1 != n_nodes:
            raise ParseError(f"$Nodes declares {n_nodes} nodes, found {len(node_lines) - 1}")
        ids = np.empty(n_nodes, dtype=np.int64)
        xy = np.empty((n_nodes, 2))
        for k, line in enumerate(node_lines[1:]):
            parts = line.split()
            ids[k] = int(parts[0])
            xy[k] = float(parts[1]), float(parts[2])

        elem_lines = sec["Elements"]
        n_elem = int(elem_lines[0])
        if len(elem_lines) - 1 != n_elem:
            raise ParseError(f"$Elements declares {n_elem} elements, found {len(elem_lines) - 1}")
        tris, lines, line_tags = [], [], []
        for line in elem_lines[1:]:
            parts = [int(v) for v in line.split()]
            etype, ntags = parts[1], parts[2]
            tags = parts[3 : 3 + ntags]
            conn = parts[3 + ntags :]
            if etype == TRIANGLE:
                if len(conn) != 3:
                    raise ParseError(f"triangle element with {len(conn)} nodes")
                tris.append(conn)
            elif etype == LINE:
                if len(conn) != 2:
                    raise ParseError(f"line element with {len(conn)} nodes")
                if not tags:
                    raise MissingTags(f"boundary line element {parts[0]} has no physical tag")
                lines.append(conn)
                line_tags.append(tags[0])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed MSH content: {exc}") from exc

    if not tris:
        raise ParseError("MSH file contains no triangles")

    lookup = {int(v): k for k, v in enumerate(ids)}
    try:
        tri = np.array([[lookup[v] for v in t] for t in tris], dtype=np.int64)
        seg = np.array([[lookup[v] for v in s] for s in lines], dtype=np.int64).reshape(-1, 2)
    except KeyError as exc:
        raise ParseError(f"element references unknown node {exc}") from exc

    p = xy[tri]
    signed = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    flip = signed < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]

    tags = np.full(len(xy), NodeTag.INTERIOR, dtype=np.int8)
    for (a, b), t in zip(seg, line_tags):
        if t == OUTER_TAG:
            tags[[a, b]] = NodeTag.OUTER_DIRICHLET
        elif t == PERFORATION_TAG:
            for v in (a, b):
                if tags[v] != NodeTag.OUTER_DIRICHLET:
                    tags[v] = NodeTag.PERFORATION_NEUMANN
        else:
            raise MissingTags(f"unknown boundary physical tag {t} (expected 1 or 2)")

    used = np.unique(tri)
    remap = np.full(len(xy), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(xy[used], remap[tri], tags[used], None)


def export_msh(mesh: TriMesh) -> str:
    """Serialize a mesh as MSH 2.2 ASCII with tagged boundary lines."""
    out = io.StringIO()
    out.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    out.write(f"$Nodes\n{mesh.n_nodes}\n")
    for k, (x, y) in enumerate(mesh.nodes.tolist()):
        out.write(f"{k + 1} {x!r} {y!r} 0\n")
    out.write("$EndNodes\n")
    be = mesh.boundary_edges
    etags = mesh.edge_tags()
    out.write(f"$Elements\n{len(be) + mesh.n_triangles}\n")
    eid = 1
    for (a, b), t in zip(be, etags):
        phys = OUTER_TAG if t == NodeTag.OUTER_DIRICHLET else PERFORATION_TAG
        out.write(f"{eid} {LINE} 2 {phys} {phys} {a + 1} {b + 1}\n")
        eid += 1
    for a, b, c in mesh.triangles:
        out.write(f"{eid} {TRIANGLE} 2 {DOMAIN_TAG} {DOMAIN_TAG} {a + 1} {b + 1} {c + 1}\n")
        eid += 1
    out.write("$EndElements\n")
    return out.getvalue()


def write_vtk(path, mesh: TriMesh, fields: dict[str, np.ndarray], title="cem_perforated"):
    """Write point fields on the mesh as a VTK legacy ASCII unstructured grid."""
    path = os.fspath(path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    nn, nt = mesh.n_nodes, mesh.n_triangles
    with open(path, "w") as fp:
        fp.write("# vtk DataFile Version 2.0\n")
        fp.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fp.write(f"POINTS {nn} float\n")
        for x, y in mesh.nodes:
            fp.write(f"{x:.10g} {y:.10g} 0\n")
        fp.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            fp.write(f"3 {a} {b} {c}\n")
        fp.write(f"CELL_TYPES {nt}\n")
        fp.write("5\n" * nt)
        fp.write(f"POINT_DATA {nn}\n")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (nn,):
                raise ValueError(f"field {name!r} has shape {values.shape}, expected ({nn},)")
            fp.write(f"SCALARS {name} float 1\nLOOKUP_TABLE default\n")
            for v in values:
                fp.write(f"{v:.12g}\n")
