import io

import numpy as np
import pytest

from cem_perforated.errors import MissingTags, ParseError, UnsupportedVersion
from cem_perforated.geometry import NodeTag, generate_perforations, triangulate
from cem_perforated.mshio import export_msh, import_msh, write_vtk

ONE_TRIANGLE = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
3
1 0 0 0
2 1 0 0
3 0 1 0
$EndNodes
$Elements
4
1 1 2 1 1 1 2
2 1 2 1 1 2 3
3 1 2 1 1 3 1
4 2 2 3 3 1 3 2
$EndElements
"""


def test_single_triangle():
    mesh = import_msh(ONE_TRIANGLE)
    assert mesh.n_nodes == 3 and mesh.n_triangles == 1
    # given clockwise, stored counter-clockwise
    assert mesh.signed_areas[0] == pytest.approx(0.5)
    assert np.all(mesh.node_tags == NodeTag.OUTER_DIRICHLET)


def test_accepts_bytes_and_streams():
    assert import_msh(ONE_TRIANGLE.encode()).n_triangles == 1
    assert import_msh(io.StringIO(ONE_TRIANGLE)).n_triangles == 1


def test_version_4_rejected():
    with pytest.raises(UnsupportedVersion):
        import_msh(ONE_TRIANGLE.replace("2.2 0 8", "4.1 0 8"))


def test_untagged_boundary_line():
    text = ONE_TRIANGLE.replace("1 1 2 1 1 1 2", "1 1 0 1 2")
    with pytest.raises(MissingTags):
        import_msh(text)


def test_malformed_file():
    with pytest.raises(ParseError):
        import_msh(ONE_TRIANGLE.replace("$EndNodes\n", ""))
    with pytest.raises(ParseError):
        import_msh(ONE_TRIANGLE.replace("1 0 0 0", "1 zero 0 0"))


def test_roundtrip_generated_mesh():
    mesh = triangulate(generate_perforations(5, (0.03, 0.06), 0.01, 2), 16)
    back = import_msh(export_msh(mesh))
    assert np.abs(back.nodes - mesh.nodes).max() <= 1e-12
    a = {tuple(sorted(t)) for t in mesh.triangles.tolist()}
    b = {tuple(sorted(t)) for t in back.triangles.tolist()}
    assert a == b
    assert np.array_equal(back.node_tags, mesh.node_tags)


def test_vtk_writer(tmp_path, square16):
    path = tmp_path / "u.vtk"
    u = square16.nodes[:, 0]
    write_vtk(path, square16, {"u": u})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version")
    assert f"POINTS {square16.n_nodes}" in text
    assert f"CELLS {square16.n_triangles} {4 * square16.n_triangles}" in text
    assert "SCALARS u float" in text
