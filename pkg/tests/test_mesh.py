import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastobem.mesh import (
    Curve2D,
    SurfaceMesh,
    circle_curve,
    classify_points,
    cube_mesh,
    element_frame,
    icosphere,
    load_msh,
    refine,
)

MSH_SQUARE = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
3
1 2 2 7 1 1 2 3
2 2 2 7 1 1 3 4
3 1 2 5 1 1 2
$EndElements
"""


def test_icosphere_counts_and_orientation():
    m = icosphere(0)
    assert (m.n_triangles, m.n_vertices) == (20, 12)
    assert m.closed and m.oriented
    # outward normals: positive signed volume
    vol = np.einsum("td,td->t", m.centroids, m.normals * m.areas[:, None]).sum() / 3.0
    assert vol > 0


def test_icosphere_refine_example():
    m = icosphere(1)
    assert (m.n_triangles, m.n_vertices) == (80, 42)
    assert np.abs(np.linalg.norm(m.vertices, axis=1) - 1.0).max() <= 1e-14


@pytest.mark.parametrize("level", [0, 1, 2])
def test_closed_mesh_normal_sum(level):
    m = icosphere(level)
    resultant = (m.normals * m.areas[:, None]).sum(axis=0)
    assert np.linalg.norm(resultant) <= 1e-12 * m.areas.sum()


def test_classify_sphere_points():
    m = icosphere(2)
    rng = np.random.default_rng(3)
    dirs = rng.normal(size=(20, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    grid = classify_points(m, 0.5 * dirs)
    assert np.all(grid.interior)
    assert np.all(grid.signed_distance < 0)
    grid = classify_points(m, 2.0 * dirs)
    assert not np.any(grid.interior)
    # distance estimate: icosphere(2) is inscribed, so 1 <= d+1 <= ~1.01
    assert np.all(grid.signed_distance > 0.99)
    assert np.all(grid.signed_distance < 1.02)
    assert np.allclose(grid.distance, grid.signed_distance)


def test_classify_requires_closed():
    patch = SurfaceMesh(np.eye(3), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        classify_points(patch, np.zeros((1, 3)))


def test_classify_on_facet_point_is_ambiguous():
    m = icosphere(1)
    on_facet = m.centroids[0]
    with pytest.raises(ValueError, match="classify"):
        classify_points(m, on_facet[None, :])


def test_refine_requires_closed():
    patch = SurfaceMesh(np.eye(3), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        refine(patch)


def test_cube_mesh():
    c = cube_mesh(2)
    assert (c.n_triangles, c.n_vertices) == (48, 26)
    assert c.closed and c.oriented
    assert c.areas.sum() == pytest.approx(24.0, abs=1e-12)
    grid = classify_points(c, np.array([[0.0, 0.0, 0.0], [0.9, -0.9, 0.2]]))
    assert np.all(grid.interior)
    out = classify_points(c, np.array([[1.1, 0.0, 0.0]]))
    assert not out.interior[0]
    assert out.signed_distance[0] == pytest.approx(0.1, abs=1e-12)


def test_degenerate_triangle_rejected():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    with pytest.raises(ValueError, match="degenerate"):
        SurfaceMesh(verts, np.array([[0, 1, 2]]))


def test_bad_index_rejected():
    with pytest.raises(ValueError):
        SurfaceMesh(np.eye(3), np.array([[0, 1, 5]]))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=19))
def test_element_frame_orthonormal(i):
    m = icosphere(0)
    fr = element_frame(m, i)
    assert abs(np.dot(fr.t1, fr.t2)) < 1e-13
    assert abs(np.dot(fr.t1, fr.normal)) < 1e-13
    assert np.linalg.norm(np.cross(fr.t1, fr.t2) - fr.normal) < 1e-13
    assert fr.area == pytest.approx(m.areas[i])


def test_open_patch_boundary():
    patch = SurfaceMesh(
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        np.array([[0, 1, 2]]),
    )
    assert not patch.closed
    assert len(patch.boundary_edges) == 3


def test_refine_welds_and_preserves_flat_area():
    cube = cube_mesh(1)
    r = refine(cube)
    assert r.n_triangles == 48
    # 8 original vertices + 18 welded edge midpoints
    assert r.n_vertices == 26
    assert r.areas.sum() == pytest.approx(cube.areas.sum(), abs=1e-13)
    assert r.closed and r.oriented
    assert np.all(r.labels == cube.labels[0])


def test_load_msh(tmp_path):
    p = tmp_path / "square.msh"
    p.write_text(MSH_SQUARE)
    m = load_msh(p)
    assert (m.n_triangles, m.n_vertices) == (2, 4)
    assert np.all(m.labels == 7)
    assert m.areas.sum() == pytest.approx(1.0)


def test_load_msh_bad_version(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text(MSH_SQUARE.replace("2.2 0 8", "4.1 0 8"))
    with pytest.raises(ValueError, match="version"):
        load_msh(p)


def test_load_msh_missing_section(tmp_path):
    p = tmp_path / "trunc.msh"
    p.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    with pytest.raises(ValueError, match="Nodes"):
        load_msh(p)


def test_load_msh_rejects_quads(tmp_path):
    p = tmp_path / "quad.msh"
    p.write_text(MSH_SQUARE.replace("3\n1 2 2 7 1 1 2 3\n2 2 2 7 1 1 3 4",
                                    "2\n1 3 2 7 1 1 2 3 4"))
    with pytest.raises(ValueError, match="quad"):
        load_msh(p)


def test_load_msh_rejects_triangle_free_files(tmp_path):
    p = tmp_path / "lines.msh"
    p.write_text(MSH_SQUARE.replace("3\n1 2 2 7 1 1 2 3\n2 2 2 7 1 1 3 4\n3 1 2 5 1 1 2",
                                    "1\n3 1 2 5 1 1 2"))
    with pytest.raises(ValueError, match="no triangle"):
        load_msh(p)


def test_circle_curve():
    n = 16
    c = circle_curve(n)
    assert c.total_length == pytest.approx(2 * n * np.sin(np.pi / n))
    # outward normals and tangent = normal rotated by +pi/2
    assert np.einsum("sd,sd->s", c.normals, c.midpoints).min() > 0
    rot = np.stack([-c.normals[:, 1], c.normals[:, 0]], axis=1)
    assert np.abs(rot - c.tangents).max() < 1e-14
    assert np.abs(np.einsum("sd,sd->s", c.normals, c.tangents)).max() < 1e-14


def test_curve_degenerate_rejected():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        Curve2D(pts)
