import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastobem.guenter import (
    Density,
    LeviCivita,
    boundary_curl_term,
    curvature_form_check,
    guenter_block,
    guenter_matrix_apply,
    guenter_pointwise,
    guenter_scalar,
    hat_gradients,
    surface_curl,
    symmetry_residual,
)
from elastobem.mesh import SurfaceMesh, cube_mesh, icosphere
from elastobem.quadrature import gauss_triangle, physical_rule


def flat_patch():
    # unit square at z = 1, normals +e3
    verts = np.array(
        [[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]]
    )
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return SurfaceMesh(verts, tris)


def open_cap(level=1, zmin=0.2):
    sph = icosphere(level)
    keep = sph.centroids[:, 2] > zmin
    return SurfaceMesh(sph.vertices, sph.triangles[keep])


def test_levi_civita_contraction():
    assert np.array_equal(
        np.einsum("ijk,ljk->il", LeviCivita, LeviCivita), 2.0 * np.eye(3)
    )


def test_flat_patch_scalar_examples():
    mesh = flat_patch()
    u = mesh.vertices[:, 0]  # u = x1
    m13 = guenter_scalar(mesh, u, 0, 2)
    m23 = guenter_scalar(mesh, u, 1, 2)
    m12 = guenter_scalar(mesh, u, 0, 1)
    assert np.allclose(m13.coeffs, 1.0, atol=1e-14)
    assert np.allclose(m23.coeffs, 0.0, atol=1e-14)
    assert np.allclose(m12.coeffs, 0.0, atol=1e-14)


def test_flat_patch_matrix_example():
    mesh = flat_patch()
    U = np.zeros((3, mesh.n_vertices))
    U[0] = mesh.vertices[:, 0]  # U = (x1, 0, 0)
    out = guenter_matrix_apply(mesh, U)
    expect = np.array([0.0, 0.0, -1.0])
    assert np.allclose(out.coeffs.T, expect[None, :], atol=1e-14)


def test_flat_patch_surface_curl_example():
    mesh = flat_patch()
    U = np.zeros((3, mesh.n_vertices))
    U[0] = -mesh.vertices[:, 1]
    U[1] = mesh.vertices[:, 0]  # rigid rotation about e3
    out = surface_curl(mesh, U)
    assert np.allclose(out.coeffs, 2.0, atol=1e-13)


def test_linear_field_guenter_is_exact():
    mesh = icosphere(1)
    a = np.array([0.3, -1.1, 0.7])
    u = mesh.vertices @ a
    n = mesh.normals
    for i, j in ((0, 1), (0, 2), (1, 2)):
        got = guenter_scalar(mesh, u, i, j).coeffs[0]
        expect = n[:, j] * a[i] - n[:, i] * a[j]
        assert np.abs(got - expect).max() < 1e-13


def test_blocks_are_skew_in_indices():
    mesh = icosphere(0)
    for i in range(3):
        assert np.abs(guenter_block(mesh, i, i)).max() == 0.0
    for i, j in ((0, 1), (0, 2), (1, 2)):
        assert np.allclose(
            guenter_block(mesh, i, j), -guenter_block(mesh, j, i), atol=1e-15
        )


def test_block_matches_scalar_apply():
    mesh = icosphere(1)
    rng = np.random.default_rng(7)
    u = rng.standard_normal(mesh.n_vertices)
    blk = guenter_block(mesh, 0, 2)
    assert np.allclose(blk @ u, guenter_scalar(mesh, u, 0, 2).coeffs[0], atol=1e-13)


@pytest.mark.parametrize("mesh_fn", [lambda: icosphere(1), lambda: cube_mesh(3)])
def test_closed_mesh_symmetry(mesh_fn):
    mesh = mesh_fn()
    rng = np.random.default_rng(11)
    for _ in range(20):
        u = rng.standard_normal(mesh.n_vertices)
        v = rng.standard_normal(mesh.n_vertices)
        scale = np.abs(u).max() * np.abs(v).max() * mesh.areas.sum()
        for i, j in ((0, 1), (0, 2), (1, 2)):
            r = symmetry_residual(mesh, u, v, i, j)
            assert abs(r) < 1e-12 * scale


def test_open_patch_residual_matches_line_integral():
    mesh = open_cap()
    assert len(mesh.boundary_edges) > 0
    rng = np.random.default_rng(5)
    u = rng.standard_normal(mesh.n_vertices)
    v = rng.standard_normal(mesh.n_vertices)
    for i, j in ((0, 1), (0, 2), (1, 2), (1, 0)):
        r = symmetry_residual(mesh, u, v, i, j)
        b = boundary_curl_term(mesh, u, v, i, j)
        assert abs(r - b) < 1e-12 * max(abs(r), 1.0)


def test_boundary_term_vanishes_on_closed_mesh():
    mesh = icosphere(0)
    u = np.ones(mesh.n_vertices)
    assert boundary_curl_term(mesh, u, u, 0, 1) == 0.0


def test_curvature_form_normal_field():
    # U = n on the unit sphere: both forms give -2 n
    pts = icosphere(1).vertices
    diff = curvature_form_check(lambda x: x, lambda x: np.tile(np.eye(3), (len(x), 1, 1)), pts)
    assert diff < 1e-12
    out = guenter_pointwise(np.tile(np.eye(3), (len(pts), 1, 1)), pts)
    assert np.abs(out + 2.0 * pts).max() < 1e-12


def test_curvature_form_polynomial_field():
    def U(x):
        return np.stack([x[:, 0] ** 2, x[:, 1] * x[:, 2], x[:, 2] + x[:, 0]], axis=1)

    def JU(x):
        m = len(x)
        jac = np.zeros((m, 3, 3))
        jac[:, 0, 0] = 2.0 * x[:, 0]
        jac[:, 1, 1] = x[:, 2]
        jac[:, 1, 2] = x[:, 1]
        jac[:, 2, 0] = 1.0
        jac[:, 2, 2] = 1.0
        return jac

    pts = icosphere(2).vertices
    assert curvature_form_check(U, JU, pts) < 1e-12


def test_curvature_form_rejects_off_sphere_points():
    with pytest.raises(ValueError):
        curvature_form_check(lambda x: x, lambda x: np.tile(np.eye(3), (len(x), 1, 1)),
                             np.array([[2.0, 0.0, 0.0]]))


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_pointwise_matches_kupradze_split(seed):
    # (M u) = d_n u + n x curl u - n div u for any Jacobian
    rng = np.random.default_rng(seed)
    jac = rng.standard_normal((3, 3))
    n = rng.standard_normal(3)
    n /= np.linalg.norm(n)
    dn = jac @ n
    curl = np.array(
        [jac[2, 1] - jac[1, 2], jac[0, 2] - jac[2, 0], jac[1, 0] - jac[0, 1]]
    )
    expect = dn + np.cross(n, curl) - n * np.trace(jac)
    got = guenter_pointwise(jac[None], n[None])[0]
    assert np.abs(got - expect).max() < 1e-13


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_hat_gradients_interpolate_linears(seed):
    rng = np.random.default_rng(seed)
    verts = rng.standard_normal((3, 3))
    mesh_area2 = np.linalg.norm(np.cross(verts[1] - verts[0], verts[2] - verts[0]))
    if mesh_area2 < 1e-3:
        return
    mesh = SurfaceMesh(verts, np.array([[0, 1, 2]]))
    g = hat_gradients(mesh)[0]
    n = mesh.normals[0]
    a = rng.standard_normal(3)
    grad = (verts @ a) @ g  # sum_v f(p_v) g_v
    expect = a - n * (n @ a)
    assert np.abs(grad - expect).max() < 1e-10
    assert np.abs(g @ n).max() < 1e-12
    assert np.abs(g.sum(axis=0)).max() < 1e-12


KEAST_A = (5.0 - np.sqrt(5.0)) / 20.0
KEAST_B = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0


def tet_rule_points():
    # degree-2 four-point rule, barycentric rows sum to 1, weights 1/4
    bary = np.full((4, 4), KEAST_A)
    np.fill_diagonal(bary, KEAST_B)
    return bary


def test_volume_form_identity_on_polyhedron():
    # <v, M u> over the closed surface equals the volume integral of
    # grad u : grad v - curl u . curl v - div u div v for smooth fields
    def u_fn(x):
        return np.stack([x[:, 0] ** 2, x[:, 1] * x[:, 2], x[:, 2] + x[:, 0]], axis=1)

    def ju_fn(x):
        m = len(x)
        jac = np.zeros((m, 3, 3))
        jac[:, 0, 0] = 2.0 * x[:, 0]
        jac[:, 1, 1] = x[:, 2]
        jac[:, 1, 2] = x[:, 1]
        jac[:, 2, 0] = 1.0
        jac[:, 2, 2] = 1.0
        return jac

    def v_fn(x):
        return np.stack([x[:, 0] * x[:, 1], x[:, 2] ** 2, x[:, 0]], axis=1)

    def jv_fn(x):
        m = len(x)
        jac = np.zeros((m, 3, 3))
        jac[:, 0, 0] = x[:, 1]
        jac[:, 0, 1] = x[:, 0]
        jac[:, 1, 2] = 2.0 * x[:, 2]
        jac[:, 2, 0] = 1.0
        return jac

    mesh = cube_mesh(2)
    rule = gauss_triangle(4)
    pts, wts = physical_rule(rule, mesh.tri_coords)  # (nt, nq, 3), (nt, nq)
    nt, nq, _ = pts.shape
    flat = pts.reshape(-1, 3)
    mu = guenter_pointwise(
        ju_fn(flat).reshape(nt, nq, 3, 3),
        np.broadcast_to(mesh.normals[:, None, :], (nt, nq, 3)),
    )
    surface = np.einsum("tq,tqi,tqi->", wts, v_fn(flat).reshape(nt, nq, 3), mu)

    bary = tet_rule_points()
    volume = 0.0
    for t in range(mesh.n_triangles):
        p = mesh.tri_coords[t]
        vol = np.linalg.det(p) / 6.0  # tet (0, p0, p1, p2)
        x = bary[:, 1:] @ p  # apex at origin contributes nothing
        ju = ju_fn(x)
        jv = jv_fn(x)
        dots = np.einsum("qij,qij->q", ju, jv)
        curl_u = np.stack(
            [ju[:, 2, 1] - ju[:, 1, 2], ju[:, 0, 2] - ju[:, 2, 0], ju[:, 1, 0] - ju[:, 0, 1]],
            axis=1,
        )
        curl_v = np.stack(
            [jv[:, 2, 1] - jv[:, 1, 2], jv[:, 0, 2] - jv[:, 2, 0], jv[:, 1, 0] - jv[:, 0, 1]],
            axis=1,
        )
        div_u = np.einsum("qii->q", ju)
        div_v = np.einsum("qii->q", jv)
        f = dots - np.einsum("qi,qi->q", curl_u, curl_v) - div_u * div_v
        volume += vol * f.mean()
    assert abs(surface - volume) < 1e-12 * (abs(surface) + abs(volume) + 1.0)


def test_constant_fields_are_annihilated():
    mesh = icosphere(1)
    c = np.full(mesh.n_vertices, 3.7)
    assert np.abs(guenter_scalar(mesh, c, 0, 2).coeffs).max() < 1e-13
    U = np.tile(np.array([[1.0], [-2.0], [0.5]]), (1, mesh.n_vertices))
    assert np.abs(guenter_matrix_apply(mesh, U).coeffs).max() < 1e-14
    assert np.abs(surface_curl(mesh, U).coeffs).max() < 1e-13


def test_matrix_apply_recomposes_scalar_calls():
    # U with all three components equal to the same scalar field
    mesh = icosphere(1)
    rng = np.random.default_rng(2)
    phi = rng.standard_normal(mesh.n_vertices)
    U = np.tile(phi, (3, 1))
    out = guenter_matrix_apply(mesh, U)
    for i in range(3):
        expect = sum(
            guenter_scalar(mesh, phi, i, j).coeffs[0] for j in range(3) if j != i
        )
        assert np.abs(out.coeffs[i] - expect).max() < 1e-13


def test_surface_curl_duality():
    # <phi, div_S(U x n)> = sum_c <(grad phi x n)_c, U_c> on closed mesh
    mesh = icosphere(1)
    rng = np.random.default_rng(9)
    phi = rng.standard_normal(mesh.n_vertices)
    U = rng.standard_normal((3, mesh.n_vertices))
    curl = surface_curl(mesh, U).coeffs[0]
    int_phi = mesh.areas * phi[mesh.triangles].mean(axis=1)
    lhs = np.sum(curl * int_phi)
    g = hat_gradients(mesh)
    grad_phi = np.einsum("tv,tvd->td", phi[mesh.triangles], g)
    rot = np.cross(grad_phi, mesh.normals)  # (nt, 3), P0
    int_U = np.einsum("ctv,t->tc", U[:, mesh.triangles], mesh.areas) / 3.0
    rhs = np.einsum("td,td->", rot, int_U)
    assert abs(lhs - rhs) < 1e-10 * max(abs(lhs), 1.0)


def test_rotational_vector_is_tangent():
    # reassemble grad u x n from the three independent M_ij values
    mesh = icosphere(1)
    rng = np.random.default_rng(13)
    u = rng.standard_normal(mesh.n_vertices)
    w = np.stack(
        [
            guenter_scalar(mesh, u, 1, 2).coeffs[0],
            guenter_scalar(mesh, u, 2, 0).coeffs[0],
            guenter_scalar(mesh, u, 0, 1).coeffs[0],
        ],
        axis=1,
    )
    scale = np.abs(w).max()
    assert np.abs(np.einsum("td,td->t", w, mesh.normals)).max() < 1e-13 * scale


def test_curvature_form_constant_and_rotation_fields():
    pts = icosphere(1).vertices
    zero_jac = lambda x: np.zeros((len(x), 3, 3))
    assert curvature_form_check(
        lambda x: np.tile(np.array([0.3, -0.2, 1.1]), (len(x), 1)), zero_jac, pts
    ) < 1e-12

    def U(x):
        return np.stack([x[:, 1], -x[:, 0], np.zeros(len(x))], axis=1)

    def JU(x):
        jac = np.zeros((len(x), 3, 3))
        jac[:, 0, 1] = 1.0
        jac[:, 1, 0] = -1.0
        return jac

    assert curvature_form_check(U, JU, pts) < 1e-12


def test_density_validation_and_layout():
    mesh = icosphere(0)
    with pytest.raises(ValueError):
        Density(mesh, "P2", np.zeros(5))
    with pytest.raises(ValueError):
        Density(mesh, "P1", np.zeros(mesh.n_vertices - 1))
    d = Density(mesh, "P1", np.arange(mesh.n_vertices, dtype=float))
    assert d.components == 1
    vec = Density(mesh, "P0", np.arange(3 * mesh.n_triangles, dtype=float).reshape(3, -1))
    assert vec.components == 3
    assert np.array_equal(vec.flat[: mesh.n_triangles], vec.coeffs[0])


def test_density_interpolate_and_pair():
    mesh = icosphere(1)
    d = Density.interpolate(mesh, lambda x: x[:, 0], space="P1")
    assert np.allclose(d.coeffs[0], mesh.vertices[:, 0])
    vec = Density.interpolate(mesh, lambda x: x, space="P0")
    assert vec.components == 3
    assert np.allclose(vec.coeffs.T, mesh.centroids)
    a = Density(mesh, "P1", np.ones(mesh.n_vertices), dual=True)
    b = Density(mesh, "P1", 2.0 * np.ones(mesh.n_vertices))
    assert a.pair(b) == pytest.approx(2.0 * mesh.n_vertices)
