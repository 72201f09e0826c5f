"""Tangential Guenter derivatives on triangulated surfaces.

The scalar operator M_ij u = n_j d_i u - n_i d_j u only involves the
tangential gradient, so on a flat panel it maps the P1 interpolant to an
exact per-panel constant:

    M_ij u |_T = n_j (grad_T u)_i - n_i (grad_T u)_j.

On a closed oriented mesh the pairing <v, M_ij u> is skew-adjoint up to
roundoff (the per-panel Stokes boundary terms telescope); on an open
patch the defect is the boundary line integral

    <v, M_ij u> - <u, M_ji v> = - sum_k eps_ijk oint_{boundary} u v dx_k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import SurfaceMesh

__all__ = [
    "LeviCivita",
    "Density",
    "hat_gradients",
    "guenter_block",
    "guenter_scalar",
    "guenter_matrix_apply",
    "guenter_pointwise",
    "symmetry_residual",
    "boundary_curl_term",
    "surface_curl",
    "curvature_form_check",
]

# Levi-Civita symbol eps_ijk
LeviCivita = np.zeros((3, 3, 3))
LeviCivita[0, 1, 2] = LeviCivita[1, 2, 0] = LeviCivita[2, 0, 1] = 1.0
LeviCivita[0, 2, 1] = LeviCivita[2, 1, 0] = LeviCivita[1, 0, 2] = -1.0
LeviCivita.setflags(write=False)


@dataclass
class Density:
    """Coefficients of a surface field in a nodal space.

    space "P1" holds one coefficient per vertex, "P0" one per triangle.
    coeffs has shape (components, ndof). dual marks functional
    coefficients <phi_m, w> rather than nodal values.
    """

    mesh: SurfaceMesh
    space: str
    coeffs: np.ndarray
    dual: bool = False

    def __post_init__(self):
        if self.space not in ("P0", "P1"):
            raise ValueError(f"unknown space {self.space!r}")
        c = np.atleast_2d(np.asarray(self.coeffs))
        if c.shape[1] != self.ndof_scalar:
            raise ValueError(
                f"expected {self.ndof_scalar} coefficients per component, got {c.shape[1]}"
            )
        self.coeffs = c

    @property
    def ndof_scalar(self) -> int:
        if self.space == "P1":
            return len(self.mesh.vertices)
        n = getattr(self.mesh, "n_triangles", None)
        return self.mesh.n_segments if n is None else n

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def flat(self) -> np.ndarray:
        # component-blocked layout: dof = comp * ndof_scalar + index
        return self.coeffs.reshape(-1)

    @classmethod
    def interpolate(cls, mesh: SurfaceMesh, fn, space: str = "P1") -> "Density":
        """Sample a callable (points (n, 3) -> (n,) or (n, c)) at the
        nodal points (vertices for P1, centroids for P0)."""
        pts = mesh.vertices if space == "P1" else mesh.centroids
        vals = np.asarray(fn(pts))
        if vals.ndim == 1:
            vals = vals[None, :]
        else:
            vals = vals.T
        return cls(mesh, space, vals)

    def pair(self, other: "Density") -> complex:
        """Duality pairing of functional coefficients with nodal ones."""
        return complex(np.sum(self.coeffs * other.coeffs))


# ---- element tables ----


def hat_gradients(mesh: SurfaceMesh) -> np.ndarray:
    """In-plane gradients of the three hat functions, shape (nt, 3, 3).

    g_v = n x (p_{v+2} - p_{v+1}) / (2 A): constant on the panel,
    tangential, with g_v . (p_w - p_v) = delta-consistent.
    """
    t = mesh.tri_coords
    n = mesh.normals
    out = np.empty_like(t)
    for v in range(3):
        edge = t[:, (v + 2) % 3, :] - t[:, (v + 1) % 3, :]
        out[:, v, :] = np.cross(n, edge) / (2.0 * mesh.areas[:, None])
    return out


def guenter_block(mesh: SurfaceMesh, i: int, j: int) -> np.ndarray:
    """Dense (nt, nv) matrix of M_ij: P1 vertex values -> P0 panel values."""
    g = hat_gradients(mesh)
    n = mesh.normals
    out = np.zeros((mesh.n_triangles, mesh.n_vertices))
    coef = n[:, j, None] * g[:, :, i] - n[:, i, None] * g[:, :, j]  # (nt, 3)
    rows = np.repeat(np.arange(mesh.n_triangles), 3)
    np.add.at(out, (rows, mesh.triangles.reshape(-1)), coef.reshape(-1))
    return out


def _as_p1(mesh: SurfaceMesh, u, components: int) -> np.ndarray:
    if isinstance(u, Density):
        if u.space != "P1":
            raise ValueError("expected a P1 density")
        arr = u.coeffs
    else:
        arr = np.atleast_2d(np.asarray(u))
    if arr.shape != (components, mesh.n_vertices):
        raise ValueError(f"expected shape {(components, mesh.n_vertices)}")
    return arr


def guenter_scalar(mesh: SurfaceMesh, u, i: int, j: int) -> Density:
    """Apply M_ij to a P1 scalar density; exact per-panel constants."""
    arr = _as_p1(mesh, u, 1)[0]
    g = hat_gradients(mesh)
    grad = np.einsum("tv,tvd->td", arr[mesh.triangles], g)  # tangential gradient
    n = mesh.normals
    vals = n[:, j] * grad[:, i] - n[:, i] * grad[:, j]
    return Density(mesh, "P0", vals)


def guenter_matrix_apply(mesh: SurfaceMesh, U) -> Density:
    """Matrix Guenter derivative (M U)_i = sum_j M_ij U_j of a P1 vector
    field, returned as a P0 vector density.

    Equivalent per panel to (grad U) n - n div U with tangential
    gradients.
    """
    arr = _as_p1(mesh, U, 3)
    g = hat_gradients(mesh)
    # grad[t, i, c] = d_i U_c on panel t
    grad = np.einsum("ctv,tvi->tic", arr[:, mesh.triangles], g)
    n = mesh.normals
    gn = np.einsum("tic,tc->ti", grad, n)  # (grad U) n
    div = np.einsum("tcc->t", grad)
    return Density(mesh, "P0", (gn - n * div[:, None]).T)


def guenter_pointwise(jac: np.ndarray, n: np.ndarray) -> np.ndarray:
    """M u at a point from the full Jacobian jac[..., i, j] = d_j u_i and
    a unit normal: (M u)_i = sum_j n_j d_i u_j - n_i div u."""
    gn = np.einsum("...ji,...j->...i", jac, n)
    div = np.einsum("...jj->...", jac)
    return gn - n * div[..., None]


def symmetry_residual(mesh: SurfaceMesh, u, v, i: int, j: int) -> complex:
    """<v, M_ij u> - <u, M_ji v> for P1 scalar densities (exact panel
    quadrature).

    Zero to roundoff on closed oriented meshes; on an open patch the
    value equals boundary_curl_term (per-panel Stokes lemma)."""
    uu = _as_p1(mesh, u, 1)[0]
    vv = _as_p1(mesh, v, 1)[0]
    mu = guenter_scalar(mesh, uu, i, j).coeffs[0]
    mv = guenter_scalar(mesh, vv, j, i).coeffs[0]
    # int_T of a P1 field: area * mean of vertex values
    int_v = mesh.areas * vv[mesh.triangles].mean(axis=1)
    int_u = mesh.areas * uu[mesh.triangles].mean(axis=1)
    return complex(np.sum(mu * int_v) - np.sum(mv * int_u))


def boundary_curl_term(mesh: SurfaceMesh, u, v, i: int, j: int) -> complex:
    """Predicted symmetry defect of an open patch:
    - sum_k eps_ijk oint u v dx_k over the directed boundary (2-point
    Gauss per edge, exact for the quadratic product)."""
    uu = _as_p1(mesh, u, 1)[0]
    vv = _as_p1(mesh, v, 1)[0]
    edges = mesh.boundary_edges
    if len(edges) == 0:
        return 0.0 + 0.0j
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    x1, x2 = 0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)
    total = np.zeros(3, dtype=complex)
    for t in (x1, x2):
        ut = uu[edges[:, 0]] * (1 - t) + uu[edges[:, 1]] * t
        vt = vv[edges[:, 0]] * (1 - t) + vv[edges[:, 1]] * t
        total += 0.5 * np.einsum("e,ed->d", ut * vt, b - a)
    return complex(-np.einsum("k,k->", LeviCivita[i, j], total))


def surface_curl(mesh: SurfaceMesh, U) -> Density:
    """Surface divergence of U x n (a P0 scalar for P1 vector input)."""
    arr = _as_p1(mesh, U, 3)
    g = hat_gradients(mesh)
    n = mesh.normals
    # div_T (U x n) = sum_{c,v} U_{c,v} g_v . (e_c x n)
    ecn = np.cross(np.eye(3)[None, :, :], n[:, None, :])  # (nt, c, 3)
    vals = np.einsum("ctv,tvd,tcd->t", arr[:, mesh.triangles], g, ecn)
    return Density(mesh, "P0", vals)


def curvature_form_check(U, JU, points: np.ndarray) -> float:
    """Max pointwise difference on the unit sphere between the full
    Jacobian form (grad u) n - n div u and the curvature form

        grad_S (u.n) - n div_S u_t - C u_t - 2 H (u.n) n

    with C = I - n n^T and 2H = 2 for the unit sphere. U and JU map
    (m, 3) points to (m, 3) values and (m, 3, 3) Jacobians."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    nrm = np.linalg.norm(x, axis=1)
    if np.abs(nrm - 1.0).max() > 1e-12:
        raise ValueError("points must lie on the unit sphere")
    n = x
    u = np.asarray(U(x))
    jac = np.asarray(JU(x))  # jac[p, i, j] = d_j u_i
    comp = guenter_pointwise(jac, n)

    proj = np.eye(3)[None] - n[:, :, None] * n[:, None, :]
    un = np.einsum("pi,pi->p", u, n)
    # ambient gradient of u.n with n extended as x/|x|: Jn = I - n n^T
    grad_un = np.einsum("pij,pi->pj", jac, n) + np.einsum("pij,pi->pj", proj, u)
    grad_s_un = np.einsum("pij,pj->pi", proj, grad_un)
    ut = np.einsum("pij,pj->pi", proj, u)
    # Jacobian of u_t = u - n (u.n)
    jut = (
        jac
        - proj * un[:, None, None]
        - n[:, :, None] * grad_un[:, None, :]
    )
    div_s_ut = np.einsum("pii->p", jut) - np.einsum("pi,pij,pj->p", n, jut, n)
    curv = grad_s_un - n * div_s_ut[:, None] - ut - 2.0 * un[:, None] * n
    return float(np.abs(comp - curv).max())
