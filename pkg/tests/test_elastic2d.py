import numpy as np
import mpmath as mp
import pytest

from elastobem.elastic2d import (
    CurveStack,
    PlanarDensity,
    assemble_antiplane,
    assemble_curve_stack,
    assemble_plane,
    curve_mass,
    guenter_2d,
    guenter_2d_matrix,
    guenter_2d_plane,
    split_field,
)
from elastobem.elastic3d import traction_from_gradient
from elastobem.kernels import (
    WaveParams,
    hankel_kernel,
    kupradze_gamma2,
    kupradze_gamma2_derivs,
    _g2_radial,
)
from elastobem.mesh import circle_curve
from elastobem.quadrature import gauss_segment

PARAMS = WaveParams()
SOURCE = np.array([0.3, 0.2])
DIRECTION = np.array([0.7, -0.4])


@pytest.fixture(scope="module")
def circle32():
    return circle_curve(32)


@pytest.fixture(scope="module")
def circle64():
    return circle_curve(64)


@pytest.fixture(scope="module")
def plane32(circle32):
    # structural identities below hold at any quadrature degree
    return {
        "S": assemble_plane(circle32, PARAMS, "S").matrix,
        "K": assemble_plane(circle32, PARAMS, "K", degree=8).matrix,
        "TS+": assemble_plane(circle32, PARAMS, "TS", side="+",
                              degree=8).matrix,
        "TS-": assemble_plane(circle32, PARAMS, "TS", side="-",
                              degree=8).matrix,
        "TK+": assemble_plane(circle32, PARAMS, "TK", side="+",
                              degree=8).matrix,
        "TK-": assemble_plane(circle32, PARAMS, "TK", side="-",
                              degree=8).matrix,
    }


@pytest.fixture(scope="module")
def anti32(circle32):
    return {
        "S3": assemble_antiplane(circle32, PARAMS, "S3").matrix,
        "K3": assemble_antiplane(circle32, PARAMS, "K3").matrix,
        "TS3+": assemble_antiplane(circle32, PARAMS, "TS3", side="+").matrix,
        "TK3": assemble_antiplane(circle32, PARAMS, "TK3").matrix,
    }


def log_stack():
    def fn(r, dx, nx, ny):
        return np.log(r)[None]

    def split(r, sdx, tau, nrm):
        return [(np.zeros(r.shape, complex), np.ones(r.shape, complex))]

    return CurveStack(1, fn, split, ("ln",))


# ---- segment-pair quadrature ----


def test_self_pair_log_quadrature_closed_form():
    # int_0^L int_0^L ln|s - t| ds dt = L^2 (ln L - 3/2)
    curve = circle_curve(8)
    m = assemble_curve_stack(curve, "P0", "P0", log_stack(), degree=10)[0]
    L = curve.lengths
    exact = L**2 * (np.log(L) - 1.5)
    assert np.abs(np.diag(m) - exact).max() <= 1e-13


def test_far_pair_matches_plain_tensor_rule():
    curve = circle_curve(8)
    m = assemble_curve_stack(curve, "P0", "P0", log_stack(), degree=10)[0]
    tq, tw = gauss_segment(10)
    i, j = 0, 3
    L = curve.lengths
    xi = curve.seg_coords[i, 0] + tq[:, None] * (
        curve.seg_coords[i, 1] - curve.seg_coords[i, 0])
    yj = curve.seg_coords[j, 0] + tq[:, None] * (
        curve.seg_coords[j, 1] - curve.seg_coords[j, 0])
    r = np.linalg.norm(xi[:, None, :] - yj[None, :, :], axis=-1)
    ref = L[i] * L[j] * np.einsum("q,p,qp->", tw, tw, np.log(r))
    assert abs(m[i, j] - ref) <= 1e-14


def test_assembly_stable_under_degree_increase():
    curve = circle_curve(8)
    m10 = assemble_curve_stack(curve, "P0", "P0", log_stack(), degree=10)[0]
    m16 = assemble_curve_stack(curve, "P0", "P0", log_stack(), degree=16)[0]
    assert np.abs(m10 - m16).max() <= 5e-12


# ---- arclength Guenter derivative ----


def test_arclength_derivative_exact_on_circle_chords(circle64):
    # (cos t_{i+1} - cos t_i) / chord = -sin(mid angle) identically
    du = guenter_2d(circle64, circle64.vertices[:, 0])
    thm = np.arctan2(circle64.midpoints[:, 1], circle64.midpoints[:, 0])
    assert np.abs(du + np.sin(thm)).max() <= 1e-12


def test_arclength_derivative_telescopes(circle64):
    du = guenter_2d(circle64, circle64.vertices[:, 0])
    assert abs(np.sum(du * circle64.lengths)) <= 1e-14


def test_arclength_matrix_matches_function(circle64):
    d2 = guenter_2d_matrix(circle64)
    du = guenter_2d(circle64, circle64.vertices[:, 0])
    assert np.abs(d2 @ circle64.vertices[:, 0] - du).max() <= 1e-14


def test_plane_guenter_is_rotated_gradient(circle64):
    up = np.stack([circle64.vertices[:, 0], circle64.vertices[:, 1]])
    gp = guenter_2d_plane(circle64, up)
    d2 = guenter_2d_matrix(circle64)
    assert np.abs(gp[0] + d2 @ up[1]).max() <= 1e-14
    assert np.abs(gp[1] - d2 @ up[0]).max() <= 1e-14


def test_arclength_derivative_rejects_bad_shape(circle64):
    with pytest.raises(ValueError, match="nodal values"):
        guenter_2d(circle64, np.zeros(7))
    with pytest.raises(ValueError, match="2 components"):
        guenter_2d_plane(circle64, np.zeros((3, 64)))


# ---- mass matrices ----


def test_curve_mass_blocks(circle32):
    L = circle32.lengths
    m00 = curve_mass(circle32, "P0", "P0")
    assert np.abs(m00 - np.diag(L)).max() == 0.0
    m01 = curve_mass(circle32, "P0", "P1")
    m10 = curve_mass(circle32, "P1", "P0")
    assert np.abs(m01 - m10.T).max() == 0.0
    assert np.allclose(m01.sum(axis=1), L)
    m11 = curve_mass(circle32, "P1", "P1")
    assert np.allclose(m11.sum(), circle32.total_length)
    assert np.abs(m11 - m11.T).max() == 0.0
    with pytest.raises(ValueError, match="unknown space pair"):
        curve_mass(circle32, "P0", "P2")


# ---- antiplane operators ----


def test_antiplane_circle_eigenvalues():
    # Rayleigh quotients of V on Fourier modes converge at O(h^2) to
    # (i pi R / 2) J_m(kR) H^1_m(kR); Richardson removes the h^2 term
    def modal(n, ms):
        curve = circle_curve(n)
        v = assemble_antiplane(curve, PARAMS, "S3").matrix  # mu = 1
        mass = curve_mass(curve, "P0", "P0")
        th = np.arctan2(curve.midpoints[:, 1], curve.midpoints[:, 0])
        out = []
        for m in ms:
            e = np.exp(1j * m * th)
            out.append((e.conj() @ v @ e) / (e.conj() @ mass @ e))
        return np.array(out)

    ms = (0, 1, 2)
    ref = np.array([
        complex(0.5j * mp.pi * mp.besselj(m, 1) * mp.hankel1(m, 1))
        for m in ms
    ])
    e64 = modal(64, ms)
    e128 = modal(128, ms)
    assert np.abs(e128 - ref).max() <= 0.3 * np.abs(e64 - ref).max()
    rich = (4.0 * e128 - e64) / 3.0
    assert np.abs(rich - ref).max() <= 1e-5


def test_antiplane_green_identity():
    # u = Hankel source inside; exterior representation u = -K3 phi - S3 psi
    # has vanishing Dirichlet and Neumann traces at O(h^2)
    def residuals(n):
        curve = circle_curve(n)
        ks = PARAMS.kappa_s
        rv = np.linalg.norm(curve.vertices - SOURCE, axis=-1)
        phi = hankel_kernel(ks, rv)
        d = curve.midpoints - SOURCE
        rm = np.linalg.norm(d, axis=-1)
        g1 = _g2_radial(ks, rm, 1)[1]
        psi = PARAMS.mu * g1 / rm * np.einsum("td,td->t", d, curve.normals)
        k3 = assemble_antiplane(curve, PARAMS, "K3", degree=6).matrix
        s3 = assemble_antiplane(curve, PARAMS, "S3", degree=6).matrix
        ts3p = assemble_antiplane(curve, PARAMS, "TS3", side="+",
                                  degree=6).matrix
        tk3 = assemble_antiplane(curve, PARAMS, "TK3", degree=6).matrix
        m01 = curve_mass(curve, "P0", "P1")
        rd = k3 @ phi + 0.5 * m01 @ phi + s3 @ psi
        rflip = -(k3 @ phi) + 0.5 * m01 @ phi - s3 @ psi
        rn = tk3 @ phi + ts3p @ psi
        dd = np.linalg.norm(m01 @ phi)
        dn = np.linalg.norm(m01.T @ psi)
        return (np.linalg.norm(rd) / dd, np.linalg.norm(rn) / dn,
                np.linalg.norm(rflip) / dd)

    rd32, rn32, rflip = residuals(32)
    rd64, rn64, _ = residuals(64)
    assert rd32 <= 1e-2 and rn32 <= 1e-2
    assert rd64 <= rd32 / 3.0
    assert rn64 <= rn32 / 3.0
    assert rflip >= 100.0 * rd32


def test_antiplane_hypersingular_forms_agree(circle32):
    tk3 = assemble_antiplane(circle32, PARAMS, "TK3").matrix
    tk3a = assemble_antiplane(circle32, PARAMS, "TK3_ALT").matrix
    assert np.abs(tk3 - tk3a).max() <= 1e-13 * np.abs(tk3).max()


def test_antiplane_single_layer_scales_inversely_with_mu(circle32):
    s3a = assemble_antiplane(circle32, PARAMS, "S3").matrix
    # double mu at fixed kappa_s = omega sqrt(rho / mu)
    stiff = WaveParams(omega=np.sqrt(2.0), rho=1.0, mu=2.0, lam=2.0)
    s3b = assemble_antiplane(circle32, stiff, "S3").matrix
    assert np.abs(2.0 * s3b - s3a).max() <= 1e-15


def test_antiplane_duality(circle32, anti32):
    m01 = curve_mass(circle32, "P0", "P1")
    res = anti32["TS3+"] + anti32["K3"].T - 0.5 * m01.T
    assert np.abs(res).max() <= 1e-13 * np.abs(anti32["TS3+"]).max()


def test_antiplane_rejects_unknown_operator(circle32):
    with pytest.raises(ValueError, match="unknown antiplane operator"):
        assemble_antiplane(circle32, PARAMS, "W3")
    with pytest.raises(ValueError, match="unknown side"):
        assemble_antiplane(circle32, PARAMS, "TS3", side="0")


# ---- plane-strain operators ----


def test_plane_single_layer_matches_kupradze(circle32, plane32):
    ns = circle32.n_segments
    tq, tw = gauss_segment(10)
    X = circle32.seg_coords[:, 0][:, None, :] + tq[None, :, None] * (
        circle32.seg_coords[:, 1] - circle32.seg_coords[:, 0])[:, None, :]
    rng = np.random.default_rng(0)
    smat = plane32["S"]
    checked = 0
    while checked < 25:
        i, j = rng.integers(0, ns, 2)
        if min((j - i) % ns, (i - j) % ns) <= 1:
            continue
        gam = kupradze_gamma2(PARAMS, X[i][:, None, :], X[j][None, :, :])
        val = circle32.lengths[i] * circle32.lengths[j] * np.einsum(
            "q,p,qpab->ab", tw, tw, gam)
        got = smat[i::ns, j::ns]
        assert np.abs(got - val).max() <= 1e-12 * np.abs(val).max()
        checked += 1


def test_plane_single_layer_symmetric(plane32):
    s = plane32["S"]
    assert np.abs(s - s.T).max() <= 1e-12 * np.abs(s).max()


def test_plane_traction_jump_is_mass(circle32, plane32):
    m10 = curve_mass(circle32, "P1", "P0")
    jump = plane32["TS+"] - plane32["TS-"]
    assert np.abs(jump - np.kron(np.eye(2), m10)).max() <= 1e-13


def test_plane_hypersingular_symmetric_and_one_sided(plane32):
    tk = plane32["TK+"]
    assert np.abs(tk - plane32["TK-"]).max() <= 1e-12 * np.abs(tk).max()
    assert np.abs(tk - tk.T).max() <= 1e-12 * np.abs(tk).max()


def test_plane_duality(circle32, plane32):
    m01b = np.kron(np.eye(2), curve_mass(circle32, "P0", "P1"))
    res = plane32["TS+"] + plane32["K"].T - 0.5 * m01b.T
    assert np.abs(res).max() <= 1e-13 * np.abs(plane32["TS+"]).max()


def test_plane_green_identity():
    # u = Gamma(. , x0) a inside; exterior representation -K phi - S psi
    def residuals(n):
        curve = circle_curve(n)
        gam = kupradze_gamma2(PARAMS, curve.vertices, SOURCE)
        phi = np.einsum("vab,b->av", gam, DIRECTION).reshape(-1)
        _, dg = kupradze_gamma2_derivs(PARAMS, curve.midpoints, SOURCE)
        jac = np.einsum("tabm,b->tam", dg, DIRECTION)
        psi = traction_from_gradient(PARAMS, curve.normals, jac).T.reshape(-1)
        kk = assemble_plane(curve, PARAMS, "K", degree=6).matrix
        ss = assemble_plane(curve, PARAMS, "S", degree=6).matrix
        tsp = assemble_plane(curve, PARAMS, "TS", side="+", degree=6).matrix
        tkk = assemble_plane(curve, PARAMS, "TK", degree=6).matrix
        m01b = np.kron(np.eye(2), curve_mass(curve, "P0", "P1"))
        rd = kk @ phi + 0.5 * m01b @ phi + ss @ psi
        rn = tkk @ phi + tsp @ psi
        dd = np.linalg.norm(m01b @ phi)
        dn = np.linalg.norm(m01b.T @ psi)
        return np.linalg.norm(rd) / dd, np.linalg.norm(rn) / dn

    rd24, rn24 = residuals(24)
    rd48, rn48 = residuals(48)
    assert rd24 <= 2e-2 and rn24 <= 2e-2
    assert rd48 <= rd24 / 3.0
    assert rn48 <= rn24 / 3.0


def test_plane_rejects_unknown_operator(circle32):
    with pytest.raises(ValueError, match="unknown plane operator"):
        assemble_plane(circle32, PARAMS, "W")


def test_plane_operator_metadata():
    op = assemble_plane(circle_curve(8), PARAMS, "S")
    assert op.meta["operator"] == "S"
    assert op.meta["kappa_s"] == PARAMS.kappa_s


# ---- densities ----


def test_split_field_roundtrip(circle32):
    u = np.arange(3 * 32, dtype=float).reshape(3, 32)
    plane, anti = split_field(u)
    assert plane.shape == (2, 32) and anti.shape == (32,)
    dens = PlanarDensity.from_components(circle32, "P1", u)
    assert np.abs(dens.combine() - u).max() == 0.0
    with pytest.raises(ValueError, match="3 components"):
        split_field(np.zeros((4, 32)))


def test_planar_density_validates_shapes(circle32):
    with pytest.raises(ValueError, match="unknown space"):
        PlanarDensity(circle32, "P3", np.zeros((2, 32)), np.zeros(32))
    with pytest.raises(ValueError, match="plane coefficients"):
        PlanarDensity(circle32, "P0", np.zeros((2, 31)), np.zeros(32))
    with pytest.raises(ValueError, match="antiplane coefficients"):
        PlanarDensity(circle32, "P0", np.zeros((2, 32)), np.zeros(31))
