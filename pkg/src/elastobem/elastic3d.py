"""Elastic-wave layer potentials and tractions from Helmholtz blocks.

The displacement fundamental tensor

    Gamma_kl = (ks^2 G_ks delta_kl - d_k d_l psi) / (omega^2 rho),
    psi = G_kp - G_ks,

is weakly singular (the psi block is smooth up to 1/r), so the elastic
single layer assembles from the same scalar kernels as the Helmholtz
operators.  Double layers and tractions are rewritten so that every
remaining derivative lands on densities or test functions through the
tangential Guenter fields M_ij = n_j d_i - n_i d_j; the only block of
hypersingular origin (d_n N_ks) enters through its curl-curl weak form.
Tractions are exposed variationally, as functionals over P1 test fields
or as Galerkin matrices, never as pointwise kernels.

Conventions follow the scalar operators: N_k is the double layer with
the built-in minus sign, traces are written +/- for interior/exterior
limits, and vector degrees of freedom are component-blocked.
"""

from __future__ import annotations

import itertools

import numpy as np

from .guenter import Density, LeviCivita, guenter_block, guenter_matrix_apply
from .kernels import WaveParams, _g_radial, _psi_stack, kupradze_gamma
from .mesh import EvalGrid, SurfaceMesh
from .potentials import (
    DUFFY_ORDER,
    EVAL_ETA,
    FAR_DEGREE,
    DenseOperator,
    KernelStack,
    _hat_curl_blocks,
    assemble_stack,
    eval_double_layer,
    evaluate_stack,
    helmholtz_stack,
    mass_matrix,
    p0_panel_values,
    p1_panel_values,
    space_ndof,
)

__all__ = [
    "galerkin_single_layer",
    "eval_S",
    "eval_K",
    "eval_S_jacobian",
    "eval_K_jacobian",
    "traction_from_gradient",
    "traction_single_layer",
    "traction_double_layer",
    "somigliana_residual",
]

# distinct second derivatives d_a d_b psi, upper-triangle order
_SYM_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_SYM_INDEX = np.zeros((3, 3), dtype=int)
for _c, (_a, _b) in enumerate(_SYM_PAIRS):
    _SYM_INDEX[_a, _b] = _SYM_INDEX[_b, _a] = _c

# distinct third derivatives, nondecreasing index triples
_TRIPLES = tuple(
    (a, b, c) for a in range(3) for b in range(a, 3) for c in range(b, 3)
)
_TRIPLE_INDEX = np.zeros((3, 3, 3), dtype=int)
for _c, _t in enumerate(_TRIPLES):
    for _p in set(itertools.permutations(_t)):
        _TRIPLE_INDEX[_p] = _c


# ---- kernel stacks ----


def _psi_hessian(psi1, psi2, r, dx):
    # six distinct components of hess psi from radial derivatives
    rhat = dx / r[..., None]
    a = psi1 / r
    b = psi2 - a
    out = np.empty((6,) + r.shape, dtype=complex)
    for c, (i, j) in enumerate(_SYM_PAIRS):
        h = b * rhat[..., i] * rhat[..., j]
        if i == j:
            h = h + a
        out[c] = h
    return out


def _gamma_stack(params: WaveParams) -> KernelStack:
    """G_ks plus the six distinct second derivatives of the difference
    kernel: everything the single-layer tensor needs."""
    kp, ks = params.kappa_p, params.kappa_s

    def fn(r, dx, nx, ny):
        out = np.empty((7,) + r.shape, dtype=complex)
        out[0] = _g_radial(ks, r, 0)[0]
        psi = _psi_stack(kp, ks, r, 2)
        out[1:] = _psi_hessian(psi[1], psi[2], r, dx)
        return out

    labels = ("g_s",) + tuple(f"dd_psi_{i}{j}" for i, j in _SYM_PAIRS)
    return KernelStack(7, fn, labels, tuple((c, 1.0) for c in range(7)))


def _hess_psi_stack(params: WaveParams) -> KernelStack:
    kp, ks = params.kappa_p, params.kappa_s

    def fn(r, dx, nx, ny):
        psi = _psi_stack(kp, ks, r, 2)
        return _psi_hessian(psi[1], psi[2], r, dx)

    labels = tuple(f"dd_psi_{i}{j}" for i, j in _SYM_PAIRS)
    return KernelStack(6, fn, labels, tuple((c, 1.0) for c in range(6)))


def _grad_psi_stack(params: WaveParams) -> KernelStack:
    kp, ks = params.kappa_p, params.kappa_s

    def fn(r, dx, nx, ny):
        p1 = _psi_stack(kp, ks, r, 1)[1] / r
        out = np.empty((3,) + r.shape, dtype=complex)
        for d in range(3):
            out[d] = p1 * dx[..., d]
        return out

    labels = tuple(f"d_psi_{d}" for d in range(3))
    return KernelStack(3, fn, labels, tuple((d, -1.0) for d in range(3)))


def _grad_gamma_stack(params: WaveParams) -> KernelStack:
    """Gradient of the single-layer tensor: grad G_ks plus the ten
    distinct third derivatives of the difference kernel (evaluation
    only)."""
    kp, ks = params.kappa_p, params.kappa_s

    def fn(r, dx, nx, ny):
        out = np.empty((13,) + r.shape, dtype=complex)
        g = _g_radial(ks, r, 1)
        gr = g[1] / r
        for d in range(3):
            out[d] = gr * dx[..., d]
        psi = _psi_stack(kp, ks, r, 3)
        rhat = dx / r[..., None]
        c1 = psi[2] / r - psi[1] / r**2
        c2 = psi[3] - 3.0 * psi[2] / r + 3.0 * psi[1] / r**2
        for c, (i, j, k) in enumerate(_TRIPLES):
            ri, rj, rk = rhat[..., i], rhat[..., j], rhat[..., k]
            v = c2 * ri * rj * rk
            if i == j:
                v = v + c1 * rk
            if i == k:
                v = v + c1 * rj
            if j == k:
                v = v + c1 * ri
            out[3 + c] = v
        return out

    labels = tuple(f"grad_gs_{d}" for d in range(3)) + tuple(
        f"ddd_psi_{i}{j}{k}" for i, j, k in _TRIPLES
    )
    return KernelStack(13, fn, labels, tuple((c, -1.0) for c in range(13)))


def _dlayer_grad_stack(params: WaveParams) -> KernelStack:
    """Double-layer kernel of G_ks plus grad psi weighted by trial
    normal components; the P0 x P1 batch behind the traction blocks."""
    kp, ks = params.kappa_p, params.kappa_s

    def fn(r, dx, nx, ny):
        out = np.empty((10,) + r.shape, dtype=complex)
        g = _g_radial(ks, r, 1)
        out[0] = g[1] / r * np.einsum("...d,...d->...", dx, ny)
        p1 = _psi_stack(kp, ks, r, 1)[1] / r
        k = 1
        for d in range(3):
            gd = p1 * dx[..., d]
            for j in range(3):
                out[k] = gd * ny[..., j]
                k += 1
        return out

    labels = ("dlayer_gs",) + tuple(
        f"d_psi_{d}_ny{j}" for d in range(3) for j in range(3)
    )
    return KernelStack(10, fn, labels)


def _p1p1_stack(params: WaveParams) -> KernelStack:
    """Normal-weighted single-layer kernels pairing P1 spaces:
    (nx.ny) G_ks and nx_a ny_b {G_ks, G_kp}."""
    kp, ks = params.kappa_p, params.kappa_s

    def fn(r, dx, nx, ny):
        out = np.empty((19,) + r.shape, dtype=complex)
        gs = _g_radial(ks, r, 0)[0]
        gp = _g_radial(kp, r, 0)[0]
        out[0] = gs * np.einsum("...d,...d->...", nx, ny)
        k = 1
        for g in (gs, gp):
            for a in range(3):
                for b in range(3):
                    out[k] = g * nx[..., a] * ny[..., b]
                    k += 1
        return out

    labels = ("gs_nxny",) + tuple(
        f"{nm}_nx{a}_ny{b}"
        for nm in ("gs", "gp")
        for a in range(3)
        for b in range(3)
    )
    swap = [(0, 1.0)]
    for base in (1, 10):
        for a in range(3):
            for b in range(3):
                swap.append((base + 3 * b + a, 1.0))
    return KernelStack(19, fn, labels, tuple(swap))


def _dny_grad_stack(kappa) -> KernelStack:
    """Gradient in x of the double-layer kernel (G'/r)(dx.ny)
    (evaluation only)."""

    def fn(r, dx, nx, ny):
        g = _g_radial(kappa, r, 2)
        h = g[1] / r
        hp = (g[2] - h) / r
        dxn = np.einsum("...d,...d->...", dx, ny)
        out = np.empty((3,) + r.shape, dtype=complex)
        for m in range(3):
            out[m] = hp * dx[..., m] / r * dxn + h * ny[..., m]
        return out

    return KernelStack(3, fn, tuple(f"d_dlayer_{m}" for m in range(3)))


# ---- density plumbing ----


def _vector_density(mesh, p, kind=None):
    # -> (kind, (3, ndof) coefficient array)
    if isinstance(p, Density):
        if p.components != 3:
            raise ValueError(f"expected 3 components, got {p.components}")
        return p.space, p.coeffs
    c = np.atleast_2d(np.asarray(p))
    if c.shape[0] != 3:
        raise ValueError(f"expected (3, ndof) coefficients, got {c.shape}")
    if kind is None:
        kind = "P1" if c.shape[1] == mesh.n_vertices else "P0"
    if c.shape[1] != space_ndof(mesh, kind):
        raise ValueError(
            f"coefficient count {c.shape[1]} does not match space {kind}"
        )
    return kind, c


def _weighted_p1_values(mesh, coeffs, weights):
    """Panel evaluator of sum_d weights[d] * (P1 interpolant of
    coeffs[d]) for per-panel weights of shape (3, nt)."""
    tri = mesh.triangles

    def values(panels, bary):
        nodal = coeffs[:, tri[panels]]  # (3, ..., 3 verts)
        v = np.einsum("...v,l...v->l...", bary, nodal)
        return np.sum(weights[:, panels] * v, axis=0)

    return values


def _cross_weights(mesh, b):
    # per-panel weights with (n x psi)_b = sum_d w_d psi_d
    n = mesh.normals
    w = np.zeros((3, mesh.n_triangles))
    for c in range(3):
        for d in range(3):
            e = LeviCivita[b, c, d]
            if e:
                w[d] += e * n[:, c]
    return w


def _scaled_contract(params, vals, sym_base):
    # Gamma contraction: vals[l, 0] = V_ks block, vals[l, sym_base + c]
    # = hess/third components for density l; returns (3, npts)
    scale = 1.0 / (params.omega**2 * params.rho)
    ks2 = params.kappa_s**2
    out = np.empty((3,) + vals.shape[2:], dtype=complex)
    for k in range(3):
        acc = ks2 * vals[k, 0]
        for l in range(3):
            acc = acc - vals[l, sym_base + _SYM_INDEX[k, l]]
        out[k] = scale * acc
    return out


# ---- Galerkin single layer ----


def galerkin_single_layer(
    mesh: SurfaceMesh,
    params: WaveParams,
    trial: str = "P0",
    test: str = None,
    degree: int = FAR_DEGREE,
    threads: int = 1,
    duffy_order: int = DUFFY_ORDER,
) -> DenseOperator:
    """Galerkin matrix of the elastic single-layer operator.

    The tensor kernel never appears: the matrix is combined from the
    scalar Galerkin blocks of G_ks and of the second derivatives of the
    difference kernel, all weakly singular.

    Parameters
    ----------
    trial, test : str
        Scalar space kinds ("P0" or "P1"); test defaults to trial.

    Returns
    -------
    DenseOperator
        Component-blocked (3*ndof_test, 3*ndof_trial) matrix.
    """
    test = trial if test is None else test
    ga = assemble_stack(
        mesh, test, trial, _gamma_stack(params), degree=degree,
        threads=threads, duffy_order=duffy_order,
    )
    scale = 1.0 / (params.omega**2 * params.rho)
    ks2 = params.kappa_s**2
    ndt, nds = ga.shape[1], ga.shape[2]
    mat = np.empty((3 * ndt, 3 * nds), dtype=complex)
    for k in range(3):
        for j in range(3):
            block = -ga[1 + _SYM_INDEX[k, j]]
            if k == j:
                block = block + ks2 * ga[0]
            mat[k * ndt:(k + 1) * ndt, j * nds:(j + 1) * nds] = scale * block
    meta = {
        "kernel": "elastic_single_layer",
        "omega": params.omega,
        "rho": params.rho,
        "mu": params.mu,
        "lam": params.lam,
    }
    return DenseOperator(mat, mesh, test, trial, 3, 3, meta)


# ---- off-surface evaluation ----


def eval_S(mesh, params, p, grid, degree=FAR_DEGREE, eta=EVAL_ETA):
    """Elastic single-layer potential at off-surface points.

    Parameters
    ----------
    p : Density or (3, ndof) array
        Vector density over P0 or P1.
    grid : (n, 3) array or EvalGrid
        Off-surface points.

    Returns
    -------
    (n, 3) complex array of displacements.
    """
    kind, coeffs = _vector_density(mesh, p)
    pv = p1_panel_values if kind == "P1" else p0_panel_values
    stack = _gamma_stack(params)
    vals = np.stack([
        evaluate_stack(mesh, grid, stack, pv(mesh, coeffs[l]), degree, eta)
        for l in range(3)
    ])  # (l, 7, n)
    return _scaled_contract(params, vals, 1).T


def eval_S_jacobian(mesh, params, p, grid, degree=FAR_DEGREE, eta=EVAL_ETA):
    """Pointwise Jacobian of the single-layer potential.

    Returns (n, 3, 3) with [i, k, m] = d_m (S p)_k at grid point i.
    """
    kind, coeffs = _vector_density(mesh, p)
    pv = p1_panel_values if kind == "P1" else p0_panel_values
    stack = _grad_gamma_stack(params)
    vals = np.stack([
        evaluate_stack(mesh, grid, stack, pv(mesh, coeffs[l]), degree, eta)
        for l in range(3)
    ])  # (l, 13, n)
    scale = 1.0 / (params.omega**2 * params.rho)
    ks2 = params.kappa_s**2
    jac = np.empty((3, 3) + vals.shape[2:], dtype=complex)
    for k in range(3):
        for m in range(3):
            acc = ks2 * vals[k, m]
            for l in range(3):
                acc = acc - vals[l, 3 + _TRIPLE_INDEX[k, l, m]]
            jac[k, m] = scale * acc
    return np.moveaxis(jac, -1, 0)


def eval_K(mesh, params, psi, grid, form="II", degree=FAR_DEGREE,
           eta=EVAL_ETA):
    """Elastic double-layer potential at off-surface points.

    Both forms push the Guenter derivative onto the density and keep
    only weakly singular potentials: form "I" routes the normal parts
    through grad V_kp and curl V_ks, form "II" through the G_ks double
    layer and the difference-kernel gradient.

    Parameters
    ----------
    psi : Density or (3, nv) array
        P1 vector density.
    form : str
        "I" or "II".

    Returns
    -------
    (n, 3) complex array of displacements.
    """
    kind, coeffs = _vector_density(mesh, psi)
    if kind != "P1":
        raise ValueError("double-layer density must be P1")
    if form not in ("I", "II"):
        raise ValueError(f"unknown form {form!r}")
    mu = params.mu
    q = guenter_matrix_apply(mesh, coeffs).coeffs  # (3, nt), M psi per panel
    gstack = _gamma_stack(params)
    sv = np.stack([
        evaluate_stack(mesh, grid, gstack, p0_panel_values(mesh, q[m]),
                       degree, eta)
        for m in range(3)
    ])  # (m, 7, n)
    smq = _scaled_contract(params, sv, 1)  # S(M psi)
    ndot = _weighted_p1_values(mesh, coeffs, mesh.normals.T)
    if form == "II":
        dl = helmholtz_stack(params.kappa_s, ("dny",))
        npot = np.stack([
            evaluate_stack(mesh, grid, dl, p1_panel_values(mesh, coeffs[k]),
                           degree, eta)[0]
            for k in range(3)
        ])
        gpsi = evaluate_stack(mesh, grid, _grad_psi_stack(params), ndot,
                              degree, eta)
        out = npot + sv[:, 0] - 2.0 * mu * smq + gpsi
    else:
        gp = evaluate_stack(mesh, grid, helmholtz_stack(params.kappa_p,
                                                        ("grad",)),
                            ndot, degree, eta)
        gs = helmholtz_stack(params.kappa_s, ("grad",))
        dv = np.stack([
            evaluate_stack(mesh, grid, gs,
                           _weighted_p1_values(mesh, coeffs,
                                               _cross_weights(mesh, b)),
                           degree, eta)
            for b in range(3)
        ])  # dv[b, a] = d_a V_ks (n x psi)_b
        curl = np.stack([
            dv[2, 1] - dv[1, 2],
            dv[0, 2] - dv[2, 0],
            dv[1, 0] - dv[0, 1],
        ])
        out = gp - curl - 2.0 * mu * smq
    return out.T


def eval_K_jacobian(mesh, params, psi, grid, degree=FAR_DEGREE,
                    eta=EVAL_ETA):
    """Pointwise Jacobian of the double-layer potential (second form).

    Returns (n, 3, 3) with [i, k, m] = d_m (K psi)_k at grid point i.
    """
    kind, coeffs = _vector_density(mesh, psi)
    if kind != "P1":
        raise ValueError("double-layer density must be P1")
    mu = params.mu
    q = guenter_matrix_apply(mesh, coeffs).coeffs
    gstack = _grad_gamma_stack(params)
    sv = np.stack([
        evaluate_stack(mesh, grid, gstack, p0_panel_values(mesh, q[m]),
                       degree, eta)
        for m in range(3)
    ])  # (m, 13, n)
    scale = 1.0 / (params.omega**2 * params.rho)
    ks2 = params.kappa_s**2
    n = sv.shape[-1]
    js = np.empty((3, 3, n), dtype=complex)  # d_m S(M psi)_k
    for k in range(3):
        for m in range(3):
            acc = ks2 * sv[k, m]
            for l in range(3):
                acc = acc - sv[l, 3 + _TRIPLE_INDEX[k, l, m]]
            js[k, m] = scale * acc
    dn = _dny_grad_stack(params.kappa_s)
    jn = np.stack([
        evaluate_stack(mesh, grid, dn, p1_panel_values(mesh, coeffs[k]),
                       degree, eta)
        for k in range(3)
    ])  # (k, m, n)
    ndot = _weighted_p1_values(mesh, coeffs, mesh.normals.T)
    hp = evaluate_stack(mesh, grid, _hess_psi_stack(params), ndot, degree,
                        eta)  # (6, n)
    jac = np.empty((3, 3, n), dtype=complex)
    for k in range(3):
        for m in range(3):
            jac[k, m] = (jn[k, m] + sv[k, m] - 2.0 * mu * js[k, m]
                         + hp[_SYM_INDEX[k, m]])
    return np.moveaxis(jac, -1, 0)


def traction_from_gradient(params, normals, grad):
    """Traction sigma(u) n from pointwise Jacobians.

    grad[..., k, m] = d_m u_k and normals (..., 3);
    sigma(u) n = lam n div u + mu (grad u + grad u^T) n.
    """
    div = np.trace(grad, axis1=-2, axis2=-1)
    sym = grad + np.swapaxes(grad, -1, -2)
    return params.lam * div[..., None] * normals + params.mu * np.einsum(
        "...km,...m->...k", sym, normals
    )


# ---- tractions ----


def traction_single_layer(mesh, params, p, side="+", degree=FAR_DEGREE,
                          threads=1, duffy_order=DUFFY_ORDER) -> Density:
    """One-sided traction of the single-layer potential, as functionals
    over P1 test fields.

    Realizes (d_n V_ks p)+/- + n div (V_kp - V_ks) p - M (V_ks - 2 mu S) p
    variationally: the adjoint part carries the whole +/- p/2 jump, the
    divergence part is the smooth difference-kernel gradient moved to
    the test side, and the Guenter part is integrated by parts onto the
    test functions.

    Parameters
    ----------
    p : Density or (3, ndof) array
        Vector density over P0 or P1.
    side : str
        "+" interior, "-" exterior trace.

    Returns
    -------
    Density
        Dual 3-component P1 density of functional coefficients.
    """
    if side not in ("+", "-"):
        raise ValueError(f"unknown side {side!r}")
    kind, coeffs = _vector_density(mesh, p)
    ga = assemble_stack(mesh, "P0", kind, _gamma_stack(params),
                        degree=degree, threads=threads,
                        duffy_order=duffy_order)
    dg = assemble_stack(mesh, kind, "P1", _dlayer_grad_stack(params),
                        degree=degree, threads=threads,
                        duffy_order=duffy_order)
    d = [[guenter_block(mesh, k, l) for l in range(3)] for k in range(3)]
    sgn = 0.5 if side == "+" else -0.5
    mass = mass_matrix(mesh, "P1", kind)
    mu = params.mu
    ks2 = params.kappa_s**2
    scale = 1.0 / (params.omega**2 * params.rho)
    vp = np.stack([ga[0] @ coeffs[l] for l in range(3)])  # (3, nt)
    hp = np.stack([
        sum(ga[1 + _SYM_INDEX[l, m]] @ coeffs[m] for m in range(3))
        for l in range(3)
    ])
    # panel integrals of (V_ks - 2 mu S) p
    wp = vp - 2.0 * mu * scale * (ks2 * vp - hp)
    out = np.empty((3, mesh.n_vertices), dtype=complex)
    for k in range(3):
        acc = -(dg[0].T @ coeffs[k]) + sgn * (mass @ coeffs[k])
        for dd in range(3):
            acc = acc - dg[1 + 3 * dd + k].T @ coeffs[dd]
        for l in range(3):
            if l != k:
                acc = acc + d[k][l].T @ wp[l]
        out[k] = acc
    return Density(mesh, "P1", out, dual=True)


def _traction_pieces(mesh, params, degree=FAR_DEGREE, threads=1,
                     duffy_order=DUFFY_ORDER):
    """Galerkin blocks shared by both traction-of-double-layer forms."""
    ga = assemble_stack(mesh, "P0", "P0", _gamma_stack(params),
                        degree=degree, threads=threads,
                        duffy_order=duffy_order)
    dg = assemble_stack(mesh, "P0", "P1", _dlayer_grad_stack(params),
                        degree=degree, threads=threads,
                        duffy_order=duffy_order)
    pp = assemble_stack(mesh, "P1", "P1", _p1p1_stack(params),
                        degree=degree, threads=threads,
                        duffy_order=duffy_order)
    d = [[guenter_block(mesh, k, l) for l in range(3)] for k in range(3)]
    c = _hat_curl_blocks(mesh)
    nv = mesh.n_vertices
    vhat = ga[0]

    # curl-curl weak form of d_n N_ks (Hamdi regularization)
    vc = [vhat @ c[dd] for dd in range(3)]
    w = -params.kappa_s**2 * pp[0]
    for dd in range(3):
        w = w + c[dd].T @ vc[dd]
    cvc = [[c[k].T @ vc[j] for j in range(3)] for k in range(3)]

    # difference-kernel gradient blocks paired with Guenter rows/columns:
    # b1[k][j] = <phi_k, (M grad (V_kp-V_ks)(n . psi))_k with psi = e_j hat>
    b1 = [[np.zeros((nv, nv), dtype=complex) for _ in range(3)]
          for _ in range(3)]
    b2 = [[np.zeros((nv, nv), dtype=complex) for _ in range(3)]
          for _ in range(3)]
    for k in range(3):
        for j in range(3):
            for dd in range(3):
                if dd != k:
                    b1[k][j] -= d[k][dd].T @ dg[1 + 3 * dd + j]
                if dd != j:
                    b2[k][j] -= dg[1 + 3 * dd + k].T @ d[dd][j]

    # Guenter-sandwiched single layers: mvm = sum_l D_kl^T Vhat D_lj,
    # mhm = sum_lm D_kl^T (hess psi)hat_lm D_mj
    vd = [[vhat @ d[l][j] if l != j else None for j in range(3)]
          for l in range(3)]
    hd = [[np.zeros((ga.shape[1], nv), dtype=complex) for _ in range(3)]
          for _ in range(3)]
    for l in range(3):
        for j in range(3):
            for m in range(3):
                if m != j:
                    hd[l][j] += ga[1 + _SYM_INDEX[l, m]] @ d[m][j]
    mvm = [[np.zeros((nv, nv), dtype=complex) for _ in range(3)]
           for _ in range(3)]
    mhm = [[np.zeros((nv, nv), dtype=complex) for _ in range(3)]
           for _ in range(3)]
    for k in range(3):
        for j in range(3):
            for l in range(3):
                if l == k:
                    continue
                if l != j:
                    mvm[k][j] += d[k][l].T @ vd[l][j]
                mhm[k][j] += d[k][l].T @ hd[l][j]

    return {
        "vhat": vhat,
        "nhat": dg[0],
        "m01": mass_matrix(mesh, "P0", "P1"),
        "d": d,
        "w": w,
        "cvc": cvc,
        "b1": b1,
        "b2": b2,
        "mvm": mvm,
        "mhm": mhm,
        "pp": pp,
    }


def _combine_traction(pieces, params, form, side):
    mu = params.mu
    ks2 = params.kappa_s**2
    w2r = params.omega**2 * params.rho
    sgn = 0.5 if side == "+" else -0.5
    d = pieces["d"]
    pp = pieces["pp"]
    npm = pieces["nhat"] + sgn * pieces["m01"]
    apm = -pieces["nhat"].T + sgn * pieces["m01"].T
    coupling = mu if form == "ALTER" else 2.0 * mu
    blocks = [[None] * 3 for _ in range(3)]
    for k in range(3):
        for j in range(3):
            b = 2.0 * mu * (pieces["b1"][k][j] - pieces["b2"][k][j])
            b = b - (4.0 * mu / ks2) * pieces["mhm"][k][j]
            if k != j:
                b = b - coupling * (d[k][j].T @ npm + apm @ d[k][j])
            if form == "ALTER":
                if k == j:
                    b = b + mu * pieces["w"]
                b = b + mu * pieces["mvm"][k][j]
                b = b - w2r * (pp[10 + 3 * k + j] - pp[1 + 3 * k + j])
            else:
                b = b + mu * pieces["cvc"][k][j]
                extra = pp[10 + 3 * k + j] - pp[1 + 3 * j + k]
                if k == j:
                    extra = extra + pp[0]
                b = b - w2r * extra
            blocks[k][j] = b
    return np.block(blocks)


def traction_double_layer(mesh, params, trial="P1", test="P1", form="ALTER",
                          side="+", degree=FAR_DEGREE, threads=1,
                          duffy_order=DUFFY_ORDER) -> DenseOperator:
    """Galerkin matrix of the one-sided traction of the double-layer
    potential over P1 vector fields.

    Form "ALTER" carries the d_n N_ks block through its curl-curl weak
    form plus Guenter-sandwiched single layers; form "V2" replaces the
    sandwich of V_ks by surface-curl pairings.  Only weakly singular
    integrals appear in either; both are complex symmetric and
    side-independent to roundoff.

    Parameters
    ----------
    form : str
        "ALTER" or "V2".
    side : str
        "+" interior, "-" exterior trace (the results coincide).

    Returns
    -------
    DenseOperator
        Component-blocked (3*nv, 3*nv) matrix.
    """
    if trial != "P1" or test != "P1":
        raise ValueError("traction of the double layer requires P1 spaces")
    if form not in ("ALTER", "V2"):
        raise ValueError(f"unknown form {form!r}")
    if side not in ("+", "-"):
        raise ValueError(f"unknown side {side!r}")
    pieces = _traction_pieces(mesh, params, degree=degree, threads=threads,
                              duffy_order=duffy_order)
    mat = _combine_traction(pieces, params, form, side)
    meta = {
        "kernel": "elastic_traction_double_layer",
        "form": form,
        "side": side,
        "omega": params.omega,
        "rho": params.rho,
        "mu": params.mu,
        "lam": params.lam,
    }
    return DenseOperator(mat, mesh, test, trial, 3, 3, meta)


# ---- representation check ----


def somigliana_residual(mesh, params, x0, a, grid, degree=FAR_DEGREE,
                        eta=EVAL_ETA) -> float:
    """Reproduce an interior point-source field on an exterior grid
    from its boundary traces.

    u(x) = Gamma(x, x0) a is a radiating exterior solution; the traces
    u- (P1 vertex interpolant) and (T u)- (P0 centroid traction) feed
    the representation u = -K(u-) - S((T u)-), whose signs follow from
    the exterior jump relations.  Returns the maximum relative
    deviation from u over the grid.

    Parameters
    ----------
    x0 : (3,) strictly interior source point
    a : (3,) source direction
    grid : (n, 3) exterior points

    Returns
    -------
    float
    """
    from .kernels import kupradze_gamma_derivs

    x0 = np.asarray(x0, dtype=float).reshape(3)
    pts = grid.points if isinstance(grid, EvalGrid) else np.atleast_2d(
        np.asarray(grid, dtype=float))
    a = np.asarray(a, dtype=complex).reshape(3)
    wind = eval_double_layer(
        mesh, 0.0, np.ones(mesh.n_vertices),
        np.vstack([x0[None, :], pts]), degree=degree, eta=eta,
    ).real
    if wind[0] < 0.5:
        raise ValueError("x0 must be strictly interior")
    outside = wind[1:] < 0.5
    if not outside.all():
        bad = int(np.argmin(outside))
        raise ValueError(f"grid point {bad} is not exterior")
    ug = np.einsum("vkl,l->kv", kupradze_gamma(params, mesh.vertices, x0), a)
    _, dgm = kupradze_gamma_derivs(params, mesh.centroids, x0)
    jac = np.einsum("tklm,l->tkm", dgm, a)
    tg = traction_from_gradient(params, mesh.normals, jac).T  # (3, nt)
    urep = -eval_K(mesh, params, Density(mesh, "P1", ug), pts, form="II",
                   degree=degree, eta=eta)
    urep = urep - eval_S(mesh, params, Density(mesh, "P0", tg), pts,
                         degree=degree, eta=eta)
    uref = np.einsum("pkl,l->pk", kupradze_gamma(params, pts, x0), a)
    num = np.linalg.norm(urep - uref, axis=1)
    den = np.linalg.norm(uref, axis=1)
    rel = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(rel.max())
