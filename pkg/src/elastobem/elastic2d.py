"""Plane/antiplane elastic operators on closed curves.

Out-of-plane motion reduces to scalar Helmholtz operators at the shear
wavenumber; in-plane motion couples the two components through the
arclength derivative (the only surviving Guenter derivative in 2D).
Every operator is assembled from weakly singular Hankel kernels:
coincident segments integrate an explicit smooth + log split with a
Gauss-log rule, segments sharing a vertex use geometrically graded
Gauss, and the remaining pairs plain tensor Gauss.
"""

from dataclasses import dataclass, field

import numpy as np

from .kernels import WaveParams, _g2_radial, _g2_series_coeffs, _g2_split, _psi2_stack
from .mesh import Curve2D
from .potentials import DenseOperator, space_ndof
from .quadrature import gauss_log, gauss_segment

__all__ = [
    "PlanarDensity",
    "split_field",
    "guenter_2d",
    "guenter_2d_matrix",
    "guenter_2d_plane",
    "curve_mass",
    "CurveStack",
    "assemble_curve_stack",
    "assemble_antiplane",
    "assemble_plane",
    "SEG_DEGREE",
    "LOG_ORDER",
]

SEG_DEGREE = 10  # Gauss points per segment direction
LOG_ORDER = 10  # Gauss-log points for coincident segments
GRADE_RATIO = 0.3  # grading toward shared vertices
GRADE_LEVELS = 16

# action of e3 x (.) on plane vectors
_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])
_ROT.setflags(write=False)
# index of the symmetric pair (a, b) in an (h00, h01, h11) stack
_SYM2 = np.array([[0, 1], [1, 2]])


# ---- plane/antiplane splitting ----


def split_field(u):
    """Split a 3-component field on a curve into (plane, antiplane).

    u has shape (3, ...); returns views (u[:2], u[2]) so that
    recombining with np.concatenate is the exact identity.
    """
    u = np.asarray(u)
    if u.shape[0] != 3:
        raise ValueError(f"expected 3 components, got {u.shape[0]}")
    return u[:2], u[2]


@dataclass
class PlanarDensity:
    """Plane (2-component) and antiplane (scalar) parts of a curve field.

    space "P1" holds one coefficient per vertex, "P0" one per segment.
    dual marks functional coefficients rather than nodal values.
    """

    curve: Curve2D
    space: str
    plane: np.ndarray  # (2, ndof)
    antiplane: np.ndarray  # (ndof,)
    dual: bool = False

    def __post_init__(self):
        if self.space not in ("P0", "P1"):
            raise ValueError(f"unknown space {self.space!r}")
        n = self.ndof_scalar
        self.plane = np.atleast_2d(np.asarray(self.plane))
        self.antiplane = np.asarray(self.antiplane)
        if self.plane.shape != (2, n):
            raise ValueError(f"expected (2, {n}) plane coefficients, got {self.plane.shape}")
        if self.antiplane.shape != (n,):
            raise ValueError(f"expected ({n},) antiplane coefficients, got {self.antiplane.shape}")

    @property
    def ndof_scalar(self) -> int:
        return space_ndof(self.curve, self.space)

    @classmethod
    def from_components(cls, curve: Curve2D, space: str, u, dual: bool = False) -> "PlanarDensity":
        """Build from a (3, ndof) coefficient array."""
        plane, anti = split_field(u)
        return cls(curve, space, plane, anti, dual)

    def combine(self) -> np.ndarray:
        """Recombine to the (3, ndof) coefficient array."""
        return np.concatenate([self.plane, self.antiplane[None, :]])


# ---- 2D Guenter derivative ----


def guenter_2d(curve: Curve2D, u) -> np.ndarray:
    """Arclength derivative of a P1 scalar, one value per segment.

    On a closed curve the only nonzero Guenter derivatives reduce to
    +/- the arclength derivative, so this is the whole 2D calculus; see
    guenter_2d_matrix for the matrix form and guenter_2d_plane for the
    action e3 x d_s on plane fields.
    """
    u = np.asarray(u)
    if u.shape[-1] != curve.n_segments:
        raise ValueError(
            f"expected {curve.n_segments} nodal values, got {u.shape[-1]}"
        )
    return (np.roll(u, -1, axis=-1) - u) / curve.lengths


def guenter_2d_matrix(curve: Curve2D) -> np.ndarray:
    """Matrix of the arclength derivative, (n_segments, n_vertices)."""
    ns = curve.n_segments
    d = np.zeros((ns, ns))
    idx = np.arange(ns)
    d[idx, idx] = -1.0 / curve.lengths
    d[idx, (idx + 1) % ns] = 1.0 / curve.lengths
    return d


def guenter_2d_plane(curve: Curve2D, uperp) -> np.ndarray:
    """Plane Guenter matrix action e3 x d_s u on P1 coefficients (2, n)."""
    uperp = np.asarray(uperp)
    if uperp.shape[0] != 2:
        raise ValueError(f"expected 2 components, got {uperp.shape[0]}")
    du = np.stack([guenter_2d(curve, uperp[0]), guenter_2d(curve, uperp[1])])
    return np.einsum("ab,bs->as", _ROT, du)


# ---- segment mass matrices ----


def curve_mass(curve: Curve2D, test_kind: str, trial_kind: str) -> np.ndarray:
    L = curve.lengths
    ns = curve.n_segments
    idx = np.arange(ns)
    nxt = (idx + 1) % ns
    if (test_kind, trial_kind) == ("P0", "P0"):
        return np.diag(L)
    if (test_kind, trial_kind) == ("P0", "P1"):
        m = np.zeros((ns, ns))
        m[idx, idx] = 0.5 * L
        m[idx, nxt] = 0.5 * L
        return m
    if (test_kind, trial_kind) == ("P1", "P0"):
        return curve_mass(curve, "P0", "P1").T
    if (test_kind, trial_kind) == ("P1", "P1"):
        m = np.zeros((ns, ns))
        np.add.at(m, (idx, idx), L / 3.0)
        np.add.at(m, (nxt, nxt), L / 3.0)
        np.add.at(m, (idx, nxt), L / 6.0)
        np.add.at(m, (nxt, idx), L / 6.0)
        return m
    raise ValueError(f"unknown space pair {(test_kind, trial_kind)!r}")


# ---- kernel stacks on curves ----


@dataclass(frozen=True)
class CurveStack:
    """A batch of 2D kernels evaluated on shared pair geometry.

    fn(r, dx, nx, ny) -> (ncomp,) + r.shape complex for r > 0, with
    dx = x - y and nx, ny broadcasting against dx.  split(r, sdx, tau,
    nrm) -> list of (smooth, logcoef) pairs describing the kernel along
    a single straight segment as smooth + logcoef * ln r, where sdx is
    the signed coordinate of x - y along the unit tangent tau.
    """

    ncomp: int
    fn: object
    split: object
    labels: tuple = ()


def _dot2(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]


def _tangent_dot(nx, ny):
    # tau = (-n2, n1): tau_x . tau_y, numerically identical to nx . ny
    return nx[..., 1] * ny[..., 1] + nx[..., 0] * ny[..., 0]


def _antiplane_stack(kappa: float, parts) -> CurveStack:
    parts = tuple(parts)
    order = 1 if "dny" in parts else 0

    def fn(r, dx, nx, ny):
        g = _g2_radial(kappa, r, order)
        out = np.empty((len(parts),) + r.shape, dtype=complex)
        for c, p in enumerate(parts):
            if p == "val":
                out[c] = g[0]
            elif p == "dny":
                out[c] = g[1] / r * _dot2(dx, ny)
            elif p == "nn":
                out[c] = g[0] * _dot2(nx, ny)
            elif p == "tt":
                out[c] = g[0] * _tangent_dot(nx, ny)
            else:
                raise ValueError(f"unknown part {p!r}")
        return out

    def split(r, sdx, tau, nrm):
        a, b = _g2_split(kappa, r)
        zero = np.zeros(r.shape, dtype=complex)
        out = []
        for p in parts:
            if p == "dny":
                out.append((zero, zero))  # dx . n = 0 on a straight segment
            else:
                out.append((a, b))  # n . n = tau . tau = 1
        return out

    return CurveStack(len(parts), fn, split, parts)


def _hess2_factors(kp: float, ks: float, n: int = 24):
    """Even power series (in r) for f1 = psi2'/r and f2 = psi2'' - f1,
    each split as smooth + log coefficient; entries multiply r^(2k),
    k = 0..n-2."""
    ap, bp = _g2_series_coeffs(kp, n)
    as_, bs = _g2_series_coeffs(ks, n)
    a = (ap - as_)[1:]
    b = (bp - bs)[1:]
    k = np.arange(1, n, dtype=float)
    return (
        2 * k * a + b,
        2 * k * b,
        2 * k * (2 * k - 2) * a + (4 * k - 2) * b,
        2 * k * (2 * k - 2) * b,
    )


def _even_series(coef, r):
    p = r[..., None] ** (2.0 * np.arange(len(coef)))
    return p @ coef


def _gamma2_stack(params: WaveParams) -> CurveStack:
    """[G_s, hess00, hess01, hess11] with hess = dd(psi2) in x."""
    kp, ks = params.kappa_p, params.kappa_s
    fac = _hess2_factors(kp, ks)

    def fn(r, dx, nx, ny):
        g = _g2_radial(ks, r, 0)[0]
        psi = _psi2_stack(kp, ks, r, 2)
        f1 = psi[1] / r
        f2 = psi[2] - f1
        rh = dx / r[..., None]
        out = np.empty((4,) + r.shape, dtype=complex)
        out[0] = g
        for c, (a, b) in enumerate(((0, 0), (0, 1), (1, 1))):
            h = f2 * rh[..., a] * rh[..., b]
            if a == b:
                h = h + f1
            out[1 + c] = h
        return out

    def split(r, sdx, tau, nrm):
        out = [_g2_split(ks, r)]
        f1s, f1l, f2s, f2l = (_even_series(c, r) for c in fac)
        for a, b in ((0, 0), (0, 1), (1, 1)):
            # rhat = +/- tau, and the sign cancels in the dyadic product
            tt = tau[..., a] * tau[..., b]
            sm = f2s * tt
            lg = f2l * tt
            if a == b:
                sm = sm + f1s
                lg = lg + f1l
            out.append((sm, lg))
        return out

    return CurveStack(4, fn, split, ("val_s", "h00", "h01", "h11"))


def _dlayer_grad2_stack(params: WaveParams) -> CurveStack:
    """[N-kernel of G_s, grad_x psi2 x n_y blocks (d, j) at 1+2d+j]."""
    kp, ks = params.kappa_p, params.kappa_s
    fac = _hess2_factors(kp, ks)

    def fn(r, dx, nx, ny):
        gs = _g2_radial(ks, r, 1)
        psi = _psi2_stack(kp, ks, r, 1)
        f1 = psi[1] / r
        out = np.empty((5,) + r.shape, dtype=complex)
        out[0] = gs[1] / r * _dot2(dx, ny)
        for d in range(2):
            for j in range(2):
                out[1 + 2 * d + j] = f1 * dx[..., d] * ny[..., j]
        return out

    def split(r, sdx, tau, nrm):
        zero = np.zeros(r.shape, dtype=complex)
        out = [(zero, zero)]
        f1s = _even_series(fac[0], r)
        f1l = _even_series(fac[1], r)
        for d in range(2):
            for j in range(2):
                w = sdx * tau[..., d] * nrm[..., j]
                out.append((f1s * w, f1l * w))
        return out

    return CurveStack(5, fn, split, ("dny_s", "g00", "g01", "g10", "g11"))


def _p1p1_2_stack(params: WaveParams) -> CurveStack:
    """[G_s nx.ny, G_s nx_a ny_b at 1+2a+b, G_p nx_a ny_b at 5+2a+b,
    G_s taux.tauy]."""
    kp, ks = params.kappa_p, params.kappa_s

    def fn(r, dx, nx, ny):
        gs = _g2_radial(ks, r, 0)[0]
        gp = _g2_radial(kp, r, 0)[0]
        out = np.empty((10,) + r.shape, dtype=complex)
        out[0] = gs * _dot2(nx, ny)
        for a in range(2):
            for b in range(2):
                w = nx[..., a] * ny[..., b]
                out[1 + 2 * a + b] = gs * w
                out[5 + 2 * a + b] = gp * w
        out[9] = gs * _tangent_dot(nx, ny)
        return out

    def split(r, sdx, tau, nrm):
        gsa, gsb = _g2_split(ks, r)
        gpa, gpb = _g2_split(kp, r)
        out = [(gsa, gsb)]
        for a in range(2):
            for b in range(2):
                w = nrm[..., a] * nrm[..., b]
                out.append((gsa * w, gsb * w))
        for a in range(2):
            for b in range(2):
                w = nrm[..., a] * nrm[..., b]
                out.append((gpa * w, gpb * w))
        out.append((gsa, gsb))
        return out

    return CurveStack(10, fn, split, ("nn_s",) + tuple("ab") + ("tt_s",))


# ---- Galerkin assembly over a closed curve ----


def _seg_shapes(kind: str, t: np.ndarray) -> np.ndarray:
    if kind == "P0":
        return np.ones((1,) + t.shape)
    return np.stack([1.0 - t, t])


def _seg_dofs(curve: Curve2D, kind: str) -> np.ndarray:
    idx = np.arange(curve.n_segments)
    if kind == "P0":
        return idx[:, None]
    return np.stack([idx, (idx + 1) % curve.n_segments], axis=1)


def _graded_nodes(degree: int, ratio: float, levels: int):
    # composite Gauss on [0, 1], cells accumulating geometrically at 0
    tq, tw = gauss_segment(degree)
    brk = ratio ** np.arange(levels, -1, -1.0)
    lo = np.concatenate([[0.0], brk[:-1]])
    size = brk - lo
    nodes = (lo[:, None] + size[:, None] * tq[None, :]).ravel()
    wts = (size[:, None] * tw[None, :]).ravel()
    return nodes, wts


def assemble_curve_stack(
    curve: Curve2D,
    test_kind: str,
    trial_kind: str,
    stack: CurveStack,
    degree: int = SEG_DEGREE,
    log_order: int = LOG_ORDER,
) -> np.ndarray:
    """Galerkin matrices of every stack component over a closed curve.

    Returns (ncomp, n_test, n_trial) complex.  Coincident segments use
    the stack's smooth/log split with a Gauss-log rule, segments
    sharing a vertex geometrically graded Gauss, all other pairs plain
    tensor Gauss.
    """
    ns = curve.n_segments
    L = curve.lengths
    x0 = curve.seg_coords[:, 0]
    edge = curve.seg_coords[:, 1] - x0
    nrm = curve.normals
    tau = curve.tangents
    tq, tw = gauss_segment(degree)
    g = len(tq)
    pts = x0[:, None, :] + tq[None, :, None] * edge[:, None, :]  # (ns, g, 2)

    sh_t = _seg_shapes(test_kind, tq)  # (kt, g)
    sh_s = _seg_shapes(trial_kind, tq)
    dof_t = _seg_dofs(curve, test_kind)
    dof_s = _seg_dofs(curve, trial_kind)
    out = np.zeros(
        (stack.ncomp, space_ndof(curve, test_kind), space_ndof(curve, trial_kind)),
        dtype=complex,
    )

    def scatter(vals, rows, cols):
        # vals (ncomp, kt, ks, nt, ns_cols); index pairs are unique per
        # local shape combination, so plain fancy-index accumulation works
        for c in range(stack.ncomp):
            for a in range(sh_t.shape[0]):
                for b in range(sh_s.shape[0]):
                    out[c][rows[:, a][:, None], cols[:, b][None, :]] += vals[c, a, b]

    _far_curve_pairs(out, curve, stack, pts, L, nrm, tw, sh_t, sh_s, dof_t, dof_s, scatter)
    _self_curve_pairs(
        out, curve, stack, L, tau, nrm, tq, tw, test_kind, trial_kind, sh_t, sh_s, dof_t,
        dof_s, log_order
    )
    _adjacent_curve_pairs(
        out, curve, stack, x0, edge, L, nrm, test_kind, trial_kind, dof_t, dof_s, degree
    )
    return out


def _far_curve_pairs(out, curve, stack, pts, L, nrm, tw, sh_t, sh_s, dof_t, dof_s, scatter):
    ns = curve.n_segments
    g = len(tw)
    idx = np.arange(ns)
    wseg = L[:, None] * tw[None, :]  # (ns, g)
    bs = max(1, int(4.0e6 // max(g * g * ns * stack.ncomp, 1)))
    for i0 in range(0, ns, bs):
        i1 = min(ns, i0 + bs)
        shiftmod = (idx[None, :] - idx[i0:i1, None]) % ns
        sep = (shiftmod != 0) & (shiftmod != 1) & (shiftmod != ns - 1)
        if not sep.any():
            continue
        dx = pts[i0:i1, :, None, None, :] - pts[None, None, :, :, :]
        r = np.linalg.norm(dx, axis=-1)
        r = np.where(sep[:, None, :, None], r, 1.0)
        kern = stack.fn(
            r, dx, nrm[i0:i1, None, None, None, :], nrm[None, None, :, None, :]
        )
        w4 = wseg[i0:i1, :, None, None] * wseg[None, None, :, :]
        w4 = w4 * sep[:, None, :, None]
        kern *= w4
        vals = np.einsum("ctqsp,aq,bp->cabts", kern, sh_t, sh_s, optimize=True)
        scatter(vals, dof_t[i0:i1], dof_s)


def _self_curve_pairs(
    out, curve, stack, L, tau, nrm, tq, tw, test_kind, trial_kind, sh_t, sh_s, dof_t, dof_s,
    log_order
):
    ns = curve.n_segments
    g = len(tq)
    t3 = tau[:, None, None, :]
    n3 = nrm[:, None, None, :]
    jac = L**2

    # tensor part: smooth + logcoef * ln(L), evaluated at r = L |t - s|
    td = tq[:, None] - tq[None, :]
    r = L[:, None, None] * np.abs(td)
    sdx = L[:, None, None] * td
    lnL = np.log(L)[:, None, None]
    w2 = tw[:, None] * tw[None, :]
    for c, (sm, lg) in enumerate(stack.split(r, sdx, t3, n3)):
        vals = np.einsum("tqp,qp,aq,bp->abt", sm + lg * lnL, w2, sh_t, sh_s, optimize=True)
        for a in range(sh_t.shape[0]):
            for b in range(sh_s.shape[0]):
                out[c][dof_t[:, a], dof_s[:, b]] += jac * vals[a, b]

    # log part: for each outer node t, the inner integral of
    # logcoef * ln|t-s| splits via s = t(1-u) (left of t) and
    # s = t + (1-t)u (right) into ln(piece length) + ln(u).  The ln(u)
    # factor takes the Gauss-log rule with a plain outer; the
    # ln(piece length) factor is itself log-singular at the segment
    # ends, so that part runs the outer integral on Gauss-log nodes.
    xl, wl = gauss_log(log_order)
    for orient in ("left", "right"):
        # plain outer nodes tq with log inner rule
        to_g = tq
        # log outer nodes placed so the piece length equals xl
        to_l = xl if orient == "left" else 1.0 - xl
        if orient == "left":
            plen_g = to_g
            s_g = to_g[:, None] * (1.0 - xl[None, :])  # (g, nl)
            s_l = to_l[:, None] * (1.0 - tq[None, :])  # (nl, g)
            sgn = 1.0
        else:
            plen_g = 1.0 - to_g
            s_g = to_g[:, None] + plen_g[:, None] * xl[None, :]
            s_l = to_l[:, None] + xl[:, None] * tq[None, :]
            sgn = -1.0
        # piece 1: - int phi(t) plen(t) [sum_l wl C psi] dt, plain outer
        r1 = L[:, None, None] * plen_g[None, :, None] * xl[None, None, :]
        c1 = stack.split(r1, sgn * r1, t3, n3)
        sh1 = _seg_shapes(trial_kind, s_g)  # (ks, g, nl)
        # piece 2: int phi plen ln(plen) [sum_q tw C psi] dt
        #        = - sum_o wl_o [phi plen I_G](outer log node o)
        r2 = L[:, None, None] * xl[None, :, None] * tq[None, None, :]
        c2 = stack.split(r2, sgn * r2, t3, n3)
        sh2 = _seg_shapes(trial_kind, s_l)  # (ks, nl, g)
        sht_l = _seg_shapes(test_kind, to_l)  # (kt, nl)
        for c in range(stack.ncomp):
            lg1 = c1[c][1]
            lg2 = c2[c][1]
            vals = -np.einsum(
                "tqu,u,bqu,q,q,aq->abt", lg1, wl, sh1, plen_g, tw, sh_t, optimize=True
            )
            vals -= np.einsum(
                "tou,u,bou,o,o,ao->abt", lg2, tw, sh2, xl, wl, sht_l, optimize=True
            )
            for a in range(sh_t.shape[0]):
                for b in range(sh_s.shape[0]):
                    out[c][dof_t[:, a], dof_s[:, b]] += jac * vals[a, b]


def _adjacent_curve_pairs(
    out, curve, stack, x0, edge, L, nrm, test_kind, trial_kind, dof_t, dof_s, degree
):
    ns = curve.n_segments
    idx = np.arange(ns)
    an, aw = _graded_nodes(degree, GRADE_RATIO, GRADE_LEVELS)
    npt = len(an)
    bs = max(1, int(2.0e6 // max(npt * npt * stack.ncomp, 1)))
    # shift +1: shared vertex at test t = 1, trial s = 0; shift -1: mirror
    for shift, t_par, s_par in ((1, 1.0 - an, an), (ns - 1, an, 1.0 - an)):
        js = (idx + shift) % ns
        sh_tt = _seg_shapes(test_kind, t_par)  # (kt, npt)
        sh_ss = _seg_shapes(trial_kind, s_par)
        for i0 in range(0, ns, bs):
            i1 = min(ns, i0 + bs)
            ji = js[i0:i1]
            xt = x0[i0:i1, None, :] + t_par[None, :, None] * edge[i0:i1, None, :]
            ys = x0[ji, None, :] + s_par[None, :, None] * edge[ji, None, :]
            dx = xt[:, :, None, :] - ys[:, None, :, :]
            r = np.linalg.norm(dx, axis=-1)
            kern = stack.fn(
                r, dx, nrm[i0:i1, None, None, :], nrm[ji, None, None, :]
            )
            w2 = (L[i0:i1, None] * aw[None, :])[:, :, None] * (
                L[ji, None] * aw[None, :]
            )[:, None, :]
            kern *= w2
            vals = np.einsum("ctqp,aq,bp->cabt", kern, sh_tt, sh_ss, optimize=True)
            for c in range(stack.ncomp):
                for a in range(sh_tt.shape[0]):
                    for b in range(sh_ss.shape[0]):
                        out[c][dof_t[i0:i1, a], dof_s[ji, b]] += vals[c, a, b]


# ---- operator catalog ----


def _check_side(side):
    if side not in ("+", "-"):
        raise ValueError(f"unknown side {side!r}")
    return 0.5 if side == "+" else -0.5


def _meta(params, operator, side, degree):
    return {
        "operator": operator,
        "side": side,
        "degree": degree,
        "kappa_p": params.kappa_p,
        "kappa_s": params.kappa_s,
    }


def assemble_antiplane(
    curve: Curve2D,
    params: WaveParams,
    operator: str,
    side: str = "+",
    degree: int = SEG_DEGREE,
) -> DenseOperator:
    """Assemble an antiplane (out-of-plane) operator on a closed curve.

    operator is one of "S3" (single layer, P0->P0), "K3" (double layer,
    P0 rows vs P1 columns), "TS3" (one-sided traction of the single
    layer, P1 rows vs P0 columns), "TK3" (traction of the double layer
    in regularized form, P1 x P1) or "TK3_ALT" (its arclength variant).
    side selects the trace for "TS3" and is ignored elsewhere.

    Parameters
    ----------
    curve : Curve2D
        Closed polygonal boundary.
    params : WaveParams
        Material and frequency constants; only the shear wavenumber and
        mu enter the antiplane problem.
    operator : str
        Operator name as above.
    side : str, optional
        "+" for the interior trace, "-" for the exterior one.
    degree : int, optional
        Gauss points per segment direction.

    Returns
    -------
    DenseOperator
        Assembled Galerkin matrix with space metadata.
    """
    sgn = _check_side(side)
    ks = params.kappa_s
    meta = _meta(params, operator, side, degree)
    if operator == "S3":
        v = assemble_curve_stack(curve, "P0", "P0", _antiplane_stack(ks, ("val",)), degree)[0]
        return DenseOperator(v / params.mu, curve, "P0", "P0", meta=meta)
    if operator == "K3":
        n = assemble_curve_stack(curve, "P0", "P1", _antiplane_stack(ks, ("dny",)), degree)[0]
        return DenseOperator(n, curve, "P0", "P1", meta=meta)
    if operator == "TS3":
        n = assemble_curve_stack(curve, "P0", "P1", _antiplane_stack(ks, ("dny",)), degree)[0]
        mat = -n.T + sgn * curve_mass(curve, "P1", "P0")
        return DenseOperator(mat, curve, "P1", "P0", meta=meta)
    if operator in ("TK3", "TK3_ALT"):
        d2 = guenter_2d_matrix(curve)
        v = assemble_curve_stack(curve, "P0", "P0", _antiplane_stack(ks, ("val",)), degree)[0]
        part = "nn" if operator == "TK3" else "tt"
        b = assemble_curve_stack(curve, "P1", "P1", _antiplane_stack(ks, (part,)), degree)[0]
        if operator == "TK3":
            mat = params.mu * (d2.T @ v @ d2 - ks**2 * b)
        else:
            mat = params.mu * (d2.T @ v @ d2) - params.omega**2 * params.rho * b
        return DenseOperator(mat, curve, "P1", "P1", meta=meta)
    raise ValueError(f"unknown antiplane operator {operator!r}")


def assemble_plane(
    curve: Curve2D,
    params: WaveParams,
    operator: str,
    side: str = "+",
    degree: int = SEG_DEGREE,
) -> DenseOperator:
    """Assemble a plane-strain operator on a closed curve.

    operator is one of "S" (single layer, P0 x P0), "K" (double layer,
    P0 rows vs P1 columns), "TS" (one-sided traction of the single
    layer, P1 rows vs P0 columns) or "TK" (traction of the double
    layer, P1 x P1).  Components are block-stacked so that degree of
    freedom comp * n + i matches PlanarDensity.plane.reshape(-1).

    Parameters
    ----------
    curve : Curve2D
        Closed polygonal boundary.
    params : WaveParams
        Material and frequency constants.
    operator : str
        Operator name as above.
    side : str, optional
        "+" for the interior trace, "-" for the exterior one; enters
        "TS" and "TK" only.
    degree : int, optional
        Gauss points per segment direction.

    Returns
    -------
    DenseOperator
        Assembled Galerkin matrix with 2-component space metadata.
    """
    sgn = _check_side(side)
    mu, ks = params.mu, params.kappa_s
    scale = 1.0 / (params.omega**2 * params.rho)
    meta = _meta(params, operator, side, degree)
    if operator == "S":
        ga = assemble_curve_stack(curve, "P0", "P0", _gamma2_stack(params), degree)
        blocks = [
            [scale * (ks**2 * (a == b) * ga[0] - ga[1 + _SYM2[a, b]]) for b in range(2)]
            for a in range(2)
        ]
        return DenseOperator(np.block(blocks), curve, "P0", "P0", 2, 2, meta)

    d2 = guenter_2d_matrix(curve)
    if operator == "K":
        ga = assemble_curve_stack(curve, "P0", "P0", _gamma2_stack(params), degree)
        dg = assemble_curve_stack(curve, "P0", "P1", _dlayer_grad2_stack(params), degree)
        blocks = [[None, None], [None, None]]
        for a in range(2):
            for b in range(2):
                acc = (a == b) * dg[0] + dg[1 + 2 * a + b]
                for c in range(2):
                    if _ROT[c, b] != 0.0:
                        x = -(a == c) * ga[0] + (2.0 / ks**2) * ga[1 + _SYM2[a, c]]
                        acc = acc + x @ (_ROT[c, b] * d2)
                blocks[a][b] = acc
        return DenseOperator(np.block(blocks), curve, "P0", "P1", 2, 2, meta)

    if operator == "TS":
        ga = assemble_curve_stack(curve, "P0", "P0", _gamma2_stack(params), degree)
        dg = assemble_curve_stack(curve, "P0", "P1", _dlayer_grad2_stack(params), degree)
        m10 = curve_mass(curve, "P1", "P0")
        blocks = [[None, None], [None, None]]
        for a in range(2):
            for b in range(2):
                acc = -dg[1 + 2 * b + a].T
                if a == b:
                    acc = acc + (-dg[0].T + sgn * m10)
                for c in range(2):
                    if _ROT[a, c] != 0.0:
                        x = -(c == b) * ga[0] + (2.0 / ks**2) * ga[1 + _SYM2[c, b]]
                        acc = acc + _ROT[a, c] * (d2.T @ x)
                blocks[a][b] = acc
        return DenseOperator(np.block(blocks), curve, "P1", "P0", 2, 2, meta)

    if operator == "TK":
        ga = assemble_curve_stack(curve, "P0", "P0", _gamma2_stack(params), degree)
        dg = assemble_curve_stack(curve, "P0", "P1", _dlayer_grad2_stack(params), degree)
        pp = assemble_curve_stack(curve, "P1", "P1", _p1p1_2_stack(params), degree)
        m01 = curve_mass(curve, "P0", "P1")
        w2r = params.omega**2 * params.rho
        d2v = d2.T @ ga[0] @ d2
        w2 = d2v - ks**2 * pp[0]
        npm = dg[0] + sgn * m01
        apm = -dg[0].T + sgn * m01.T
        hsand = [
            [d2.T @ ga[1 + _SYM2[c, dd]] @ d2 for dd in range(2)] for c in range(2)
        ]
        gsand_l = [[d2.T @ dg[1 + 2 * dd + b] for b in range(2)] for dd in range(2)]
        gsand_r = [[dg[1 + 2 * dd + a].T @ d2 for a in range(2)] for dd in range(2)]
        blocks = [[None, None], [None, None]]
        for a in range(2):
            for b in range(2):
                acc = -w2r * (pp[5 + 2 * a + b] - pp[1 + 2 * a + b])
                if a == b:
                    acc = acc + mu * w2 - mu * d2v
                if _ROT[a, b] != 0.0:
                    acc = acc - mu * _ROT[a, b] * (d2.T @ npm + apm @ d2)
                b1 = sum(
                    -_ROT[a, dd] * gsand_l[dd][b] for dd in range(2) if _ROT[a, dd]
                )
                b2 = sum(
                    -_ROT[dd, b] * gsand_r[dd][a] for dd in range(2) if _ROT[dd, b]
                )
                acc = acc + 2.0 * mu * (b1 - b2)
                mhm = sum(
                    _ROT[a, c] * _ROT[dd, b] * hsand[c][dd]
                    for c in range(2)
                    for dd in range(2)
                    if _ROT[a, c] and _ROT[dd, b]
                )
                acc = acc - (4.0 * mu / ks**2) * mhm
                blocks[a][b] = acc
        return DenseOperator(np.block(blocks), curve, "P1", "P1", 2, 2, meta)

    raise ValueError(f"unknown plane operator {operator!r}")
