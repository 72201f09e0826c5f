"""Helmholtz layer potentials on triangulated surfaces.

Off-surface evaluation of the single and double layer potentials,
Galerkin matrices (single layer, double layer, adjoint, regularized
hypersingular), and one-sided traces.

Sign conventions (recorded in operator metadata):

    V_k p(x)   =  int G_k(x,y) p(y) ds_y
    N_k psi(x) = -int d_{n_y} G_k(x,y) psi(y) ds_y   (opposite of the
                                                      classical sign)
    A_k p      =  d_{n_x} V_k p                       (adjoint kernel)

Traces are written f(+/-) where + is the limit from the bounded
interior and - the limit from the exterior:

    (V p)+   = (V p)-          (continuous)
    (N psi)+/- = pv +/- psi/2
    (A p)+/-   = pv +/- p/2

Panel-pair quadrature: separated pairs (true panel distance above the
larger diameter) use tensor Gauss; self pairs use an outer rule with
inner Duffy fans about each outer node; touching and near pairs
subdivide the trial panel until each piece is smaller than its distance
to every test quadrature node.  When test and trial spaces coincide,
each unordered pair is integrated once and scattered to both
orientations through the kernel's x<->y swap rule, so symmetric kernels
produce symmetric matrices to roundoff.

All assembled matrices are pure functions of their inputs: threading
only distributes independent work items, and contributions are applied
in a fixed order, so results are identical for any thread count.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .guenter import Density
from .kernels import _g_radial
from .mesh import EvalGrid, SurfaceMesh
from .quadrature import (
    gauss_segment,
    gauss_triangle,
    physical_rule,
    points_triangles_distance,
    triangle_diameter,
)

__all__ = [
    "DenseOperator",
    "KernelStack",
    "helmholtz_stack",
    "assemble_stack",
    "evaluate_stack",
    "mass_matrix",
    "eval_single_layer",
    "eval_double_layer",
    "galerkin_single_layer",
    "galerkin_double_layer",
    "galerkin_adjoint",
    "hypersingular_hamdi",
    "one_sided_traces",
    "save_operator",
    "load_operator",
    "load_matrix",
]

FAR_DEGREE = 6
DUFFY_ORDER = 8
PAIR_NEAR_FACTOR = 1.0  # pairs with distance <= factor * max diameter get near rules
EVAL_ETA = 2.0  # off-surface points closer than eta * diameter get near rules

MAGIC = b"EBEMMAT1"


# ---- spaces ----


def space_ndof(mesh, kind: str) -> int:
    # works for SurfaceMesh (panels = triangles) and Curve2D (panels =
    # segments); P1 dofs sit at the vertices in both cases
    if kind == "P0":
        n = getattr(mesh, "n_triangles", None)
        return mesh.n_segments if n is None else n
    if kind == "P1":
        return len(mesh.vertices)
    raise ValueError(f"unknown space kind {kind!r}")


def _space_dofs(mesh: SurfaceMesh, kind: str) -> np.ndarray:
    # (nt, K) global scalar dof per panel
    if kind == "P0":
        return np.arange(mesh.n_triangles, dtype=np.int64)[:, None]
    return mesh.triangles


def _shapes_at(kind: str, bary: np.ndarray) -> np.ndarray:
    # (K,) + bary.shape[:-1]: shape functions at barycentric points
    if kind == "P0":
        return np.ones((1,) + bary.shape[:-1])
    return np.moveaxis(bary, -1, 0)


# ---- operator container and file format ----


@dataclass
class DenseOperator:
    """Dense Galerkin matrix with space descriptors and convention
    metadata.

    Rows pair the test space, columns the trial space; vector spaces
    are component-blocked (dof = component * n_scalar + index) to match
    Density.flat.
    """

    matrix: np.ndarray
    mesh: SurfaceMesh
    test_kind: str
    trial_kind: str
    test_components: int = 1
    trial_components: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = self.test_components * space_ndof(self.mesh, self.test_kind)
        cols = self.trial_components * space_ndof(self.mesh, self.trial_kind)
        if self.matrix.shape != (rows, cols):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match spaces "
                f"({rows}, {cols})"
            )

    def apply(self, density) -> Density:
        """Apply to a Density (or flat coefficient array); the result
        holds functional coefficients over the test space."""
        flat = density.flat if isinstance(density, Density) else np.asarray(density)
        out = self.matrix @ flat
        return Density(
            self.mesh,
            self.test_kind,
            out.reshape(self.test_components, -1),
            dual=True,
        )

    @property
    def T(self) -> "DenseOperator":
        return DenseOperator(
            self.matrix.T,
            self.mesh,
            self.trial_kind,
            self.test_kind,
            self.trial_components,
            self.test_components,
            dict(self.meta, transposed=True),
        )


def save_operator(op: DenseOperator, path) -> None:
    """Write the EBEMMAT1 binary format plus a JSON sidecar.

    Layout: magic "EBEMMAT1", u64 rows, u64 cols, u64 flag (1 =
    complex128), then the row-major matrix as interleaved re/im float64.
    """
    m = np.ascontiguousarray(op.matrix, dtype=np.complex128)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<QQQ", m.shape[0], m.shape[1], 1))
        f.write(m.tobytes())
    sidecar = {
        "rows": m.shape[0],
        "cols": m.shape[1],
        "dtype": "complex128",
        "test_space": {"kind": op.test_kind, "components": op.test_components},
        "trial_space": {"kind": op.trial_kind, "components": op.trial_components},
        "mesh": {
            "n_vertices": len(op.mesh.vertices),
            "n_panels": space_ndof(op.mesh, "P0"),
        },
        "meta": _jsonable(op.meta),
    }
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_matrix(path) -> np.ndarray:
    """Read an EBEMMAT1 file back into a complex matrix."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"not an EBEMMAT1 file: {path}")
        rows, cols, flag = struct.unpack("<QQQ", f.read(24))
        if flag != 1:
            raise ValueError(f"unsupported flag {flag}")
        data = np.frombuffer(f.read(), dtype=np.complex128)
    if data.size != rows * cols:
        raise ValueError("truncated matrix file")
    return data.reshape(rows, cols).copy()


def load_operator(path, mesh: SurfaceMesh) -> DenseOperator:
    matrix = load_matrix(path)
    with open(str(path) + ".json") as f:
        side = json.load(f)
    return DenseOperator(
        matrix,
        mesh,
        side["test_space"]["kind"],
        side["trial_space"]["kind"],
        side["test_space"]["components"],
        side["trial_space"]["components"],
        side.get("meta", {}),
    )


# ---- kernel stacks ----


@dataclass(frozen=True)
class KernelStack:
    """A batch of scalar kernels evaluated on shared pair geometry.

    fn(r, dx, nx, ny) -> (ncomp,) + r.shape complex, where dx = x - y,
    r = |dx|, and nx, ny broadcast against dx.  swap[c] = (c', sign)
    states k_c(y, x) = sign * k_c'(x, y); partner -1 means the rule is
    unknown and the stack cannot be assembled in symmetric mode.
    """

    ncomp: int
    fn: object
    labels: tuple
    swap: tuple = ()

    def __post_init__(self):
        if not self.swap:
            object.__setattr__(self, "swap", tuple((-1, 1.0) for _ in range(self.ncomp)))


_HELMHOLTZ_SWAP = {
    "val": ("val", 1.0),
    "nn_val": ("nn_val", 1.0),
    "dny": ("dnx", -1.0),
    "dnx": ("dny", -1.0),
}


def helmholtz_stack(kappa, parts=("val",)) -> KernelStack:
    """Stack of Helmholtz kernel variants sharing one radial evaluation.

    parts may contain: "val" (G), "dny" (-d_{n_y}G, the double-layer
    kernel with its sign), "dnx" (d_{n_x}G, the adjoint kernel),
    "nn_val" ((n_x . n_y) G), "grad" (three components, gradient in x).
    """
    labels = []
    for p in parts:
        labels.extend([f"grad{i}" for i in range(3)] if p == "grad" else [p])
    order = 1 if any(p in ("dny", "dnx", "grad") for p in parts) else 0

    swap = []
    for lab in labels:
        if lab.startswith("grad"):
            swap.append((labels.index(lab), -1.0))
        else:
            partner, sign = _HELMHOLTZ_SWAP[lab]
            swap.append((labels.index(partner) if partner in labels else -1, sign))

    def fn(r, dx, nx, ny):
        rad = _g_radial(kappa, r, order)
        out = np.empty((len(labels),) + r.shape, dtype=complex)
        k = 0
        for p in parts:
            if p == "val":
                out[k] = rad[0]
                k += 1
            elif p == "nn_val":
                out[k] = rad[0] * np.einsum("...d,...d->...", nx, ny)
                k += 1
            elif p == "dny":
                out[k] = rad[1] / r * np.einsum("...d,...d->...", dx, ny)
                k += 1
            elif p == "dnx":
                out[k] = rad[1] / r * np.einsum("...d,...d->...", dx, nx)
                k += 1
            elif p == "grad":
                g = rad[1] / r
                for d in range(3):
                    out[k] = g * dx[..., d]
                    k += 1
            else:
                raise ValueError(f"unknown kernel part {p!r}")
        return out

    return KernelStack(len(labels), fn, tuple(labels), tuple(swap))


# ---- panel-pair classification ----


def _paired_point_triangle(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    # p (..., 3) against tri (..., 3, 3), elementwise over leading axes
    v0, v1, v2 = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    e1 = v1 - v0
    e2 = v2 - v0
    n = np.cross(e1, e2)
    nn = np.einsum("...d,...d->...", n, n)
    nn = np.where(nn > 0, nn, 1.0)
    d0 = p - v0
    a11 = np.einsum("...d,...d->...", e1, e1)
    a12 = np.einsum("...d,...d->...", e1, e2)
    a22 = np.einsum("...d,...d->...", e2, e2)
    b1 = np.einsum("...d,...d->...", d0, e1)
    b2 = np.einsum("...d,...d->...", d0, e2)
    det = a11 * a22 - a12 * a12
    det = np.where(det > 0, det, 1.0)
    s = (a22 * b1 - a12 * b2) / det
    t = (a11 * b2 - a12 * b1) / det
    inside = (s >= 0) & (t >= 0) & (s + t <= 1)
    hplane = np.abs(np.einsum("...d,...d->...", d0, n)) / np.sqrt(nn)
    dist = np.where(inside, hplane, np.inf)
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        ab = b - a
        denom = np.einsum("...d,...d->...", ab, ab)
        denom = np.where(denom > 0, denom, 1.0)
        u = np.clip(np.einsum("...d,...d->...", p - a, ab) / denom, 0.0, 1.0)
        dist = np.minimum(dist, np.linalg.norm(p - (a + u[..., None] * ab), axis=-1))
    return dist


def _segment_segment_distance(p1, q1, p2, q2):
    # elementwise over leading axes, endpoints (..., 3)
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("...d,...d->...", d1, d1)
    e = np.einsum("...d,...d->...", d2, d2)
    b = np.einsum("...d,...d->...", d1, d2)
    c = np.einsum("...d,...d->...", d1, r)
    f = np.einsum("...d,...d->...", d2, r)
    denom = a * e - b * b
    s = np.where(denom > 1e-30, np.clip((b * f - c * e) / np.where(denom > 1e-30, denom, 1.0), 0.0, 1.0), 0.0)
    t = np.clip((b * s + f) / np.where(e > 0, e, 1.0), 0.0, 1.0)
    s = np.clip((b * t - c) / np.where(a > 0, a, 1.0), 0.0, 1.0)
    diff = p1 + s[..., None] * d1 - (p2 + t[..., None] * d2)
    return np.linalg.norm(diff, axis=-1)


def _tri_tri_distance(ta: np.ndarray, tb: np.ndarray) -> np.ndarray:
    """Exact distance between paired disjoint triangles (k, 3, 3)."""
    dist = np.full(len(ta), np.inf)
    for v in range(3):
        dist = np.minimum(dist, _paired_point_triangle(ta[:, v], tb))
        dist = np.minimum(dist, _paired_point_triangle(tb[:, v], ta))
    edges = ((0, 1), (1, 2), (2, 0))
    for a0, a1 in edges:
        for b0, b1 in edges:
            dist = np.minimum(
                dist,
                _segment_segment_distance(ta[:, a0], ta[:, a1], tb[:, b0], tb[:, b1]),
            )
    return dist


def pair_classes(mesh: SurfaceMesh, sep_factor: float = PAIR_NEAR_FACTOR) -> np.ndarray:
    """Classify panel pairs: 0 separated, 1 near, 2 touching, 3 self.

    Separated means the exact panel-panel distance exceeds sep_factor
    times the larger panel diameter; touching means a shared vertex or
    edge.
    """
    nt = mesh.n_triangles
    inc = np.zeros((nt, mesh.n_vertices), dtype=np.float32)
    inc[np.repeat(np.arange(nt), 3), mesh.triangles.reshape(-1)] = 1.0
    shared = np.rint(inc @ inc.T).astype(np.int8)
    c = mesh.centroids
    radius = np.linalg.norm(mesh.tri_coords - c[:, None, :], axis=-1).max(axis=1)
    gap = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
    gap -= radius[:, None] + radius[None, :]
    dmax = np.maximum(mesh.diameters[:, None], mesh.diameters[None, :])
    cls = np.zeros((nt, nt), dtype=np.int8)
    # the bounding-sphere gap is a lower bound for the true distance, so
    # pairs above the threshold are certainly separated; resolve the
    # rest with the exact triangle-triangle distance
    cand = (shared == 0) & (gap <= sep_factor * dmax)
    np.fill_diagonal(cand, False)
    ij = np.argwhere(cand)
    if len(ij):
        d = _tri_tri_distance(mesh.tri_coords[ij[:, 0]], mesh.tri_coords[ij[:, 1]])
        near = d <= sep_factor * dmax[ij[:, 0], ij[:, 1]]
        cls[ij[near, 0], ij[near, 1]] = 1
    cls[shared >= 1] = 2
    np.fill_diagonal(cls, 3)
    return cls


# ---- singular and near quadrature layouts ----


@lru_cache(maxsize=None)
def _duffy_grid(order: int):
    x, w = gauss_segment(order)
    u = np.repeat(x, order)
    v = np.tile(x, order)
    ww = np.repeat(w, order) * np.tile(w, order)
    return u, v, ww


_FAN_EDGES = ((0, 1), (1, 2), (2, 0))


def _fan_points(tri: np.ndarray, centers: np.ndarray, order: int):
    """Duffy fan rule about per-point centers inside paired panels.

    tri (..., 3, 3) and centers (..., 3) barycentric; splits each panel
    into three sub-triangles sharing the center and collapses the 1/r
    behaviour there.  Returns barycentric points (..., m, 3) and weights
    (..., m) with m = 3*order**2.
    """
    u, v, ww = _duffy_grid(order)
    corners = np.eye(3)
    cpx = np.einsum("...b,...bd->...d", centers, tri)
    bary = []
    wts = []
    for a, b in _FAN_EDGES:
        ea, eb = corners[a], corners[b]
        direc = (ea - centers)[..., None, :] + v[:, None] * (eb - ea)
        bary.append(centers[..., None, :] + u[:, None] * direc)
        area2 = np.linalg.norm(
            np.cross(tri[..., a, :] - cpx, tri[..., b, :] - cpx), axis=-1
        )
        wts.append(u * ww * area2[..., None])
    return np.concatenate(bary, axis=-2), np.concatenate(wts, axis=-1)


def _closest_bary(tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of the closest point on tri to each pt.

    tri (..., 3, 3) and pts (..., 3) broadcast elementwise; the closest
    point is the in-plane projection when it lands inside, otherwise
    the best clamped point over the three edges.
    """
    v0, v1, v2 = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    e1 = v1 - v0
    e2 = v2 - v0
    d0 = pts - v0
    a11 = np.einsum("...d,...d->...", e1, e1)
    a12 = np.einsum("...d,...d->...", e1, e2)
    a22 = np.einsum("...d,...d->...", e2, e2)
    b1 = np.einsum("...d,...d->...", d0, e1)
    b2 = np.einsum("...d,...d->...", d0, e2)
    det = a11 * a22 - a12 * a12
    det = np.where(det > 0, det, 1.0)
    s = (a22 * b1 - a12 * b2) / det
    t = (a11 * b2 - a12 * b1) / det
    bary = np.stack([1.0 - s - t, s, t], axis=-1)
    inside = (bary >= 0.0).all(axis=-1)
    best = np.full(inside.shape, np.inf)
    cand = np.zeros_like(bary)
    for a, b in _FAN_EDGES:
        va = tri[..., a, :]
        ab = tri[..., b, :] - va
        denom = np.einsum("...d,...d->...", ab, ab)
        u = np.clip(
            np.einsum("...d,...d->...", pts - va, ab)
            / np.where(denom > 0, denom, 1.0),
            0.0,
            1.0,
        )
        d = np.linalg.norm(pts - (va + u[..., None] * ab), axis=-1)
        upd = (d < best) & ~inside
        best = np.where(upd, d, best)
        bl = np.zeros(bary.shape)
        bl[..., a] = 1.0 - u
        bl[..., b] = u
        cand = np.where(upd[..., None], bl, cand)
    return np.where(inside[..., None], bary, cand)


def _split_corners(corners: np.ndarray) -> np.ndarray:
    # corners (k, 3, 3) barycentric triples -> (4k, 3, 3)
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    return np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ]
    )


def partition_for_targets(
    tri: np.ndarray,
    targets: np.ndarray,
    degree: int,
    stop: float = 1.0,
    max_depth: int = 24,
    max_tris: int = 16384,
):
    """Subdivide a panel until each piece's diameter is at most stop
    times its distance to every target, then lay a Gauss rule on the
    pieces.

    Returns physical points (n, 3), weights (n,), and barycentric
    coordinates w.r.t. tri (n, 3).
    """
    rule = gauss_triangle(degree)
    targets = np.atleast_2d(targets)
    active = np.eye(3)[None, :, :]  # barycentric corners
    done = []
    for _ in range(max_depth):
        phys = active @ tri
        diam = triangle_diameter(phys)
        dist = points_triangles_distance(targets, phys).min(axis=0)
        ok = diam <= stop * dist
        if ok.any():
            done.append(active[ok])
        active = active[~ok]
        if len(active) == 0:
            break
        if 4 * len(active) > max_tris:
            done.append(active)
            active = active[:0]
            break
        active = _split_corners(active)
    if len(active):
        done.append(active)
    corners = np.concatenate(done)
    phys = corners @ tri
    pts, wts = physical_rule(rule, phys)  # (k, nq, 3), (k, nq)
    bary = np.einsum("qa,kab->kqb", rule.bary, corners)
    return pts.reshape(-1, 3), wts.reshape(-1), bary.reshape(-1, 3)


# ---- Galerkin assembly ----


def _block_rows(nt: int, nq: int, budget: float = 1.5e6) -> int:
    per_row = nq * nt * nq
    return max(1, int(budget // max(per_row, 1)))


def assemble_stack(
    mesh: SurfaceMesh,
    test_kind: str,
    trial_kind: str,
    stack: KernelStack,
    degree: int = FAR_DEGREE,
    threads: int = 1,
    sep_factor: float = PAIR_NEAR_FACTOR,
    duffy_order: int = DUFFY_ORDER,
) -> np.ndarray:
    """Assemble Galerkin matrices for every kernel in the stack in one
    sweep over panel pairs; returns (ncomp, ndof_test, ndof_trial).

    When test and trial kinds coincide and the stack knows its x<->y
    swap rule, each unordered pair is integrated once and scattered to
    both orientations, which makes symmetric kernels produce symmetric
    matrices to roundoff.
    """
    nt = mesh.n_triangles
    rule = gauss_triangle(degree)
    nq = rule.npoints
    pts, wts = physical_rule(rule, mesh.tri_coords)  # (nt, nq, 3), (nt, nq)
    st = _shapes_at(test_kind, rule.bary)  # (Kt, nq)
    ss = _shapes_at(trial_kind, rule.bary)  # (Ks, nq)
    kt, ks = st.shape[0], ss.shape[0]
    dofs_t = _space_dofs(mesh, test_kind)
    dofs_s = _space_dofs(mesh, trial_kind)
    nd_t = space_ndof(mesh, test_kind)
    nd_s = space_ndof(mesh, trial_kind)
    cls = pair_classes(mesh, sep_factor)
    normals = mesh.normals
    tri_coords = mesh.tri_coords
    ncomp = stack.ncomp

    symmetric = test_kind == trial_kind and all(p >= 0 for p, _ in stack.swap)

    trial_w = np.einsum("sp,kp->skp", wts, ss)  # (nt, Ks, nq)
    y_all = pts.reshape(-1, 3)
    ny_all = np.repeat(normals, nq, axis=0)[None, :, :]

    tasks = []

    # far pass over row blocks; budget divided by ncomp so wide stacks
    # keep the same peak kernel-buffer size as a scalar assembly
    bsize = _block_rows(nt, nq, 1.5e6 / ncomp)

    def far_task(rows):
        x = pts[rows].reshape(-1, 3)
        dx = x[:, None, :] - y_all[None, :, :]
        r = np.linalg.norm(dx, axis=-1)
        mask = (cls[rows] == 0).astype(float)  # (B, nt)
        # keep the kernel finite on masked (non-separated) pairs so the
        # zero mask is not applied to inf or nan
        unsafe = np.repeat(np.repeat(mask == 0.0, nq, axis=0), nq, axis=1)
        np.copyto(r, 1.0, where=unsafe)
        nx = np.repeat(normals[rows], nq, axis=0)[:, None, :]
        kern = stack.fn(r, dx, nx, ny_all)
        kern = kern.reshape(ncomp, len(rows), nq, nt, nq)
        a = np.einsum("cbqsp,skp->cbqsk", kern, trial_w, optimize=True)
        test_w = np.einsum("bq,jq->bjq", wts[rows], st)
        far = np.einsum("cbqsk,bjq->cbjsk", a, test_w, optimize=True)
        far *= mask[None, :, None, :, None]
        idx = (dofs_t[rows][:, :, None, None] * nd_s
               + dofs_s[None, None, :, :]).reshape(-1)
        return [(idx, far.reshape(ncomp, -1))]

    for b in range(0, nt, bsize):
        rows = np.arange(b, min(b + bsize, nt))
        tasks.append((far_task, rows))

    # non-separated pairs: Duffy fans on the trial panel about the
    # closest point to each outer node, two extra outer degrees
    rule_n = gauss_triangle(degree + 2)
    nq_n = rule_n.npoints
    pts_n, wts_n = physical_rule(rule_n, mesh.tri_coords)
    st_n = _shapes_at(test_kind, rule_n.bary)  # (Kt, nq_n)

    if symmetric:
        ti, si = np.nonzero(np.triu(cls) >= 1)
    else:
        ti, si = np.nonzero(cls >= 1)

    def near_task(t_arr, s_arr):
        tri_s = tri_coords[s_arr]  # (P, 3, 3)
        x = pts_n[t_arr]  # (P, nq_n, 3)
        centers = _closest_bary(tri_s[:, None], x)  # (P, nq_n, 3)
        bary, wy = _fan_points(tri_s[:, None], centers, duffy_order)
        yp = np.einsum("pqmb,pbd->pqmd", bary, tri_s)
        dx = x[:, :, None, :] - yp
        r = np.linalg.norm(dx, axis=-1)
        nx = normals[t_arr][:, None, None, :]
        nys = normals[s_arr][:, None, None, :]
        kern = stack.fn(r, dx, nx, nys)  # (C, P, nq_n, m)
        kern *= wy[None]
        sb = _shapes_at(trial_kind, bary)  # (Ks, P, nq_n, m)
        tmp = np.einsum("cpqm,kpqm->cpqk", kern, sb, optimize=True)
        out = np.einsum("cpqk,jq,pq->cpjk", tmp, st_n, wts_n[t_arr], optimize=True)
        if symmetric:
            is_self = t_arr == s_arr
            swapped = np.empty_like(out)
            for ci, (pi, sign) in enumerate(stack.swap):
                swapped[ci] = sign * out[pi].transpose(0, 2, 1)
            out[:, is_self] = 0.5 * (out[:, is_self] + swapped[:, is_self])
            idx = (dofs_t[t_arr][:, :, None] * nd_s
                   + dofs_s[s_arr][:, None, :]).reshape(-1)
            scatters = [(idx, out.reshape(ncomp, -1))]
            off = ~is_self
            if off.any():
                idx2 = (dofs_t[s_arr[off]][:, :, None] * nd_s
                        + dofs_s[t_arr[off]][:, None, :]).reshape(-1)
                scatters.append((idx2, swapped[:, off].reshape(ncomp, -1)))
            return scatters
        idx = (dofs_t[t_arr][:, :, None] * nd_s
               + dofs_s[s_arr][:, None, :]).reshape(-1)
        return [(idx, out.reshape(ncomp, -1))]

    m_fan = 3 * duffy_order ** 2
    chunk = max(8, int(3e6 // (nq_n * m_fan * ncomp)))
    for b in range(0, len(ti), chunk):
        tasks.append((near_task, ti[b : b + chunk], si[b : b + chunk]))

    out = np.zeros((ncomp, nd_t, nd_s), dtype=complex)
    flat = out.reshape(ncomp, -1)

    def apply(scatters):
        for idx, vals in scatters:
            for c in range(ncomp):
                np.add.at(flat[c], idx, vals[c])

    if threads <= 1:
        for task in tasks:
            apply(task[0](*task[1:]))
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futures = [ex.submit(task[0], *task[1:]) for task in tasks]
            # apply in submission order so the result is identical for
            # any worker count
            for fut in futures:
                apply(fut.result())
    return out


# ---- off-surface evaluation ----


def _as_points(mesh: SurfaceMesh, grid):
    if isinstance(grid, EvalGrid):
        points = grid.points
    else:
        points = np.atleast_2d(np.asarray(grid, dtype=float))
    dist = points_triangles_distance(points, mesh.tri_coords)
    if dist.min() <= 1e-12 * mesh.h_max:
        k = int(np.argmin(dist.min(axis=1)))
        raise ValueError(f"evaluation point {k} lies on the surface")
    return points, dist


def evaluate_stack(
    mesh: SurfaceMesh,
    grid,
    stack: KernelStack,
    panel_values,
    degree: int = FAR_DEGREE,
    eta: float = EVAL_ETA,
) -> np.ndarray:
    """Evaluate int k(x, y) f(y) ds_y at off-surface points for every
    kernel in the stack; returns (ncomp, npoints).

    panel_values(panels, bary) must return the density f at barycentric
    points of the given panels, shaped like bary[..., 0].  Test-side
    normals do not exist at off-surface points, so the stack must not
    use the dnx or nn_val parts here.
    """
    points, dist = _as_points(mesh, grid)
    m = len(points)
    rule = gauss_triangle(degree)
    pts, wts = physical_rule(rule, mesh.tri_coords)
    dens = panel_values(
        np.arange(mesh.n_triangles)[:, None].repeat(rule.npoints, axis=1),
        np.broadcast_to(rule.bary, (mesh.n_triangles,) + rule.bary.shape),
    )
    near = dist < eta * mesh.diameters[None, :]  # (m, nt)
    out = np.zeros((stack.ncomp, m), dtype=complex)

    y = pts.reshape(-1, 3)
    w = (wts * dens).reshape(-1)
    ny = np.repeat(mesh.normals, rule.npoints, axis=0)
    block = max(1, int(2e6 // max(len(y) * stack.ncomp, 1)))
    for s in range(0, m, block):
        p = points[s : s + block]
        dx = p[:, None, :] - y[None, :, :]
        r = np.linalg.norm(dx, axis=-1)
        kern = stack.fn(r, dx, np.zeros(3), ny[None, :, :])
        wmask = np.repeat(np.where(near[s : s + block], 0.0, 1.0), rule.npoints, axis=1)
        out[:, s : s + block] = np.einsum(
            "cmp,mp,p->cm", kern, wmask, w, optimize=True
        )

    # near panels, partitioned against their close points
    for t in np.nonzero(near.any(axis=0))[0]:
        which = np.nonzero(near[:, t])[0]
        tgt = points[which]
        yp, wy, bary = partition_for_targets(mesh.tri_coords[t], tgt, degree, stop=0.5)
        fy = panel_values(np.full(len(yp), t), bary)
        dx = tgt[:, None, :] - yp[None, :, :]
        r = np.linalg.norm(dx, axis=-1)
        kern = stack.fn(r, dx, np.zeros(3), mesh.normals[t])
        out[:, which] += np.einsum("cmp,p->cm", kern, wy * fy, optimize=True)
    return out


def p1_panel_values(mesh: SurfaceMesh, coeffs: np.ndarray, weight=None):
    """Density evaluator for P1 coefficients; optional per-panel weight
    (e.g. a normal component) multiplies the interpolant."""

    def values(panels, bary):
        v = np.einsum("...v,...v->...", bary, coeffs[mesh.triangles[panels]])
        if weight is not None:
            v = v * weight[panels]
        return v

    return values


def p0_panel_values(mesh: SurfaceMesh, coeffs: np.ndarray, weight=None):
    def values(panels, bary):
        v = np.broadcast_to(coeffs[panels], bary.shape[:-1]).copy()
        if weight is not None:
            v = v * weight[panels]
        return v

    return values


def _density_values(mesh, density, kind=None):
    if isinstance(density, Density):
        coeffs = density.coeffs[0]
        kind = density.space
    else:
        coeffs = np.asarray(density)
        if kind is None:
            kind = "P1" if len(coeffs) == mesh.n_vertices else "P0"
    fn = p1_panel_values if kind == "P1" else p0_panel_values
    return fn(mesh, coeffs)


def eval_single_layer(mesh: SurfaceMesh, kappa, p, grid, degree: int = FAR_DEGREE,
                      eta: float = EVAL_ETA) -> np.ndarray:
    """V_k p at off-surface points."""
    stack = helmholtz_stack(kappa, ("val",))
    return evaluate_stack(mesh, grid, stack, _density_values(mesh, p), degree, eta)[0]


def eval_double_layer(mesh: SurfaceMesh, kappa, psi, grid, degree: int = FAR_DEGREE,
                      eta: float = EVAL_ETA) -> np.ndarray:
    """N_k psi = -int d_{n_y} G psi at off-surface points."""
    stack = helmholtz_stack(kappa, ("dny",))
    return evaluate_stack(mesh, grid, stack, _density_values(mesh, psi), degree, eta)[0]


# ---- mass matrices (exact on flat panels) ----


def mass_matrix(mesh: SurfaceMesh, test_kind: str, trial_kind: str) -> np.ndarray:
    areas = mesh.areas
    nt, nv = mesh.n_triangles, mesh.n_vertices
    if (test_kind, trial_kind) == ("P0", "P0"):
        return np.diag(areas)
    if (test_kind, trial_kind) == ("P0", "P1"):
        m = np.zeros((nt, nv))
        rows = np.repeat(np.arange(nt), 3)
        np.add.at(m, (rows, mesh.triangles.reshape(-1)), np.repeat(areas / 3.0, 3))
        return m
    if (test_kind, trial_kind) == ("P1", "P0"):
        return mass_matrix(mesh, "P0", "P1").T.copy()
    if (test_kind, trial_kind) == ("P1", "P1"):
        m = np.zeros((nv, nv))
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        for a in range(3):
            for b in range(3):
                np.add.at(
                    m,
                    (mesh.triangles[:, a], mesh.triangles[:, b]),
                    areas * local[a, b],
                )
        return m
    raise ValueError(f"unknown space kinds {(test_kind, trial_kind)!r}")


# ---- public Galerkin operators ----


def galerkin_single_layer(mesh, kappa, trial: str = "P0", test: str | None = None,
                          degree: int = FAR_DEGREE, threads: int = 1) -> DenseOperator:
    """A[m,n] = <phi_m, V_k phi_n>; complex-symmetric when test=trial."""
    test = trial if test is None else test
    mat = assemble_stack(mesh, test, trial, helmholtz_stack(kappa, ("val",)),
                         degree, threads)[0]
    return DenseOperator(mat, mesh, test, trial,
                         meta={"kernel": "helmholtz_single_layer", "kappa": kappa})


def galerkin_double_layer(mesh, kappa, trial: str = "P1", test: str = "P0",
                          degree: int = FAR_DEGREE, threads: int = 1) -> DenseOperator:
    """Principal value of the double layer with kernel -d_{n_y}G (the
    sign opposite to the classical convention)."""
    mat = assemble_stack(mesh, test, trial, helmholtz_stack(kappa, ("dny",)),
                         degree, threads)[0]
    return DenseOperator(
        mat, mesh, test, trial,
        meta={"kernel": "helmholtz_double_layer", "kappa": kappa,
              "sign": "N = -d_ny V (opposite to classical)"})


def galerkin_adjoint(mesh, kappa, trial: str = "P0", test: str = "P1",
                     degree: int = FAR_DEGREE, threads: int = 1) -> DenseOperator:
    """Principal value of d_{n_x} V_k.

    Assembled by transposing the double-layer pair quadrature on the
    swapped spaces: the kernel identity d_{n_x}G(x,y) = -(-d_{n_y}G)(y,x)
    makes A = -N^T hold exactly in the discrete matrices.
    """
    n = galerkin_double_layer(mesh, kappa, trial=test, test=trial,
                              degree=degree, threads=threads)
    return DenseOperator(
        -n.matrix.T, mesh, test, trial,
        meta={"kernel": "helmholtz_adjoint", "kappa": kappa,
              "sign": "A = +d_nx V = -N^T"})


def _hat_curl_blocks(mesh: SurfaceMesh) -> np.ndarray:
    """(3, nt, nv) dense matrices of the Cartesian components of
    n x grad(hat) per panel."""
    from .guenter import hat_gradients

    g = hat_gradients(mesh)  # (nt, 3verts, 3)
    cr = np.cross(mesh.normals[:, None, :], g)  # (nt, 3verts, 3comp)
    out = np.zeros((3, mesh.n_triangles, mesh.n_vertices))
    rows = np.repeat(np.arange(mesh.n_triangles), 3)
    cols = mesh.triangles.reshape(-1)
    for d in range(3):
        np.add.at(out[d], (rows, cols), cr[:, :, d].reshape(-1))
    return out


def hypersingular_hamdi(mesh, kappa, trial: str = "P1", test: str = "P1",
                        degree: int = FAR_DEGREE, threads: int = 1) -> DenseOperator:
    """Regularized Galerkin hypersingular operator <phi, d_n N_k psi>:

        W = sum_d C_d^T Vhat C_d - kappa^2 Bhat

    with C_d the panelwise components of n x grad(hat), Vhat the P0
    single layer, and Bhat the (n_x . n_y)-weighted P1 single layer.
    The kappa^2 factor on the second term follows the classical Maue
    identity: the kappa -> 0 limit must annihilate constants.
    """
    if trial != "P1" or test != "P1":
        raise ValueError("hypersingular operator requires P1 spaces")
    vhat = assemble_stack(mesh, "P0", "P0", helmholtz_stack(kappa, ("val",)),
                          degree, threads)[0]
    bhat = assemble_stack(mesh, "P1", "P1", helmholtz_stack(kappa, ("nn_val",)),
                          degree, threads)[0]
    c = _hat_curl_blocks(mesh)
    w = -(kappa ** 2) * bhat
    for d in range(3):
        w += c[d].T @ vhat @ c[d]
    return DenseOperator(
        w, mesh, test, trial,
        meta={"kernel": "helmholtz_hypersingular_hamdi", "kappa": kappa,
              "sign": "<phi, d_n N psi> with N = -d_ny V"})


def one_sided_traces(mesh, kappa, density, operator: str = "double",
                     test: str | None = None, degree: int = FAR_DEGREE,
                     threads: int = 1):
    """Interior (+) and exterior (-) traces as functional coefficients
    over the test space.

    single: (V p)+ = (V p)-; double: pv +/- psi/2; adjoint: pv +/- p/2.
    """
    if isinstance(density, Density):
        kind, coeffs = density.space, density.coeffs[0]
    else:
        coeffs = np.asarray(density)
        kind = "P1" if len(coeffs) == mesh.n_vertices else "P0"
    if operator == "single":
        test = test or kind
        op = galerkin_single_layer(mesh, kappa, trial=kind, test=test,
                                   degree=degree, threads=threads)
        f = op.matrix @ coeffs
        return (Density(mesh, test, f, dual=True),
                Density(mesh, test, f.copy(), dual=True))
    if operator == "double":
        test = test or "P0"
        op = galerkin_double_layer(mesh, kappa, trial=kind, test=test,
                                   degree=degree, threads=threads)
    elif operator == "adjoint":
        test = test or "P1"
        op = galerkin_adjoint(mesh, kappa, trial=kind, test=test,
                              degree=degree, threads=threads)
    else:
        raise ValueError(f"unknown operator {operator!r}")
    pv = op.matrix @ coeffs
    half = 0.5 * (mass_matrix(mesh, test, kind) @ coeffs)
    return (Density(mesh, test, pv + half, dual=True),
            Density(mesh, test, pv - half, dual=True))
