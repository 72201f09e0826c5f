"""Numerical integration on triangles and segments.

Symmetric Gauss rules on the reference triangle, Duffy (polar collapse)
rules that remove 1/r vertex singularities exactly, adaptive subdivision
for nearby off-panel targets, and 1D Gauss / Gauss-log rules used by the
planar (curve) operators.

Reference triangle measure is 1/2, so rule weights sum to 1/2 and the
physical weights are ``2 * area * w``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "TriangleRule",
    "gauss_triangle",
    "physical_rule",
    "duffy_singular",
    "duffy_vertex_points",
    "near_singular",
    "adaptive_triangle",
    "split4",
    "triangle_diameter",
    "point_triangle_distance",
    "gauss_segment",
    "gauss_log",
]

MAX_DEGREE = 20


@dataclass(frozen=True)
class TriangleRule:
    """Quadrature rule on the reference triangle (barycentric nodes)."""

    bary: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,), sums to 1/2
    degree: int

    def __post_init__(self):
        b = np.asarray(self.bary, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if b.ndim != 2 or b.shape[1] != 3 or w.shape != (b.shape[0],):
            raise ValueError("inconsistent rule arrays")
        object.__setattr__(self, "bary", b)
        object.__setattr__(self, "weights", w)

    @property
    def npoints(self) -> int:
        return self.bary.shape[0]


def _orbit3(a: float):
    # permutations of (1-2a, a, a)
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _orbit6(a: float, b: float):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


_S15 = np.sqrt(15.0)

# Classical symmetric rules, weights normalized to sum 1 (scaled by 1/2 below).
_HARD_RULES = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: (_orbit3(1 / 6), [1 / 3] * 3),
    4: (
        _orbit3(0.445948490915965) + _orbit3(0.091576213509771),
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    5: (
        [(1 / 3, 1 / 3, 1 / 3)]
        + _orbit3((6.0 + _S15) / 21.0)
        + _orbit3((6.0 - _S15) / 21.0),
        [9.0 / 40.0]
        + [(155.0 + _S15) / 1200.0] * 3
        + [(155.0 - _S15) / 1200.0] * 3,
    ),
    6: (
        _orbit3(0.063089014491502)
        + _orbit3(0.249286745170910)
        + _orbit6(0.310352451033785, 0.053145049844816),
        [0.050844906370207] * 3
        + [0.116786275726379] * 3
        + [0.082851075618374] * 6,
    ),
}


def _gauss_legendre_01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _gauss_jacobi_01(n: int):
    # Nodes/weights for ∫_0^1 f(u) (1-u) du via Golub-Welsch on the
    # monic Jacobi(1, 0) recurrence.
    k = np.arange(n, dtype=float)
    alpha = -1.0 / ((2 * k + 1.0) * (2 * k + 3.0))
    kk = np.arange(1, n, dtype=float)
    beta = kk * (kk + 1.0) / (2 * kk + 1.0) ** 2
    jac = np.diag(alpha) + np.diag(np.sqrt(beta), 1) + np.diag(np.sqrt(beta), -1)
    x, vec = np.linalg.eigh(jac)
    w = 2.0 * vec[0, :] ** 2  # beta_0 = 2 on [-1, 1]
    return 0.5 * (x + 1.0), 0.25 * w


def _collapsed_rule(degree: int) -> TriangleRule:
    # Conical product rule: Gauss-Jacobi in the collapse direction times
    # Gauss-Legendre across, exact to `degree` with ceil((degree+1)/2)^2
    # strictly interior (asymmetric) nodes.
    n = (degree + 2) // 2
    u, wu = _gauss_jacobi_01(n)
    t, wt = _gauss_legendre_01(n)
    uu, tt = np.meshgrid(u, t, indexing="ij")
    l1 = uu.ravel()
    l2 = ((1.0 - uu) * tt).ravel()
    l0 = 1.0 - l1 - l2
    w = np.outer(wu, wt).ravel()
    return TriangleRule(np.stack([l0, l1, l2], axis=1), w, degree)


@lru_cache(maxsize=None)
def gauss_triangle(degree: int) -> TriangleRule:
    """Symmetric rule on the reference triangle, exact to `degree`.

    Parameters
    ----------
    degree : int
        Requested polynomial exactness, 1 <= degree <= 20.
    """
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must be in [1, {MAX_DEGREE}], got {degree}")
    key = 4 if degree == 3 else degree
    if key in _HARD_RULES:
        bary, w = _HARD_RULES[key]
        return TriangleRule(np.array(bary), 0.5 * np.array(w), key)
    return _collapsed_rule(degree)


def physical_rule(rule: TriangleRule, verts: np.ndarray):
    """Map a reference rule to physical triangles.

    Parameters
    ----------
    rule : TriangleRule
    verts : (..., 3, 3) array
        Triangle vertices.

    Returns
    -------
    points : (..., n, 3), weights : (..., n)
    """
    verts = np.asarray(verts, dtype=float)
    pts = np.einsum("qi,...id->...qd", rule.bary, verts)
    e1 = verts[..., 1, :] - verts[..., 0, :]
    e2 = verts[..., 2, :] - verts[..., 0, :]
    area2 = np.linalg.norm(np.cross(e1, e2), axis=-1)  # = 2*area
    w = rule.weights * area2[..., None]
    return pts, w


def triangle_diameter(tri: np.ndarray):
    """Longest edge; tri (..., 3, 3) -> scalar or (...)."""
    tri = np.asarray(tri, dtype=float)
    e = tri - tri[..., [1, 2, 0], :]
    d = np.max(np.linalg.norm(e, axis=-1), axis=-1)
    return float(d) if d.ndim == 0 else d


def split4(tri: np.ndarray) -> np.ndarray:
    """Uniform 1-to-4 refinement of one triangle; returns (4, 3, 3)."""
    tri = np.asarray(tri, dtype=float)
    m01 = 0.5 * (tri[0] + tri[1])
    m12 = 0.5 * (tri[1] + tri[2])
    m20 = 0.5 * (tri[2] + tri[0])
    return np.array(
        [
            [tri[0], m01, m20],
            [m01, tri[1], m12],
            [m20, m12, tri[2]],
            [m01, m12, m20],
        ]
    )


# ---- singular and near-singular rules ----


def duffy_vertex_points(tri: np.ndarray, order: int = 8):
    """Duffy rule for a 1/r singularity at ``tri[0]``.

    The polar collapse x(u, v) = v0 + u[(v1-v0) + v(v2-v1)] has area
    element u * 2A du dv, which cancels the 1/|x - v0| singularity.

    Returns
    -------
    points : (order**2, 3), weights : (order**2,)
    """
    tri = np.asarray(tri, dtype=float)
    g, gw = _gauss_legendre_01(order)
    u = g[:, None]  # (o, 1)
    v = g[None, :]  # (1, o)
    d1 = tri[1] - tri[0]
    d2 = tri[2] - tri[1]
    pts = tri[0] + u[..., None] * (d1 + v[..., None] * d2)
    area2 = np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    w = (gw[:, None] * gw[None, :]) * u * area2
    return pts.reshape(-1, 3), w.ravel()


def _point_segment_distance(p, a, b):
    ab = b - a
    t = np.dot(p - a, ab) / np.dot(ab, ab)
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p - (a + t * ab)))


def duffy_singular(f, tri: np.ndarray, p: np.ndarray, order: int = 8) -> complex:
    """Integrate f over `tri` with an integrable 1/r singularity at `p`.

    `p` must lie on the closed triangle (vertex, edge, or interior); the
    panel is split about `p` and each piece gets a vertex Duffy rule.

    Parameters
    ----------
    f : callable
        Maps points (n, 3) to values (n,).
    """
    tri = np.asarray(tri, dtype=float)
    p = np.asarray(p, dtype=float)
    diam = triangle_diameter(tri)
    area2 = np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    pieces = []
    for i in range(3):
        if np.linalg.norm(p - tri[i]) <= 1e-12 * diam:
            pieces = [np.array([p, tri[(i + 1) % 3], tri[(i + 2) % 3]])]
            break
    if not pieces:
        if point_triangle_distance(p, tri) > 1e-10 * diam:
            raise ValueError("singular point is not on the panel")
        # interior or on an edge: fan about p, degenerate slivers dropped
        for i in range(3):
            sub = np.array([p, tri[i], tri[(i + 1) % 3]])
            a2 = np.linalg.norm(np.cross(sub[1] - sub[0], sub[2] - sub[0]))
            if a2 > 1e-13 * area2:
                pieces.append(sub)
    total = 0.0 + 0.0j
    for sub in pieces:
        pts, w = duffy_vertex_points(sub, order)
        total += np.sum(w * f(pts))
    return complex(total)


def _gauss_on(f, tri, rule):
    pts, w = physical_rule(rule, tri)
    return np.sum(w * f(pts))


def near_singular(f, tri: np.ndarray, target: np.ndarray, degree: int = 8,
                  max_depth: int = 24) -> complex:
    """Integrate f over `tri` when `target` is near but off the panel.

    Recursive 4-way subdivision refining toward `target`; a child is
    integrated directly once its diameter is below its distance to the
    target, so far children terminate immediately.
    """
    tri = np.asarray(tri, dtype=float)
    target = np.asarray(target, dtype=float)
    d = point_triangle_distance(target, tri)
    if d <= 0.0:
        raise ValueError("target lies on the panel; use duffy_singular")
    rule = gauss_triangle(degree)

    def recurse(t, depth):
        if triangle_diameter(t) < point_triangle_distance(target, t) or depth >= max_depth:
            return _gauss_on(f, t, rule)
        return sum(recurse(c, depth + 1) for c in split4(t))

    return complex(recurse(tri, 0))


def adaptive_triangle(f, tri: np.ndarray, tol: float = 1e-12, degree: int = 6,
                      max_depth: int = 30) -> complex:
    """Adaptive-subdivision oracle: refine until the 4-child refinement
    changes the panel integral by less than the local tolerance."""
    tri = np.asarray(tri, dtype=float)
    rule = gauss_triangle(degree)
    # roundoff floor so far subpanels stop splitting once the refinement
    # difference is pure noise
    floor = 4.0 * np.finfo(float).eps * (abs(_gauss_on(f, tri, rule)) + 1e-300)

    def recurse(t, budget, depth):
        coarse = _gauss_on(f, t, rule)
        children = split4(t)
        fine = sum(_gauss_on(f, c, rule) for c in children)
        if abs(fine - coarse) <= max(budget, floor) or depth >= max_depth:
            return fine
        return sum(recurse(c, budget / 4.0, depth + 1) for c in children)

    return complex(recurse(tri, tol, 0))


# ---- point/triangle geometry ----


def point_triangle_distance(p: np.ndarray, tri: np.ndarray) -> float:
    """Exact Euclidean distance from a point to a closed triangle."""
    p = np.asarray(p, dtype=float)
    tri = np.asarray(tri, dtype=float)
    return float(points_triangles_distance(p[None, :], tri[None, :, :])[0, 0])


def points_triangles_distance(pts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Distances from points (P, 3) to triangles (T, 3, 3); returns (P, T).

    Closest point is either the in-triangle plane projection or lies on
    one of the three edges; the minimum over those candidates is exact.
    """
    pts = np.asarray(pts, dtype=float)[:, None, :]  # (P, 1, 3)
    v0 = tris[None, :, 0, :]
    v1 = tris[None, :, 1, :]
    v2 = tris[None, :, 2, :]
    e1 = v1 - v0
    e2 = v2 - v0
    n = np.cross(e1, e2)
    nn = np.einsum("ptd,ptd->pt", n, n)
    nn = np.where(nn > 0, nn, 1.0)
    d0 = pts - v0
    # barycentric coordinates of the plane projection
    dot11 = np.einsum("ptd,ptd->pt", e1, e1)
    dot12 = np.einsum("ptd,ptd->pt", e1, e2)
    dot22 = np.einsum("ptd,ptd->pt", e2, e2)
    dot01 = np.einsum("ptd,ptd->pt", d0, e1)
    dot02 = np.einsum("ptd,ptd->pt", d0, e2)
    det = dot11 * dot22 - dot12 * dot12
    det = np.where(det > 0, det, 1.0)
    s = (dot22 * dot01 - dot12 * dot02) / det
    t = (dot11 * dot02 - dot12 * dot01) / det
    inside = (s >= 0) & (t >= 0) & (s + t <= 1)
    hplane = np.abs(np.einsum("ptd,ptd->pt", d0, n)) / np.sqrt(nn)
    dist = np.where(inside, hplane, np.inf)
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        ab = b - a
        denom = np.einsum("ptd,ptd->pt", ab, ab)
        denom = np.where(denom > 0, denom, 1.0)
        u = np.clip(np.einsum("ptd,ptd->pt", pts - a, ab) / denom, 0.0, 1.0)
        closest = a + u[..., None] * ab
        dist = np.minimum(dist, np.linalg.norm(pts - closest, axis=-1))
    return dist


# ---- 1D rules ----


def gauss_segment(n: int):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    if n < 1:
        raise ValueError("n must be positive")
    return _gauss_legendre_01(n)


@lru_cache(maxsize=None)
def gauss_log(n: int):
    """Nodes/weights for ∫_0^1 f(x) ln(1/x) dx, exact for f of degree 2n-1.

    Built from the exact rational moments 1/(k+1)^2 via the Chebyshev
    algorithm and Golub-Welsch.
    """
    if not 1 <= n <= 20:
        raise ValueError("n must be in [1, 20]")
    m = [Fraction(1, (k + 1) ** 2) for k in range(2 * n)]
    alpha = [Fraction(0)] * n
    beta = [Fraction(0)] * n
    sigma_prev = [Fraction(0)] * (2 * n)
    sigma = list(m)
    alpha[0] = m[1] / m[0]
    beta[0] = m[0]
    for j in range(1, n):
        sigma_new = [Fraction(0)] * (2 * n)
        for el in range(j, 2 * n - j):
            sigma_new[el] = (
                sigma[el + 1]
                - alpha[j - 1] * sigma[el]
                - beta[j - 1] * sigma_prev[el]
            )
        alpha[j] = sigma_new[j + 1] / sigma_new[j] - sigma[j] / sigma[j - 1]
        beta[j] = sigma_new[j] / sigma[j - 1]
        sigma_prev, sigma = sigma, sigma_new
    a = np.array([float(x) for x in alpha])
    b = np.sqrt(np.array([float(x) for x in beta[1:]]))
    jac = np.diag(a) + np.diag(b, 1) + np.diag(b, -1)
    x, vec = np.linalg.eigh(jac)
    w = float(beta[0]) * vec[0, :] ** 2
    return x, w
