"""Triangulated Lipschitz surfaces and closed polygonal curves.

Flat-panel geometry only. Orientation convention: triangle vertex order
is counterclockwise seen from outside, so normals point into the
unbounded exterior; curve vertices run counterclockwise, normals point
outward, and the tangent is the outward normal rotated by +pi/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .quadrature import points_triangles_distance

__all__ = [
    "SurfaceMesh",
    "Curve2D",
    "ElementFrame",
    "EvalGrid",
    "load_msh",
    "element_frame",
    "classify_points",
    "refine",
    "icosphere",
    "cube_mesh",
    "circle_curve",
]

DEGENERATE_REL_AREA = 1e-12


class ElementFrame(NamedTuple):
    normal: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    area: float
    centroid: np.ndarray


@dataclass(eq=False)
class SurfaceMesh:
    """Indexed triangle surface.

    Attributes
    ----------
    vertices : (nv, 3) float array
    triangles : (nt, 3) int array
    labels : (nt,) int array
        Physical-group tags, 0 when absent.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (nv, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be (nt, 3)")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex coordinates")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle index out of range")
        if self.labels is None:
            self.labels = np.zeros(len(self.triangles), dtype=np.int64)
        else:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        e = self.tri_coords
        lmax = np.linalg.norm(e - e[:, [1, 2, 0], :], axis=-1).max(axis=-1)
        bad = np.where(self.areas < DEGENERATE_REL_AREA * lmax**2)[0]
        if bad.size:
            raise ValueError(f"degenerate triangle(s): {bad[:8].tolist()}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def tri_coords(self) -> np.ndarray:
        # (nt, 3, 3) vertex coordinates per triangle
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self) -> np.ndarray:
        t = self.tri_coords
        return np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=-1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._cross / (2.0 * self.areas[:, None])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.tri_coords.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        t = self.tri_coords
        return np.linalg.norm(t - t[:, [1, 2, 0], :], axis=-1).max(axis=-1)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def _edge_info(self):
        counts: dict[tuple[int, int], list[int]] = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                counts.setdefault(key, []).append(1 if a < b else -1)
        return counts

    @cached_property
    def closed(self) -> bool:
        return all(len(v) == 2 for v in self._edge_info.values())

    @cached_property
    def oriented(self) -> bool:
        # each shared edge must be traversed once in each direction
        return all(sum(v) == 0 for v in self._edge_info.values() if len(v) == 2)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        # directed boundary edges (as traversed by their owning triangle)
        out = []
        seen = {k: len(v) for k, v in self._edge_info.items()}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                if seen[(min(a, b), max(a, b))] == 1:
                    out.append((a, b))
        return np.array(out, dtype=np.int64).reshape(-1, 2)

    def frame(self, i: int) -> ElementFrame:
        return element_frame(self, i)


def element_frame(mesh: SurfaceMesh, i: int) -> ElementFrame:
    """Orthonormal frame (t1, t2, normal) with t1 x t2 = normal."""
    tri = mesh.tri_coords[i]
    n = mesh.normals[i]
    t1 = tri[1] - tri[0]
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return ElementFrame(n, t1, t2, float(mesh.areas[i]), mesh.centroids[i])


@dataclass
class EvalGrid:
    """Off-surface evaluation points with interior/exterior tags and a
    signed distance estimate (negative inside)."""

    points: np.ndarray
    interior: np.ndarray  # bool per point
    signed_distance: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.interior = np.asarray(self.interior, dtype=bool)
        self.signed_distance = np.asarray(self.signed_distance, dtype=float)
        m = len(self.points)
        if self.interior.shape != (m,) or self.signed_distance.shape != (m,):
            raise ValueError("tag and distance arrays must match point count")

    @property
    def distance(self) -> np.ndarray:
        return np.abs(self.signed_distance)


def _solid_angles(mesh: SurfaceMesh, points: np.ndarray) -> np.ndarray:
    # van Oosterom-Strackee, blocked to bound memory
    t = mesh.tri_coords  # (nt, 3, 3)
    omega = np.zeros(len(points))
    block = max(1, int(2e6 // max(1, mesh.n_triangles)))
    for s in range(0, len(points), block):
        p = points[s : s + block]
        a = t[None, :, 0, :] - p[:, None, :]
        b = t[None, :, 1, :] - p[:, None, :]
        c = t[None, :, 2, :] - p[:, None, :]
        la = np.linalg.norm(a, axis=-1)
        lb = np.linalg.norm(b, axis=-1)
        lc = np.linalg.norm(c, axis=-1)
        det = np.einsum("ptd,ptd->pt", a, np.cross(b, c))
        denom = (
            la * lb * lc
            + np.einsum("ptd,ptd->pt", a, b) * lc
            + np.einsum("ptd,ptd->pt", b, c) * la
            + np.einsum("ptd,ptd->pt", c, a) * lb
        )
        omega[s : s + block] = 2.0 * np.arctan2(det, denom).sum(axis=1)
    return omega


def classify_points(mesh: SurfaceMesh, points: np.ndarray) -> EvalGrid:
    """Tag points as interior/exterior of a closed surface by summed
    signed solid angle (4 pi inside, 0 outside) and estimate distances.

    Raises on ambiguous points (solid angle near 2 pi, i.e. effectively
    on the surface).
    """
    if not mesh.closed:
        raise ValueError("classification needs a closed surface")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dist = points_triangles_distance(points, mesh.tri_coords).min(axis=1)
    omega = np.abs(_solid_angles(mesh, points))
    # on-surface points make the nearest panel's solid-angle sign a
    # roundoff coin flip, so reject by distance as well
    ambiguous = ((omega > np.pi) & (omega < 3.0 * np.pi)) | (
        dist <= 1e-9 * mesh.h_max
    )
    if ambiguous.any():
        k = int(np.argmax(ambiguous))
        raise ValueError(
            f"cannot classify point {k}: effectively on the surface "
            f"(solid angle {omega[k]:.3f}, distance {dist[k]:.2e})"
        )
    interior = omega > 3.0 * np.pi
    signed = np.where(interior, -dist, dist)
    return EvalGrid(points, interior, signed)


def refine(mesh: SurfaceMesh, projector: Callable | None = None) -> SurfaceMesh:
    """Uniform 1-to-4 refinement with welded edge midpoints.

    Parameters
    ----------
    projector : callable, optional
        Maps (n, 3) vertex arrays to (n, 3); applied to the refined
        vertex set (e.g. normalize onto the unit sphere).
    """
    if not mesh.closed:
        raise ValueError("refine requires a closed oriented mesh")
    verts = list(mesh.vertices)
    midpoint: dict[tuple[int, int], int] = {}

    def mid(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            midpoint[key] = len(verts)
            verts.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
        return midpoint[key]

    tris = []
    labels = []
    for tri, lab in zip(mesh.triangles, mesh.labels):
        a, b, c = (int(v) for v in tri)
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        labels.extend([lab] * 4)
    v = np.array(verts)
    if projector is not None:
        v = np.asarray(projector(v), dtype=float)
    return SurfaceMesh(v, np.array(tris, dtype=np.int64), np.array(labels))


# ---- builtin geometries ----


def _unit_project(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def icosphere(level: int = 0) -> SurfaceMesh:
    """Icosahedral approximation of the unit sphere, 20 * 4**level faces."""
    if level < 0:
        raise ValueError("level must be >= 0")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    mesh = SurfaceMesh(_unit_project(verts), faces)
    for _ in range(level):
        mesh = refine(mesh, projector=_unit_project)
    return mesh


def cube_mesh(n: int = 1) -> SurfaceMesh:
    """Surface of the cube [-1, 1]^3 with n x n cells per face (welded)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    verts: list[np.ndarray] = []
    index: dict[tuple[int, int, int], int] = {}

    def vid(p: np.ndarray) -> int:
        key = tuple(np.round(p * n).astype(int))  # grid-exact key
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    tris = []
    eye = np.eye(3)
    # (outward axis, sign, in-plane axes du x dv = n_out)
    faces = [
        (0, 1, 1, 2), (0, -1, 2, 1),
        (1, 1, 2, 0), (1, -1, 0, 2),
        (2, 1, 0, 1), (2, -1, 1, 0),
    ]
    grid = np.linspace(-1.0, 1.0, n + 1)
    for ax, sign, iu, iv in faces:
        for i in range(n):
            for j in range(n):
                corners = []
                for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = sign * eye[ax] + grid[i + du] * eye[iu] + grid[j + dv] * eye[iv]
                    corners.append(vid(p))
                c00, c10, c11, c01 = corners
                tris.append((c00, c10, c11))
                tris.append((c00, c11, c01))
    return SurfaceMesh(np.array(verts), np.array(tris, dtype=np.int64))


# ---- 2D curves ----


@dataclass(eq=False)
class Curve2D:
    """Closed polygonal curve, vertices counterclockwise.

    Segment i runs from vertex i to vertex i+1 (mod n); outward normal
    is the tangent rotated by -pi/2.
    """

    vertices: np.ndarray  # (n, 2)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be (n, 2)")
        if len(self.vertices) < 3:
            raise ValueError("need at least 3 vertices")
        if np.any(self.lengths < 1e-14 * self.lengths.max()):
            raise ValueError("degenerate segment")

    @property
    def n_segments(self) -> int:
        return len(self.vertices)

    @cached_property
    def seg_coords(self) -> np.ndarray:
        # (n, 2, 2): endpoints of each segment
        nxt = np.roll(np.arange(len(self.vertices)), -1)
        return np.stack([self.vertices, self.vertices[nxt]], axis=1)

    @cached_property
    def lengths(self) -> np.ndarray:
        s = self.seg_coords
        return np.linalg.norm(s[:, 1] - s[:, 0], axis=-1)

    @cached_property
    def tangents(self) -> np.ndarray:
        s = self.seg_coords
        return (s[:, 1] - s[:, 0]) / self.lengths[:, None]

    @cached_property
    def normals(self) -> np.ndarray:
        t = self.tangents
        return np.stack([t[:, 1], -t[:, 0]], axis=1)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return self.seg_coords.mean(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.lengths.max())

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())


def circle_curve(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> Curve2D:
    """Regular n-gon inscribed in a circle, counterclockwise."""
    if n < 3:
        raise ValueError("n must be >= 3")
    th = 2.0 * np.pi * np.arange(n) / n
    pts = np.stack([np.cos(th), np.sin(th)], axis=1) * radius + np.asarray(center)
    return Curve2D(pts)


# ---- MSH I/O ----


def load_msh(path) -> SurfaceMesh:
    """Read an ASCII Gmsh v2.2 file; keeps type-2 (triangle) elements.

    Node ids may be sparse. Points, lines and volume elements are
    skipped; other surface element types (quads, curved triangles)
    cannot be represented and raise ValueError rather than silently
    dropping area. The first element tag becomes the triangle label.
    """
    with open(path, "r") as fh:
        lines = [ln.strip() for ln in fh]

    def find(section: str, start: int) -> int:
        for k in range(start, len(lines)):
            if lines[k] == section:
                return k
        raise ValueError(f"missing {section} section")

    k = find("$MeshFormat", 0)
    version = lines[k + 1].split()
    if not version or not version[0].startswith("2.2"):
        raise ValueError(f"unsupported MSH version: {lines[k + 1]!r}")

    k = find("$Nodes", k)
    n_nodes = int(lines[k + 1])
    id_map: dict[int, int] = {}
    coords = np.empty((n_nodes, 3))
    for row in range(n_nodes):
        parts = lines[k + 2 + row].split()
        if len(parts) < 4:
            raise ValueError(f"bad node line: {lines[k + 2 + row]!r}")
        id_map[int(parts[0])] = row
        coords[row] = [float(x) for x in parts[1:4]]
    if lines[k + 2 + n_nodes] != "$EndNodes":
        raise ValueError("node count does not match $Nodes header")

    k = find("$Elements", k)
    n_elem = int(lines[k + 1])
    tris = []
    labels = []
    unsupported_surface = {3: "quad", 9: "triangle6", 10: "quad9", 16: "quad8"}
    for row in range(n_elem):
        parts = [int(x) for x in lines[k + 2 + row].split()]
        etype, ntags = parts[1], parts[2]
        if etype in unsupported_surface:
            raise ValueError(
                f"unsupported surface element type {etype} "
                f"({unsupported_surface[etype]}); only flat triangles are supported"
            )
        if etype != 2:
            continue
        nodes = parts[3 + ntags :]
        if len(nodes) != 3:
            raise ValueError(f"bad triangle element: {lines[k + 2 + row]!r}")
        tris.append([id_map[v] for v in nodes])
        labels.append(parts[3] if ntags >= 1 else 0)
    if lines[k + 2 + n_elem] != "$EndElements":
        raise ValueError("element count does not match $Elements header")
    if not tris:
        raise ValueError("no triangle elements in file")
    return SurfaceMesh(coords, np.array(tris, dtype=np.int64), np.array(labels))
