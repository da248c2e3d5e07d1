"""Planar triangle meshes with an ordered boundary loop.

All domains are simply connected polygons triangulated by straight P1
triangles.  The boundary is kept as an ordered, counterclockwise, closed
loop of directed edges so that boundary quantities (arc length, densities,
normals) can be addressed by a single circular coordinate
``s in [0, perimeter)``.

Meshes are immutable after construction: every array is marked read-only,
so instances are safe to share between threads and to memoize against.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .errors import (
    MeshParseError,
    MeshResourceError,
    MeshTopologyError,
    OpenBoundaryError,
)

# Refuse disk/rectangle resolutions that would allocate more vertices than this.
_MAX_GENERATED_VERTICES = 5_000_000


class Mesh:
    """Immutable triangle mesh of a simply connected planar domain.

    Attributes
    ----------
    vertices : (n, 2) float array
        Vertex coordinates.
    triangles : (m, 3) int array
        Vertex indices, counterclockwise.
    boundary_loop : (b, 2) int array
        Directed boundary edges ``(i, j)`` in counterclockwise loop order;
        ``boundary_loop[k, 1] == boundary_loop[k + 1, 0]`` cyclically.
    edge_lengths : (b,) float array
        Euclidean length of each boundary edge.
    cum_arclength : (b,) float array
        Arc length at the start vertex of each boundary edge;
        ``cum_arclength[0] == 0``.
    outward_normals : (b, 2) float array
        Unit outward normal of each boundary edge.
    kind : str
        Generator tag: ``"disk"``, ``"rectangle"`` or ``"file"``.
    diagnostics : dict
        Construction notes (currently the count of reoriented triangles).
    """

    def __init__(self, vertices, triangles, kind="file", n_reoriented=0):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshTopologyError("vertices must be an (n, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshTopologyError("triangles must be an (m, 3) array")
        if not np.all(np.isfinite(vertices)):
            raise MeshTopologyError("non-finite vertex coordinates")
        if triangles.size == 0:
            raise MeshTopologyError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshParseError("triangle refers to a vertex that does not exist")

        triangles, flipped = _orient_ccw(vertices, triangles)
        self.vertices = vertices
        self.triangles = triangles
        self.kind = kind
        self.diagnostics = {"reoriented_triangles": n_reoriented + flipped}

        used = np.zeros(len(vertices), dtype=bool)
        used[triangles.ravel()] = True
        if not used.all():
            raise MeshTopologyError("vertex not referenced by any triangle")

        loop, edge_tri = _extract_boundary_loop(triangles)
        self.boundary_loop = loop
        seg = vertices[loop[:, 1]] - vertices[loop[:, 0]]
        self.edge_lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self.edge_lengths == 0.0):
            raise MeshTopologyError("zero-length boundary edge")
        cum = np.concatenate(([0.0], np.cumsum(self.edge_lengths)))
        self.cum_arclength = cum[:-1]
        self.perimeter = float(cum[-1])
        self._cum_ext = cum

        normals = np.column_stack((seg[:, 1], -seg[:, 0])) / self.edge_lengths[:, None]
        # The outward normal must point away from the adjacent triangle.
        centroids = vertices[triangles[edge_tri]].mean(axis=1)
        mid = 0.5 * (vertices[loop[:, 0]] + vertices[loop[:, 1]])
        if np.any(np.einsum("ij,ij->i", normals, mid - centroids) <= 0.0):
            raise MeshTopologyError("boundary normal points into the domain")
        self.outward_normals = normals

        self.boundary_vertices = loop[:, 0].copy()
        mask = np.zeros(len(vertices), dtype=bool)
        mask[self.boundary_vertices] = True
        self.is_boundary_vertex = mask
        # Arc-length coordinate of each boundary vertex, aligned with boundary_vertices.
        self.boundary_vertex_arclength = self.cum_arclength.copy()

        for arr in (
            self.vertices,
            self.triangles,
            self.boundary_loop,
            self.edge_lengths,
            self.cum_arclength,
            self._cum_ext,
            self.outward_normals,
            self.boundary_vertices,
            self.is_boundary_vertex,
            self.boundary_vertex_arclength,
        ):
            arr.flags.writeable = False

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_boundary_edges(self):
        return len(self.boundary_loop)

    @property
    def max_boundary_edge_length(self):
        return float(self.edge_lengths.max())

    def all_edge_lengths(self):
        """Lengths of every mesh edge (interior and boundary)."""
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        seg = self.vertices[pairs[:, 1]] - self.vertices[pairs[:, 0]]
        return np.hypot(seg[:, 0], seg[:, 1])

    def __repr__(self):
        return (
            f"Mesh(kind={self.kind!r}, vertices={self.n_vertices}, "
            f"triangles={len(self.triangles)}, boundary_edges={self.n_boundary_edges})"
        )


def _orient_ccw(vertices, triangles):
    """Return triangles with positive signed area, flipping clockwise ones."""
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    area2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (
        p1[:, 1] - p0[:, 1]
    )
    if np.any(area2 == 0.0):
        raise MeshTopologyError("degenerate (zero-area) triangle")
    flip = area2 < 0.0
    out = triangles.copy()
    out[flip] = out[flip][:, [0, 2, 1]]
    return out, int(flip.sum())


def _extract_boundary_loop(triangles):
    """Chain the directed boundary edges of a CCW triangulation into one loop.

    Returns ``(loop, edge_tri)`` where ``loop[k] = (i, j)`` is the k-th
    directed boundary edge and ``edge_tri[k]`` the index of its unique
    adjacent triangle.
    """
    m = len(triangles)
    directed = {}
    for t in range(m):
        a, b, c = triangles[t]
        for i, j in ((a, b), (b, c), (c, a)):
            key = (int(i), int(j))
            if key in directed:
                raise MeshTopologyError(
                    f"directed edge {key} appears twice (repeated or overlapping triangle)"
                )
            directed[key] = t

    boundary = {}
    for (i, j), t in directed.items():
        if (j, i) not in directed:
            if i in boundary:
                raise MeshTopologyError(
                    f"vertex {i} has two outgoing boundary edges (non-manifold pinch)"
                )
            boundary[i] = (j, t)

    if not boundary:
        raise MeshTopologyError("mesh has no boundary")

    start = min(boundary)
    loop = []
    edge_tri = []
    v = start
    for _ in range(len(boundary)):
        if v not in boundary:
            raise OpenBoundaryError(f"boundary chain breaks at vertex {v}")
        w, t = boundary[v]
        loop.append((v, w))
        edge_tri.append(t)
        v = w
        if v == start:
            break
    if v != start:
        raise OpenBoundaryError("boundary loop does not close")
    if len(loop) != len(boundary):
        raise MeshTopologyError("boundary has multiple loops")
    return np.asarray(loop, dtype=np.int64), np.asarray(edge_tri, dtype=np.int64)


def generate_disk(target_h):
    """Mesh the unit disk with boundary vertices exactly on the unit circle.

    The boundary is a regular N-gon (N even, chord <= target_h); the interior
    is filled with concentric rings of near-uniform spacing and triangulated
    by Delaunay.

    Parameters
    ----------
    target_h : float
        Requested edge length, ``0 < target_h < 1``.

    Returns
    -------
    Mesh
        ``kind == "disk"``; every edge is no longer than ``1.5 * target_h``.
    """
    if not (0.0 < target_h < 1.0):
        raise ValueError(f"target_h must lie in (0, 1), got {target_h}")
    est = 3.7 / target_h**2
    if est > _MAX_GENERATED_VERTICES:
        raise MeshResourceError(
            f"target_h={target_h} would need ~{est:.0f} vertices "
            f"(limit {_MAX_GENERATED_VERTICES})"
        )

    n_bnd = int(math.ceil(2.0 * math.pi / target_h))
    if n_bnd % 2:
        n_bnd += 1
    n_rings = max(2, int(math.ceil(1.0 / target_h)))

    # Boundary ring first so that boundary vertices get indices 0..n_bnd-1
    # in angular order: arc length and polar angle then line up trivially.
    #
    # Rings in the outer annulus keep the full boundary count (staggered by
    # half a cell), so the mesh near the boundary is exactly invariant under
    # rotation by one boundary edge: boundary data shifted by whole edges
    # then sees an identical discretization, which keeps eigenvalues of
    # rotated boundary densities equal to far below discretization error.
    theta = 2.0 * math.pi * np.arange(n_bnd) / n_bnd
    pts = [np.column_stack((np.cos(theta), np.sin(theta)))]
    r_uniform = 0.55
    for j in range(n_rings - 1, 0, -1):
        r = j / n_rings
        if r >= r_uniform:
            nj = n_bnd
        else:
            nj = max(6, int(round(n_bnd * r)))
        off = (j % 2) * math.pi / nj
        ang = 2.0 * math.pi * np.arange(nj) / nj + off
        pts.append(np.column_stack((r * np.cos(ang), r * np.sin(ang))))
    pts.append(np.zeros((1, 2)))
    points = np.vstack(pts)

    tri = Delaunay(points)
    simplices = _drop_sliver_hull_triangles(points, tri.simplices, n_bnd)
    return Mesh(points, simplices, kind="disk")


def _drop_sliver_hull_triangles(points, simplices, n_bnd):
    """Remove zero-area triangles qhull sometimes emits along the hull."""
    p0 = points[simplices[:, 0]]
    p1 = points[simplices[:, 1]]
    p2 = points[simplices[:, 2]]
    area2 = np.abs(
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )
    scale = area2.max()
    return simplices[area2 > 1e-12 * scale]


def generate_rectangle(width, height, target_h):
    """Structured triangulation of ``[0, width] x [0, height]``.

    Cells of a uniform ``nx x ny`` grid are split along one diagonal; the
    boundary polygon is the exact rectangle, so its perimeter equals
    ``2 * (width + height)`` up to the last bit of the arc-length sums.
    """
    if width <= 0.0 or height <= 0.0 or target_h <= 0.0:
        raise ValueError("width, height and target_h must be positive")
    nx = max(1, int(math.ceil(width / target_h)))
    ny = max(1, int(math.ceil(height / target_h)))
    if (nx + 1) * (ny + 1) > _MAX_GENERATED_VERTICES:
        raise MeshResourceError(
            f"rectangle grid {nx}x{ny} exceeds {_MAX_GENERATED_VERTICES} vertices"
        )
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack((xx.ravel(), yy.ravel()))

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return Mesh(vertices, np.asarray(tris, dtype=np.int64), kind="rectangle")


def load_mesh(text):
    """Parse the plain-text mesh format.

    Format: a ``vertices N`` header, N ``x y`` lines, a ``triangles M``
    header, M ``i j k`` lines.  Lines starting with ``#`` and blank lines
    are skipped; CRLF is accepted.  Clockwise triangles are reoriented and
    counted in ``mesh.diagnostics["reoriented_triangles"]``.
    """
    lines = []
    for ln, raw in enumerate(text.split("\n"), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        lines.append((ln, stripped))

    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError("unexpected end of mesh text")
        item = lines[pos]
        pos += 1
        return item

    ln, header = take()
    parts = header.split()
    if len(parts) != 2 or parts[0] != "vertices":
        raise MeshParseError(f"line {ln}: expected 'vertices N', got {header!r}")
    try:
        n_vert = int(parts[1])
    except ValueError:
        raise MeshParseError(f"line {ln}: bad vertex count {parts[1]!r}") from None
    if n_vert <= 0:
        raise MeshParseError(f"line {ln}: vertex count must be positive")

    vertices = np.empty((n_vert, 2))
    for k in range(n_vert):
        ln, row = take()
        parts = row.split()
        if len(parts) != 2:
            raise MeshParseError(f"line {ln}: expected 'x y', got {row!r}")
        try:
            vertices[k] = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise MeshParseError(f"line {ln}: bad coordinate in {row!r}") from None

    ln, header = take()
    parts = header.split()
    if len(parts) != 2 or parts[0] != "triangles":
        raise MeshParseError(f"line {ln}: expected 'triangles M', got {header!r}")
    try:
        n_tri = int(parts[1])
    except ValueError:
        raise MeshParseError(f"line {ln}: bad triangle count {parts[1]!r}") from None
    if n_tri <= 0:
        raise MeshParseError(f"line {ln}: triangle count must be positive")

    triangles = np.empty((n_tri, 3), dtype=np.int64)
    for k in range(n_tri):
        ln, row = take()
        parts = row.split()
        if len(parts) != 3:
            raise MeshParseError(f"line {ln}: expected 'i j k', got {row!r}")
        try:
            triangles[k] = [int(p) for p in parts]
        except ValueError:
            raise MeshParseError(f"line {ln}: bad index in {row!r}") from None

    if pos != len(lines):
        ln, row = lines[pos]
        raise MeshParseError(f"line {ln}: trailing content {row!r}")
    return Mesh(vertices, triangles, kind="file")


def load_mesh_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return load_mesh(fh.read())


def serialize_mesh(mesh):
    """Inverse of :func:`load_mesh`: full-precision round-trippable text."""
    buf = io.StringIO()
    buf.write(f"vertices {mesh.n_vertices}\n")
    for x, y in mesh.vertices:
        buf.write(f"{x:.17g} {y:.17g}\n")
    buf.write(f"triangles {len(mesh.triangles)}\n")
    for i, j, k in mesh.triangles:
        buf.write(f"{i} {j} {k}\n")
    return buf.getvalue()


def locate_arc_point(mesh, s):
    """Map an arc-length coordinate to ``(edge_index, fraction)``.

    Satisfies ``cum_arclength[edge] + fraction * edge_lengths[edge] == s``
    with ``fraction in [0, 1)``.  Raises ``ValueError`` outside
    ``[0, perimeter)``.
    """
    if not (0.0 <= s < mesh.perimeter):
        raise ValueError(f"arc coordinate {s} outside [0, {mesh.perimeter})")
    cum = mesh._cum_ext
    k = int(np.searchsorted(cum, s, side="right")) - 1
    k = min(k, mesh.n_boundary_edges - 1)
    t = (s - cum[k]) / mesh.edge_lengths[k]
    return k, float(t)


@dataclass(frozen=True)
class RegionSpec:
    """Disjoint union of half-open boundary arcs ``[start, start + length)``.

    Arc coordinates are taken modulo the perimeter; arcs may wrap through
    ``s = 0``.  ``arcs`` is stored sorted by normalized start.
    """

    arcs: tuple  # tuple of (start, length), start in [0, perimeter)
    perimeter: float

    @staticmethod
    def from_intervals(intervals, perimeter):
        """Build from ``(s_begin, s_end)`` pairs, each taken mod perimeter.

        ``s_end < s_begin`` denotes an arc wrapping through zero.  Arcs of
        zero (mod perimeter) length or overlapping arcs are rejected.
        """
        if perimeter <= 0.0:
            raise ValueError("perimeter must be positive")
        arcs = []
        for s_begin, s_end in intervals:
            start = float(s_begin) % perimeter
            length = float(s_end - s_begin) % perimeter
            if length == 0.0:
                raise ValueError(f"arc ({s_begin}, {s_end}) has zero length")
            arcs.append((start, length))
        arcs.sort()
        for k in range(len(arcs)):
            s0, l0 = arcs[k]
            s1 = arcs[(k + 1) % len(arcs)][0] + (perimeter if k + 1 == len(arcs) else 0.0)
            if len(arcs) > 1 and s0 + l0 > s1:
                raise ValueError("arcs overlap")
            if len(arcs) == 1 and l0 > perimeter:
                raise ValueError("arc longer than the boundary")
        return RegionSpec(arcs=tuple(arcs), perimeter=float(perimeter))

    @property
    def total_mass(self):
        return float(sum(length for _, length in self.arcs))

    def intervals(self):
        """Arcs as ``(s_begin, s_end)`` pairs with ``s_end`` possibly > perimeter."""
        return [(start, start + length) for start, length in self.arcs]

    def contains(self, s, closed=False, tol=1e-12):
        """Membership of an arc coordinate; ``closed`` includes both endpoints."""
        s = s % self.perimeter
        for start, length in self.arcs:
            d = (s - start) % self.perimeter
            if d < length:
                return True
            if closed and (d <= length + tol or d >= self.perimeter - tol):
                return True
        return False
