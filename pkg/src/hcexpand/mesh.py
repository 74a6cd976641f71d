"""Conforming triangulations with subdomain tags.

A :class:`Mesh` holds nodes, triangles with a subdomain tag (0 for the
background, ``m`` for inclusion ``m``) and tagged boundary edges (0 for the
outer boundary, ``m`` for the interface of inclusion ``m``).

Meshes are generated by Delaunay triangulation of a point cloud built from
boundary samples, offset rings around circular inclusions and a triangular
background lattice. Points that encroach the diametral circle of a boundary
segment are discarded, which forces every boundary segment to be a Delaunay
edge; interfaces are therefore unions of element edges.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import GeometryError, MeshFormatError, MeshValidationError, ResolutionError
from .kernels import triangle_metrics

SQRT3_2 = math.sqrt(3.0) / 2.0


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    r: float

    def signed_distance(self, pts):
        pts = np.atleast_2d(pts)
        return np.hypot(pts[:, 0] - self.cx, pts[:, 1] - self.cy) - self.r

    def project(self, pts):
        """Radial projection onto the circle."""
        pts = np.atleast_2d(pts)
        d = pts - np.array([self.cx, self.cy])
        rad = np.hypot(d[:, 0], d[:, 1])
        return np.array([self.cx, self.cy]) + d * (self.r / rad)[:, None]

    @property
    def area(self):
        return math.pi * self.r**2

    @property
    def perimeter(self):
        return 2.0 * math.pi * self.r

    @property
    def bbox(self):
        return (self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r)

    def boundary_points(self, h, min_points=8):
        n = max(min_points, int(math.ceil(self.perimeter / h)))
        t = 2.0 * math.pi * np.arange(n) / n
        return np.column_stack([self.cx + self.r * np.cos(t), self.cy + self.r * np.sin(t)])

    def to_dict(self):
        return {"type": "disk", "center": [self.cx, self.cy], "radius": self.r}


@dataclass(frozen=True)
class Rectangle:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise GeometryError(f"degenerate rectangle {self}")

    def signed_distance(self, pts):
        pts = np.atleast_2d(pts)
        c = np.array([(self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2])
        half = np.array([(self.x1 - self.x0) / 2, (self.y1 - self.y0) / 2])
        q = np.abs(pts - c) - half
        outside = np.hypot(np.maximum(q[:, 0], 0), np.maximum(q[:, 1], 0))
        inside = np.minimum(np.maximum(q[:, 0], q[:, 1]), 0.0)
        return outside + inside

    def project(self, pts):
        return np.atleast_2d(pts)

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def perimeter(self):
        return 2.0 * ((self.x1 - self.x0) + (self.y1 - self.y0))

    @property
    def bbox(self):
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def vertices(self):
        return ((self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1))

    def boundary_points(self, h, min_points=1):
        return _polyline_points(self.vertices, h)

    def to_dict(self):
        return {"type": "rectangle", "bounds": [self.x0, self.y0, self.x1, self.y1]}


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area == 0:
            raise GeometryError("polygon has zero area")
        if area < 0:  # store counter-clockwise
            object.__setattr__(self, "vertices", tuple(map(tuple, v[::-1].tolist())))
        else:
            object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))

    def _segments(self):
        v = np.asarray(self.vertices, dtype=float)
        return v, np.roll(v, -1, axis=0)

    def contains(self, pts):
        """Even-odd rule, points on the boundary are undefined."""
        pts = np.atleast_2d(pts)
        a, b = self._segments()
        x, y = pts[:, 0][:, None], pts[:, 1][:, None]
        ax, ay, bx, by = a[:, 0][None], a[:, 1][None], b[:, 0][None], b[:, 1][None]
        cond = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (y - ay) * (bx - ax) / (by - ay)
        crossing = cond & (x < xint)
        return (np.count_nonzero(crossing, axis=1) % 2) == 1

    def boundary_distance(self, pts):
        pts = np.atleast_2d(pts)
        a, b = self._segments()
        ab = b - a
        ap = pts[:, None, :] - a[None]
        t = np.clip((ap * ab[None]).sum(-1) / (ab * ab).sum(-1)[None], 0.0, 1.0)
        proj = a[None] + t[..., None] * ab[None]
        return np.sqrt(((pts[:, None, :] - proj) ** 2).sum(-1)).min(axis=1)

    def signed_distance(self, pts):
        d = self.boundary_distance(pts)
        return np.where(self.contains(pts), -d, d)

    def project(self, pts):
        return np.atleast_2d(pts)

    @property
    def area(self):
        v = np.asarray(self.vertices)
        return 0.5 * float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))

    @property
    def perimeter(self):
        a, b = self._segments()
        return float(np.hypot(*(b - a).T).sum())

    @property
    def bbox(self):
        v = np.asarray(self.vertices)
        return (*v.min(axis=0), *v.max(axis=0))

    def boundary_points(self, h, min_points=1):
        return _polyline_points(self.vertices, h)

    def to_dict(self):
        return {"type": "polygon", "vertices": [list(v) for v in self.vertices]}


def _polyline_points(vertices, h):
    v = np.asarray(vertices, dtype=float)
    out = []
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        n = max(1, int(math.ceil(np.hypot(*(b - a)) / h - 1e-9)))
        t = np.arange(n) / n
        out.append(a[None] + t[:, None] * (b - a)[None])
    return np.vstack(out)


def shape_from_dict(d):
    kind = d.get("type")
    if kind == "disk":
        (cx, cy), r = d["center"], d["radius"]
        return Disk(float(cx), float(cy), float(r))
    if kind == "rectangle":
        return Rectangle(*map(float, d["bounds"]))
    if kind == "polygon":
        return Polygon(tuple(tuple(map(float, p)) for p in d["vertices"]))
    raise GeometryError(f"unknown shape type {kind!r}")


@dataclass(frozen=True)
class GeometrySpec:
    """Outer domain (rectangle or disk), inclusions (disks or polygons) and a target mesh size."""

    outer: Rectangle | Disk
    inclusions: tuple = ()
    target_h: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "inclusions", tuple(self.inclusions))

    def validate(self):
        h = self.target_h
        if not h > 0:
            raise GeometryError("target_h must be positive")
        if not isinstance(self.outer, (Rectangle, Disk)):
            raise GeometryError("outer domain must be a rectangle or a disk")
        clearance = 2.0 * h
        for m, inc in enumerate(self.inclusions, start=1):
            gap = _outer_gap(self.outer, inc)
            if gap <= 0:
                raise GeometryError(f"inclusion {m} overlaps or touches the outer boundary")
            if gap < clearance:
                raise GeometryError(
                    f"inclusion {m} is {gap:.4g} from the outer boundary, need >= 2*target_h = {clearance:.4g}"
                )
            size = 2.0 * inc.area / inc.perimeter  # inradius for disks
            if size < 0.5 * h:
                raise ResolutionError(f"target_h={h} too coarse to resolve inclusion {m}")
        for i in range(len(self.inclusions)):
            for j in range(i + 1, len(self.inclusions)):
                gap = _pair_gap(self.inclusions[i], self.inclusions[j])
                if gap <= 0:
                    raise GeometryError(f"inclusions {i + 1} and {j + 1} overlap or touch")
                if gap < clearance:
                    raise GeometryError(
                        f"inclusions {i + 1} and {j + 1} are {gap:.4g} apart, need >= 2*target_h = {clearance:.4g}"
                    )

    def to_dict(self):
        return {
            "outer": self.outer.to_dict(),
            "inclusions": [inc.to_dict() for inc in self.inclusions],
            "target_h": self.target_h,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            outer=shape_from_dict(d["outer"]),
            inclusions=tuple(shape_from_dict(s) for s in d.get("inclusions", [])),
            target_h=float(d["target_h"]),
        )


def _vertices_of(shape, n=256):
    if isinstance(shape, Disk):
        return shape.boundary_points(shape.perimeter / n, min_points=n)
    return np.asarray(shape.vertices, dtype=float)


def _outer_gap(outer, inc):
    if isinstance(inc, Disk):
        return float(-outer.signed_distance([[inc.cx, inc.cy]])[0] - inc.r)
    # outer domains are convex: the extreme point of a polygon is a vertex
    return float(-outer.signed_distance(np.asarray(inc.vertices)).max())


def _pair_gap(a, b):
    if isinstance(a, Disk) and isinstance(b, Disk):
        return math.hypot(a.cx - b.cx, a.cy - b.cy) - a.r - b.r
    if isinstance(a, Polygon) and isinstance(b, Disk):
        a, b = b, a
    if isinstance(a, Disk):
        d = float(b.signed_distance([[a.cx, a.cy]])[0])
        return d - a.r
    # two polygons
    va, vb = np.asarray(a.vertices), np.asarray(b.vertices)
    if a.contains(vb[:1])[0] or b.contains(va[:1])[0]:
        return -1.0
    return float(min(a.boundary_distance(vb).min(), b.boundary_distance(va).min()))


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------

def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable tagged triangulation.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (T, 3) int array, counter-clockwise
    tags : (T,) int array, 0 = background, m = inclusion m
    boundary_edges : (E, 2) int array
    edge_tags : (E,) int array, 0 = outer boundary, m = interface of inclusion m
    num_inclusions : int
    geometry : GeometrySpec or None
        Analytic description, kept in memory only (not serialised).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    num_inclusions: int
    geometry: GeometrySpec | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(self.nodes, np.float64).reshape(-1, 2))
        object.__setattr__(self, "triangles", _readonly(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "tags", _readonly(self.tags, np.int64).reshape(-1))
        object.__setattr__(self, "boundary_edges", _readonly(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "edge_tags", _readonly(self.edge_tags, np.int64).reshape(-1))
        object.__setattr__(self, "num_inclusions", int(self.num_inclusions))

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @cached_property
    def areas(self):
        return triangle_metrics(self.nodes, self.triangles)[:, 0]

    @cached_property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def outer_nodes(self):
        return np.unique(self.boundary_edges[self.edge_tags == 0])

    def inclusion_nodes(self, m):
        """Nodes of the closed inclusion ``m`` (interior and interface)."""
        return self._inclusion_nodes[m - 1]

    def interface_nodes(self, m):
        return np.unique(self.boundary_edges[self.edge_tags == m])

    @cached_property
    def _inclusion_nodes(self):
        return [np.unique(self.triangles[self.tags == m]) for m in range(1, self.num_inclusions + 1)]

    @cached_property
    def node_region(self):
        """Per-node label: -1 on the outer boundary, m on closed inclusion m, 0 in the open background."""
        lab = np.zeros(self.num_nodes, dtype=np.int64)
        for m in range(1, self.num_inclusions + 1):
            lab[self.inclusion_nodes(m)] = m
        lab[self.outer_nodes] = -1
        return lab

    @cached_property
    def background_interior_nodes(self):
        return np.flatnonzero(self.node_region == 0)

    @cached_property
    def node_elements(self):
        """CSR-style node-to-element incidence ``(indptr, elements)``."""
        t = self.triangles.ravel()
        e = np.repeat(np.arange(self.num_triangles), 3)
        order = np.argsort(t, kind="stable")
        counts = np.bincount(t, minlength=self.num_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr, e[order]

    def nodes_with_all_elements_in(self, element_mask):
        """Boolean node mask: every element touching the node is selected."""
        bad = np.zeros(self.num_nodes, dtype=bool)
        bad[self.triangles[~element_mask].ravel()] = True
        touched = np.zeros(self.num_nodes, dtype=bool)
        touched[self.triangles.ravel()] = True
        return touched & ~bad

    def tag_area(self, tag):
        return float(self.areas[self.tags == tag].sum())

    def with_geometry(self, geometry):
        return Mesh(self.nodes, self.triangles, self.tags, self.boundary_edges, self.edge_tags,
                    self.num_inclusions, geometry)

    def same_structure(self, other):
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.tags, other.tags)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and np.array_equal(self.edge_tags, other.edge_tags)
            and self.num_inclusions == other.num_inclusions
        )


def _edge_keys(a, b, n):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo * n + hi


def extract_boundary_edges(triangles, tags, num_nodes):
    """Outer edges (one adjacent triangle) and interface edges (tag m next to tag 0).

    Returns ``(edges, edge_tags)`` oriented as in the owning triangle (outer) or
    the inclusion triangle (interfaces), sorted by tag then key.
    """
    t = np.asarray(triangles, dtype=np.int64)
    tags = np.asarray(tags, dtype=np.int64)
    a = t[:, [0, 1, 2]].ravel()
    b = t[:, [1, 2, 0]].ravel()
    owner = np.repeat(np.arange(t.shape[0]), 3)
    keys = _edge_keys(a, b, num_nodes)
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    uniq, start, counts = np.unique(ks, return_index=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshValidationError("non-manifold edge shared by more than two triangles")
    edges, etags, ekeys = [], [], []
    single = start[counts == 1]
    for s in single:
        k = order[s]
        edges.append((a[k], b[k]))
        etags.append(0)
        ekeys.append(ks[s])
    for s in start[counts == 2]:
        k1, k2 = order[s], order[s + 1]
        t1, t2 = tags[owner[k1]], tags[owner[k2]]
        if t1 == t2:
            continue
        if t1 != 0 and t2 != 0:
            raise MeshValidationError(
                f"inclusions {t1} and {t2} share an edge (inclusions must not be adjacent)"
            )
        k = k1 if t1 != 0 else k2
        edges.append((a[k], b[k]))
        etags.append(max(t1, t2))
        ekeys.append(ks[s])
    if not edges:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64)
    etags = np.asarray(etags, dtype=np.int64)
    order = np.lexsort((np.asarray(ekeys), etags))
    return edges[order], etags[order]


def validate_mesh(mesh):
    """Check every structural invariant; raise :class:`MeshValidationError` on the first failure."""
    n = mesh.num_nodes
    t = mesh.triangles
    if not np.all(np.isfinite(mesh.nodes)):
        raise MeshValidationError("non-finite node coordinates")
    if t.size and (t.min() < 0 or t.max() >= n):
        bad = int(np.flatnonzero((t < 0).any(axis=1) | (t >= n).any(axis=1))[0])
        raise MeshValidationError(f"triangle {bad} references a node index out of range")
    be = mesh.boundary_edges
    if be.size and (be.min() < 0 or be.max() >= n):
        bad = int(np.flatnonzero((be < 0).any(axis=1) | (be >= n).any(axis=1))[0])
        raise MeshValidationError(f"boundary edge {bad} references a node index out of range")
    metrics = triangle_metrics(mesh.nodes, t)
    scale = max(metrics[:, 1].max(), 1e-300) if len(metrics) else 1.0
    bad = np.flatnonzero(metrics[:, 0] <= 1e-14 * scale * scale)
    if bad.size:
        raise MeshValidationError(
            f"triangle {int(bad[0])} has non-positive signed area {metrics[bad[0], 0]:.3e}"
        )
    M = mesh.num_inclusions
    if mesh.tags.size and (mesh.tags.min() < 0 or mesh.tags.max() > M):
        raise MeshValidationError(f"triangle tags must lie in 0..{M}")
    present = set(np.unique(mesh.tags).tolist())
    for m in range(1, M + 1):
        if m not in present:
            raise MeshValidationError(f"inclusion {m} has no triangles")
    edges, etags = extract_boundary_edges(t, mesh.tags, n)
    stored = {(int(k), int(g)) for k, g in zip(_edge_keys(be[:, 0], be[:, 1], n), mesh.edge_tags)}
    derived = {(int(k), int(g)) for k, g in zip(_edge_keys(edges[:, 0], edges[:, 1], n), etags)}
    if stored != derived:
        diff = sorted(stored ^ derived)[0]
        i, j = divmod(diff[0], n)
        raise MeshValidationError(
            f"boundary edge ({i}, {j}) tag {diff[1]} disagrees with the triangle tags"
        )
    # closed loops: every interface/outer vertex has even degree
    for tag in np.unique(etags):
        e = edges[etags == tag]
        deg = np.bincount(e.ravel(), minlength=n)
        odd = np.flatnonzero(deg % 2)
        if odd.size:
            raise MeshValidationError(f"boundary edges with tag {tag} do not close (node {int(odd[0])})")
    outer = set(np.unique(edges[etags == 0]).tolist())
    owner_of = {}
    for m in range(1, M + 1):
        tri_m = np.flatnonzero(mesh.tags == m)
        nodes_m = np.unique(t[tri_m])
        if outer.intersection(nodes_m.tolist()):
            raise MeshValidationError(f"inclusion {m} touches the outer boundary")
        for v in nodes_m.tolist():
            if v in owner_of:
                raise MeshValidationError(f"inclusions {owner_of[v]} and {m} share node {v}")
            owner_of[v] = m
        if not _edge_connected(t[tri_m], n):
            raise MeshValidationError(f"inclusion {m} is not edge-connected")
        if not np.any(np.isin(nodes_m, np.unique(edges[etags == m]), invert=True)):
            raise ResolutionError(f"inclusion {m} has no interior node")
    return True


def _edge_connected(tris, n):
    if len(tris) <= 1:
        return True
    a = tris[:, [0, 1, 2]].ravel()
    b = tris[:, [1, 2, 0]].ravel()
    keys = _edge_keys(a, b, n)
    owner = np.repeat(np.arange(len(tris)), 3)
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    same = ks[1:] == ks[:-1]
    i = owner[order][:-1][same]
    j = owner[order][1:][same]
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    g = coo_matrix((np.ones(len(i)), (i, j)), shape=(len(tris), len(tris)))
    ncomp, _ = connected_components(g, directed=False)
    return ncomp == 1


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _disk_rings(disk, h):
    """Interface samples plus one outer ring and concentric inner rings."""
    iface = disk.boundary_points(h)
    n0 = len(iface)
    s = disk.perimeter / n0
    dr = SQRT3_2 * s
    c = np.array([disk.cx, disk.cy])
    t = 2.0 * math.pi * (np.arange(n0) + 0.5) / n0
    outer_ring = c + (disk.r + dr) * np.column_stack([np.cos(t), np.sin(t)])
    inner = []
    k = 1
    while True:
        rk = disk.r - k * dr
        if rk < 0.5 * s:
            inner.append(c[None])
            break
        nk = max(3, int(round(2.0 * math.pi * rk / s)))
        tk = 2.0 * math.pi * (np.arange(nk) + 0.5 * k) / nk
        inner.append(c + rk * np.column_stack([np.cos(tk), np.sin(tk)]))
        k += 1
    return iface, s, outer_ring, np.vstack(inner)


def _polygon_offsets(poly, h):
    iface = poly.boundary_points(h)
    a, b = iface, np.roll(iface, -1, axis=0)
    mid = 0.5 * (a + b)
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]  # outward for ccw
    off = SQRT3_2 * length[:, None]
    return iface, float(length.min()), mid + off * normal, mid - off * normal


def _segments_of(points):
    return points, np.roll(points, -1, axis=0)


def _lattice(bbox, h):
    x0, y0, x1, y1 = bbox
    xc, yc = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    dy = SQRT3_2 * h
    ky = int(math.ceil((y1 - y0) / 2 / dy)) + 1
    kx = int(math.ceil((x1 - x0) / 2 / h)) + 1
    rows = []
    for k in range(-ky, ky + 1):
        shift = 0.5 * h if (k % 2) else 0.0
        xs = xc + shift + h * np.arange(-kx, kx + 1)
        rows.append(np.column_stack([xs, np.full_like(xs, yc + k * dy)]))
    return np.vstack(rows)


def _encroaches(points, seg_a, seg_b, margin=1.05):
    """True where a point lies inside the (enlarged) diametral circle of any segment."""
    if len(points) == 0 or len(seg_a) == 0:
        return np.zeros(len(points), dtype=bool)
    mid = 0.5 * (seg_a + seg_b)
    half = 0.5 * np.hypot(*(seg_b - seg_a).T)
    tree = cKDTree(mid)
    rmax = margin * half.max()
    hits = tree.query_ball_point(points, rmax)
    out = np.zeros(len(points), dtype=bool)
    for i, cand in enumerate(hits):
        if cand:
            cand = np.asarray(cand)
            d = np.hypot(*(points[i] - mid[cand]).T)
            out[i] = np.any(d < margin * half[cand])
    return out


def _far_from(points, accepted, radius):
    if len(accepted) == 0 or len(points) == 0:
        return np.ones(len(points), dtype=bool)
    d, _ = cKDTree(accepted).query(points)
    return d >= radius


def generate_mesh(spec: GeometrySpec) -> Mesh:
    """Triangulate ``spec``; inclusion ``m`` (1-based, in spec order) gets tag ``m``.

    Raises
    ------
    GeometryError
        Overlapping inclusions, inclusions touching or too close to the outer boundary.
    ResolutionError
        ``target_h`` too coarse for an inclusion.
    """
    spec.validate()
    h = spec.target_h
    outer = spec.outer

    outer_pts = outer.boundary_points(h, min_points=12) if isinstance(outer, Disk) else outer.boundary_points(h)
    groups = [outer_pts]
    seg_a, seg_b = [], []
    a, b = _segments_of(outer_pts)
    seg_a.append(a)
    seg_b.append(b)

    ring_groups = []  # (points, local spacing)
    for inc in spec.inclusions:
        if isinstance(inc, Disk):
            iface, s, out_ring, in_ring = _disk_rings(inc, h)
        else:
            iface, s, out_ring, in_ring = _polygon_offsets(inc, h)
        groups.append(iface)
        a, b = _segments_of(iface)
        seg_a.append(a)
        seg_b.append(b)
        ring_groups.append((np.vstack([in_ring, out_ring]), s))
    mandatory = np.vstack(groups)
    seg_a, seg_b = np.vstack(seg_a), np.vstack(seg_b)

    enc = _encroaches(mandatory, seg_a, seg_b, margin=1.0 - 1e-9)
    if np.any(enc):
        raise ResolutionError("boundary samples encroach each other; reduce target_h")

    accepted = [mandatory]
    acc = mandatory
    for pts, s in ring_groups:
        keep = outer.signed_distance(pts) <= -0.35 * s
        for other in spec.inclusions:
            sd = other.signed_distance(pts)
            # points must stay clear of every interface
            keep &= np.abs(sd) >= 0.3 * s
        pts = pts[keep]
        pts = pts[~_encroaches(pts, seg_a, seg_b)]
        pts = pts[_far_from(pts, acc, 0.55 * s)]
        if len(pts):
            accepted.append(pts)
            acc = np.vstack(accepted)

    lat = _lattice(outer.bbox, h)
    keep = outer.signed_distance(lat) <= -0.35 * h
    for inc in spec.inclusions:
        if isinstance(inc, Disk):
            keep &= inc.signed_distance(lat) > 0
    lat = lat[keep]
    lat = lat[~_encroaches(lat, seg_a, seg_b)]
    lat = lat[_far_from(lat, acc, 0.55 * h)]
    accepted.append(lat)
    points = np.vstack(accepted)

    tri = Delaunay(points).simplices.astype(np.int64)
    # counter-clockwise orientation
    p = points[tri]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    flip = det < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    # deterministic element order: lexicographic on sorted vertex ids
    srt = np.sort(tri, axis=1)
    tri = tri[np.lexsort((srt[:, 2], srt[:, 1], srt[:, 0]))]

    used = np.unique(tri)
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    points, tri = points[used], remap[tri]

    tags = _tag_triangles(points, tri, spec)
    edges, etags = extract_boundary_edges(tri, tags, len(points))
    mesh = Mesh(points, tri, tags, edges, etags, len(spec.inclusions), spec)
    validate_mesh(mesh)
    return mesh


def _tag_triangles(points, tri, spec):
    cen = points[tri].mean(axis=1)
    tags = np.zeros(len(tri), dtype=np.int64)
    scale = max(spec.target_h, 1e-300)
    tol = 1e-9 * scale
    for m, inc in enumerate(spec.inclusions, start=1):
        inside = inc.signed_distance(cen) < 0
        tags[inside] = m
        vsd = inc.signed_distance(points[tri].reshape(-1, 2)).reshape(-1, 3)
        straddle_in = inside & np.any(vsd > tol, axis=1)
        straddle_out = ~inside & np.any(vsd < -tol, axis=1)
        bad = np.flatnonzero(straddle_in | straddle_out)
        if bad.size:
            raise MeshValidationError(
                f"triangle {int(bad[0])} straddles the interface of inclusion {m}; reduce target_h"
            )
    return tags


# ---------------------------------------------------------------------------
# refinement, quality, io
# ---------------------------------------------------------------------------

def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints.

    New nodes are appended after the old ones in sorted-edge order. When the mesh
    carries its geometry, midpoints of curved boundary/interface edges are
    projected onto the analytic curve.
    """
    n = mesh.num_nodes
    t = mesh.triangles
    a = t[:, [0, 1, 2]].ravel()
    b = t[:, [1, 2, 0]].ravel()
    keys = _edge_keys(a, b, n)
    uniq, inv = np.unique(keys, return_inverse=True)
    lo, hi = np.divmod(uniq, n)
    mid = 0.5 * (mesh.nodes[lo] + mesh.nodes[hi])
    mid_id = n + inv.reshape(-1, 3)  # midpoints of edges (0-1, 1-2, 2-0)

    be = mesh.boundary_edges
    bkeys = _edge_keys(be[:, 0], be[:, 1], n)
    bpos = np.searchsorted(uniq, bkeys)
    geom = mesh.geometry
    if geom is not None and len(be):
        for tag in np.unique(mesh.edge_tags):
            shape = geom.outer if tag == 0 else geom.inclusions[tag - 1]
            if isinstance(shape, Disk):
                sel = bpos[mesh.edge_tags == tag]
                mid[sel] = shape.project(mid[sel])
    nodes = np.vstack([mesh.nodes, mid])

    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m01, m12, m20 = mid_id[:, 0], mid_id[:, 1], mid_id[:, 2]
    children = np.stack(
        [
            np.stack([v0, m01, m20], axis=1),
            np.stack([v1, m12, m01], axis=1),
            np.stack([v2, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    tags = np.repeat(mesh.tags, 4)
    bm = n + bpos
    new_edges = np.stack([np.stack([be[:, 0], bm], axis=1), np.stack([bm, be[:, 1]], axis=1)], axis=1).reshape(-1, 2)
    new_etags = np.repeat(mesh.edge_tags, 2)
    return Mesh(nodes, children, tags, new_edges, new_etags, mesh.num_inclusions, geom)


@dataclass(frozen=True)
class QualityReport:
    h: float
    min_angle: float  # degrees
    max_aspect_ratio: float
    aspect_ratios: np.ndarray = field(repr=False)


def mesh_quality(mesh: Mesh) -> QualityReport:
    """Mesh size ``h`` (largest element diameter), smallest angle and largest ``diam(K) / r_K``."""
    met = triangle_metrics(mesh.nodes, mesh.triangles)
    scale = met[:, 1].max()
    bad = np.flatnonzero(np.abs(met[:, 0]) <= 1e-14 * scale * scale)
    if bad.size:
        raise MeshValidationError(f"triangle {int(bad[0])} is degenerate (zero area)")
    rho = met[:, 1] / met[:, 2]
    return QualityReport(
        h=float(scale),
        min_angle=float(np.degrees(met[:, 3].min())),
        max_aspect_ratio=float(rho.max()),
        aspect_ratios=rho,
    )


def mesh_to_dict(mesh):
    return {
        "nodes": mesh.nodes.tolist(),
        "triangles": np.column_stack([mesh.triangles, mesh.tags]).tolist(),
        "boundary_edges": np.column_stack([mesh.boundary_edges, mesh.edge_tags]).tolist(),
        "num_inclusions": mesh.num_inclusions,
    }


def save_mesh(mesh: Mesh, path):
    """Write the mesh as JSON (``nodes``, ``triangles``, ``boundary_edges``, ``num_inclusions``)."""
    Path(path).write_text(json.dumps(mesh_to_dict(mesh)) + "\n", encoding="utf-8")


_MESH_KEYS = {"nodes", "triangles", "boundary_edges", "num_inclusions"}


def mesh_from_dict(d, validate=True):
    if not isinstance(d, dict):
        raise MeshFormatError("mesh file must contain a JSON object")
    missing = _MESH_KEYS - d.keys()
    extra = d.keys() - _MESH_KEYS
    if missing:
        raise MeshFormatError(f"missing key(s): {sorted(missing)}")
    if extra:
        raise MeshFormatError(f"unknown key(s): {sorted(extra)}")

    def table(name, width, dtype):
        rows = d[name]
        if not isinstance(rows, list):
            raise MeshFormatError(f"/{name}: expected a list")
        for i, r in enumerate(rows):
            if not isinstance(r, list) or len(r) != width:
                raise MeshFormatError(f"/{name}/{i}: expected {width} entries")
            for v in r:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise MeshFormatError(f"/{name}/{i}: non-numeric entry {v!r}")
                if dtype is int and not float(v).is_integer():
                    raise MeshFormatError(f"/{name}/{i}: non-integer index {v!r}")
        return np.asarray(rows, dtype=np.float64 if dtype is float else np.int64).reshape(-1, width)

    nodes = table("nodes", 2, float)
    tris = table("triangles", 4, int)
    edges = table("boundary_edges", 3, int)
    M = d["num_inclusions"]
    if isinstance(M, bool) or not isinstance(M, int) or M < 0:
        raise MeshFormatError("/num_inclusions: expected a non-negative integer")
    n = len(nodes)
    for name, arr in (("triangles", tris[:, :3]), ("boundary_edges", edges[:, :2])):
        bad = np.flatnonzero(((arr < 0) | (arr >= n)).any(axis=1))
        if bad.size:
            i = int(bad[0])
            j = int(arr[i][(arr[i] < 0) | (arr[i] >= n)][0])
            raise MeshFormatError(f"/{name}/{i}: node index {j} out of range (have {n} nodes)")
    mesh = Mesh(nodes, tris[:, :3], tris[:, 3], edges[:, :2], edges[:, 2], M)
    if validate:
        validate_mesh(mesh)
    return mesh


def load_mesh(path, validate=True) -> Mesh:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from exc
    return mesh_from_dict(d, validate=validate)


# ---------------------------------------------------------------------------
# geometry catalogue used by the experiments
# ---------------------------------------------------------------------------

def grid_inclusions(n_side, spacing, radius, drop_corners=False):
    """``n_side x n_side`` disks on a square grid centred at the origin."""
    c = spacing * (np.arange(n_side) - (n_side - 1) / 2.0)
    out = []
    for y in c:
        for x in c:
            if drop_corners and abs(abs(x) - c.max()) < 1e-12 and abs(abs(y) - c.max()) < 1e-12:
                continue
            out.append(Disk(float(x), float(y), radius))
    return tuple(out)


def thirty_six_inclusions(target_h=0.03):
    """Unit disk with 36 disks of radius 0.07 on a 6x6 grid of spacing 0.22."""
    return GeometrySpec(Disk(0.0, 0.0, 1.0), grid_inclusions(6, 0.22, 0.07), target_h)


def sixty_inclusions(target_h=0.025):
    """Unit disk with 60 disks of radius 0.07 (8x8 grid of spacing 0.2 without corners)."""
    return GeometrySpec(Disk(0.0, 0.0, 1.0), grid_inclusions(8, 0.2, 0.07, drop_corners=True), target_h)
