"""Triangulated planar domains: unit disk, rectangle, annulus.

Vertices are stored as complex numbers.  Disk meshes are built from
concentric rings of points (rings around the pinned point, graded by the
requested exponent, plus rings around the origin reaching the unit circle)
which are then connected by a Delaunay triangulation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import Delaunay, cKDTree

__all__ = [
    "Domain",
    "TriMesh",
    "MeshError",
    "build_disk_mesh",
    "build_rectangle_mesh",
    "build_annulus_mesh",
    "refine",
    "ball_areas",
    "mesh_statistics",
    "check_invariants",
    "save_mesh",
    "load_mesh",
]

BOUNDARY_TOL = 1e-12
MIN_ANGLE_DEG = 15.0
GREEN_MIN_ANGLE = 20.0


class MeshError(ValueError):
    """Raised for invalid mesh parameters or a mesh violating its invariants."""


@dataclass(frozen=True)
class Domain:
    kind: str  # "disk" | "rectangle" | "annulus"
    width: float = 1.0
    height: float = 1.0
    r_inner: float = 0.0
    r_outer: float = 1.0

    @classmethod
    def disk(cls) -> "Domain":
        return cls("disk")

    @classmethod
    def rectangle(cls, width: float, height: float) -> "Domain":
        return cls("rectangle", width=float(width), height=float(height))

    @classmethod
    def annulus(cls, r_inner: float, r_outer: float) -> "Domain":
        return cls("annulus", r_inner=float(r_inner), r_outer=float(r_outer))

    def boundary_distance(self, z: np.ndarray) -> np.ndarray:
        """Distance of points to the domain boundary curve."""
        z = np.asarray(z)
        if self.kind == "disk":
            return np.abs(np.abs(z) - 1.0)
        if self.kind == "annulus":
            r = np.abs(z)
            return np.minimum(np.abs(r - self.r_inner), np.abs(r - self.r_outer))
        x, y = z.real, z.imag
        dx = np.minimum(np.abs(x), np.abs(x - self.width))
        dy = np.minimum(np.abs(y), np.abs(y - self.height))
        inside_x = (x >= -BOUNDARY_TOL) & (x <= self.width + BOUNDARY_TOL)
        inside_y = (y >= -BOUNDARY_TOL) & (y <= self.height + BOUNDARY_TOL)
        return np.where(inside_x & inside_y, np.minimum(dx, dy), np.inf)

    def project(self, z: np.ndarray) -> np.ndarray:
        """Project points onto the nearest piece of the boundary curve."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "disk":
            return z / np.abs(z)
        if self.kind == "annulus":
            r = np.abs(z)
            target = np.where(np.abs(r - self.r_inner) < np.abs(r - self.r_outer),
                              self.r_inner, self.r_outer)
            return z / r * target
        # rectangle edges are straight; midpoints of boundary edges already lie on them
        return z


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangle mesh of a planar domain.

    ``vertices`` is a complex array, ``triangles`` an (T, 3) integer array of
    counter-clockwise vertex triples, ``boundary`` a boolean flag per vertex.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    domain: Domain = field(default_factory=Domain.disk)
    pinned_index: Optional[int] = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=complex)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        b = np.ascontiguousarray(self.boundary, dtype=bool)
        for arr in (v, t, b):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary", b)
        if self.pinned_index is not None:
            object.__setattr__(self, "pinned_index", int(self.pinned_index))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def pin_location(self) -> Optional[complex]:
        if self.pinned_index is None:
            return None
        return complex(self.vertices[self.pinned_index])

    @cached_property
    def corners(self) -> np.ndarray:
        """(T, 3) complex array of triangle corner positions."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        z0, z1, z2 = self.corners.T
        return 0.5 * np.imag(np.conj(z1 - z0) * (z2 - z0))

    @cached_property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def total_area(self) -> float:
        return float(np.sum(self.areas))

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (E, 2) array with i < j."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.abs(self.vertices[e[:, 1]] - self.vertices[e[:, 0]])

    @cached_property
    def free_mask(self) -> np.ndarray:
        """Vertices that are decision variables: interior and not pinned."""
        m = ~self.boundary.copy()
        if self.pinned_index is not None:
            m[self.pinned_index] = False
        return m

    @cached_property
    def vertex_triangles(self) -> list:
        """For each vertex, the indices of incident triangles."""
        order = np.argsort(self.triangles.ravel(), kind="stable")
        tri_of = order // 3
        counts = np.bincount(self.triangles.ravel(), minlength=self.n_vertices)
        return np.split(tri_of, np.cumsum(counts)[:-1])

    @cached_property
    def neighbors(self) -> list:
        """For each vertex, the sorted indices of adjacent vertices."""
        nb = [set() for _ in range(self.n_vertices)]
        for i, j in self.edges:
            nb[i].add(int(j))
            nb[j].add(int(i))
        return [np.array(sorted(s), dtype=np.int64) for s in nb]

    def find_vertex(self, z: complex, tol: float = 1e-12) -> Optional[int]:
        d = np.abs(self.vertices - z)
        k = int(np.argmin(d))
        return k if d[k] <= tol else None

    def local_size(self, z: complex) -> float:
        """Longest edge among the triangles nearest to ``z``."""
        k = int(np.argmin(np.abs(self.centroids - z)))
        c = self.corners[k]
        return float(np.max(np.abs(c - np.roll(c, 1))))

    def locate(self, points: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Index of a triangle containing each point, or -1."""
        pts = np.atleast_1d(np.asarray(points, dtype=complex))
        out = np.full(len(pts), -1, dtype=np.int64)
        z0, z1, z2 = self.corners.T
        tol = -1e-12
        for s in range(0, len(pts), chunk):
            p = pts[s:s + chunk, None]
            a0 = np.imag(np.conj(z1 - p) * (z2 - p))
            a1 = np.imag(np.conj(z2 - p) * (z0 - p))
            a2 = np.imag(np.conj(z0 - p) * (z1 - p))
            scale = 2 * self.signed_areas
            inside = (a0 / scale >= tol) & (a1 / scale >= tol) & (a2 / scale >= tol)
            hit = inside.any(axis=1)
            out[s:s + chunk][hit] = np.argmax(inside[hit], axis=1)
        return out

    def rotated(self, theta: float) -> "TriMesh":
        """The same mesh rotated by ``exp(i theta)`` about the origin."""
        if self.domain.kind == "rectangle":
            raise MeshError("rotation is only defined for rotation-symmetric domains")
        return TriMesh(self.vertices * np.exp(1j * theta), self.triangles.copy(),
                       self.boundary.copy(), self.domain, self.pinned_index)

    def digest(self) -> str:
        """SHA-256 of the mesh file representation."""
        return hashlib.sha256(format_mesh(self).encode()).hexdigest()


# ---------------------------------------------------------------------------
# generators


def _ring_points(center: complex, radius: float, size_fn, offset: float = 0.0,
                 min_points: int = 6) -> np.ndarray:
    """Points on a circle with spacing following ``size_fn`` (a function of z)."""
    m = 720
    theta = np.linspace(0.0, 2 * np.pi, m + 1)
    z = center + radius * np.exp(1j * theta)
    density = radius / size_fn(z)
    # cumulative point count along the circle, trapezoid rule
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(theta))])
    n = max(min_points, int(np.round(cum[-1])))
    targets = (np.arange(n) + offset) * cum[-1] / n
    ang = np.interp(targets, cum, theta)
    return center + radius * np.exp(1j * ang)


def _delaunay(points: np.ndarray) -> np.ndarray:
    xy = np.column_stack([points.real, points.imag])
    tri = Delaunay(xy, qhull_options="Qbb Qc Qz Q12").simplices.astype(np.int64)
    return _orient(points, tri)


def _orient(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    z = points[tri]
    sa = np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0]))
    tri = tri.copy()
    flip = sa < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def _drop_degenerate(points: np.ndarray, tri: np.ndarray, rel: float = 1e-10) -> np.ndarray:
    z = points[tri]
    sa = 0.5 * np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0]))
    longest = np.max(np.abs(z - np.roll(z, 1, axis=1)), axis=1)
    return tri[sa > rel * longest ** 2]


def _mirror_partner(points: np.ndarray, tol: float = 1e-9) -> Optional[np.ndarray]:
    """Index of the complex conjugate of every point, or None if the set is not symmetric."""
    tree = cKDTree(np.column_stack([points.real, points.imag]))
    d, idx = tree.query(np.column_stack([points.real, -points.imag]))
    if d.max() > tol:
        return None
    return idx


def _conjugate_symmetric(points: np.ndarray, tri: np.ndarray):
    """Make a triangulation of a mirror-symmetric point set exactly symmetric.

    Delaunay ties are broken independently on the two sides of the real
    axis.  Triangles in the closed upper half plane are mirrored into the
    lower half.  Returns ``(points, triangles, extra)``.  ``extra`` lists axis
    points to insert (centres of axis-straddling cocircular quadrilaterals,
    which have no symmetric diagonal) and the triangulation is None when it
    is non-empty or the construction fails.
    """
    partner = _mirror_partner(points)
    if partner is None:
        return points, None, np.zeros(0, complex)
    pts = points.copy()
    on_axis = partner == np.arange(len(pts))
    pts[on_axis] = pts[on_axis].real
    low = (pts.imag < 0) & ~on_axis
    pts[low] = np.conj(pts[partner[low]])
    im = pts[tri].imag
    upper_only = np.all(im >= 0, axis=1)
    lower_only = np.all(im <= 0, axis=1)
    cross = tri[~upper_only & ~lower_only]
    keys = {tuple(sorted(t)) for t in cross.tolist()}
    lonely = [t for t in cross.tolist() if tuple(sorted(partner[t])) not in keys]
    if lonely:
        extra = np.unique(np.round([pts[list(set(t) | set(partner[t].tolist()))].real.mean()
                                    for t in lonely], 12)).astype(complex)
        return pts, None, extra
    keep = tri[upper_only]
    new = np.concatenate([keep, _orient(pts, partner[keep]), cross])

    def area(t):
        z = pts[t]
        return np.sum(np.abs(np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0])))) / 2

    if len(new) != len(tri) or abs(area(new) - area(tri)) > 1e-12 * area(tri):
        return pts, None, np.zeros(0, complex)
    return pts, new, np.zeros(0, complex)


def _min_angles(corners: np.ndarray) -> np.ndarray:
    e = np.roll(corners, -1, axis=1) - corners  # e_k = z_{k+1} - z_k
    a = np.abs(e)
    # angle at corner k between edges to k+1 and k-1
    u = e
    w = -np.roll(e, 1, axis=1)
    cosang = np.real(u * np.conj(w)) / (a * np.roll(a, 1, axis=1))
    return np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))


def _thin(batches: list, size_fn, exclude: np.ndarray, spacing: float) -> np.ndarray:
    """Keep candidate points farther than ``spacing * size`` from every kept point.

    Batches are processed in order; points inside one batch (one ring) are
    assumed to be mutually well separated already.
    """
    kept = [np.asarray(exclude)]
    for batch in batches:
        batch = np.asarray(batch)
        prev = np.concatenate(kept)
        tree = cKDTree(np.column_stack([prev.real, prev.imag]))
        d, _ = tree.query(np.column_stack([batch.real, batch.imag]))
        keep = d >= spacing * size_fn(batch)
        kept.append(batch[keep])
    return np.concatenate(kept[1:])


def _boundary_flags(n: int, n_boundary: int) -> np.ndarray:
    flags = np.zeros(n, dtype=bool)
    flags[n - n_boundary:] = True
    return flags


def _triangulate(inner: np.ndarray, bnd: np.ndarray):
    points = np.concatenate([inner, bnd])
    return points, _drop_degenerate(points, _delaunay(points))


def build_disk_mesh(target_edge_length: float, grading_exponent: float = 0.0,
                    pin_location: complex = 0.0, core_radius: Optional[float] = None,
                    min_angle: float = MIN_ANGLE_DEG) -> TriMesh:
    """Triangulate the unit disk with a vertex at ``pin_location`` and one at 0.

    The local edge length is ``target_edge_length * max(d, core_radius)**grading_exponent``
    (capped at ``target_edge_length``), ``d`` the distance to the pin.  Inside
    ``core_radius`` the mesh is uniform.  ``core_radius`` defaults to
    ``target_edge_length / 10`` when grading is requested.  A nonzero pin
    closer to 0 than half the local edge length is rejected, since both
    points must be mesh vertices.
    """
    h = float(target_edge_length)
    gamma = float(grading_exponent)
    pin = complex(pin_location)
    if not 0.0 < h < 1.0:
        raise MeshError(f"target_edge_length must lie in (0, 1), got {h}")
    if gamma < 0:
        raise MeshError(f"grading_exponent must be >= 0, got {gamma}")
    if abs(pin) >= 1.0 - h:
        raise MeshError(f"pin {pin} too close to the boundary for edge length {h}")
    if core_radius is None:
        core_radius = h / 10 if gamma > 0 else 1.0
    rho0 = float(core_radius)

    def size(z):
        d = np.maximum(np.abs(np.asarray(z) - pin), rho0)
        return np.minimum(h, h * d ** gamma)

    if 0 < abs(pin) < 0.5 * float(size(0.0)):
        raise MeshError(f"pin {pin} lies too close to the origin for edge length {float(size(0.0)):.3g}")

    # boundary circle first, then the pin, the origin, rings around the pin
    # and finally a dense set of rings around the origin; a candidate is kept
    # only if no earlier point lies within ``spacing * size`` of it
    bnd = _ring_points(0.0, 1.0, size)
    bnd = bnd / np.abs(bnd)
    cand = [np.array([pin]), np.array([0.0 + 0.0j])] if pin != 0 else [np.array([pin])]
    r_pin_max = 1.0 - abs(pin) - 0.5 * h
    rho, k = 0.0, 0
    while True:
        rho += float(size(pin + rho))
        if rho > r_pin_max:
            break
        k += 1
        cand.append(_ring_points(pin, rho, size, offset=0.5 * (k % 2)))
    if abs(pin) > 0:
        rho, k = 1.0, 0
        while True:
            ring_step = 0.5 * float(np.min(size(rho * np.exp(1j * np.linspace(0, 2 * np.pi, 64)))))
            rho -= ring_step
            if rho <= 0:
                break
            k += 1
            cand.append(_ring_points(0.0, rho, size, offset=0.5 * (k % 2)))
    inner = np.concatenate(cand[:2] + [_thin(cand[2:], size, np.concatenate([bnd] + cand[:2]), 0.7)])
    points, tri = _triangulate(inner, bnd)
    if pin.imag == 0:
        # a real pin gives a mirror-symmetric point set; make the triangles match
        for _ in range(3):
            pts, sym, extra = _conjugate_symmetric(points, tri)
            if sym is not None:
                trial = TriMesh(pts, sym, _boundary_flags(len(pts), len(bnd)), Domain.disk(), pinned_index=0)
                try:
                    check_invariants(trial)
                    points, tri = pts, sym
                except MeshError:
                    pass
                break
            if not len(extra):
                break
            inner = np.concatenate([inner, extra])
            points, tri = _triangulate(inner, bnd)
    boundary = _boundary_flags(len(points), len(bnd))
    mesh = TriMesh(points, tri, boundary, Domain.disk(), pinned_index=0)
    if len(np.unique(tri)) != len(points):
        raise MeshError("triangulation dropped near-coincident points")
    worst = float(np.min(_min_angles(mesh.corners)))
    if worst < min_angle:
        raise MeshError(f"generated mesh has minimum angle {worst:.2f} deg < {min_angle} deg")
    return mesh


def build_rectangle_mesh(width: float, height: float, target_edge_length: float) -> TriMesh:
    """Uniform right-triangle mesh of ``[0, width] x [0, height]``."""
    width, height, h = float(width), float(height), float(target_edge_length)
    if min(width, height, h) <= 0:
        raise MeshError("width, height and target_edge_length must be positive")
    nx = max(1, int(np.ceil(width / h - 1e-12)))
    ny = max(1, int(np.ceil(height / h - 1e-12)))
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    points = (X + 1j * Y).ravel()
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tri = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    boundary = ((X == 0) | (X == width) | (Y == 0) | (Y == height)).ravel()
    return TriMesh(points, tri, boundary, Domain.rectangle(width, height))


def build_annulus_mesh(r_inner: float, r_outer: float, target_edge_length: float) -> TriMesh:
    """Uniform ring mesh of ``{r_inner <= |z| <= r_outer}``."""
    r0, r1, h = float(r_inner), float(r_outer), float(target_edge_length)
    if not 0 < r0 < r1 or h <= 0:
        raise MeshError("need 0 < r_inner < r_outer and positive edge length")
    n_rings = max(1, int(np.ceil((r1 - r0) / h)))
    radii = np.linspace(r0, r1, n_rings + 1)
    size = lambda z: np.full(np.shape(z), h)
    rings = [_ring_points(0.0, r, size, offset=0.5 * (k % 2)) for k, r in enumerate(radii)]
    points = np.concatenate(rings)
    boundary = np.zeros(len(points), dtype=bool)
    boundary[:len(rings[0])] = True
    boundary[-len(rings[-1]):] = True
    # exact radii on the two circles
    points[boundary] = points[boundary] / np.abs(points[boundary]) * np.where(
        np.abs(points[boundary]) < 0.5 * (r0 + r1), r0, r1)
    tri = _delaunay(points)
    hole = np.abs(points[tri].mean(axis=1)) < r0
    tri = _drop_degenerate(points, tri[~hole])
    return TriMesh(points, tri, boundary, Domain.annulus(r0, r1))


# ---------------------------------------------------------------------------
# refinement


def _dist_point_triangles(corners: np.ndarray, c: complex) -> np.ndarray:
    z0, z1, z2 = corners.T
    a0 = np.imag(np.conj(z1 - c) * (z2 - c))
    a1 = np.imag(np.conj(z2 - c) * (z0 - c))
    a2 = np.imag(np.conj(z0 - c) * (z1 - c))
    inside = (a0 >= 0) & (a1 >= 0) & (a2 >= 0)

    def seg(a, b):
        e = b - a
        s = np.clip(np.real((c - a) * np.conj(e)) / np.abs(e) ** 2, 0.0, 1.0)
        return np.abs(a + s * e - c)

    d = np.minimum(np.minimum(seg(z0, z1), seg(z1, z2)), seg(z2, z0))
    return np.where(inside, 0.0, d)


def _bisection_quality(corners: np.ndarray) -> np.ndarray:
    """Smallest angle of the two children when edge k (corners k, k+1) is bisected."""
    out = np.empty(corners.shape, dtype=float)
    for k in range(3):
        p, q, r = corners[:, k], corners[:, (k + 1) % 3], corners[:, (k + 2) % 3]
        m = 0.5 * (p + q)
        c1 = _min_angles(np.stack([p, m, r], axis=1)).min(axis=1)
        c2 = _min_angles(np.stack([m, q, r], axis=1)).min(axis=1)
        out[:, k] = np.minimum(c1, c2)
    return out


def refine(mesh: TriMesh, center: complex, radius: float) -> TriMesh:
    """Red-green refinement of the triangles meeting the open disk B(center, radius).

    Marked triangles are split 1-to-4; triangles with two or more split edges
    are promoted to 1-to-4 as well, and triangles with a single split edge
    are bisected, so the result is conforming.
    """
    tri = mesh.triangles
    T = len(tri)
    red = _dist_point_triangles(mesh.corners, complex(center)) < radius
    if not red.any():
        return mesh
    # local edge numbering: edge k of triangle joins corners k and k+1
    te = np.stack([tri, np.roll(tri, -1, axis=1)], axis=2)  # (T, 3, 2)
    key = np.sort(te, axis=2).reshape(-1, 2)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(T, 3)
    marked = np.zeros(len(uniq), dtype=bool)
    green_quality = _bisection_quality(mesh.corners)  # (T, 3): worst child angle per split edge
    while True:
        marked[inv[red].ravel()] = True
        em = marked[inv]
        count = em.sum(axis=1)
        # bisections that would create poor angles are upgraded to 1-to-4 splits
        poor = (count == 1) & (np.where(em, green_quality, np.inf).min(axis=1) < GREEN_MIN_ANGLE)
        promote = ((count >= 2) | poor) & ~red
        if not promote.any():
            break
        red |= promote
    # edge multiplicity decides which midpoints lie on the boundary
    mult = np.bincount(inv.ravel(), minlength=len(uniq))
    verts = list(mesh.vertices)
    bflag = list(mesh.boundary)
    mid = np.full(len(uniq), -1, dtype=np.int64)
    n0 = mesh.n_vertices
    sel = np.nonzero(marked)[0]
    m = 0.5 * (mesh.vertices[uniq[sel, 0]] + mesh.vertices[uniq[sel, 1]])
    on_b = mult[sel] == 1
    m[on_b] = mesh.domain.project(m[on_b])
    mid[sel] = np.arange(n0, n0 + len(sel))
    verts = np.concatenate([mesh.vertices, m])
    bflag = np.concatenate([mesh.boundary, on_b])

    new = []
    count = marked[inv].sum(axis=1)
    for t in range(T):
        a, b, c = tri[t]
        if red[t]:
            mab, mbc, mca = mid[inv[t]]
            new += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
        elif count[t] == 1:
            k = int(np.nonzero(marked[inv[t]])[0][0])
            p, q, r = tri[t][k], tri[t][(k + 1) % 3], tri[t][(k + 2) % 3]
            mm = mid[inv[t][k]]
            new += [(p, mm, r), (mm, q, r)]
        else:
            new.append((a, b, c))
    out = TriMesh(verts, np.array(new, dtype=np.int64), bflag, mesh.domain, mesh.pinned_index)
    return out


# ---------------------------------------------------------------------------
# diagnostics


def ball_areas(mesh: TriMesh, center: complex, radius: float) -> np.ndarray:
    """Exact area of ``T ∩ B(center, radius)`` for every triangle.

    Sums, over the CCW edges ``a -> b``, the signed area of the disk clipped
    to the cone spanned by the center and the edge: chord pieces inside the
    circle contribute triangles, pieces outside contribute circular sectors.
    """
    z = mesh.corners - complex(center)
    r = float(radius)
    total = np.zeros(mesh.n_triangles)
    for i in range(3):
        a, b = z[:, i], z[:, (i + 1) % 3]
        d = b - a
        A = np.abs(d) ** 2
        B = 2.0 * np.real(a * np.conj(d))
        C = np.abs(a) ** 2 - r * r
        disc = B * B - 4 * A * C
        sq = np.sqrt(np.maximum(disc, 0.0))
        s1 = np.where(disc > 0, np.clip((-B - sq) / (2 * A), 0.0, 1.0), 0.0)
        s2 = np.where(disc > 0, np.clip((-B + sq) / (2 * A), 0.0, 1.0), 0.0)
        p1, p2 = a + s1 * d, a + s2 * d

        def sector(p, q):
            with np.errstate(invalid="ignore", divide="ignore"):
                ang = np.angle(q / p)
            return 0.5 * r * r * np.where((p == q) | (p == 0), 0.0, ang)

        total += sector(a, p1) + 0.5 * np.imag(np.conj(p1) * p2) + sector(p2, b)
    return total


def mesh_statistics(mesh: TriMesh) -> dict:
    """Quality report: angles in degrees, edge lengths, counts, area deficit."""
    ang = _min_angles(mesh.corners)
    report = {
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
        "n_boundary": int(mesh.boundary.sum()),
        "min_angle": float(ang.min()),
        "max_angle": float(ang.max()),
        "min_edge": float(mesh.edge_lengths.min()),
        "max_edge": float(mesh.edge_lengths.max()),
        "area": mesh.total_area,
    }
    if mesh.domain.kind == "disk":
        report["area_deficit"] = float(np.pi - mesh.total_area)
    return report


def check_invariants(mesh: TriMesh, pin: Optional[complex] = None) -> None:
    """Raise :class:`MeshError` describing the first violated mesh invariant."""
    if np.any(mesh.triangles < 0) or np.any(mesh.triangles >= mesh.n_vertices):
        raise MeshError("triangle index out of range")
    if np.any(mesh.signed_areas <= 0):
        raise MeshError(f"{int(np.sum(mesh.signed_areas <= 0))} triangles are not positively oriented")
    bd = mesh.domain.boundary_distance(mesh.vertices[mesh.boundary])
    if bd.size and bd.max() > BOUNDARY_TOL:
        raise MeshError(f"boundary vertex off the boundary by {bd.max():.3e}")
    if pin is not None:
        if mesh.pinned_index is None or mesh.vertices[mesh.pinned_index] != pin:
            raise MeshError("pinned vertex does not coincide with the pin location")
    # edge-manifold: every edge has one or two incident triangles, consistently oriented
    t = mesh.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    if len(np.unique(directed, axis=0)) != len(directed):
        raise MeshError("a directed edge occurs twice (non-manifold or inconsistent orientation)")
    key = np.sort(directed, axis=1)
    _, mult = np.unique(key, axis=0, return_counts=True)
    if mult.max() > 2:
        raise MeshError("edge shared by more than two triangles")
    used = np.unique(t)
    if len(used) != mesh.n_vertices:
        raise MeshError("unreferenced vertex")
    # connectivity via union-find over edges
    parent = np.arange(mesh.n_vertices)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in mesh.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    roots = {find(i) for i in range(mesh.n_vertices)}
    if len(roots) != 1:
        raise MeshError("mesh is not connected")
    # duplicate vertices
    xy = np.column_stack([mesh.vertices.real, mesh.vertices.imag])
    if cKDTree(xy).query_pairs(1e-12):
        raise MeshError("duplicate vertices")


# ---------------------------------------------------------------------------
# text format


def format_mesh(mesh: TriMesh) -> str:
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    for z, b in zip(mesh.vertices, mesh.boundary):
        lines.append(f"{z.real:.17g} {z.imag:.17g} {int(b)}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    if mesh.pinned_index is not None:
        lines.append(f"pin {mesh.pinned_index}")
    return "\n".join(lines) + "\n"


def save_mesh(mesh: TriMesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))


def _infer_domain(vertices: np.ndarray, boundary: np.ndarray) -> Domain:
    b = vertices[boundary]
    r = np.abs(b)
    if np.all(np.abs(r - 1.0) <= BOUNDARY_TOL):
        return Domain.disk()
    rmin, rmax = r.min(), r.max()
    if np.all(np.minimum(np.abs(r - rmin), np.abs(r - rmax)) <= BOUNDARY_TOL):
        return Domain.annulus(rmin, rmax)
    return Domain.rectangle(b.real.max(), b.imag.max())


def load_mesh(path, domain: Optional[Domain] = None) -> TriMesh:
    """Read the text mesh format written by :func:`save_mesh`."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        nv, nt = int(lines[0][0]), int(lines[0][1])
        vl = lines[1:1 + nv]
        tl = lines[1 + nv:1 + nv + nt]
        vertices = np.array([float(x) + 1j * float(y) for x, y, _ in vl])
        boundary = np.array([bool(int(f)) for _, _, f in vl])
        triangles = np.array([[int(i) for i in row] for row in tl], dtype=np.int64)
        pinned = None
        rest = lines[1 + nv + nt:]
        if rest:
            if rest[0][0] != "pin" or len(rest) > 1:
                raise MeshError(f"unexpected trailing content in {path}")
            pinned = int(rest[0][1])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if len(vertices) != nv or len(triangles) != nt:
        raise MeshError(f"malformed mesh file {path}: counts do not match header")
    if domain is None:
        domain = _infer_domain(vertices, boundary)
    mesh = TriMesh(vertices, triangles, boundary, domain, pinned)
    check_invariants(mesh)
    return mesh
