"""Discrete Ahlfors-Hopf differential, pole fitting and the Cauchy transform.

The Hopf differential of an inverse-side map ``h`` is the per-triangle
constant ``Phi = IK^(p-1) h_w conj(h_wbar)``.  Its holomorphy is probed by
one-ring contour integrals; the expected simple pole at the pinned point is
measured both by contour residues on circles and by the decay rate of
``|Phi|`` on dyadic annuli.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .calculus import PLMap, field, gradient_operators
from .mesh import TriMesh
from .optimizer import sample_test_field

__all__ = [
    "HopfError",
    "HopfField",
    "PoleFit",
    "hopf_field",
    "hopf_from_values",
    "pole_fit",
    "default_radii",
    "contour_integral",
    "cauchy_transform_F",
    "cauchy_transform_at",
    "cauchy_dbar",
    "prescribed_Fz",
    "triangle_cauchy_integrals",
    "symmetric_derivative_residual",
    "write_vertex_csv",
]


class HopfError(ValueError):
    pass


def _images(plmap) -> np.ndarray:
    return plmap.images if isinstance(plmap, PLMap) else np.asarray(plmap, dtype=complex)


@dataclass(eq=False)
class HopfField:
    mesh: TriMesh
    phi: np.ndarray  # per triangle
    cr_residual: np.ndarray  # per vertex, nan on boundary vertices
    l1_mass: float
    p: float = np.nan

    @property
    def interior_residuals(self) -> np.ndarray:
        return self.cr_residual[~self.mesh.boundary]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tri_index", "re_phi", "im_phi", "abs_phi"])
            for t, v in enumerate(self.phi):
                w.writerow([t, repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v)))])


@dataclass
class PoleFit:
    laurent_coefficient: complex
    loglog_slope: float
    fit_residual: float
    radii: list
    residues: list  # contour estimate per radius
    annulus_means: list

    def to_json(self) -> dict:
        a = self.laurent_coefficient
        return {
            "laurent_coefficient": [a.real, a.imag],
            "abs_laurent_coefficient": abs(a),
            "loglog_slope": self.loglog_slope,
            "fit_residual": self.fit_residual,
            "radii": [float(r) for r in self.radii],
            "residues": [[complex(c).real, complex(c).imag] for c in self.residues],
            "annulus_means": [float(m) for m in self.annulus_means],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _link_edges(mesh: TriMesh):
    """For every (triangle, corner) pair the opposite edge, oriented CCW around that corner."""
    tri = mesh.triangles
    centers = tri.ravel()
    a = tri[:, [1, 2, 0]].ravel()
    b = tri[:, [2, 0, 1]].ravel()
    owner = np.repeat(np.arange(mesh.n_triangles), 3)
    return centers, a, b, owner


def _cr_residuals(mesh: TriMesh, phi: np.ndarray) -> np.ndarray:
    """Discrete ``|dPhi/dzbar|`` per interior vertex from the one-ring contour of ``Phi dw``.

    With centroid values the link-polygon sum tends to ``(4/3) A dPhi/dzbar``
    (the continuous contour would give ``2i A dPhi/dzbar``), hence the factor
    3/4; the sum vanishes exactly for affine fields.
    """
    centers, a, b, owner = _link_edges(mesh)
    z = mesh.vertices
    contrib = phi[owner] * (z[b] - z[a])
    n = mesh.n_vertices
    total = np.bincount(centers, contrib.real, n) + 1j * np.bincount(centers, contrib.imag, n)
    ring_area = np.bincount(centers, mesh.areas[owner], n)
    out = 0.75 * np.abs(total) / np.where(ring_area > 0, ring_area, 1.0)
    out[mesh.boundary] = np.nan
    return out


def hopf_from_values(mesh: TriMesh, phi: np.ndarray, p: float = np.nan) -> HopfField:
    """Wrap an arbitrary per-triangle field, e.g. a synthetic pole for calibration."""
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (mesh.n_triangles,):
        raise HopfError("need one value per triangle")
    return HopfField(mesh, phi, _cr_residuals(mesh, phi), float(np.sum(mesh.areas * np.abs(phi))), p)


def hopf_field(mesh: TriMesh, hmap, p: float) -> HopfField:
    """Hopf differential of the inverse-side map ``hmap``."""
    F = field(mesh, _images(hmap))
    if np.any(F.reversed):
        raise HopfError("map reverses orientation on some triangle")
    phi = F.distortion ** (p - 1.0) * F.fz * np.conj(F.fzbar)
    return hopf_from_values(mesh, phi, p)


# ---------------------------------------------------------------------------
# pole fitting


def contour_integral(hf: HopfField, center: complex, rho: float) -> complex:
    """Exact integral of the piecewise constant field along the circle ``|w - center| = rho``.

    The circle is cut at its crossings with mesh edges; on each arc the field
    is constant, so the arc contributes ``Phi_T * (w_end - w_start)``.
    """
    mesh = hf.mesh
    z = mesh.vertices
    e = mesh.edges
    a, d = z[e[:, 0]] - center, z[e[:, 1]] - z[e[:, 0]]
    # |a + s d|^2 = rho^2
    A = np.abs(d) ** 2
    B = 2.0 * np.real(a * np.conj(d))
    C = np.abs(a) ** 2 - rho ** 2
    disc = B * B - 4 * A * C
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    angles = []
    for sgn in (-1.0, 1.0):
        s = (-B + sgn * sq) / (2 * A)
        hit = ok & (s >= 0) & (s <= 1)
        angles.append(np.angle(a[hit] + s[hit] * d[hit]))
    th = np.unique(np.concatenate(angles + [np.array([-np.pi])]))
    th = np.append(th, th[0] + 2 * np.pi)
    mids = center + rho * np.exp(0.5j * (th[:-1] + th[1:]))
    where = mesh.locate(mids)
    if np.any(where < 0):
        raise HopfError(f"circle of radius {rho} leaves the mesh")
    ends = center + rho * np.exp(1j * th)
    return complex(np.sum(hf.phi[where] * np.diff(ends)))


def default_radii(mesh: TriMesh, center: complex, n_max: int = 8) -> list:
    """Geometric radii (ratio sqrt 2) between the resolution guard and the boundary."""
    d_b = float(np.min(mesh.domain.boundary_distance(np.array([center]))))
    top = min(0.35, d_b / (2.0 * np.sqrt(2.0)))
    guard = 2.0 * mesh.local_size(center) * np.sqrt(2.0)
    radii = []
    r = top
    while r > 1.05 * guard and len(radii) < n_max:
        radii.append(r)
        r /= np.sqrt(2.0)
    return radii


def pole_fit(hf: HopfField, pin: complex, radii: Optional[Sequence[float]] = None) -> PoleFit:
    """Residue and decay rate of ``Phi`` at ``pin``.

    The residue is averaged over contour estimates on the given circles; the
    slope is the least-squares fit of ``log mean|Phi|`` on the annuli
    ``rho/sqrt2 < |w - pin| < rho sqrt2`` against ``log rho``.
    """
    mesh = hf.mesh
    radii = default_radii(mesh, pin) if radii is None else [float(r) for r in radii]
    if len(radii) < 3:
        raise HopfError(f"need at least 3 usable radii, got {len(radii)}")
    if np.any(np.diff(radii) >= 0):
        raise HopfError("radii must be strictly decreasing")
    size = mesh.local_size(pin)
    if radii[-1] <= 2.0 * size:
        raise HopfError(f"radius {radii[-1]:.3g} is within twice the mesh size {size:.3g} at the pin")
    dist = np.abs(mesh.centroids - pin)
    res, means = [], []
    for rho in radii:
        res.append(contour_integral(hf, pin, rho) / (2j * np.pi))
        sel = (dist > rho / np.sqrt(2.0)) & (dist < rho * np.sqrt(2.0))
        A = mesh.areas[sel]
        means.append(float(np.sum(A * np.abs(hf.phi[sel])) / np.sum(A)))
    x = np.log(radii)
    with np.errstate(divide="ignore"):
        y = np.log(means)
    if not np.all(np.isfinite(y)):
        slope, resid = 0.0, 0.0
    else:
        coef = np.polyfit(x, y, 1)
        slope = float(coef[0])
        resid = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
    return PoleFit(complex(np.mean(res)), slope, resid, list(radii), res, means)


# ---------------------------------------------------------------------------
# Cauchy transform


def triangle_cauchy_integrals(corners: np.ndarray, v: complex) -> np.ndarray:
    """``int_T dA(zeta) / (zeta - v)`` for every triangle, in closed form.

    Uses ``1/(zeta - v) = d/dzetabar [(zetabar - vbar)/(zeta - v)]`` and
    Green's formula, so each edge ``a -> b`` contributes
    ``conj(e) + (e conj(alpha) - conj(e) alpha)/e * Log((b - v)/(a - v))``
    with ``e = b - a`` and ``alpha = a - v``; edges through ``v`` give ``conj(e)``.
    """
    total = np.zeros(len(corners), dtype=complex)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        a, b = corners[:, i], corners[:, j]
        e = b - a
        al, be = a - v, b - v
        # v on the closed segment: the integrand is constant along the edge
        cross = np.imag(np.conj(e) * al)
        through = (np.abs(cross) <= 1e-14 * np.abs(e) ** 2) & (np.real(al * np.conj(be)) <= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.log(np.where(through, 1.0, be) / np.where(through, 1.0, al))
            term = np.conj(e) + (e * np.conj(al) - np.conj(e) * al) / e * lg
        total += np.where(through, np.conj(e), term)
    return total / 2j


def _density(mesh, plmap, p, density):
    if density is None:
        F = field(mesh, _images(plmap))
        if np.any(F.reversed):
            raise HopfError("map reverses orientation on some triangle")
        density = F.distortion ** p - 1.0
    return np.asarray(density, dtype=float)


def cauchy_transform_at(mesh: TriMesh, points, density: np.ndarray,
                        exact_radius: Optional[float] = None) -> np.ndarray:
    """``-(1/pi) int density(zeta) / (zeta - v) dA`` at arbitrary points ``v``.

    Triangles whose centroid lies within ``exact_radius`` of ``v`` (default:
    three times the longest edge) are integrated in closed form, the rest by
    the centroid rule.
    """
    if exact_radius is None:
        exact_radius = 3.0 * float(np.max(mesh.edge_lengths))
    cen = mesh.centroids
    A = mesh.areas
    corners = mesh.corners
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    out = np.empty(len(pts), dtype=complex)
    for k, v in enumerate(pts):
        near = np.abs(cen - v) < exact_radius
        far = ~near
        val = np.sum(A[far] * density[far] / (cen[far] - v))
        val += np.sum(density[near] * triangle_cauchy_integrals(corners[near], v))
        out[k] = -val / np.pi
    return out


def cauchy_transform_F(mesh: TriMesh, plmap, p: float, density: Optional[np.ndarray] = None,
                       exact_radius: Optional[float] = None) -> np.ndarray:
    """Vertex values of the Cauchy transform of ``IK^p - 1`` (or of ``density``)."""
    return cauchy_transform_at(mesh, mesh.vertices, _density(mesh, plmap, p, density), exact_radius)


def cauchy_dbar(mesh: TriMesh, plmap, p: float, density: Optional[np.ndarray] = None,
                F_vertices: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-triangle ``dF/dzbar`` from the contour ``(1/2iA) oint F dz`` with Simpson's rule.

    ``F`` is evaluated at the vertices and edge midpoints.  The piecewise
    linear interpolant of the vertex values alone corresponds to the
    trapezoid rule and misses the jumps of the density across edges.
    """
    density = _density(mesh, plmap, p, density)
    Fv = cauchy_transform_at(mesh, mesh.vertices, density) if F_vertices is None else F_vertices
    edges = mesh.edges
    z = mesh.vertices
    Fm = cauchy_transform_at(mesh, 0.5 * (z[edges[:, 0]] + z[edges[:, 1]]), density)
    lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
    tri = mesh.triangles
    total = np.zeros(mesh.n_triangles, dtype=complex)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        a, b = tri[:, i], tri[:, j]
        idx = np.array([lookup[(min(x, y), max(x, y))] for x, y in zip(a, b)])
        total += (z[b] - z[a]) * (Fv[a] + 4.0 * Fm[idx] + Fv[b]) / 6.0
    return total / (2j * mesh.areas)


def prescribed_Fz(mesh: TriMesh, plmap, p: float) -> np.ndarray:
    """The per-triangle ``F_z = 2p IK^p conj(mu) / (1 + |mu|^2)`` dictated by the map."""
    F = field(mesh, _images(plmap))
    mu = np.where(np.isnan(F.beltrami), 0.0, F.beltrami)
    return 2.0 * p * F.distortion ** p * np.conj(mu) / (1.0 + np.abs(mu) ** 2)


def symmetric_derivative_residual(mesh: TriMesh, F: np.ndarray, test_fields: Sequence,
                                  Fz: Optional[np.ndarray] = None,
                                  Fzbar: Optional[np.ndarray] = None) -> list:
    """``|sum A F_z phi_zbar - sum A F_zbar phi_z|`` for each test field.

    By default both derivatives are the per-triangle Wirtinger derivatives of
    the vertex-sampled ``F``; the two sums then agree to round-off for every
    piecewise linear ``F`` (a discrete integration by parts).  Passing the
    prescribed ``Fz`` of :func:`prescribed_Fz` turns the residual into a test
    of the map: it vanishes in the limit only if ``F_z - Fz`` is holomorphic.
    """
    Dz, Dzb = gradient_operators(mesh)
    F = np.asarray(F, dtype=complex)
    Fz = Dz @ F if Fz is None else np.asarray(Fz)
    Fzb = Dzb @ F if Fzbar is None else np.asarray(Fzbar)
    A = mesh.areas
    out = []
    for phi in test_fields:
        v = sample_test_field(mesh, phi)
        out.append(float(abs(np.sum(A * Fz * (Dzb @ v)) - np.sum(A * Fzb * (Dz @ v)))))
    return out


def write_vertex_csv(path, mesh: TriMesh, cr_residual: np.ndarray,
                     F: Optional[np.ndarray] = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["vertex_index", "x", "y", "cr_residual"]
        if F is not None:
            head += ["re_F", "im_F"]
        w.writerow(head)
        for k, z in enumerate(mesh.vertices):
            row = [k, repr(float(z.real)), repr(float(z.imag)), repr(float(cr_residual[k]))]
            if F is not None:
                row += [repr(float(F[k].real)), repr(float(F[k].imag))]
            w.writerow(row)
