"""Wirtinger calculus of piecewise-affine maps on a triangle mesh.

For an affine map ``f(z) = a z + b conj(z) + c`` the Wirtinger derivatives
are ``f_z = a`` and ``f_zbar = b``.  On a mesh every triangle carries one
such pair, obtained from the images of its three corners.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh

__all__ = [
    "PLMap",
    "WirtingerField",
    "CalculusError",
    "gradient_operators",
    "wirtinger",
    "distortion",
    "beltrami",
    "field",
    "identity_map",
    "save_plmap",
    "load_plmap",
]

MU_CLAMP = 1.0 - 1e-14


class CalculusError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PLMap:
    """Vertex images of a piecewise-affine map of ``mesh``.

    ``boundary_condition`` is ``"identity"`` (boundary vertices fixed at their
    own position) or ``"prescribed"`` (boundary images given and held fixed).
    """

    mesh: TriMesh
    images: np.ndarray
    boundary_condition: str = "identity"
    pin_target: Optional[complex] = None

    def __post_init__(self):
        w = np.array(self.images, dtype=complex)
        if w.shape != (self.mesh.n_vertices,):
            raise CalculusError(f"expected {self.mesh.n_vertices} images, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "images", w)
        if self.boundary_condition not in ("identity", "prescribed"):
            raise CalculusError(f"unknown boundary condition {self.boundary_condition!r}")
        b = self.mesh.boundary
        if self.boundary_condition == "identity" and np.any(w[b] != self.mesh.vertices[b]):
            raise CalculusError("identity boundary condition violated")
        if self.pin_target is not None:
            object.__setattr__(self, "pin_target", complex(self.pin_target))
            k = self.mesh.pinned_index
            if k is None:
                raise CalculusError("pin target given but mesh has no pinned vertex")
            if w[k] != self.pin_target:
                raise CalculusError(f"pinned vertex maps to {w[k]}, expected {self.pin_target}")

    def with_images(self, images: np.ndarray) -> "PLMap":
        return PLMap(self.mesh, images, self.boundary_condition, self.pin_target)


@dataclass(frozen=True, eq=False)
class WirtingerField:
    """Per-triangle derivative data of a PL map."""

    fz: np.ndarray
    fzbar: np.ndarray
    jacobian: np.ndarray
    beltrami: np.ndarray  # nan where fz == 0
    distortion: np.ndarray  # +inf on orientation-reversed triangles
    reversed: np.ndarray  # J <= 0 with a nonzero derivative


def _triangle_coefficients(corners: np.ndarray):
    """Coefficients ``(cz, czbar)`` with ``f_z = sum_k cz[k] w_k``.

    The barycentric basis function of corner k has gradient ``i e_k / (2A)``
    (as a complex number), with ``e_k`` the opposite edge traversed
    counter-clockwise.
    """
    z0, z1, z2 = corners[..., 0], corners[..., 1], corners[..., 2]
    sa = 0.5 * np.imag(np.conj(z1 - z0) * (z2 - z0))
    e = np.stack([z2 - z1, z0 - z2, z1 - z0], axis=-1)
    czbar = 1j * e / (4.0 * sa[..., None])
    cz = np.conj(czbar)
    return cz, czbar, sa


def wirtinger(mesh: TriMesh, images: np.ndarray, triangle_index: int) -> tuple:
    """``(f_z, f_zbar)`` of the affine map on one triangle."""
    corners = mesh.corners[triangle_index]
    if abs(mesh.signed_areas[triangle_index]) <= 1e-300:
        raise CalculusError(f"triangle {triangle_index} is degenerate")
    cz, czbar, _ = _triangle_coefficients(corners)
    w = np.asarray(images)[mesh.triangles[triangle_index]]
    return complex(np.sum(cz * w)), complex(np.sum(czbar * w))


@lru_cache(maxsize=32)
def _operators_cached(mesh: TriMesh):
    if np.any(mesh.signed_areas <= 0):
        bad = int(np.argmin(mesh.signed_areas))
        raise CalculusError(f"triangle {bad} is degenerate or negatively oriented")
    cz, czbar, _ = _triangle_coefficients(mesh.corners)
    T = mesh.n_triangles
    rows = np.repeat(np.arange(T), 3)
    cols = mesh.triangles.ravel()
    shape = (T, mesh.n_vertices)
    Dz = sp.csr_matrix((cz.ravel(), (rows, cols)), shape=shape)
    Dzb = sp.csr_matrix((czbar.ravel(), (rows, cols)), shape=shape)
    return Dz, Dzb


def gradient_operators(mesh: TriMesh):
    """Sparse (T, V) matrices ``Dz, Dzbar`` mapping vertex values to per-triangle derivatives."""
    return _operators_cached(mesh)


def distortion(fz, fzbar):
    """Distortion ``(|f_z|^2 + |f_zbar|^2) / (|f_z|^2 - |f_zbar|^2)``.

    Equals 1 where both derivatives vanish and ``+inf`` on triangles that
    reverse orientation (the barrier used by the optimizer).
    """
    a = np.abs(np.asarray(fz)) ** 2
    b = np.abs(np.asarray(fzbar)) ** 2
    J = a - b
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(J > 0, (a + b) / np.where(J > 0, J, 1.0), np.inf)
    K = np.where((a == 0) & (b == 0), 1.0, K)
    return K if K.ndim else float(K)


def beltrami(fz, fzbar):
    """Beltrami coefficient ``f_zbar / f_z``."""
    fz = np.asarray(fz, dtype=complex)
    if np.any(fz == 0):
        raise CalculusError("Beltrami coefficient undefined where f_z = 0")
    mu = np.asarray(fzbar, dtype=complex) / fz
    return mu if mu.ndim else complex(mu)


def field(mesh: TriMesh, plmap) -> WirtingerField:
    """Assemble all per-triangle derivative quantities of a PL map."""
    images = plmap.images if isinstance(plmap, PLMap) else np.asarray(plmap, dtype=complex)
    Dz, Dzb = gradient_operators(mesh)
    fz = Dz @ images
    fzb = Dzb @ images
    J = np.abs(fz) ** 2 - np.abs(fzb) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(fz != 0, fzb / np.where(fz != 0, fz, 1.0), np.nan + 0j)
    K = distortion(fz, fzb)
    rev = (J <= 0) & ((fz != 0) | (fzb != 0))
    return WirtingerField(fz, fzb, J, mu, K, rev)


def identity_map(mesh: TriMesh, pin_target: Optional[complex] = None) -> PLMap:
    return PLMap(mesh, mesh.vertices.copy(), "identity",
                 None if pin_target is None else pin_target)


def save_plmap(plmap: PLMap, path) -> None:
    lines = [str(len(plmap.images))]
    lines += [f"{w.real:.17g} {w.imag:.17g}" for w in plmap.images]
    Path(path).write_text("\n".join(lines) + "\n")


def load_plmap(path, mesh: TriMesh, boundary_condition: Optional[str] = None,
               pin_target: Optional[complex] = None) -> PLMap:
    """Read a PLMap file paired with ``mesh`` and validate its constraints.

    The boundary condition is inferred when not given: ``identity`` if every
    boundary vertex is mapped to itself.  The pin target defaults to the
    stored image of the pinned vertex.
    """
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        n = int(lines[0][0])
        w = np.array([float(u) + 1j * float(v) for u, v in lines[1:1 + n]])
    except (IndexError, ValueError) as exc:
        raise CalculusError(f"malformed map file {path}: {exc}") from exc
    if len(w) != n or len(lines) != n + 1:
        raise CalculusError(f"malformed map file {path}: count mismatch")
    if boundary_condition is None:
        b = mesh.boundary
        boundary_condition = "identity" if np.all(w[b] == mesh.vertices[b]) else "prescribed"
    if pin_target is None and mesh.pinned_index is not None:
        pin_target = complex(w[mesh.pinned_index])
    return PLMap(mesh, w, boundary_condition, pin_target)
