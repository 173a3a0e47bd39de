"""Discrete distortion energies and their exact vertex gradients.

All energies are normalized by the total mesh area, so the identity map of
any disk mesh has power energy exactly 1.  Gradients are returned as a
complex vector ``dE/du + i dE/dv`` per vertex image ``w = u + iv``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .calculus import PLMap, field, gradient_operators
from .mesh import TriMesh, ball_areas

__all__ = [
    "EnergyError",
    "EnergyReport",
    "Functional",
    "energy_power",
    "energy_inverse_power",
    "energy_exponential",
    "sobolev_seminorm",
    "local_dirichlet",
    "holder_sides",
    "KINDS",
]

KINDS = ("power", "inverse_power", "exponential")
EXP_OVERFLOW = 700.0


class EnergyError(ValueError):
    pass


@dataclass
class EnergyReport:
    kind: str
    p: float
    value: float
    per_triangle: np.ndarray
    gradient: Optional[np.ndarray]
    gradient_norm: float
    holder_lhs: float
    holder_rhs: float
    log_value: float = np.nan
    diagnostic_only: bool = False
    distortion: np.ndarray = dc_field(default=None, repr=False)
    jacobian: np.ndarray = dc_field(default=None, repr=False)
    areas: np.ndarray = dc_field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "value": _num(self.value),
            "gradient_norm": _num(self.gradient_norm),
            "holder_lhs": _num(self.holder_lhs),
            "holder_rhs": _num(self.holder_rhs),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tri_index", "area", "IK", "J", "contribution"])
            for t, row in enumerate(zip(self.areas, self.distortion, self.jacobian, self.per_triangle)):
                w.writerow([t] + [repr(float(x)) for x in row])


def _num(x: float):
    x = float(x)
    if np.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def _integrand(kind: str, p: float, a: np.ndarray, b: np.ndarray, shift: float = 0.0):
    """Integrand and its partials in ``a = |f_z|^2`` and ``b = |f_zbar|^2``.

    Only called with ``a > b`` on every triangle.  For the exponential kind the
    returned values are scaled by ``exp(-shift)``.
    """
    J = a - b
    K = (a + b) / J
    dK_da = -2.0 * b / J ** 2
    dK_db = 2.0 * a / J ** 2
    if kind == "power":
        Kp1 = K ** (p - 1.0)
        e = Kp1 * K
        return e, p * Kp1 * dK_da, p * Kp1 * dK_db
    if kind == "inverse_power":
        Kp1 = K ** (p - 1.0)
        e = Kp1 * (a + b)
        return e, Kp1 * (p - (p - 1.0) * K), Kp1 * (p + (p - 1.0) * K)
    if kind == "exponential":
        e = np.exp(p * K - shift)
        return e, p * e * dK_da, p * e * dK_db
    raise EnergyError(f"unknown functional kind {kind!r}")


class Functional:
    """A fixed energy on a fixed mesh, evaluated on vertex image arrays.

    Returns ``+inf`` whenever some triangle is not orientation preserving.
    """

    def __init__(self, mesh: TriMesh, kind: str, p: float):
        if kind not in KINDS:
            raise EnergyError(f"unknown functional kind {kind!r}")
        p = float(p)
        if kind == "exponential":
            if p <= 0:
                raise EnergyError(f"exponential energy needs p > 0, got {p}")
        elif p < 1:
            raise EnergyError(f"{kind} energy needs p >= 1, got {p}")
        self.mesh = mesh
        self.kind = kind
        self.p = p
        self.Dz, self.Dzb = gradient_operators(mesh)
        self.DzH = self.Dz.conj().T.tocsr()
        self.DzbH = self.Dzb.conj().T.tocsr()
        self.areas = mesh.areas
        self.total_area = mesh.total_area
        self.n_evals = 0

    def derivatives(self, w):
        fz = self.Dz @ w
        fzb = self.Dzb @ w
        return fz, fzb

    def feasible(self, w) -> bool:
        fz, fzb = self.derivatives(w)
        return bool(np.all(np.abs(fz) ** 2 - np.abs(fzb) ** 2 > 0))

    def min_jacobian(self, w) -> float:
        fz, fzb = self.derivatives(w)
        return float(np.min(np.abs(fz) ** 2 - np.abs(fzb) ** 2))

    def _shift(self, a, b):
        if self.kind != "exponential":
            return 0.0
        m = float(np.max(self.p * (a + b) / (a - b)))
        return m if m > EXP_OVERFLOW else 0.0

    def value(self, w) -> float:
        self.n_evals += 1
        fz, fzb = self.derivatives(w)
        a, b = np.abs(fz) ** 2, np.abs(fzb) ** 2
        if not np.all(a > b):
            return np.inf
        shift = self._shift(a, b)
        e, _, _ = _integrand(self.kind, self.p, a, b, shift)
        val = float(np.sum(self.areas * e)) / self._normalizer(a, b)
        return val * np.exp(shift) if shift else val

    def _normalizer(self, a, b) -> float:
        # the inverse-side energy lives on the image domain, whose area is sum A J;
        # for boundary-fixing disk maps this equals the mesh area exactly
        if self.kind == "inverse_power":
            return float(np.sum(self.areas * (a - b)))
        return self.total_area

    def value_and_grad(self, w):
        """``(E, G)`` with ``G = dE/du + i dE/dv``; ``(inf, None)`` if infeasible."""
        self.n_evals += 1
        fz, fzb = self.derivatives(w)
        a, b = np.abs(fz) ** 2, np.abs(fzb) ** 2
        if not np.all(a > b):
            return np.inf, None
        shift = self._shift(a, b)
        e, ea, eb = _integrand(self.kind, self.p, a, b, shift)
        S = self._normalizer(a, b)
        scale = (np.exp(shift) if shift else 1.0) / S
        val = float(np.sum(self.areas * e)) * scale
        G = 2.0 * scale * (self.DzH @ (self.areas * ea * fz) + self.DzbH @ (self.areas * eb * fzb))
        if self.kind == "inverse_power":
            # quotient rule; zero on free vertices since sum A J depends on the boundary only
            GS = 2.0 * (self.DzH @ (self.areas * fz) - self.DzbH @ (self.areas * fzb))
            G = G - (val / S) * GS
        return val, G

    def report(self, w) -> EnergyReport:
        w = np.asarray(w, dtype=complex)
        F = field(self.mesh, w)
        a, b = np.abs(F.fz) ** 2, np.abs(F.fzbar) ** 2
        lhs, rhs = holder_sides(self.mesh, F, self.p if self.kind != "exponential" else max(self.p, 1.0))
        if not np.all(a > b):
            return EnergyReport(self.kind, self.p, np.inf, np.full(len(a), np.nan), None, np.inf,
                                lhs, rhs, np.inf, self.p == 1 and self.kind != "exponential",
                                F.distortion, F.jacobian, self.areas)
        shift = self._shift(a, b)
        e, _, _ = _integrand(self.kind, self.p, a, b, shift)
        per = self.areas * e / self._normalizer(a, b)
        val, G = self.value_and_grad(w)
        G = np.where(self.mesh.free_mask, G, 0.0)
        if self.kind == "exponential":
            log_val = float(logsumexp(self.p * F.distortion, b=self.areas) - np.log(self.total_area))
            per = per * np.exp(shift) if shift else per
        else:
            log_val = float(np.log(val))
        return EnergyReport(self.kind, self.p, val, per, G, float(np.linalg.norm(G)), lhs, rhs,
                            log_val, self.p == 1 and self.kind != "exponential",
                            F.distortion, F.jacobian, self.areas)


def _images(plmap) -> np.ndarray:
    return plmap.images if isinstance(plmap, PLMap) else np.asarray(plmap, dtype=complex)


def energy_power(mesh: TriMesh, plmap, p: float) -> EnergyReport:
    """Normalized ``sum area * IK^p``.  ``p = 1`` is evaluated but flagged diagnostic-only."""
    if p < 1:
        raise EnergyError(f"power energy needs p > 1 (p = 1 for diagnostics), got {p}")
    return Functional(mesh, "power", p).report(_images(plmap))


def energy_inverse_power(mesh: TriMesh, hmap, p: float) -> EnergyReport:
    """``sum area * IK^p * J`` normalized by the image area ``sum area * J``."""
    if p < 1:
        raise EnergyError(f"inverse power energy needs p > 1, got {p}")
    return Functional(mesh, "inverse_power", p).report(_images(hmap))


def energy_exponential(mesh: TriMesh, plmap, p: float) -> EnergyReport:
    """Normalized ``sum area * exp(p * IK)``."""
    return Functional(mesh, "exponential", p).report(_images(plmap))


def sobolev_seminorm(mesh: TriMesh, plmap, q: float) -> float:
    """``(sum area * |Df|^q)^(1/q)`` with ``|Df|^2 = |f_z|^2 + |f_zbar|^2``."""
    if not 1.0 < q <= 2.0:
        raise EnergyError(f"q must lie in (1, 2], got {q}")
    F = field(mesh, _images(plmap))
    norm2 = np.abs(F.fz) ** 2 + np.abs(F.fzbar) ** 2
    return float(np.sum(mesh.areas * norm2 ** (q / 2.0)) ** (1.0 / q))


def holder_sides(mesh: TriMesh, F, p: float) -> tuple:
    """Both sides of ``[sum A |Df|^(2p/(p+1))]^(p+1) <= [sum A IK^p] [sum A J]^p``."""
    norm2 = np.abs(F.fz) ** 2 + np.abs(F.fzbar) ** 2
    q = 2.0 * p / (p + 1.0)
    A = mesh.areas
    lhs = float(np.sum(A * norm2 ** (q / 2.0)) ** (p + 1.0))
    rhs = float(np.sum(A * F.distortion ** p) * np.sum(A * F.jacobian) ** p)
    return lhs, rhs


def local_dirichlet(mesh: TriMesh, plmap, center: complex, rho: float, exact: bool = False) -> float:
    """``sum area * (|f_z|^2 + |f_zbar|^2)`` over B(center, rho).

    By default a triangle counts fully when its centroid lies in the ball.
    With ``exact`` each triangle is weighted by the area of its intersection
    with the ball, which keeps the region identical across refinements.
    """
    F = field(mesh, _images(plmap))
    dens = np.abs(F.fz) ** 2 + np.abs(F.fzbar) ** 2
    if exact:
        return float(np.sum(ball_areas(mesh, center, rho) * dens))
    sel = np.abs(mesh.centroids - center) < rho
    return float(np.sum(mesh.areas[sel] * dens[sel]))
