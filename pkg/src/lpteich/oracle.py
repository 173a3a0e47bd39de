"""Closed-form reference maps and problems with known answers.

Every numerical tolerance used by the studies is calibrated here first: the
affine maps are reproduced exactly by PL interpolation, the smooth maps
converge at first order, and the synthetic fields below have known residues
and Cauchy transforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .calculus import PLMap, field
from .energy import energy_inverse_power, energy_power, holder_sides
from .mesh import (TriMesh, build_annulus_mesh, build_disk_mesh, build_rectangle_mesh,
                   check_invariants)

__all__ = [
    "ReferenceMap",
    "OracleError",
    "evaluate",
    "sample_to_plmap",
    "GrotzschProblem",
    "grotzsch_problem",
    "InversePair",
    "inverse_pair",
    "invert",
    "NitscheScenario",
    "nitsche_annulus",
    "CalibrationCheck",
    "calibration_battery",
    "write_calibration_csv",
    "REFERENCE_KINDS",
]

REFERENCE_KINDS = ("identity", "affine_stretch", "radial_stretch", "mobius_translate",
                   "conjugate_perturbation", "boundary_bump")


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceMap:
    """A closed-form map.

    ``param`` is the stretch ``a`` for ``affine_stretch``, the exponent
    ``alpha`` for ``radial_stretch``, the translation ``t`` for
    ``mobius_translate`` and the amplitude ``eps`` for the two perturbations.
    ``boundary_bump`` is ``z + eps (1 - |z|^2)(1 + zbar)/2``, a disk self-map
    that is the identity on the unit circle.
    """

    kind: str
    param: complex = 0.0

    def __post_init__(self):
        if self.kind not in REFERENCE_KINDS:
            raise OracleError(f"unknown reference map {self.kind!r}")
        if self.kind == "affine_stretch" and not np.real(self.param) > 0:
            raise OracleError("affine stretch needs a > 0")
        if self.kind == "radial_stretch" and not np.real(self.param) > 0:
            raise OracleError("radial stretch needs alpha > 0")
        if self.kind == "mobius_translate" and abs(self.param) >= 1:
            raise OracleError("Möbius translation needs |t| < 1")

    @property
    def fixes_unit_circle(self) -> bool:
        if self.kind in ("identity", "boundary_bump"):
            return True
        if self.kind == "mobius_translate":
            return self.param == 0
        if self.kind == "radial_stretch":
            return True
        return False

    def derivatives(self, z):
        """Closed-form ``(f(z), f_z, f_zbar)`` for an array of points."""
        z = np.asarray(z, dtype=complex)
        one = np.ones_like(z)
        k, c = self.kind, self.param
        if k == "identity":
            return z.copy(), one, 0 * one
        if k == "affine_stretch":
            a = float(np.real(c))
            return a * z.real + 1j * z.imag, (a + 1) / 2 * one, (a - 1) / 2 * one
        if k == "radial_stretch":
            al = float(np.real(c))
            r = np.abs(z)
            safe = np.where(r > 0, r, 1.0)
            fz = np.where(r > 0, (al + 1) / 2 * safe ** (al - 1), 0.0)
            u = np.where(r > 0, z / safe, 0.0)
            fzb = np.where(r > 0, (al - 1) / 2 * safe ** (al - 1) * u * u, 0.0)
            return np.where(r > 0, safe ** (al - 1) * z, 0.0), fz.astype(complex), fzb.astype(complex)
        if k == "mobius_translate":
            t = complex(c)
            d = 1 + np.conj(t) * z
            return (z + t) / d, (1 - abs(t) ** 2) / d ** 2, 0 * one
        if k == "conjugate_perturbation":
            e = complex(c)
            return z + e * np.conj(z), one, e * one
        # boundary_bump
        e = complex(c)
        zb = np.conj(z)
        q = 1 - z * zb
        f = z + e * q * (1 + zb) / 2
        fz = 1 - e * zb * (1 + zb) / 2
        fzb = e * (q - z * (1 + zb)) / 2
        return f, fz, fzb

    def distortion(self, z):
        if self.kind == "radial_stretch":
            al = float(np.real(self.param))
            al = max(al, 1 / al)
            return np.full(np.shape(z), (al * al + 1) / (2 * al))
        _, fz, fzb = self.derivatives(z)
        a, b = np.abs(fz) ** 2, np.abs(fzb) ** 2
        return (a + b) / (a - b)


def evaluate(ref: ReferenceMap, z):
    """``(image, f_z, f_zbar, IK)`` at ``z`` (scalar or array)."""
    f, fz, fzb = ref.derivatives(z)
    K = ref.distortion(z)
    if np.ndim(z) == 0:
        return complex(f), complex(fz), complex(fzb), float(K)
    return f, fz, fzb, K


def sample_to_plmap(ref: ReferenceMap, mesh: TriMesh) -> PLMap:
    """Vertex-sampled interpolant; ``prescribed`` unless the map fixes the boundary."""
    w = ref.derivatives(mesh.vertices)[0]
    bc = "prescribed"
    if mesh.domain.kind == "disk" and ref.fixes_unit_circle:
        b = mesh.boundary
        if np.all(w[b] == mesh.vertices[b]):
            bc = "identity"
        else:
            # round-off of |z| = 1 on the polygonal boundary
            if np.max(np.abs(w[b] - mesh.vertices[b])) < 1e-12:
                w = w.copy()
                w[b] = mesh.vertices[b]
                bc = "identity"
    pin = None
    if mesh.pinned_index is not None:
        pin = complex(w[mesh.pinned_index])
    return PLMap(mesh, w, bc, pin)


# ---------------------------------------------------------------------------
# problems with known minimizers


@dataclass
class GrotzschProblem:
    a: float
    mesh: TriMesh
    boundary_images: np.ndarray
    minimizer: PLMap

    def energy(self, p: float) -> float:
        return ((self.a ** 2 + 1) / (2 * self.a)) ** p


def grotzsch_problem(a: float, target_edge_length: float = 0.1) -> GrotzschProblem:
    """Unit square mapped onto ``[0,a] x [0,1]`` with affine boundary values."""
    if a <= 0:
        raise OracleError("a must be positive")
    mesh = build_rectangle_mesh(1.0, 1.0, target_edge_length)
    ref = ReferenceMap("affine_stretch", a)
    w = ref.derivatives(mesh.vertices)[0]
    return GrotzschProblem(float(a), mesh, w, PLMap(mesh, w, "prescribed"))


def invert(ref: ReferenceMap, w, tol: float = 1e-14, max_iter: int = 50) -> np.ndarray:
    """Pointwise Newton inversion of a smooth orientation-preserving map."""
    w = np.asarray(w, dtype=complex)
    z = w.copy()
    for _ in range(max_iter):
        f, fz, fzb = ref.derivatives(z)
        r = w - f
        if np.max(np.abs(r)) <= tol:
            break
        J = np.abs(fz) ** 2 - np.abs(fzb) ** 2
        z = z + (np.conj(fz) * r - fzb * np.conj(r)) / J
    else:
        raise OracleError("Newton inversion did not converge")
    return z


@dataclass
class InversePair:
    ref: ReferenceMap
    f: PLMap  # on a disk mesh of the z-plane
    h: PLMap  # its inverse, on an independent disk mesh of the w-plane


def inverse_pair(eps: float = 0.1, target_edge_length: float = 0.05) -> InversePair:
    """A boundary-fixing diffeomorphism of the disk and its numerically inverted partner."""
    ref = ReferenceMap("boundary_bump", eps)
    mf = build_disk_mesh(target_edge_length)
    # offset the second mesh so that the two triangulations are unrelated
    mh = build_disk_mesh(target_edge_length, pin_location=0.05 + 0.03j)
    f = sample_to_plmap(ref, mf)
    zh = invert(ref, mh.vertices)
    zh[mh.boundary] = mh.vertices[mh.boundary]
    h = PLMap(mh, zh, "identity")
    return InversePair(ref, f, h)


@dataclass
class NitscheScenario:
    """Radial boundary data between the annuli ``A(1, R)`` and ``A(1, S)``."""

    R: float
    S: float
    mesh: TriMesh
    boundary_images: np.ndarray
    in_nitsche_range: bool

    def to_config(self) -> dict:
        return {"scenario": "nitsche_annulus", "R": self.R, "S": self.S,
                "in_nitsche_range": self.in_nitsche_range}


def nitsche_annulus(R: float, S: float, target_edge_length: float = 0.1) -> NitscheScenario:
    """Scenario generator only; no minimization claim is attached to it."""
    if not (R > 1 and S > 1):
        raise OracleError("need R > 1 and S > 1")
    mesh = build_annulus_mesh(1.0, R, target_edge_length)
    z = mesh.vertices
    w = np.where(np.abs(z) > 0.5 * (1 + R), z * (S / R), z)
    return NitscheScenario(float(R), float(S), mesh, np.where(mesh.boundary, w, z),
                           bool(R + 1 / R <= 2 * S))


# ---------------------------------------------------------------------------
# calibration battery


@dataclass
class CalibrationCheck:
    name: str
    value: float
    expected: float
    tolerance: float
    passed: bool
    note: str = ""


def _check(name, value, expected, tol, relative=False, note="") -> CalibrationCheck:
    err = abs(value - expected)
    if relative:
        err /= max(abs(expected), 1e-300)
    return CalibrationCheck(name, float(np.real(value)), float(np.real(expected)), tol,
                            bool(err <= tol), note)


def _at_least(name, value, bound, note="") -> CalibrationCheck:
    return CalibrationCheck(name, float(value), float(bound), 0.0, bool(value >= bound), note)


def calibration_battery(quick: bool = False) -> list:
    """Run every closed-form check; each entry records value, expectation and verdict."""
    from .hopf import cauchy_transform_F, hopf_field, hopf_from_values, pole_fit

    out = []
    for z0 in (0.3 + 0.2j, -0.5j):
        out.append(_check(f"affine_stretch(2) IK at {z0}", evaluate(ReferenceMap("affine_stretch", 2), z0)[3],
                          1.25, 1e-15))
    img, _, _, K = evaluate(ReferenceMap("mobius_translate", 0.3), 0.0)
    out.append(_check("mobius_translate(0.3) image of 0", abs(img - 0.3), 0.0, 1e-15))
    out.append(_check("mobius_translate(0.3) IK", K, 1.0, 1e-15))
    img, _, _, K = evaluate(ReferenceMap("radial_stretch", 2), 0.5)
    out.append(_check("radial_stretch(2) image of 0.5", abs(img - 0.25), 0.0, 1e-15))
    out.append(_check("radial_stretch(2) IK", K, 1.25, 1e-15))
    _, fz, fzb, _ = evaluate(ReferenceMap("radial_stretch", 2), 0.3 - 0.6j)
    a, b = abs(fz) ** 2, abs(fzb) ** 2
    out.append(_check("radial_stretch(2) IK from derivatives", (a + b) / (a - b), 1.25, 1e-12))

    # affine reproduction
    rect = build_rectangle_mesh(1.0, 1.0, 0.1)
    for a in (1.5, 2.0, 1 / 3):
        F = field(rect, sample_to_plmap(ReferenceMap("affine_stretch", a), rect))
        err = max(np.max(np.abs(F.fz - (a + 1) / 2)), np.max(np.abs(F.fzbar - (a - 1) / 2)))
        out.append(_check(f"affine_stretch({a:.4g}) reproduced exactly", err, 0.0, 1e-12))
    disk = build_disk_mesh(0.1)
    F = field(disk, sample_to_plmap(ReferenceMap("conjugate_perturbation", 0.2), disk))
    out.append(_check("conjugate_perturbation(0.2) IK", np.max(np.abs(F.distortion - 1.04 / 0.96)), 0.0, 1e-12))

    # first-order convergence of a smooth map
    errs = []
    for h in (0.1, 0.05):
        ann = build_annulus_mesh(0.5, 1.0, h)
        F = field(ann, sample_to_plmap(ReferenceMap("radial_stretch", 2), ann))
        errs.append(float(np.max(np.abs(F.distortion - 1.25))))
    out.append(_at_least("radial_stretch(2) IK error ratio h -> h/2", errs[0] / errs[1], 1.8))

    # closed-form energies
    g = grotzsch_problem(2.0)
    for p in (2, 3):
        E = energy_power(g.mesh, g.minimizer, p).value
        out.append(_check(f"Grötzsch a=2 linear energy p={p}", E, 1.25 ** p, 1e-12))
    wide = build_rectangle_mesh(2.0, 1.0, 0.1)
    ginv = sample_to_plmap(ReferenceMap("affine_stretch", 0.5), wide)
    out.append(_check("inverse-side energy of the a=1/2 stretch",
                      energy_inverse_power(wide, ginv, 2).value, 1.25 ** 2, 1e-10))
    pair = inverse_pair(0.1, 0.1 if quick else 0.05)
    Ef = energy_power(pair.f.mesh, pair.f, 2).value
    Eh = energy_inverse_power(pair.h.mesh, pair.h, 2).value
    out.append(_check("change of variables on the inverse pair", Eh, Ef, 5e-3, relative=True))
    lhs, rhs = holder_sides(pair.f.mesh, field(pair.f.mesh, pair.f), 2.0)
    out.append(_at_least("Hölder slack on the inverse pair", rhs - lhs, 0.0))

    # Hopf calibration
    hf = hopf_field(g.mesh, g.minimizer, 2.0)
    out.append(_check("Hopf field of the a=2 stretch", np.max(np.abs(hf.phi - 15 / 16)), 0.0, 1e-12))
    out.append(_check("CR residual of a constant field", np.nanmax(hf.cr_residual), 0.0, 1e-10))
    pin = -0.3
    gm = build_disk_mesh(0.05, 0.5, pin)
    c = gm.centroids
    simple = pole_fit(hopf_from_values(gm, 1 / (c - pin)), pin)
    out.append(_check("simple pole slope", simple.loglog_slope, -1.0, 0.1))
    out.append(_check("simple pole residue", abs(simple.laurent_coefficient - 1), 0.0, 0.05))
    double = pole_fit(hopf_from_values(gm, 1 / (c - pin) ** 2), pin)
    out.append(_check("double pole slope", double.loglog_slope, -2.0, 0.15))
    out.append(_check("double pole residue", abs(double.laurent_coefficient), 0.0, 0.05))
    const = pole_fit(hopf_from_values(gm, np.full(len(c), 0.7 - 0.2j)), pin)
    out.append(_check("constant field residue", abs(const.laurent_coefficient), 0.0, 1e-10))
    out.append(_check("constant field slope", const.loglog_slope, 0.0, 1e-10))

    cm = build_disk_mesh(0.1 if quick else 0.05)
    Fc = cauchy_transform_F(cm, None, 1.0, density=np.ones(cm.n_triangles))
    inner = ~cm.boundary & (np.abs(cm.vertices) > 0.2)
    rel = np.max(np.abs(Fc[inner] - np.conj(cm.vertices[inner])) / np.abs(cm.vertices[inner]))
    out.append(_check("Cauchy transform of a constant density", rel, 0.0, 0.05))

    check_invariants(disk)
    return out


def write_calibration_csv(checks: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "value", "expected", "tolerance", "passed"])
        for c in checks:
            w.writerow([c.name, repr(c.value), repr(c.expected), repr(c.tolerance), int(c.passed)])
