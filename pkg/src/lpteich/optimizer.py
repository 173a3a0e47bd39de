"""Constrained minimization of the distortion energies over vertex images.

Boundary and pinned vertices are eliminated; the remaining images are the
decision variables.  Iterates stay inside the open set of orientation
preserving maps because the line search tests every trial point for
positive Jacobians before evaluating the energy.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .calculus import MU_CLAMP, PLMap, field, gradient_operators
from .energy import EnergyReport, Functional
from .mesh import TriMesh, build_disk_mesh

__all__ = [
    "OptimizerSettings",
    "SolveConfig",
    "SolveReport",
    "SolveError",
    "LineSearchFailure",
    "BumpField",
    "default_test_fields",
    "initial_map",
    "line_search",
    "minimize",
    "solve",
    "inner_variation_residual",
    "mobius",
]

log = logging.getLogger(__name__)

ROUNDOFF = 1e-13


class SolveError(RuntimeError):
    pass


class LineSearchFailure(RuntimeError):
    pass


@dataclass
class OptimizerSettings:
    max_iterations: int = 3000
    gradient_tolerance: float = 1e-8
    shrink: float = 0.5
    memory: int = 12
    armijo: float = 1e-4


@dataclass
class SolveConfig:
    """Inputs of one solve.

    ``pin_target`` is the image of the origin for the forward map, ``f(0) = t``.
    Data given as a displacement ``x`` (``f(0) = -x``) corresponds to ``t = -x``.  With
    ``side="inverse"`` the mesh is pinned at ``t`` and that vertex is sent to 0.
    """

    kind: str = "power"
    p: float = 2.0
    pin_target: complex = 0.0
    side: str = "forward"
    target_edge_length: float = 0.1
    grading_exponent: float = 0.0
    core_radius: Optional[float] = None
    optimizer: OptimizerSettings = dc_field(default_factory=OptimizerSettings)
    seed: int = 0
    perturbation: float = 0.0

    def __post_init__(self):
        self.pin_target = complex(self.pin_target)
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerSettings(**self.optimizer)
        if self.optimizer.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if abs(self.pin_target) >= 1:
            raise ValueError("|pin_target| must be < 1")
        if self.side not in ("forward", "inverse"):
            raise ValueError(f"side must be 'forward' or 'inverse', got {self.side!r}")

    @property
    def mesh_pin(self) -> complex:
        return self.pin_target if self.side == "inverse" else 0j

    @property
    def image_pin(self) -> complex:
        return 0j if self.side == "inverse" else self.pin_target

    @property
    def functional_kind(self) -> str:
        if self.side == "inverse" and self.kind == "power":
            return "inverse_power"
        return self.kind

    def build_mesh(self) -> TriMesh:
        return build_disk_mesh(self.target_edge_length, self.grading_exponent,
                               self.mesh_pin, core_radius=self.core_radius)

    def to_json(self) -> dict:
        d = asdict(self)
        t = self.pin_target
        d["pin_target"] = [t.real, t.imag]
        return d


@dataclass
class SolveReport:
    map: PLMap
    energy: EnergyReport
    iterations: int
    converged: bool
    message: str
    trace: list
    inner_variation_residuals: list
    min_jacobian: float
    config: Optional[SolveConfig] = None
    start_energy: float = np.nan

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json() if self.config is not None else None,
            "converged": self.converged,
            "message": self.message,
            "iterations": self.iterations,
            "energy": self.energy.to_json(),
            "start_energy": self.start_energy,
            "trace": [float(e) for e in self.trace],
            "inner_variation_residuals": [float(r) for r in self.inner_variation_residuals],
            "min_jacobian": self.min_jacobian,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# test fields for inner variations


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6 * s - 15) + 10)


@dataclass(frozen=True)
class BumpField:
    """Vector field ``factor(z) * cutoff(|z - hole|) * (1 - |z|^2)`` on the disk.

    The cutoff vanishes for ``|z - hole| <= inner`` and equals 1 beyond
    ``outer``, so the field vanishes near the pin and on the unit circle.
    """

    hole: complex = 0j
    inner: float = 0.2
    outer: float = 0.4
    factor: str = "1"

    _FACTORS = {
        "1": lambda z: np.ones_like(z),
        "z": lambda z: z,
        "zbar": lambda z: np.conj(z),
        "z2": lambda z: z * z,
        "zbar2": lambda z: np.conj(z) ** 2,
    }

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z - self.hole)
        cut = _smoothstep((r - self.inner) / (self.outer - self.inner))
        return self._FACTORS[self.factor](z) * cut * (1.0 - np.abs(z) ** 2)


def default_test_fields(hole: complex = 0j, inner: float = 0.2, outer: float = 0.4) -> list:
    """The fixed bank of five fields used by the stationarity diagnostics."""
    return [BumpField(complex(hole), inner, outer, f) for f in ("1", "z", "zbar", "z2", "zbar2")]


def sample_test_field(mesh: TriMesh, phi, tol: float = 1e-12) -> np.ndarray:
    """Vertex samples of ``phi``; rejects fields not vanishing on the boundary and pin star."""
    vals = np.array(phi(mesh.vertices) if callable(phi) else phi, dtype=complex)
    if vals.shape != (mesh.n_vertices,):
        raise ValueError("test field must give one value per vertex")
    if np.any(np.abs(vals[mesh.boundary]) > tol):
        raise ValueError("test field does not vanish on the boundary")
    if mesh.pinned_index is not None:
        star = np.append(mesh.neighbors[mesh.pinned_index], mesh.pinned_index)
        if np.any(np.abs(vals[star]) > tol):
            raise ValueError("test field does not vanish near the pinned vertex")
        vals[star] = 0.0
    vals[mesh.boundary] = 0.0
    return vals


def inner_variation_residual(mesh: TriMesh, plmap, p: float, test_fields: Sequence,
                             kind: str = "power", signed: bool = False) -> list:
    """Discrete inner-variational residual for each test field.

    For the power energy this is
    ``|sum A IK^p phi_z - 2p sum A IK^p conj(mu)/(1+|mu|^2) phi_zbar|``;
    the exponential and inverse-side energies use the corresponding first
    variation under ``f -> f o (id + t phi)^-1``.  With ``signed`` the complex
    values are returned instead of their moduli.
    """
    w = plmap.images if isinstance(plmap, PLMap) else np.asarray(plmap, dtype=complex)
    F = field(mesh, w)
    if np.any(F.reversed):
        raise ValueError("map is not orientation preserving")
    Dz, Dzb = gradient_operators(mesh)
    A = mesh.areas
    K = F.distortion
    mu = np.where(np.isnan(F.beltrami), 0.0, F.beltrami)
    amu = np.abs(mu)
    mu = np.where(amu > MU_CLAMP, mu * (MU_CLAMP / np.maximum(amu, MU_CLAMP)), mu)
    s = np.conj(mu) / (1.0 + np.abs(mu) ** 2)
    if kind == "power":
        g, gK = K ** p, p * K ** p
        jac = 1.0
    elif kind == "exponential":
        g = np.exp(p * K)
        gK = p * K * g
        jac = 1.0
    elif kind == "inverse_power":
        g = np.zeros_like(K)
        gK = p * K ** p
        jac = F.jacobian
    else:
        raise ValueError(f"unknown kind {kind!r}")
    out = []
    for phi in test_fields:
        v = sample_test_field(mesh, phi)
        pz, pzb = Dz @ v, Dzb @ v
        r = np.sum(A * g * pz) - 2.0 * np.sum(A * gK * jac * s * pzb)
        out.append(complex(r) if signed else float(abs(r)))
    return out


# ---------------------------------------------------------------------------
# initial maps


def mobius(z, c: complex):
    """Disk automorphism ``(z + c) / (1 + conj(c) z)`` sending 0 to ``c``."""
    return (z + c) / (1.0 + np.conj(c) * z)


def _stiffness(mesh: TriMesh) -> sp.csr_matrix:
    Dz, _ = gradient_operators(mesh)
    L = 4.0 * (Dz.conj().T @ sp.diags(mesh.areas) @ Dz)
    return sp.csr_matrix(L.real)


def harmonic_extension(mesh: TriMesh, images: np.ndarray, free: np.ndarray) -> np.ndarray:
    L = _stiffness(mesh)
    fixed = ~free
    w = np.array(images, dtype=complex)
    Lff = L[free][:, free].tocsc()
    rhs = -(L[free][:, fixed] @ w[fixed])
    w[free] = splu(Lff).solve(rhs.real) + 1j * splu(Lff).solve(rhs.imag)
    return w


def _feasible(functional: Functional, w) -> bool:
    return functional.feasible(w)


def _perturb(functional: Functional, w: np.ndarray, free: np.ndarray, amplitude: float,
             seed: int) -> np.ndarray:
    mesh = functional.mesh
    rng = np.random.default_rng(seed)
    h = np.median(mesh.edge_lengths)
    noise = rng.standard_normal(mesh.n_vertices) + 1j * rng.standard_normal(mesh.n_vertices)
    noise = np.where(free, noise, 0.0) * amplitude * h
    for _ in range(60):
        trial = w + noise
        if _feasible(functional, trial):
            return trial
        noise = noise * 0.5
    return w


def initial_map(config: SolveConfig, mesh: Optional[TriMesh] = None,
                functional: Optional[Functional] = None) -> PLMap:
    """Feasible start: interior Möbius translation with identity boundary values.

    If resetting the boundary flips triangles, the Möbius map is blended with
    the identity using the largest feasible weight, and the pinned vertex is
    then carried to its target by a continuation that keeps every iterate
    orientation preserving.
    """
    mesh = mesh if mesh is not None else config.build_mesh()
    functional = functional or Functional(mesh, config.functional_kind, max(config.p, 1.0))
    z = mesh.vertices
    a, b = config.mesh_pin, config.image_pin
    k = mesh.pinned_index
    if k is None or mesh.vertices[k] != a:
        raise SolveError("mesh has no vertex pinned at the required location")
    interior = ~mesh.boundary
    target = mobius(mobius(z, -a), b)
    target[k] = b

    def blend(s):
        w = np.where(interior, (1.0 - s) * z + s * target, z)
        if s == 1.0:
            w[k] = b
        return w

    w = blend(1.0)
    if not _feasible(functional, w):
        # keep a margin so the continuation has room to move
        lo, hi = 0.0, 1.0
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if functional.min_jacobian(blend(mid)) >= 0.25:
                lo = mid
            else:
                hi = mid
        w = blend(lo)
        w = _continue_pin(functional, w, k, b, config)
    if config.perturbation > 0:
        free = mesh.free_mask
        w = _perturb(functional, w, free, config.perturbation, config.seed)
    return PLMap(mesh, w, "identity", b)


def _continue_pin(functional: Functional, w: np.ndarray, k: int, b: complex,
                  config: SolveConfig, max_steps: int = 200) -> np.ndarray:
    """Move vertex ``k``'s image to ``b`` through feasible maps."""
    mesh = functional.mesh
    a = mesh.vertices[k]
    R = max(1.0 - abs(a), 1e-3)
    cone = np.clip(1.0 - np.abs(mesh.vertices - a) / R, 0.0, 1.0)
    cone[mesh.boundary] = 0.0
    free = mesh.free_mask
    w = w.copy()
    for _ in range(max_steps):
        delta = b - w[k]
        if delta == 0:
            return w
        lam = 1.0
        while lam > 1e-12:
            trial = w + lam * delta * cone
            if lam == 1.0:
                trial[k] = b
            if _feasible(functional, trial):
                break
            lam *= 0.5
        else:
            raise SolveError("pin continuation could not find a feasible step")
        w = trial
        if lam < 1.0:
            w = minimize(functional, w, free, OptimizerSettings(max_iterations=40,
                         gradient_tolerance=config.optimizer.gradient_tolerance)).images
    if w[k] != b:
        raise SolveError("pin continuation did not reach the target")
    return w


def _prescribed_start(functional: Functional, boundary_images: np.ndarray,
                      config: SolveConfig) -> np.ndarray:
    mesh = functional.mesh
    free = mesh.free_mask
    w = mesh.vertices.astype(complex).copy()
    w[mesh.boundary] = boundary_images[mesh.boundary]
    w = harmonic_extension(mesh, w, free)
    if not _feasible(functional, w):
        raise SolveError("harmonic extension of the boundary data is not orientation preserving")
    if config.perturbation > 0:
        w = _perturb(functional, w, free, config.perturbation, config.seed)
    return w


# ---------------------------------------------------------------------------
# L-BFGS with a feasibility-guarded Armijo line search


def line_search(functional: Functional, w: np.ndarray, f0: float, g: np.ndarray,
                direction: np.ndarray, step: float = 1.0, shrink: float = 0.5,
                armijo: float = 1e-4, min_step: float = 1e-16,
                free: Optional[np.ndarray] = None):
    """Backtracking step satisfying J > 0 on every triangle and sufficient decrease.

    Returns ``(step, w_new, f_new, g_new)``; raises :class:`LineSearchFailure`
    when the step underflows.  Feasibility is checked before the energy.  Once
    energy differences drop below round-off the sufficient-decrease test is
    replaced by its derivative form, which can accept a change of a few ulps.
    """
    slope = float(np.real(np.vdot(g, direction)))
    if slope >= 0:
        raise LineSearchFailure("not a descent direction")
    t = step
    while t >= min_step:
        trial = w + t * direction
        if functional.feasible(trial):
            f1, g1 = functional.value_and_grad(trial)
            if f1 <= f0 + armijo * t * slope and f1 < f0:
                return t, trial, f1, g1
            if abs(f1 - f0) <= ROUNDOFF * abs(f0):
                # energy change below resolution: approximate Armijo test on the
                # directional derivative at the trial point
                g1f = np.where(free, g1, 0.0) if free is not None else g1
                if float(np.real(np.vdot(g1f, direction))) <= -(1.0 - 2.0 * armijo) * slope:
                    return t, trial, f1, g1
        t *= shrink
    raise LineSearchFailure(f"step underflow (slope {slope:.3e})")


class _Precond:
    """Inverse of the free-vertex stiffness matrix, applied to complex vectors."""

    def __init__(self, mesh: TriMesh, free: np.ndarray):
        L = _stiffness(mesh)[free][:, free].tocsc()
        self.lu = splu(L)
        self.free = free

    def __call__(self, g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(g)
        gf = g[self.free]
        out[self.free] = self.lu.solve(np.ascontiguousarray(gf.real)) + \
            1j * self.lu.solve(np.ascontiguousarray(gf.imag))
        return out


@dataclass
class _MinResult:
    images: np.ndarray
    value: float
    gradient: np.ndarray
    iterations: int
    converged: bool
    message: str
    trace: list


def minimize(functional: Functional, w0: np.ndarray, free: np.ndarray,
             settings: OptimizerSettings, callback: Optional[Callable] = None) -> _MinResult:
    """Limited-memory BFGS over the free vertex images, preconditioned by the stiffness matrix."""
    mesh = functional.mesh
    w = np.array(w0, dtype=complex)
    f, g = functional.value_and_grad(w)
    if g is None:
        raise SolveError("infeasible start: some triangle is not orientation preserving")
    g = np.where(free, g, 0.0)
    trace = [f]
    if not free.any():
        return _MinResult(w, f, g, 0, True, "no free variables", trace)
    precond = _Precond(mesh, free)
    pairs: deque = deque(maxlen=settings.memory)
    gamma = mesh.total_area / (2.0 * max(functional.p, 1.0))
    max_move = 0.5 * float(np.min(mesh.edge_lengths))
    message = "max iterations reached"
    converged = False
    it = 0
    for it in range(1, settings.max_iterations + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= settings.gradient_tolerance:
            converged, message, it = True, "gradient tolerance reached", it - 1
            break
        # two-loop recursion with H0 = gamma * L^-1
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            al = rho * float(np.real(np.vdot(s, q)))
            alphas.append(al)
            q = q - al * y
        r = gamma * precond(q)
        for (s, y, rho), al in zip(pairs, reversed(alphas)):
            be = rho * float(np.real(np.vdot(y, r)))
            r = r + (al - be) * s
        d = -r
        if float(np.real(np.vdot(g, d))) >= 0:
            pairs.clear()
            d = -gamma * precond(g)
        if not pairs:
            # no curvature information yet: keep the first trial inside the mesh scale
            big = float(np.max(np.abs(d)))
            if big > max_move:
                d *= max_move / big
        try:
            _, w_new, f_new, g_new = line_search(functional, w, f, g, d, 1.0,
                                                 settings.shrink, settings.armijo, free=free)
        except LineSearchFailure as exc:
            if pairs:
                pairs.clear()
                try:
                    d = -gamma * precond(g)
                    big = float(np.max(np.abs(d)))
                    if big > max_move:
                        d *= max_move / big
                    _, w_new, f_new, g_new = line_search(functional, w, f, g, d, 1.0,
                                                         settings.shrink, settings.armijo, free=free)
                except LineSearchFailure as exc2:
                    message = f"line search failed: {exc2}"
                    it -= 1
                    break
            else:
                message = f"line search failed: {exc}"
                it -= 1
                break
        g_new = np.where(free, g_new, 0.0)
        s = w_new - w
        y = g_new - g
        sy = float(np.real(np.vdot(s, y)))
        if sy > 1e-300:
            pairs.append((s, y, 1.0 / sy))
            Hy = precond(y)
            yHy = float(np.real(np.vdot(y, Hy)))
            if yHy > 0:
                gamma = sy / yHy
        w, f, g = w_new, f_new, g_new
        trace.append(f)
        if callback is not None:
            callback(it, w, f, g)
    else:
        it = settings.max_iterations
        if float(np.linalg.norm(g)) <= settings.gradient_tolerance:
            converged, message = True, "gradient tolerance reached"
    return _MinResult(w, f, g, it, converged, message, trace)


def solve(config: SolveConfig, mesh: Optional[TriMesh] = None, start: Optional[PLMap] = None,
          boundary_images: Optional[np.ndarray] = None,
          test_fields: Optional[Sequence] = None) -> SolveReport:
    """Minimize the configured energy.

    ``boundary_images`` switches to prescribed boundary values (no pin unless
    the mesh carries one); ``start`` warm-starts from a feasible map.
    """
    if config.kind == "power" and config.p <= 1:
        raise SolveError("the power energy is only minimized for p > 1")
    mesh = mesh if mesh is not None else config.build_mesh()
    functional = Functional(mesh, config.functional_kind, config.p)
    free = mesh.free_mask
    if start is not None:
        if start.mesh is not mesh and start.mesh.n_vertices != mesh.n_vertices:
            raise SolveError("start map lives on a different mesh")
        w0 = np.array(start.images)
        bc, pin_t = start.boundary_condition, start.pin_target
    elif boundary_images is not None:
        w0 = _prescribed_start(functional, np.asarray(boundary_images, dtype=complex), config)
        bc = "prescribed"
        pin_t = None if mesh.pinned_index is None else complex(w0[mesh.pinned_index])
    else:
        start_map = initial_map(config, mesh, functional)
        w0, bc, pin_t = np.array(start_map.images), "identity", start_map.pin_target
        if config.functional_kind == "exponential":
            # the Möbius start can carry distortions whose exponential is
            # astronomically large; relax with the quadratic power energy first
            pre = Functional(mesh, "power", 2.0)
            w0 = minimize(pre, w0, free, OptimizerSettings(max_iterations=500,
                          gradient_tolerance=1e-6)).images
    if not functional.feasible(w0):
        raise SolveError("infeasible start: some triangle is not orientation preserving")
    start_energy = functional.value(w0)
    res = minimize(functional, w0, free, config.optimizer)
    plmap = PLMap(mesh, res.images, bc, pin_t)
    report = functional.report(res.images)
    if test_fields is None and mesh.domain.kind == "disk" and mesh.pinned_index is not None:
        k = mesh.pinned_index
        star = float(np.max(np.abs(mesh.vertices[mesh.neighbors[k]] - mesh.vertices[k])))
        inner = max(0.2, 1.05 * star)
        if inner + 0.2 < 1.0 - abs(mesh.vertices[k]):
            test_fields = default_test_fields(mesh.vertices[k], inner, inner + 0.2)
    residuals = []
    if test_fields:
        residuals = inner_variation_residual(mesh, plmap, config.p, test_fields,
                                             kind=config.functional_kind)
    min_j = functional.min_jacobian(res.images)
    converged = res.converged and min_j > 0
    log.info("solve %s p=%g: %s after %d iterations, E=%.12g", config.functional_kind,
             config.p, res.message, res.iterations, res.value)
    return SolveReport(plmap, report, res.iterations, converged, res.message, res.trace,
                       residuals, min_j, config, start_energy)
