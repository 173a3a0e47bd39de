"""Parameter sweeps and refinement studies built on :func:`optimizer.solve`.

Every study returns a small result object with a fixed CSV schema and a JSON
summary.  Local quantities near the origin are integrated over the exact
intersection of each triangle with the ball, so the measured region does not
change when the mesh is refined.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field as dc_field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .calculus import PLMap, field
from .hopf import hopf_field, pole_fit
from .mesh import TriMesh, ball_areas, refine
from .optimizer import SolveConfig, SolveError, SolveReport, solve

__all__ = [
    "distance_to_identity",
    "ik_stddev",
    "transfer_map",
    "SweepRow",
    "SweepResult",
    "sweep_p",
    "BlowupRow",
    "BlowupResult",
    "blowup_study",
    "ExponentialRow",
    "ExponentialResult",
    "exponential_study",
    "strictly_increasing",
    "strictly_decreasing",
    "TREND_SLACK",
    "dumps",
]

log = logging.getLogger(__name__)

TREND_SLACK = 1e-10


def strictly_increasing(values: Sequence[float], slack: float = TREND_SLACK) -> bool:
    v = np.asarray(values, dtype=float)
    return len(v) >= 3 and bool(np.all(np.diff(v) > slack))


def strictly_decreasing(values: Sequence[float], slack: float = TREND_SLACK) -> bool:
    return strictly_increasing(-np.asarray(values, dtype=float), slack)


def distance_to_identity(mesh: TriMesh, plmap) -> tuple:
    """``(sum A ||Df - Id||_*, max |f(v) - v|)``.

    ``||.||_*`` is the sum of singular values; for ``Df - Id`` with Wirtinger
    parts ``(f_z - 1, f_zbar)`` it equals ``2 max(|f_z - 1|, |f_zbar|)``.
    """
    w = plmap.images if isinstance(plmap, PLMap) else np.asarray(plmap)
    F = field(mesh, w)
    nuc = 2.0 * np.maximum(np.abs(F.fz - 1.0), np.abs(F.fzbar))
    return float(np.sum(mesh.areas * nuc)), float(np.max(np.abs(w - mesh.vertices)))


def ik_stddev(mesh: TriMesh, plmap) -> float:
    """Area-weighted standard deviation of the per-triangle distortion."""
    F = field(mesh, plmap.images if isinstance(plmap, PLMap) else plmap)
    A = mesh.areas / mesh.total_area
    m = float(np.sum(A * F.distortion))
    return float(np.sqrt(np.sum(A * (F.distortion - m) ** 2)))


def transfer_map(plmap: PLMap, mesh: TriMesh) -> Optional[PLMap]:
    """Evaluate ``plmap`` at the vertices of a refined mesh; ``None`` if not feasible.

    Boundary vertices keep identity values and the pinned vertex its target.
    """
    old = plmap.mesh
    z = mesh.vertices
    where = old.locate(z)
    if np.any(where < 0) and not np.all(mesh.boundary[where < 0]):
        return None
    w = np.array(z, dtype=complex)
    inside = where >= 0
    c = old.corners[where[inside]]
    zi = z[inside]
    z0, z1, z2 = c[:, 0], c[:, 1], c[:, 2]
    area = np.imag(np.conj(z1 - z0) * (z2 - z0))
    l1 = np.imag(np.conj(z2 - zi) * (z0 - zi)) / area
    l2 = np.imag(np.conj(z0 - zi) * (z1 - zi)) / area
    l0 = 1.0 - l1 - l2
    tri = old.triangles[where[inside]]
    img = plmap.images
    w[inside] = l0 * img[tri[:, 0]] + l1 * img[tri[:, 1]] + l2 * img[tri[:, 2]]
    if plmap.boundary_condition == "identity":
        w[mesh.boundary] = z[mesh.boundary]
    if mesh.pinned_index is not None and plmap.pin_target is not None:
        w[mesh.pinned_index] = plmap.pin_target
    J = field(mesh, w).jacobian
    if np.any(J <= 0):
        return None
    return PLMap(mesh, w, plmap.boundary_condition, plmap.pin_target)


def _write_rows(path, rows) -> None:
    if not rows:
        return
    keys = list(asdict(rows[0]).keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_cell(v) for v in asdict(r).values()])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# p sweeps


@dataclass
class SweepRow:
    p: float
    converged: bool
    iterations: int
    energy: float
    w11_distance: float
    max_displacement: float
    ik_stddev: float
    mu_stddev: float
    pole_slope: float
    cr_residual_median: float
    min_jacobian: float


@dataclass
class SweepResult:
    rows: list  # converged rows, ordered by p
    failures: list = dc_field(default_factory=list)  # rows whose solve did not converge
    reports: dict = dc_field(default_factory=dict, repr=False)

    def column(self, name: str, p_values: Optional[Sequence[float]] = None) -> list:
        by_p = {r.p: getattr(r, name) for r in self.rows}
        keys = sorted(by_p) if p_values is None else p_values
        return [by_p[p] for p in keys]

    def write_csv(self, path) -> None:
        _write_rows(path, self.rows + self.failures)

    def to_json(self) -> dict:
        return {"rows": [{k: _jsonable(v) for k, v in asdict(r).items()} for r in self.rows],
                "failures": [{k: _jsonable(v) for k, v in asdict(r).items()} for r in self.failures]}


def _sweep_row(config: SolveConfig, report: SolveReport) -> SweepRow:
    mesh = report.map.mesh
    w11, dmax = distance_to_identity(mesh, report.map)
    F = field(mesh, report.map)
    mu = np.abs(np.where(np.isnan(F.beltrami), 0.0, F.beltrami))
    A = mesh.areas / mesh.total_area
    mu_sd = float(np.sqrt(np.sum(A * (mu - np.sum(A * mu)) ** 2)))
    slope, cr = np.nan, np.nan
    if config.side == "inverse":
        hf = hopf_field(mesh, report.map, config.p)
        cr = float(np.nanmedian(hf.cr_residual))
        if config.pin_target != 0:
            try:
                slope = pole_fit(hf, mesh.pin_location).loglog_slope
            except ValueError:
                pass
    return SweepRow(config.p, report.converged, report.iterations, report.energy.value, w11, dmax,
                    ik_stddev(mesh, report.map), mu_sd, slope, cr, report.min_jacobian)


def sweep_p(base: SolveConfig, p_list: Sequence[float], warm_start: bool = True,
            mesh: Optional[TriMesh] = None) -> SweepResult:
    """Solve for each p in order, warm-starting from the previous solution.

    ``p_list`` must be monotone (either direction); the walk follows the given
    order, the result rows are sorted by p.
    """
    p_list = [float(p) for p in p_list]
    d = np.diff(p_list)
    if len(p_list) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("p_list must be strictly monotone")
    if base.kind == "power" and min(p_list) <= 1:
        raise ValueError("p values must exceed 1")
    mesh = mesh if mesh is not None else base.build_mesh()
    rows, failures, reports = [], [], {}
    prev = None
    for p in p_list:
        cfg = replace(base, p=p)
        try:
            rep = solve(cfg, mesh=mesh, start=prev if warm_start else None)
        except SolveError as exc:
            log.warning("sweep p=%g failed: %s", p, exc)
            failures.append(SweepRow(p, False, 0, np.nan, np.nan, np.nan, np.nan, np.nan,
                                     np.nan, np.nan, np.nan))
            continue
        row = _sweep_row(cfg, rep)
        reports[p] = rep
        (rows if rep.converged else failures).append(row)
        prev = rep.map
    rows.sort(key=lambda r: r.p)
    return SweepResult(rows, failures, reports)


# ---------------------------------------------------------------------------
# refinement studies


def _refined_meshes(config: SolveConfig, levels: int, center: complex, radius: float,
                    mesh: Optional[TriMesh] = None):
    mesh = mesh if mesh is not None else config.build_mesh()
    out = [mesh]
    for _ in range(levels - 1):
        mesh = refine(mesh, center, radius)
        out.append(mesh)
    return out


def _level_solve(config: SolveConfig, mesh: TriMesh, prev: Optional[PLMap]) -> SolveReport:
    start = transfer_map(prev, mesh) if prev is not None else None
    return solve(config, mesh=mesh, start=start)


@dataclass
class BlowupRow:
    level: int
    n_vertices: int
    n_triangles: int
    pin_mesh_size: float
    converged: bool
    iterations: int
    energy: float
    local_dirichlet: float
    local_dirichlet_centroid: float
    total_dirichlet: float
    ik_min_near_pin: float
    ik_max_near_pin: float
    min_jacobian: float


@dataclass
class BlowupResult:
    side: str
    rho: float
    center: complex
    rows: list

    @property
    def local_dirichlet(self) -> list:
        return [r.local_dirichlet for r in self.rows]

    @property
    def increments(self) -> list:
        return list(np.diff(self.local_dirichlet))

    def write_csv(self, path) -> None:
        _write_rows(path, self.rows)

    def to_json(self) -> dict:
        return {"side": self.side, "rho": self.rho, "center": [self.center.real, self.center.imag],
                "increments": [float(x) for x in self.increments],
                "rows": [{k: _jsonable(v) for k, v in asdict(r).items()} for r in self.rows]}


def blowup_study(config: SolveConfig, levels: int = 3, rho: float = 0.1,
                 refine_radius: Optional[float] = None, mesh: Optional[TriMesh] = None) -> BlowupResult:
    """Local Dirichlet energy on B(pin, rho) across nested refinements of B(pin, refine_radius).

    The ball is centred on the mesh pin: the origin for forward solves, the
    image point ``r`` for inverse-side solves.  ``refine_radius`` defaults to
    ``2 rho``.  Each level is warm-started from the previous solution.
    """
    if levels < 3:
        raise ValueError("a refinement study needs at least 3 levels")
    center = complex(config.mesh_pin)
    meshes = _refined_meshes(config, levels, center, 2.0 * rho if refine_radius is None else refine_radius,
                             mesh)
    guard = meshes[0].local_size(center)
    if rho < 0.5 * guard:
        raise ValueError(f"rho = {rho} does not resolve the base mesh size {guard:.3g}")
    rows, prev = [], None
    for lev, m in enumerate(meshes):
        rep = _level_solve(config, m, prev)
        prev = rep.map
        F = field(m, rep.map)
        dens = np.abs(F.fz) ** 2 + np.abs(F.fzbar) ** 2
        ba = ball_areas(m, center, rho)
        cen = np.abs(m.centroids - center) < rho
        near = ba > 0
        rows.append(BlowupRow(lev, m.n_vertices, m.n_triangles, m.local_size(center), rep.converged,
                              rep.iterations, rep.energy.value, float(np.sum(ba * dens)),
                              float(np.sum(m.areas[cen] * dens[cen])), float(np.sum(m.areas * dens)),
                              float(np.min(F.distortion[near])), float(np.max(F.distortion[near])),
                              rep.min_jacobian))
        log.info("blowup level %d: %d vertices, local Dirichlet %.8g", lev, m.n_vertices,
                 rows[-1].local_dirichlet)
    return BlowupResult(config.side, rho, center, rows)


@dataclass
class ExponentialRow:
    level: int
    n_vertices: int
    converged: bool
    iterations: int
    energy: float
    q_probe: float
    log_q_probe: float
    mass: float
    ik_max: float


@dataclass
class ExponentialResult:
    p: float
    q: float
    rho: float
    rows: list

    @property
    def q_probe(self) -> list:
        return [r.q_probe for r in self.rows]

    def write_csv(self, path) -> None:
        _write_rows(path, self.rows)

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "rho": self.rho,
                "rows": [{k: _jsonable(v) for k, v in asdict(r).items()} for r in self.rows]}


def exponential_study(config: SolveConfig, q_probe: Optional[float] = None, levels: int = 3,
                      rho: float = 0.1, refine_radius: Optional[float] = None,
                      mesh: Optional[TriMesh] = None) -> ExponentialResult:
    """Solve the exponential problem per refinement level and probe ``exp(q IK)`` near the origin.

    The probe is ``(1/area) sum |T ∩ B(0, rho)| exp(q IK_T)``, accumulated in
    log-sum-exp form; ``mass`` is the same sum of ``IK exp(p IK)``.
    ``q_probe`` defaults to ``1.5 p``.
    """
    if config.kind != "exponential":
        raise ValueError("exponential_study needs an exponential configuration")
    q = 1.5 * config.p if q_probe is None else float(q_probe)
    if not q > config.p > 0:
        raise ValueError("need q_probe > p > 0")
    if levels < 3:
        raise ValueError("a refinement study needs at least 3 levels")
    center = 0j
    meshes = _refined_meshes(config, levels, center, 2.0 * rho if refine_radius is None else refine_radius,
                             mesh)
    rows, prev = [], None
    for lev, m in enumerate(meshes):
        rep = _level_solve(config, m, prev)
        prev = rep.map
        K = field(m, rep.map).distortion
        ba = ball_areas(m, center, rho)
        pos = ba > 0
        lq = float(logsumexp(q * K[pos], b=ba[pos]) - np.log(m.total_area))
        lm = float(logsumexp(config.p * K[pos] + np.log(K[pos]), b=ba[pos]) - np.log(m.total_area))
        rows.append(ExponentialRow(lev, m.n_vertices, rep.converged, rep.iterations, rep.energy.value,
                                   float(np.exp(lq)), lq, float(np.exp(lm)), float(np.max(K))))
    return ExponentialResult(config.p, q, rho, rows)


def dumps(result) -> str:
    return json.dumps(result.to_json(), indent=2, sort_keys=True)
