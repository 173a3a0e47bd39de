"""Command-line entry point: ``lpteich {solve,sweep,blowup,hopf,oracle}``.

Configs are INI files with the sections ``[problem]``, ``[mesh]``,
``[optimizer]`` and ``[study]``; every key is validated and unknown keys are
rejected.  Exit codes: 0 success, 2 configuration error, 3 solver or
tolerance failure (outputs are still written).
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field as dc_field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .calculus import load_plmap, save_plmap
from .experiments import blowup_study, exponential_study, sweep_p
from .hopf import cauchy_transform_F, hopf_field, pole_fit, write_vertex_csv
from .mesh import MeshError, load_mesh, mesh_statistics, save_mesh
from .optimizer import OptimizerSettings, SolveConfig, SolveError, solve
from .oracle import calibration_battery, grotzsch_problem, nitsche_annulus, write_calibration_csv

__all__ = ["main", "ConfigError", "RunConfig", "RunManifest", "parse_config", "load_config"]

log = logging.getLogger("lpteich")

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3


class ConfigError(ValueError):
    pass


def _float(s):
    return float(s)


def _complex(s):
    return complex(s.replace(" ", ""))


def _floats(s):
    return [float(x) for x in s.replace(",", " ").split()]


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if s.strip().lower() in ("", "none") else float(s)


SCHEMA = {
    "problem": {
        "kind": str, "p": _float, "pin_target": _complex, "x": _float, "side": str,
        "seed": int, "perturbation": _float, "scenario": str,
    },
    "mesh": {"target_edge_length": _float, "grading_exponent": _float, "core_radius": _opt_float},
    "optimizer": {"max_iterations": int, "gradient_tolerance": _float, "shrink": _float,
                  "memory": int, "armijo": _float},
    "study": {
        "p_list": _floats, "levels": int, "rho": _float, "refine_radius": _opt_float,
        "q_probe": _opt_float, "radii": _floats, "map_file": str, "mesh_file": str,
        "a": _float, "R": _float, "S": _float, "cauchy": _bool, "quick": _bool,
    },
}
SCENARIOS = ("pinned_disk", "grotzsch", "nitsche_annulus")


@dataclass
class RunConfig:
    solve: SolveConfig
    scenario: str = "pinned_disk"
    study: dict = dc_field(default_factory=dict)
    source: dict = dc_field(default_factory=dict)

    def echo(self) -> dict:
        return {"solve": self.solve.to_json(), "scenario": self.scenario,
                "study": {k: v for k, v in self.study.items()}}


def parse_config(text: str, name: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    values = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{name}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{name}: unknown key '{section}.{key}'")
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{name}: bad value for '{section}.{key}': {exc}") from exc
    prob = dict(values["problem"])
    scenario = prob.pop("scenario", "pinned_disk")
    if scenario not in SCENARIOS:
        raise ConfigError(f"{name}: unknown value for 'problem.scenario': {scenario!r}")
    if "x" in prob:
        if "pin_target" in prob:
            raise ConfigError(f"{name}: give either 'problem.x' or 'problem.pin_target', not both")
        prob["pin_target"] = -prob.pop("x")
    bad_kind = prob.get("kind", "power")
    if bad_kind not in ("power", "exponential"):
        raise ConfigError(f"{name}: unknown value for 'problem.kind': {bad_kind!r}")
    p = prob.get("p", 2.0)
    if (bad_kind == "power" and p <= 1) or p <= 0:
        raise ConfigError(f"{name}: 'problem.p' = {p} is outside the admissible range")
    try:
        opt = OptimizerSettings(**values["optimizer"])
        cfg = SolveConfig(**prob, **values["mesh"], optimizer=opt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    return RunConfig(cfg, scenario, values["study"], values)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


@dataclass
class RunManifest:
    command: str
    config: dict
    tool_version: str
    mesh_hash: Optional[str]
    wall_time: float
    outputs: list
    exit_code: int

    def write(self, outdir: Path) -> None:
        missing = [f for f in self.outputs if not (outdir / f).is_file() or (outdir / f).stat().st_size == 0]
        if missing and self.exit_code == EXIT_OK:
            raise RuntimeError(f"declared outputs missing or empty: {missing}")
        (outdir / "manifest.json").write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


class _Run:
    """Collects outputs of one subcommand."""

    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.outputs: list = []
        self.mesh_hash: Optional[str] = None

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.outdir / name

    def text(self, name: str, content: str) -> None:
        self.path(name).write_text(content if content.endswith("\n") else content + "\n")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# subcommands


def _pinned_solve(rc: RunConfig, run: _Run) -> int:
    cfg = rc.solve
    mesh = cfg.build_mesh()
    run.mesh_hash = mesh.digest()
    rep = solve(cfg, mesh=mesh)
    save_mesh(mesh, run.path("mesh.txt"))
    save_plmap(rep.map, run.path("map.txt"))
    rep.energy.write_csv(run.path("triangles.csv"))
    run.text("report.json", rep.dumps())
    return EXIT_OK if rep.converged else EXIT_FAILURE


def _prescribed_solve(rc: RunConfig, run: _Run) -> int:
    cfg = rc.solve
    h = cfg.target_edge_length
    if rc.scenario == "grotzsch":
        prob = grotzsch_problem(rc.study.get("a", 2.0), h)
        mesh, bnd = prob.mesh, prob.boundary_images
    else:
        sc = nitsche_annulus(rc.study.get("R", 2.0), rc.study.get("S", 2.0), h)
        mesh, bnd = sc.mesh, sc.boundary_images
    run.mesh_hash = mesh.digest()
    rep = solve(cfg, mesh=mesh, boundary_images=bnd)
    doc = rep.to_json()
    if rc.scenario == "grotzsch":
        doc["known_energy"] = prob.energy(cfg.p)
        doc["max_deviation_from_affine"] = float(np.max(np.abs(rep.map.images - prob.minimizer.images)))
    else:
        doc["scenario"] = sc.to_config()
    save_mesh(mesh, run.path("mesh.txt"))
    save_plmap(rep.map, run.path("map.txt"))
    rep.energy.write_csv(run.path("triangles.csv"))
    run.text("report.json", _dumps(doc))
    return EXIT_OK if rep.converged else EXIT_FAILURE


def cmd_solve(rc: RunConfig, run: _Run) -> int:
    if rc.scenario == "pinned_disk":
        return _pinned_solve(rc, run)
    return _prescribed_solve(rc, run)


def cmd_sweep(rc: RunConfig, run: _Run) -> int:
    p_list = rc.study.get("p_list")
    if not p_list:
        raise ConfigError("sweep needs 'study.p_list'")
    mesh = rc.solve.build_mesh()
    run.mesh_hash = mesh.digest()
    res = sweep_p(rc.solve, p_list, mesh=mesh)
    res.write_csv(run.path("sweep.csv"))
    run.text("sweep.json", _dumps(res.to_json()))
    return EXIT_OK if not res.failures else EXIT_FAILURE


def cmd_blowup(rc: RunConfig, run: _Run) -> int:
    st = rc.study
    levels = st.get("levels", 3)
    rho = st.get("rho", 0.1)
    mesh = rc.solve.build_mesh()
    run.mesh_hash = mesh.digest()
    if rc.solve.kind == "exponential":
        res = exponential_study(rc.solve, st.get("q_probe"), levels, rho, st.get("refine_radius"), mesh)
        name = "exponential"
    else:
        res = blowup_study(rc.solve, levels, rho, st.get("refine_radius"), mesh)
        name = "blowup"
    res.write_csv(run.path(f"{name}.csv"))
    run.text(f"{name}.json", _dumps(res.to_json()))
    return EXIT_OK if all(r.converged for r in res.rows) else EXIT_FAILURE


def cmd_hopf(rc: RunConfig, run: _Run) -> int:
    st = rc.study
    code = EXIT_OK
    if "map_file" in st:
        if "mesh_file" not in st:
            raise ConfigError("'study.map_file' needs 'study.mesh_file'")
        try:
            mesh = load_mesh(st["mesh_file"])
            hmap = load_plmap(st["map_file"], mesh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load map: {exc}") from exc
        summary = {"source": "map_file"}
    else:
        cfg = replace(rc.solve, side="inverse")
        mesh = cfg.build_mesh()
        rep = solve(cfg, mesh=mesh)
        hmap = rep.map
        summary = {"source": "solve", "solve": rep.to_json()}
        code = EXIT_OK if rep.converged else EXIT_FAILURE
    run.mesh_hash = mesh.digest()
    p = rc.solve.p
    hf = hopf_field(mesh, hmap, p)
    pin = mesh.pin_location if mesh.pinned_index is not None else 0j
    pf = pole_fit(hf, pin, st.get("radii"))
    F = None
    if st.get("cauchy", False):
        F = cauchy_transform_F(mesh, hmap, p)
    hf.write_csv(run.path("hopf_triangles.csv"))
    write_vertex_csv(run.path("hopf_vertices.csv"), mesh, hf.cr_residual, F)
    run.text("pole_fit.json", pf.dumps())
    inner = hf.interior_residuals
    summary.update({"p": p, "l1_mass": hf.l1_mass,
                    "cr_residual_max": float(np.max(inner)) if len(inner) else 0.0,
                    "cr_residual_median": float(np.median(inner)) if len(inner) else 0.0,
                    "pole_fit": pf.to_json()})
    run.text("hopf.json", _dumps(summary))
    return code


def cmd_oracle(rc: Optional[RunConfig], run: _Run) -> int:
    quick = bool(rc.study.get("quick", False)) if rc is not None else False
    checks = calibration_battery(quick=quick)
    write_calibration_csv(checks, run.path("calibration.csv"))
    failed = [c.name for c in checks if not c.passed]
    run.text("calibration.json", _dumps({"n_checks": len(checks), "failed": failed}))
    for c in checks:
        log.info("%s %s: %.6g (expected %.6g)", "PASS" if c.passed else "FAIL", c.name, c.value, c.expected)
    return EXIT_OK if not failed else EXIT_FAILURE


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "blowup": cmd_blowup, "hopf": cmd_hopf,
            "oracle": cmd_oracle}


def _dry_run(rc: Optional[RunConfig], command: str) -> dict:
    if rc is None:
        return {"command": command, "valid": True}
    if rc.scenario == "grotzsch":
        mesh = grotzsch_problem(rc.study.get("a", 2.0), rc.solve.target_edge_length).mesh
    elif rc.scenario == "nitsche_annulus":
        mesh = nitsche_annulus(rc.study.get("R", 2.0), rc.study.get("S", 2.0),
                               rc.solve.target_edge_length).mesh
    elif command == "hopf" and "mesh_file" in rc.study:
        mesh = load_mesh(rc.study["mesh_file"])
    else:
        cfg = replace(rc.solve, side="inverse") if command == "hopf" else rc.solve
        mesh = cfg.build_mesh()
    return {"command": command, "valid": True, "mesh": mesh_statistics(mesh), "mesh_hash": mesh.digest()}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lpteich", description="Mean-distortion solver and studies")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=(name != "oracle"), help="INI config file")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="cap on BLAS/reduction threads")
        sp.add_argument("--seed", type=int, default=None, help="override problem.seed")
        sp.add_argument("--dry-run", action="store_true", help="validate config and mesh only")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_config(args.config) if args.config is not None else None
        if rc is not None and args.seed is not None:
            rc.solve = replace(rc.solve, seed=args.seed)
        if args.dry_run:
            print(_dumps(_dry_run(rc, args.command)))
            return EXIT_OK
    except (ConfigError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args.out.mkdir(parents=True, exist_ok=True)
    run = _Run(args.out)
    t0 = time.perf_counter()
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=max(1, args.threads)):
                code = COMMANDS[args.command](rc, run)
        else:
            code = COMMANDS[args.command](rc, run)
    except (ConfigError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolveError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        code = EXIT_FAILURE
    manifest = RunManifest(args.command, rc.echo() if rc is not None else {}, __version__,
                           run.mesh_hash, time.perf_counter() - t0, run.outputs, code)
    manifest.write(args.out)
    if code == EXIT_FAILURE:
        print(f"{args.command}: failed (see {args.out})", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
