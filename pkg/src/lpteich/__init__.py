"""Discrete minimizers of L^p and exponential mean distortion on the disk."""

__version__ = "0.1.0"

from .mesh import (Domain, MeshError, TriMesh, ball_areas, build_annulus_mesh, build_disk_mesh,
                   build_rectangle_mesh, load_mesh, refine, save_mesh)
from .calculus import PLMap, WirtingerField, beltrami, distortion, identity_map, load_plmap, save_plmap
from .energy import EnergyReport, Functional, local_dirichlet
from .optimizer import OptimizerSettings, SolveConfig, SolveError, SolveReport, solve
from .hopf import HopfField, PoleFit, cauchy_transform_F, hopf_field, pole_fit
from .experiments import blowup_study, exponential_study, sweep_p

__all__ = [
    "Domain", "MeshError", "TriMesh", "ball_areas", "build_annulus_mesh", "build_disk_mesh",
    "build_rectangle_mesh", "load_mesh", "refine", "save_mesh",
    "PLMap", "WirtingerField", "beltrami", "distortion", "identity_map", "load_plmap", "save_plmap",
    "EnergyReport", "Functional", "local_dirichlet",
    "OptimizerSettings", "SolveConfig", "SolveError", "SolveReport", "solve",
    "HopfField", "PoleFit", "cauchy_transform_F", "hopf_field", "pole_fit",
    "blowup_study", "exponential_study", "sweep_p",
]
