"""Planewave reduced Hartree-Fock with guaranteed energy error bounds."""

__version__ = "0.1.0"

from .pw_basis import Lattice, PeriodicField, PlanewaveBasis, build_basis, project, sobolev_norm
from .linear_solver import DegenerateFermiError, SpectralSlice, diagonalize_projected
from .estimators import VARIANTS, BoundReport, SplitOperator, fiber_bounds
from .kpoints import Discretization, KGrid
from .model import ModelSpec, OrbitalSet, density, random_potential_1d, total_energy
from .scf import ScfConfig, ScfHistory, run_scf

__all__ = [
    "Lattice", "PeriodicField", "PlanewaveBasis", "build_basis", "project", "sobolev_norm",
    "DegenerateFermiError", "SpectralSlice", "diagonalize_projected",
    "VARIANTS", "BoundReport", "SplitOperator", "fiber_bounds",
    "Discretization", "KGrid",
    "ModelSpec", "OrbitalSet", "density", "random_potential_1d", "total_energy",
    "ScfConfig", "ScfHistory", "run_scf",
]
