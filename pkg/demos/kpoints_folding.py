"""
Brillouin-zone sampling and band folding
========================================

A crystal described by a unit cell with two k-points has the same bands
and energy per cell as the doubled supercell sampled at Gamma only.
"""

import numpy as np

from pwbounds import Discretization, KGrid, Lattice, ModelSpec, random_potential_1d, run_scf
from pwbounds.kpoints import supercell_potential
from pwbounds.linear_solver import diagonalize_projected

unit_lat = Lattice.interval(10.0)
unit = Discretization.build(unit_lat, 30.0, 60.0, kgrid=(2,))
print("k-points:", KGrid(unit_lat, (2,)).kpoints.ravel(), "weights:", unit.weights)

pot = random_potential_1d(unit.potential_basis, 7, amplitude=3.0)
unit_model = ModelSpec(unit_lat, 1, pot, "linear")

sup_lat = Lattice.interval(20.0)
sup = Discretization.build(sup_lat, 30.0, 60.0)
sup_model = ModelSpec(sup_lat, 2, supercell_potential(pot, sup.potential_basis, [2]), "linear")

bands = np.sort(np.concatenate([
    diagonalize_projected(unit_model, None, 0.0, f.basis, f.mask, count=6, gap_tol=0).eigenvalues
    for f in unit.fibers
]))[:6]
f = sup.fibers[0]
folded = diagonalize_projected(sup_model, None, 0.0, f.basis, f.mask, count=6, gap_tol=0).eigenvalues
print("unit cell, 2 k:", bands)
print("supercell, Gamma:", folded)
print("max difference:", np.abs(bands - folded).max())

e_unit = run_scf(unit_model, unit).last.energy
e_sup = run_scf(sup_model, sup).last.energy
print(f"energy per cell: {e_unit:.12f} vs {e_sup / 2:.12f}")
