"""
Planewave bases and the mean-field model
========================================

A cutoff ball of planewaves on the interval (0, 10), a seeded random
potential, and the energy of a trial state.
"""

import numpy as np

from pwbounds import Lattice, ModelSpec, build_basis, density, random_potential_1d, total_energy
from pwbounds.model import OrbitalSet, potential_basis

# the basis keeps every G with |G|^2 / 2 <= Ecut
lat = Lattice.interval(10.0)
basis = build_basis(lat, 400.0)
print("planewaves at Ecut 400:", basis.size, " grid:", basis.n_grid)
print("planewaves at Ecut 1000:", build_basis(lat, 1000.0).size)

# potentials live on a basis four times larger in energy, so V*phi is exact
vbasis = potential_basis(basis)
pot = random_potential_1d(vbasis, seed=42)
x = vbasis.grid_points()[:, 0]
v = pot.field.real_values()
print(f"V: min {v.min():.3f}  max {v.max():.3f}  mean {pot.mean():.3f}")

# three lowest free planewaves as a trial state
model = ModelSpec(lat, 3, pot, "rhf")
coeffs = np.zeros((3, basis.size), dtype=complex)
for row, g in enumerate((0, 1, -1)):
    coeffs[row, basis.index_of(np.array([[g]]))[0]] = 1.0
trial = OrbitalSet(basis, coeffs)
rho = density(trial, vbasis)
print("electrons:", round(float(rho.mean().real * lat.volume), 12))
print("E(trial) =", total_energy(model, [trial]))
