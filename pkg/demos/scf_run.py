"""
Self-consistent field iterations
================================

Anderson-accelerated SCF on the reference toy problem, with a look at how
the energy and the density residual settle.
"""

from pwbounds import Discretization, Lattice, ModelSpec, ScfConfig, random_potential_1d, run_scf

lat = Lattice.interval(10.0)
disc = Discretization.build(lat, 400.0, 1000.0)
model = ModelSpec(lat, 3, random_potential_1d(disc.potential_basis, 42), "rhf")

hist = run_scf(model, disc, ScfConfig(density_tol=1e-10))
print("converged:", hist.converged, "in", len(hist), "iterations")
for rec in hist.records[::4] + [hist.last]:
    print(f"m={rec.m:3d}  E={rec.energy:.12f}  |rho_out - rho_in|={rec.residual:.2e}")

# occupied eigenvalues of the last iterate and the gap to the next state
lam = hist.last.probe[0].unshifted_eigenvalues
print("eigenvalues:", lam[:3], " gap:", lam[3] - lam[2])
