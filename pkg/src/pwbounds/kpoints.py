"""
Brillouin-zone sampling: uniform k-grids, Bloch fibers and per-unit-cell traces.

A Discretization bundles the k-fibers of a calculation. Each fiber carries
its own k-shifted reference sphere 1/2 |G + k|^2 <= ecut_ref and the mask of
the computational sphere 1/2 |G + k|^2 <= ecut inside it. All fibers share one
FFT grid and one potential basis, so densities from different fibers can be
summed directly.
"""

from dataclasses import dataclass

import numpy as np

from .pw_basis import PeriodicField, build_basis, fft_grid_shape
from .model import ExternalPotential, apply_hamiltonian, density

__all__ = [
    "KGrid",
    "Fiber",
    "Discretization",
    "BlochState",
    "fiber_hamiltonian_apply",
    "bz_density",
    "bz_error_components",
    "supercell_potential",
]


@dataclass(frozen=True, eq=False)
class KGrid:
    """
    Uniform (unshifted Monkhorst-Pack) k-grid with equal weights.

    Attributes:
        lattice: the periodic lattice.
        sizes: number of points per reciprocal direction.
    """

    lattice: object
    sizes: tuple = None

    def __post_init__(self):
        sizes = self.sizes
        if sizes is None:
            sizes = (1,) * self.lattice.dimension
        sizes = tuple(int(s) for s in np.atleast_1d(sizes))
        if len(sizes) != self.lattice.dimension or any(s < 1 for s in sizes):
            raise ValueError(f"invalid k-grid sizes {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def fractional(self):
        """Fractional coordinates in (-1/2, 1/2], lexicographic order."""
        axes = []
        for n in self.sizes:
            frac = np.arange(n) / n
            frac = np.where(frac > 0.5 + 1e-12, frac - 1.0, frac)
            axes.append(frac)
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(self.sizes))

    @property
    def kpoints(self):
        """Cartesian k-points (Bohr^-1)."""
        return self.fractional @ self.lattice.reciprocal_vectors

    @property
    def weights(self):
        n = int(np.prod(self.sizes))
        return np.full(n, 1.0 / n)

    def __len__(self):
        return int(np.prod(self.sizes))


@dataclass(eq=False)
class Fiber:
    """One Bloch fiber: reference basis at k, computational mask and weight."""

    basis: object
    mask: np.ndarray
    weight: float

    @property
    def kpoint(self):
        return self.basis.kshift


@dataclass(eq=False)
class Discretization:
    """
    Computational and reference planewave spaces for every k-point.

    Use Discretization.build.
    """

    lattice: object
    ecut: float
    ecut_ref: float
    fibers: list
    potential_basis: object
    kgrid: KGrid = None

    @classmethod
    def build(cls, lattice, ecut, ecut_ref=None, kgrid=None, kpoints=None, weights=None):
        """
        Args:
            lattice: Lattice.
            ecut: computational cutoff.
            ecut_ref: reference cutoff (default: ecut).
            kgrid: KGrid or tuple of sizes (default: Gamma only).
            kpoints, weights: explicit Cartesian k-points and weights instead of a grid.
        """
        if ecut_ref is None:
            ecut_ref = ecut
        if ecut > ecut_ref:
            raise ValueError("ecut must not exceed ecut_ref")
        if kpoints is None:
            if not isinstance(kgrid, KGrid):
                kgrid = KGrid(lattice, kgrid)
            kpoints = kgrid.kpoints
            weights = kgrid.weights
        else:
            kpoints = np.atleast_2d(np.asarray(kpoints, dtype=float))
            if weights is None:
                weights = np.full(len(kpoints), 1.0 / len(kpoints))
        weights = np.asarray(weights, dtype=float)
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("k-point weights must sum to 1")
        kmax = float(np.max(np.linalg.norm(kpoints, axis=1))) if len(kpoints) else 0.0
        grid = fft_grid_shape(lattice, ecut_ref, kmax)
        fibers = []
        for k, w in zip(kpoints, weights):
            basis = build_basis(lattice, ecut_ref, k, grid_shape=grid)
            fibers.append(Fiber(basis, basis.cutoff_mask(ecut), float(w)))
        pot = build_basis(lattice, 4.0 * ecut_ref, grid_shape=grid)
        return cls(lattice, float(ecut), float(ecut_ref), fibers, pot, kgrid)

    def reference(self):
        """Same fibers with the computational sphere enlarged to the reference one."""
        fibers = [Fiber(f.basis, np.ones(f.basis.size, dtype=bool), f.weight) for f in self.fibers]
        return Discretization(self.lattice, self.ecut_ref, self.ecut_ref, fibers,
                              self.potential_basis, self.kgrid)

    def with_ecut(self, ecut):
        """Same reference spaces, different computational cutoff."""
        if ecut > self.ecut_ref:
            raise ValueError("ecut must not exceed ecut_ref")
        fibers = [Fiber(f.basis, f.basis.cutoff_mask(ecut), f.weight) for f in self.fibers]
        return Discretization(self.lattice, float(ecut), self.ecut_ref, fibers,
                              self.potential_basis, self.kgrid)

    @property
    def weights(self):
        return np.array([f.weight for f in self.fibers])

    def __len__(self):
        return len(self.fibers)


@dataclass(eq=False)
class BlochState:
    """Occupied orbitals of every fiber plus their shared density."""

    orbitals: list
    weights: np.ndarray
    density: PeriodicField = None

    @property
    def n_electrons(self):
        return float(self.density.mean().real * self.density.basis.lattice.volume)


def fiber_hamiltonian_apply(model, rho, k, shift, phi):
    """
    Apply H_{rho,k} = 1/2 (-i nabla + k)^2 + V + V_rho + shift to phi.

    phi must live on a basis shifted by k; the kinetic term uses that
    basis' 1/2 |G + k|^2.
    """
    if not np.allclose(phi.basis.kshift, np.asarray(k, dtype=float).reshape(-1), atol=1e-12):
        raise ValueError("phi does not live on the k-shifted basis")
    return apply_hamiltonian(model, rho, shift, phi)


def bz_density(state, basis=None):
    """
    Brillouin-zone average sum_k w_k sum_i |phi_ik|^2.

    Args:
        state: BlochState (or a sequence of OrbitalSets with equal weights).
        basis: potential basis (default: state.density.basis or derived).
    """
    if isinstance(state, BlochState):
        orbitals, weights = state.orbitals, state.weights
        if basis is None and state.density is not None:
            basis = state.density.basis
    else:
        orbitals = list(state)
        weights = np.full(len(orbitals), 1.0 / len(orbitals))
    if basis is None:
        from .model import potential_basis
        basis = potential_basis(orbitals[0].basis)
    coeffs = np.zeros(basis.size, dtype=complex)
    for w, orbs in zip(weights, orbitals):
        coeffs += w * density(orbs, basis).coeffs
    return PeriodicField(basis, coeffs)


def bz_error_components(fiber_terms, weights):
    """
    Aggregate per-fiber error components into per-unit-cell values.

    Args:
        fiber_terms: sequence of (err_disc_k, err_scf_k) pairs.
        weights: k-point weights.

    Returns:
        (err_disc, err_scf) = sum_k w_k (err_disc_k, err_scf_k).
    """
    terms = np.asarray(fiber_terms, dtype=float).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float)
    if len(terms) != len(weights):
        raise ValueError("one (err_disc, err_scf) pair per fiber is required")
    return float(weights @ terms[:, 0]), float(weights @ terms[:, 1])


def supercell_potential(potential, supercell_basis, multiples):
    """
    The same external potential seen from a supercell.

    A unit-cell periodic V has supercell coefficients V'_G = sqrt(L) V_G on the
    unit-cell reciprocal lattice (L = number of cells) and zero elsewhere.

    Args:
        potential: ExternalPotential on a unit-cell potential basis.
        supercell_basis: k-free basis of the supercell lattice.
        multiples: supercell multiple along each lattice vector.
    """
    multiples = np.asarray(multiples, dtype=int).reshape(-1)
    n_cells = int(np.prod(multiples))
    sm = supercell_basis.miller
    on_lattice = np.all(np.mod(sm, multiples) == 0, axis=1)
    unit = sm[on_lattice] // multiples
    pos = potential.basis.index_of(unit)
    coeffs = np.zeros(supercell_basis.size, dtype=complex)
    found = pos >= 0
    target = np.flatnonzero(on_lattice)[found]
    coeffs[target] = np.sqrt(n_cells) * potential.field.coeffs[pos[found]]
    desc = dict(potential.descriptor)
    desc["supercell"] = multiples.tolist()
    return ExternalPotential(PeriodicField(supercell_basis, coeffs), desc)
