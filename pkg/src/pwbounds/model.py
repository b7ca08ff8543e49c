"""
Mean-field models: external potentials, densities, Hartree and Xalpha terms,
the energy E(gamma) = Tr(h gamma) + F(rho) and the mean-field Hamiltonian.

Densities and potentials live on a "potential basis": the k-free sphere of
radius twice the orbital cutoff radius (ecut_pot = 4 ecut), sharing the FFT
grid of the orbital basis. Every density built from orbitals is exactly
representable there, and potential-times-orbital products are alias-free on
the shared grid.
"""

from dataclasses import dataclass, field

import numpy as np

from .pw_basis import PeriodicField, build_basis

__all__ = [
    "FUNCTIONALS",
    "DIRAC_EXCHANGE",
    "ExternalPotential",
    "ModelSpec",
    "OrbitalSet",
    "potential_basis",
    "random_potential_1d",
    "constant_potential",
    "cosine_potential",
    "potential_from_descriptor",
    "density",
    "hartree_potential",
    "coulomb_energy",
    "xalpha_energy",
    "xalpha_potential",
    "nonlinear_energy",
    "mean_field_potential",
    "total_potential",
    "total_energy",
    "kinetic_energy",
    "apply_potential",
    "apply_hamiltonian",
    "hamiltonian_matrix",
]

FUNCTIONALS = ("linear", "rhf", "rhf_xalpha")

# Slater/Dirac exchange constant (3/4)(3/pi)^{1/3}
DIRAC_EXCHANGE = 0.75 * (3.0 / np.pi) ** (1.0 / 3.0)

DENSITY_FLOOR = 1e-14
ORTHONORMALITY_TOL = 1e-10


def potential_basis(orbital_basis):
    """k-free basis with 4x the orbital cutoff on the orbital FFT grid."""
    return build_basis(
        orbital_basis.lattice, 4.0 * orbital_basis.ecut, grid_shape=orbital_basis.grid_shape
    )


@dataclass(eq=False)
class ExternalPotential:
    """
    Real-valued external potential V.

    Attributes:
        field: PeriodicField on a potential basis (Hartree).
        descriptor: generator description, e.g. {"kind": "random_1d", "seed": 3}.
    """

    field: PeriodicField
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.field.basis.kshift):
            raise ValueError("external potential must live on a k-free basis")

    @property
    def basis(self):
        return self.field.basis

    def sup_norm(self):
        return float(np.abs(self.field.real_values()).max())

    def mean(self):
        return float(np.real(self.field.mean()))


def _symmetrize(basis, coeffs):
    # Enforce c(-G) = conj(c(G)) exactly.
    minus = basis.minus_index()
    return 0.5 * (coeffs + np.conj(coeffs[minus]))


def random_potential_1d(basis, seed, amplitude=10.0, decay=1.1, mode_cutoff=100.0):
    """
    Random rough 1D potential.

    V_0 = 1; for 0 < |G| <= mode_cutoff, V_G = w_G / |G|^decay with w_G uniform
    on (-amplitude, amplitude), drawn for G > 0 in increasing order and
    mirrored as conj for -G; beyond mode_cutoff, V_G = 1 / |G|^decay.
    The draws do not depend on the basis, so the same seed gives the same
    potential truncated to any sphere.

    Args:
        basis: 1D k-free basis on which the potential is represented.
        seed: integer seed of numpy's default_rng.

    Returns:
        ExternalPotential.
    """
    if basis.dimension != 1:
        raise ValueError("random_potential_1d requires a 1D lattice")
    if np.any(basis.kshift):
        raise ValueError("potential basis must be k-free")
    length = basis.lattice.cell_vectors[0, 0]
    g_unit = 2 * np.pi / abs(length)
    n_random = int(np.floor(mode_cutoff / g_unit + 1e-12))
    rng = np.random.default_rng(seed)
    omega = rng.uniform(-amplitude, amplitude, size=n_random)

    n = basis.miller[:, 0]
    absg = np.abs(basis.gvectors[:, 0])
    coeffs = np.zeros(basis.size, dtype=complex)
    nonzero = n != 0
    coeffs[~nonzero] = 1.0
    weight = np.zeros(basis.size)
    weight[nonzero] = 1.0 / absg[nonzero] ** decay
    random_part = nonzero & (np.abs(n) <= n_random)
    coeffs[random_part] = omega[np.abs(n[random_part]) - 1] * weight[random_part]
    tail = nonzero & (np.abs(n) > n_random)
    coeffs[tail] = weight[tail]
    descriptor = {
        "kind": "random_1d",
        "seed": int(seed),
        "amplitude": float(amplitude),
        "decay": float(decay),
        "mode_cutoff": float(mode_cutoff),
    }
    return ExternalPotential(PeriodicField(basis, coeffs), descriptor)


def constant_potential(basis, value=0.0):
    """Constant potential V(x) = value."""
    coeffs = np.zeros(basis.size, dtype=complex)
    zero = basis.index_of(np.zeros((1, basis.dimension), dtype=int))[0]
    coeffs[zero] = value * np.sqrt(basis.lattice.volume)
    return ExternalPotential(PeriodicField(basis, coeffs), {"kind": "constant", "value": float(value)})


def cosine_potential(basis, amplitudes):
    """
    V(x) = sum_j amplitudes[j] cos(G_j . x) over the first few G along a_1.

    Mainly useful for small analytic test problems.
    """
    amplitudes = [float(a) for a in amplitudes]
    coeffs = np.zeros(basis.size, dtype=complex)
    sqrt_vol = np.sqrt(basis.lattice.volume)
    for j, amp in enumerate(amplitudes, start=1):
        for sign in (1, -1):
            m = np.zeros((1, basis.dimension), dtype=int)
            m[0, 0] = sign * j
            pos = basis.index_of(m)[0]
            if pos >= 0:
                coeffs[pos] += 0.5 * amp * sqrt_vol
    return ExternalPotential(PeriodicField(basis, coeffs), {"kind": "cosine", "amplitudes": amplitudes})


def potential_from_descriptor(descriptor, basis):
    """Rebuild an ExternalPotential from its descriptor."""
    kind = descriptor.get("kind")
    if kind == "random_1d":
        return random_potential_1d(
            basis,
            descriptor["seed"],
            amplitude=descriptor.get("amplitude", 10.0),
            decay=descriptor.get("decay", 1.1),
            mode_cutoff=descriptor.get("mode_cutoff", 100.0),
        )
    if kind == "constant":
        return constant_potential(basis, descriptor.get("value", 0.0))
    if kind == "cosine":
        return cosine_potential(basis, descriptor["amplitudes"])
    raise ValueError(f"unknown potential kind {kind!r}")


@dataclass(eq=False)
class ModelSpec:
    """
    Mean-field model E(gamma) = Tr((-Delta/2 + V) gamma) + F(rho_gamma).

    Attributes:
        lattice: periodic lattice.
        n_el: number of (spinless) electrons per cell.
        external: external potential V.
        functional: "linear" (F = 0), "rhf" (F = D(rho, rho)/2) or
            "rhf_xalpha" (rHF plus -C_alpha int rho^{4/3}).
        xalpha_coefficient: C_alpha >= 0.
    """

    lattice: object
    n_el: int
    external: ExternalPotential
    functional: str = "rhf"
    xalpha_coefficient: float = DIRAC_EXCHANGE

    def __post_init__(self):
        if self.functional not in FUNCTIONALS:
            raise ValueError(f"functional must be one of {FUNCTIONALS}")
        if int(self.n_el) != self.n_el or self.n_el < 1:
            raise ValueError("n_el must be a positive integer")
        if self.xalpha_coefficient < 0:
            raise ValueError("xalpha_coefficient must be nonnegative")
        self.n_el = int(self.n_el)

    @property
    def convex(self):
        return self.functional in ("linear", "rhf")

    @property
    def density_dependent(self):
        return self.functional != "linear"

    @property
    def potential_basis(self):
        return self.external.basis


@dataclass(eq=False)
class OrbitalSet:
    """
    Occupied orbitals of one k-fiber, all with occupation 1.

    Attributes:
        basis: orbital (reference) basis.
        coeffs: (n_orb, n_pw) coefficients, rows are orbitals.
        eigenvalues: (n_orb,) ascending eigenvalues that produced them.
        mask: optional boolean mask of the computational sphere in basis.
    """

    basis: object
    coeffs: np.ndarray
    eigenvalues: np.ndarray = None
    mask: np.ndarray = None

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=complex))
        if self.coeffs.shape[1] != self.basis.size:
            raise ValueError("orbital coefficients do not match basis size")
        if self.eigenvalues is not None:
            self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)

    @property
    def n_orbitals(self):
        return self.coeffs.shape[0]

    def overlap(self):
        return self.coeffs.conj() @ self.coeffs.T

    def orthonormality_defect(self):
        return float(np.abs(self.overlap() - np.eye(self.n_orbitals)).max())

    def outside_mask_norm(self):
        if self.mask is None:
            return 0.0
        return float(np.linalg.norm(self.coeffs[:, ~self.mask]))

    def field(self, i):
        return PeriodicField(self.basis, self.coeffs[i])


def density(orbs, basis=None, check=True):
    """
    Electronic density rho = sum_i |phi_i|^2.

    Args:
        orbs: OrbitalSet.
        basis: target potential basis; built from orbs.basis when omitted.
        check: verify orthonormality to 1e-10.

    Returns:
        Real-valued PeriodicField integrating to the number of orbitals.
    """
    if check and orbs.orthonormality_defect() > ORTHONORMALITY_TOL:
        raise ValueError("orbitals are not orthonormal")
    if basis is None:
        basis = potential_basis(orbs.basis)
    values = orbs.basis.to_real(orbs.coeffs)
    rho = np.sum(np.abs(values) ** 2, axis=0)
    return PeriodicField(basis, _symmetrize(basis, basis.to_fourier(rho)))


def _inverse_g2(basis):
    g2 = np.sum(basis.gvectors**2, axis=1)
    inv = np.zeros_like(g2)
    nonzero = g2 > 0
    inv[nonzero] = 1.0 / g2[nonzero]
    return inv


def hartree_potential(rho):
    """Zero-mean periodic solution of -Delta V_H = 4 pi (rho - <rho>)."""
    return PeriodicField(rho.basis, 4 * np.pi * rho.coeffs * _inverse_g2(rho.basis))


def coulomb_energy(rho1, rho2):
    """D(rho1, rho2) = sum_{G != 0} 4 pi conj(rho1_G) rho2_G / |G|^2."""
    if rho1.basis is not rho2.basis and rho1.basis.size != rho2.basis.size:
        raise ValueError("densities live on different bases")
    value = 4 * np.pi * np.sum(np.conj(rho1.coeffs) * rho2.coeffs * _inverse_g2(rho1.basis))
    return float(value.real)


def _clamped(rho):
    values = rho.real_values()
    return np.where(values > DENSITY_FLOOR, values, 0.0)


def xalpha_energy(rho, coefficient):
    """-C int rho^{4/3}, evaluated by grid quadrature."""
    return float(-coefficient * rho.basis.integrate(_clamped(rho) ** (4.0 / 3.0)))


def xalpha_potential(rho, coefficient):
    """-(4/3) C rho^{1/3}, projected on the density sphere."""
    values = -(4.0 / 3.0) * coefficient * np.cbrt(_clamped(rho))
    basis = rho.basis
    return PeriodicField(basis, _symmetrize(basis, basis.to_fourier(values)))


def nonlinear_energy(model, rho):
    """Density functional F(rho)."""
    if model.functional == "linear":
        return 0.0
    energy = 0.5 * coulomb_energy(rho, rho)
    if model.functional == "rhf_xalpha":
        energy += xalpha_energy(rho, model.xalpha_coefficient)
    return energy


def mean_field_potential(model, rho):
    """V_rho = F'(rho): Hartree (+ Xalpha) potential."""
    if model.functional == "linear":
        return PeriodicField.zeros(model.potential_basis)
    pot = hartree_potential(rho)
    if model.functional == "rhf_xalpha":
        pot = pot + xalpha_potential(rho, model.xalpha_coefficient)
    return pot


def total_potential(model, rho):
    """V + V_rho on the potential basis."""
    if rho is None:
        return model.external.field
    return model.external.field + mean_field_potential(model, rho)


def kinetic_energy(orbs):
    """sum_i sum_G 1/2 |G + k|^2 |phi_iG|^2."""
    return float(np.sum(orbs.basis.kinetic * np.abs(orbs.coeffs) ** 2))


def total_energy(model, orbs, weights=None, rho=None):
    """
    E = sum_k w_k Tr(-Delta_k/2 gamma_k) + int V rho + F(rho).

    Args:
        model: ModelSpec.
        orbs: OrbitalSet, or a sequence of them (one per k-point).
        weights: k-point weights summing to 1 (default: equal).
        rho: density of orbs, recomputed when omitted.
    """
    fibers = [orbs] if isinstance(orbs, OrbitalSet) else list(orbs)
    if weights is None:
        weights = np.full(len(fibers), 1.0 / len(fibers))
    if rho is None:
        rho = _weighted_density(fibers, weights, model.potential_basis)
    kinetic = sum(w * kinetic_energy(o) for w, o in zip(weights, fibers))
    external = float(np.real(np.vdot(model.external.field.coeffs, rho.coeffs)))
    return kinetic + external + nonlinear_energy(model, rho)


def _weighted_density(fibers, weights, basis):
    coeffs = sum(w * density(o, basis).coeffs for w, o in zip(weights, fibers))
    return PeriodicField(basis, coeffs)


def apply_potential(potential, basis, coeffs):
    """
    Multiply orbitals by a potential, truncated back to the orbital sphere.

    Args:
        potential: PeriodicField on a potential basis sharing basis' grid.
        basis: orbital basis.
        coeffs: (..., n_pw) coefficients.
    """
    if potential.basis.grid_shape != basis.grid_shape:
        raise ValueError("potential and orbital bases must share the FFT grid")
    return basis.to_fourier(potential.values() * basis.to_real(coeffs))


def apply_hamiltonian(model, rho, shift, phi, potential=None):
    """
    (-Delta/2 + V + V_rho + shift) phi.

    Args:
        model: ModelSpec.
        rho: density defining V_rho (None for the bare h).
        shift: constant added to the operator.
        phi: PeriodicField or coefficient array (..., n_pw) on an orbital basis.
        potential: precomputed total potential, overrides model/rho.

    Returns:
        Same type as phi.
    """
    if isinstance(phi, PeriodicField):
        basis, coeffs = phi.basis, phi.coeffs
    else:
        raise TypeError("phi must be a PeriodicField; use apply_potential for raw arrays")
    if potential is None:
        potential = total_potential(model, rho)
    out = (basis.kinetic + shift) * coeffs + apply_potential(potential, basis, coeffs)
    return PeriodicField(basis, out)


def potential_lookup(potential):
    """Dense grid array holding V_G at wrapped integer index G."""
    grid = np.zeros(potential.basis.grid_shape, dtype=complex)
    grid[potential.basis._grid_index] = potential.coeffs
    return grid


def hamiltonian_matrix(basis, potential, shift=0.0, mask=None):
    """
    Dense matrix of (-Delta/2 + potential + shift) restricted to a sphere.

    Entry (G, G') = (1/2 |G + k|^2 + shift) delta + |Omega|^{-1/2} V_{G - G'}.

    Args:
        basis: orbital basis.
        potential: PeriodicField on a potential basis sharing the grid.
        shift: constant shift.
        mask: boolean mask selecting a sub-sphere (default: whole basis).
    """
    if mask is None:
        mask = np.ones(basis.size, dtype=bool)
    miller = basis.miller[mask]
    lookup = potential_lookup(potential)
    diff = miller[:, None, :] - miller[None, :, :]
    index = tuple(np.mod(diff[..., j], basis.grid_shape[j]) for j in range(basis.dimension))
    mat = lookup[index] / np.sqrt(basis.lattice.volume)
    mat[np.diag_indices_from(mat)] += basis.kinetic[mask] + shift
    return mat
