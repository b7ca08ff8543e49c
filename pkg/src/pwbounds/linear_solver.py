"""
Exact diagonalization of the Hamiltonian projected on the computational sphere.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import OrbitalSet, hamiltonian_matrix, total_potential

__all__ = ["DegenerateFermiError", "SpectralSlice", "diagonalize_projected", "fix_phases"]

GAP_TOL = 1e-8


class DegenerateFermiError(RuntimeError):
    """The N_el-th and (N_el+1)-st eigenvalues are (numerically) degenerate."""


@dataclass(eq=False)
class SpectralSlice:
    """
    Lowest eigenpairs of Pi_N (H + shift) Pi_N.

    Attributes:
        basis: reference orbital basis; vectors vanish outside mask.
        mask: computational sphere.
        eigenvalues: (count,) ascending, shift included.
        vectors: (count, n_pw) orthonormal eigenvectors (rows).
        shift: constant shift that was added to H.
        n_occ: number of occupied (Aufbau) states.
        potential: total potential of H.
    """

    basis: object
    mask: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray
    shift: float
    n_occ: int
    potential: object = None

    @property
    def gap(self):
        return float(self.eigenvalues[self.n_occ] - self.eigenvalues[self.n_occ - 1])

    @property
    def unshifted_eigenvalues(self):
        return self.eigenvalues - self.shift

    def occupied(self):
        """OrbitalSet of the Aufbau-occupied states (unshifted eigenvalues)."""
        return OrbitalSet(
            self.basis,
            self.vectors[: self.n_occ],
            self.unshifted_eigenvalues[: self.n_occ],
            self.mask,
        )


def fix_phases(vectors, rtol=1e-6):
    """
    Rotate each row so its largest-modulus entry is real and positive.

    Entries within rtol of the maximum modulus count as tied and the first
    one wins; real potentials give |c(G)| = |c(-G)| ties that rounding
    would otherwise break at random.
    """
    vectors = np.array(vectors, dtype=complex)
    mod = np.abs(vectors)
    idx = np.argmax(mod >= (1 - rtol) * mod.max(axis=1, keepdims=True), axis=1)
    pivots = vectors[np.arange(len(vectors)), idx]
    return vectors * (np.abs(pivots) / pivots)[:, None]


def diagonalize_projected(model, rho, shift, basis, mask=None, count=None, gap_tol=GAP_TOL,
                          potential=None):
    """
    Lowest `count` eigenpairs of Pi_N (H_rho + shift) Pi_N by dense diagonalization.

    Args:
        model: ModelSpec.
        rho: density defining H_rho (ignored if potential is given).
        shift: constant shift.
        basis: reference orbital basis.
        mask: computational sphere inside basis (default: full basis).
        count: number of eigenpairs, at least n_el + 1 (default n_el + 1).
        gap_tol: smallest accepted gap between levels n_el and n_el + 1.
        potential: precomputed total potential.

    Returns:
        SpectralSlice.

    Raises:
        DegenerateFermiError: if the Aufbau gap is below gap_tol.
    """
    n_el = model.n_el
    if count is None:
        count = n_el + 1
    if count < n_el + 1:
        raise ValueError("count must be at least n_el + 1")
    if mask is None:
        mask = np.ones(basis.size, dtype=bool)
    dim = int(mask.sum())
    if dim < count:
        raise ValueError(f"computational space has {dim} planewaves, need {count}")
    if potential is None:
        potential = total_potential(model, rho)
    mat = hamiltonian_matrix(basis, potential, shift, mask)
    vals, vecs = scipy.linalg.eigh(mat, subset_by_index=[0, count - 1], driver="evr")
    vectors = np.zeros((count, basis.size), dtype=complex)
    vectors[:, mask] = fix_phases(vecs.T)
    sl = SpectralSlice(basis, mask, vals, vectors, float(shift), n_el, potential)
    if sl.gap < gap_tol:
        raise DegenerateFermiError(
            f"gap {sl.gap:.3e} between eigenvalues {n_el} and {n_el + 1} is below {gap_tol:g}"
        )
    return sl
