"""
Periodic lattices, planewave bases and FFT-backed periodic fields.

A planewave basis keeps the reciprocal vectors G with 1/2 |G + k|^2 <= ecut.
Basis functions are normalised as e_G(x) = |Omega|^{-1/2} exp(i G.x), so the
Euclidean norm of a coefficient vector is the L2 norm of the function.

Coefficients are ordered lexicographically on the integer (Miller) indices.
The FFT grid is chosen so that products of two basis functions, and products
of a basis function with a potential carrying twice the basis radius, are
free of aliasing inside the basis sphere.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

__all__ = [
    "Lattice",
    "PlanewaveBasis",
    "PeriodicField",
    "build_basis",
    "fft_grid_shape",
    "to_real",
    "to_fourier",
    "project",
    "sobolev_norm",
]


@dataclass(frozen=True, eq=False)
class Lattice:
    """
    Bravais lattice of a periodic cell.

    Attributes:
        cell_vectors: (d, d) array, row i is the lattice vector a_i (Bohr).
    """

    cell_vectors: np.ndarray

    def __post_init__(self):
        cell = np.atleast_2d(np.asarray(self.cell_vectors, dtype=float))
        if cell.shape[0] != cell.shape[1] or cell.shape[0] not in (1, 2, 3):
            raise ValueError(f"cell_vectors must be a dxd matrix with d in 1..3, got {cell.shape}")
        if abs(np.linalg.det(cell)) <= 1e-14 * max(1.0, np.abs(cell).max() ** cell.shape[0]):
            raise ValueError("singular lattice")
        cell.setflags(write=False)
        object.__setattr__(self, "cell_vectors", cell)

    @classmethod
    def interval(cls, length):
        """One-dimensional cell (0, length)."""
        return cls(np.array([[float(length)]]))

    @classmethod
    def orthorhombic(cls, *lengths):
        return cls(np.diag(np.asarray(lengths, dtype=float)))

    @property
    def dimension(self):
        return self.cell_vectors.shape[0]

    @property
    def volume(self):
        return float(abs(np.linalg.det(self.cell_vectors)))

    @property
    def reciprocal_vectors(self):
        """Rows b_j with a_i . b_j = 2 pi delta_ij."""
        return 2 * np.pi * np.linalg.inv(self.cell_vectors).T

    def supercell(self, multiples):
        """Lattice of the supercell spanned by multiples[i] * a_i."""
        multiples = np.asarray(multiples, dtype=float).reshape(-1)
        return Lattice(self.cell_vectors * multiples[:, None])

    def same_as(self, other):
        return self.dimension == other.dimension and np.allclose(
            self.cell_vectors, other.cell_vectors, rtol=1e-13, atol=1e-13
        )

    def to_dict(self):
        return {"cell_vectors": self.cell_vectors.tolist()}


def fft_grid_shape(lattice, ecut, kmax=0.0):
    """
    FFT grid large enough for alias-free products in a sphere of cutoff ecut.

    Each dimension holds at least 4 * n_max + 1 points, where n_max bounds the
    integer index along that direction of any G with |G + k| <= sqrt(2 ecut),
    |k| <= kmax. With p_max the index bound of the k-free potential sphere of
    cutoff 4 ecut, it also holds 2 p_max + 1 points (the sphere fits) and
    p_max + 2 n_max + 1 points (V phi is alias-free inside the orbital sphere).

    Args:
        lattice: Lattice.
        ecut: kinetic energy cutoff (Hartree).
        kmax: largest norm of a k-shift that will share this grid.

    Returns:
        Tuple of grid sizes.
    """
    radius = np.sqrt(2.0 * ecut)
    lengths = np.linalg.norm(lattice.cell_vectors, axis=1)
    # n_j = G . a_j / (2 pi), |n_j| <= |G| |a_j| / (2 pi)
    nmax = np.floor((radius + float(kmax)) * lengths / (2 * np.pi) + 1e-12).astype(int)
    pmax = np.floor(2 * radius * lengths / (2 * np.pi) + 1e-12).astype(int)
    return tuple(
        int(scipy.fft.next_fast_len(max(4 * int(n) + 1, int(p) + 2 * int(n) + 1, 2 * int(p) + 1)))
        for n, p in zip(nmax, pmax)
    )


@dataclass(frozen=True, eq=False)
class PlanewaveBasis:
    """
    Planewave basis of a k-shifted sphere.

    Use build_basis to construct one.

    Attributes:
        lattice: the periodic lattice.
        ecut: energy cutoff (Hartree).
        kshift: Cartesian k-vector (Bohr^-1).
        miller: (n_pw, d) integer indices, lexicographically sorted.
        gvectors: (n_pw, d) Cartesian reciprocal vectors G (without k).
        kinetic: (n_pw,) kinetic energies 1/2 |G + k|^2.
        grid_shape: FFT grid dimensions.
    """

    lattice: Lattice
    ecut: float
    kshift: np.ndarray
    miller: np.ndarray
    gvectors: np.ndarray
    kinetic: np.ndarray
    grid_shape: tuple
    _grid_index: tuple = field(repr=False, default=None)

    @property
    def size(self):
        return self.miller.shape[0]

    @property
    def dimension(self):
        return self.lattice.dimension

    @property
    def n_grid(self):
        return int(np.prod(self.grid_shape))

    @property
    def nmax(self):
        """Largest absolute integer index along each direction."""
        return np.abs(self.miller).max(axis=0)

    def grid_points(self):
        """Cartesian coordinates of the FFT grid, shape (*grid_shape, d)."""
        axes = [np.arange(n) / n for n in self.grid_shape]
        frac = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return frac @ self.lattice.cell_vectors

    def cutoff_mask(self, ecut):
        """Boolean mask selecting the sub-sphere 1/2 |G + k|^2 <= ecut."""
        return self.kinetic <= ecut

    def index_of(self, miller):
        """Positions of the given integer indices in this basis (-1 if absent)."""
        miller = np.atleast_2d(np.asarray(miller, dtype=np.int64))
        keys = _encode(miller, self.grid_shape)
        own = _encode(self.miller, self.grid_shape)
        order = np.argsort(own)
        pos = np.searchsorted(own[order], keys)
        pos = np.clip(pos, 0, len(own) - 1)
        found = own[order][pos] == keys
        return np.where(found, order[pos], -1)

    def minus_index(self):
        """Index of -G for every G (requires a k-free basis)."""
        return self.index_of(-self.miller)

    def to_real(self, coeffs):
        """
        Evaluate planewave expansions on the FFT grid.

        Args:
            coeffs: array of shape (..., n_pw).

        Returns:
            Complex array of shape (..., *grid_shape).
        """
        coeffs = np.asarray(coeffs)
        if coeffs.shape[-1] != self.size:
            raise ValueError(f"expected {self.size} coefficients, got {coeffs.shape[-1]}")
        lead = coeffs.shape[:-1]
        grid = np.zeros(lead + self.grid_shape, dtype=complex)
        grid[(Ellipsis,) + self._grid_index] = coeffs
        axes = tuple(range(-self.dimension, 0))
        scale = self.n_grid / np.sqrt(self.lattice.volume)
        return scipy.fft.ifftn(grid, axes=axes) * scale

    def to_fourier(self, values):
        """
        Fourier coefficients on this sphere of grid values.

        Args:
            values: array of shape (..., *grid_shape).

        Returns:
            Complex array of shape (..., n_pw).
        """
        values = np.asarray(values)
        if values.shape[values.ndim - self.dimension:] != self.grid_shape:
            raise ValueError(f"grid shape mismatch: {values.shape} vs {self.grid_shape}")
        axes = tuple(range(-self.dimension, 0))
        spectrum = scipy.fft.fftn(values, axes=axes)
        scale = np.sqrt(self.lattice.volume) / self.n_grid
        return spectrum[(Ellipsis,) + self._grid_index] * scale

    def integrate(self, values):
        """Grid quadrature of a periodic function over the cell."""
        axes = tuple(range(-self.dimension, 0))
        return np.sum(values, axis=axes) * (self.lattice.volume / self.n_grid)

    def compatible_with(self, other):
        return self.lattice.same_as(other.lattice) and np.allclose(
            self.kshift, other.kshift, rtol=0, atol=1e-12
        )


def _encode(miller, grid_shape):
    # Wrap indices into the grid so every key is a nonnegative integer.
    keys = np.zeros(miller.shape[0], dtype=np.int64)
    for j, n in enumerate(grid_shape):
        keys = keys * (4 * n + 1) + (miller[:, j] + 2 * n)
    return keys


def build_basis(lattice, ecut, kshift=None, grid_shape=None):
    """
    Planewave basis {G : 1/2 |G + kshift|^2 <= ecut}.

    Args:
        lattice: Lattice.
        ecut: energy cutoff in Hartree, > 0.
        kshift: Cartesian k-vector, default Gamma.
        grid_shape: FFT grid to use; defaults to fft_grid_shape(lattice, ecut, |k|).
            A grid shared with other bases must be at least that large.

    Returns:
        PlanewaveBasis.
    """
    if not ecut > 0:
        raise ValueError(f"ecut must be positive, got {ecut}")
    d = lattice.dimension
    k = np.zeros(d) if kshift is None else np.asarray(kshift, dtype=float).reshape(d)
    recip = lattice.reciprocal_vectors

    radius = np.sqrt(2.0 * ecut) + np.linalg.norm(k)
    lengths = np.linalg.norm(lattice.cell_vectors, axis=1)
    bound = np.floor(radius * lengths / (2 * np.pi)).astype(int) + 1
    ranges = [np.arange(-b, b + 1) for b in bound]
    cand = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, d)
    kin = 0.5 * np.sum((cand @ recip + k) ** 2, axis=1)
    keep = kin <= ecut
    miller = cand[keep]
    if miller.shape[0] == 0:
        raise ValueError(f"no planewave satisfies 1/2 |G + k|^2 <= {ecut}")
    # meshgrid with "ij" enumerates in lexicographic order already; sort anyway
    order = np.lexsort(miller.T[::-1])
    miller = np.ascontiguousarray(miller[order])
    gvec = miller @ recip
    kin = 0.5 * np.sum((gvec + k) ** 2, axis=1)

    required = fft_grid_shape(lattice, ecut, np.linalg.norm(k))
    if grid_shape is None:
        grid_shape = required
    grid_shape = tuple(int(n) for n in grid_shape)
    if len(grid_shape) != d:
        raise ValueError("grid_shape has wrong dimension")
    nmax = np.abs(miller).max(axis=0)
    if any(n < 2 * m + 1 for n, m in zip(grid_shape, nmax)):
        raise ValueError(f"grid {grid_shape} cannot hold indices up to {nmax}")

    index = tuple(np.mod(miller[:, j], grid_shape[j]) for j in range(d))
    for arr in (miller, gvec, kin, k):
        arr.setflags(write=False)
    return PlanewaveBasis(lattice, float(ecut), k, miller, gvec, kin, grid_shape, index)


@dataclass(eq=False)
class PeriodicField:
    """
    Periodic function expanded in a planewave basis.

    Attributes:
        basis: the planewave basis.
        coeffs: complex Fourier coefficients aligned with basis.miller.
    """

    basis: PlanewaveBasis
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.basis.size,):
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match basis size {self.basis.size}")
        self._values = None

    @classmethod
    def from_values(cls, basis, values):
        return cls(basis, basis.to_fourier(values))

    @classmethod
    def zeros(cls, basis):
        return cls(basis, np.zeros(basis.size, dtype=complex))

    def values(self):
        """Grid values (cached)."""
        if self._values is None:
            self._values = self.basis.to_real(self.coeffs)
        return self._values

    def real_values(self):
        return self.values().real

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def inner(self, other):
        """L2 inner product <self, other>, antilinear in self."""
        return complex(np.vdot(self.coeffs, other.coeffs))

    def mean(self):
        """Cell average (1/|Omega|) int f."""
        zero = self.basis.index_of(np.zeros((1, self.basis.dimension), dtype=int))[0]
        if zero < 0 or np.any(self.basis.kshift):
            return 0.0
        return complex(self.coeffs[zero] / np.sqrt(self.basis.lattice.volume))

    def hermitian_defect(self):
        """max |c(-G) - conj(c(G))| relative to max |c|; zero for real fields."""
        minus = self.basis.minus_index()
        if np.any(minus < 0):
            return np.inf
        scale = max(np.abs(self.coeffs).max(), 1e-300)
        return float(np.abs(self.coeffs[minus] - self.coeffs.conj()).max() / scale)

    def is_real_valued(self, tol=1e-12):
        return self.hermitian_defect() <= tol

    def __add__(self, other):
        _check_same(self, other)
        return PeriodicField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return PeriodicField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return PeriodicField(self.basis, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicField(self.basis, -self.coeffs)


def _check_same(a, b):
    if a.basis is not b.basis and not (
        a.basis.compatible_with(b.basis) and np.array_equal(a.basis.miller, b.basis.miller)
    ):
        raise ValueError("fields live on different bases")


def to_real(f):
    """Grid values of a PeriodicField."""
    return f.values()


def to_fourier(values, basis):
    """PeriodicField with the Fourier coefficients of grid values."""
    return PeriodicField.from_values(basis, values)


def project(f, target):
    """
    L2-orthogonal projection of f onto the span of target's planewaves.

    Coefficients on shared G-vectors are copied, the others are dropped
    (or zero when target is larger).
    """
    if not f.basis.compatible_with(target):
        raise ValueError("projection requires the same lattice and k-shift")
    pos = f.basis.index_of(target.miller)
    out = np.zeros(target.size, dtype=complex)
    hit = pos >= 0
    out[hit] = f.coeffs[pos[hit]]
    return PeriodicField(target, out)


def sobolev_norm(f, s):
    """H^s norm (sum_G (1 + |G + k|^2 / 2)^s |f_G|^2)^{1/2}."""
    weights = (1.0 + f.basis.kinetic) ** s
    return float(np.sqrt(np.sum(weights * np.abs(f.coeffs) ** 2)))
