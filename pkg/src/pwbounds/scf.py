"""
Self-consistent field iterations on a Discretization.

Iterate m holds the Aufbau orbitals gamma_m obtained by diagonalizing the
Hamiltonian of the (mixed) input density. The estimators need the Hamiltonian
of the density of gamma_m itself, so every iteration also records a "probe"
diagonalization of H_{rho(gamma_m)}; its occupied states are gamma_{m+1} in
the unmixed fixed-point map. With plain fixed-point steps (damped mixing,
beta = 1) the probe is reused as the next iterate.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .pw_basis import PeriodicField
from .linear_solver import diagonalize_projected
from .model import OrbitalSet, density, total_energy, total_potential

__all__ = [
    "ScfConfig",
    "ScfRecord",
    "ScfHistory",
    "ScfNotConverged",
    "AndersonMixer",
    "DampedMixer",
    "kerker_factor",
    "initial_density",
    "scf_step",
    "run_scf",
]

log = logging.getLogger(__name__)

ANDERSON_COND_LIMIT = 1e12


class ScfNotConverged(UserWarning):
    pass


@dataclass
class ScfConfig:
    """
    Attributes:
        density_tol: stop when |rho_out - rho_in|_L2 < density_tol.
        max_iter: maximum number of diagonalizations of the mixed Hamiltonian.
        mixing: "damped" or "anderson".
        beta: damping factor in (0, 1].
        depth: Anderson history length.
        kerker: Kerker wavevector k0; the density residual is scaled by
            |G|^2 / (|G|^2 + k0^2) before mixing (0 disables).
        initial_guess: "constant" or "random".
        seed: seed for the random initial guess.
    """

    density_tol: float = 1e-10
    max_iter: int = 100
    mixing: str = "anderson"
    beta: float = 0.5
    depth: int = 5
    kerker: float = 1.0
    initial_guess: str = "constant"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.kerker < 0:
            raise ValueError("kerker must be nonnegative")
        if self.density_tol <= 0:
            raise ValueError("density_tol must be positive")
        if self.mixing not in ("damped", "anderson"):
            raise ValueError("mixing must be 'damped' or 'anderson'")
        if self.initial_guess not in ("constant", "random"):
            raise ValueError("initial_guess must be 'constant' or 'random'")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(eq=False)
class ScfRecord:
    """
    One SCF iterate gamma_m.

    Attributes:
        m: iteration index (1-based).
        orbitals: per-fiber OrbitalSet of gamma_m.
        eigenvalues: per-fiber eigenvalues lambda_{i,N,m} that produced gamma_m.
        density: rho(gamma_m).
        energy: E(gamma_m).
        residual: |rho(gamma_m) - rho_in|_L2 for the input density of this step.
        input_density: rho_in, the (mixed) density whose Hamiltonian gave gamma_m.
        probe: per-fiber SpectralSlice of H_{rho(gamma_m)} (gamma_{m+1} in the
            unmixed map).
        bounds: estimator output attached by the hook.
    """

    m: int
    orbitals: list
    eigenvalues: list
    density: PeriodicField
    energy: float
    residual: float
    probe: list = None
    potential: PeriodicField = None
    input_density: PeriodicField = None
    bounds: dict = field(default_factory=dict)


@dataclass(eq=False)
class ScfHistory:
    records: list = field(default_factory=list)
    converged: bool = False
    final_residual: float = np.inf
    warnings: list = field(default_factory=list)
    config: ScfConfig = None

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def energies(self):
        return np.array([r.energy for r in self.records])

    @property
    def last(self):
        return self.records[-1]


def kerker_factor(basis, k0):
    """|G|^2 / (|G|^2 + k0^2) on a potential basis (1 everywhere when k0 = 0)."""
    if k0 == 0:
        return np.ones(basis.size)
    g2 = np.sum(basis.gvectors**2, axis=1)
    return g2 / (g2 + k0**2)


class DampedMixer:
    def __init__(self, beta, kerker=0.0):
        self.beta = beta
        self.kerker = kerker

    def __call__(self, rho_in, rho_out):
        p = kerker_factor(rho_in.basis, self.kerker)
        return PeriodicField(rho_in.basis, rho_in.coeffs + self.beta * p * (rho_out - rho_in).coeffs)

    @property
    def exact(self):
        return self.beta == 1.0 and self.kerker == 0


class AndersonMixer:
    """
    Anderson acceleration on the (Kerker-scaled) density residual
    f = P (rho_out - rho_in).

    The least-squares problem over residual differences is solved by QR on the
    real-stacked coefficients; the history restarts when its condition number
    exceeds ANDERSON_COND_LIMIT.
    """

    exact = False

    def __init__(self, depth, beta, kerker=0.0):
        self.depth = depth
        self.beta = beta
        self.kerker = kerker
        self.xs = []
        self.fs = []

    def __call__(self, rho_in, rho_out):
        x = rho_in.coeffs
        f = kerker_factor(rho_in.basis, self.kerker) * (rho_out.coeffs - rho_in.coeffs)
        self.xs.append(x.copy())
        self.fs.append(f.copy())
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.fs.pop(0)
        new = x + self.beta * f
        if len(self.xs) > 1:
            dx = np.array([b - a for a, b in zip(self.xs[:-1], self.xs[1:])]).T
            df = np.array([b - a for a, b in zip(self.fs[:-1], self.fs[1:])]).T
            stacked = np.vstack([df.real, df.imag])
            rhs = np.concatenate([f.real, f.imag])
            q, r = np.linalg.qr(stacked)
            if np.linalg.cond(r) > ANDERSON_COND_LIMIT:
                log.debug("Anderson history restarted (ill-conditioned)")
                self.xs, self.fs = [self.xs[-1]], [self.fs[-1]]
            else:
                gamma = np.linalg.solve(r, q.T @ rhs)
                new = new - (dx + self.beta * df) @ gamma
        return PeriodicField(rho_in.basis, new)


def _mixer(cfg):
    if cfg.mixing == "anderson":
        return AndersonMixer(cfg.depth, cfg.beta, cfg.kerker)
    return DampedMixer(cfg.beta, cfg.kerker)


def initial_density(model, disc, cfg):
    """Constant density N_el/|Omega|, or the density of random orthonormal orbitals."""
    basis = disc.potential_basis
    if cfg.initial_guess == "constant":
        coeffs = np.zeros(basis.size, dtype=complex)
        zero = basis.index_of(np.zeros((1, basis.dimension), dtype=int))[0]
        coeffs[zero] = model.n_el / np.sqrt(model.lattice.volume)
        return PeriodicField(basis, coeffs)
    rng = np.random.default_rng(cfg.seed)
    orbitals = []
    for fiber in disc.fibers:
        dim = int(fiber.mask.sum())
        raw = rng.standard_normal((dim, model.n_el)) + 1j * rng.standard_normal((dim, model.n_el))
        q, _ = np.linalg.qr(raw)
        coeffs = np.zeros((model.n_el, fiber.basis.size), dtype=complex)
        coeffs[:, fiber.mask] = q.T
        orbitals.append(OrbitalSet(fiber.basis, coeffs, mask=fiber.mask))
    return _bz_density(orbitals, disc)


def _bz_density(orbitals, disc):
    basis = disc.potential_basis
    coeffs = np.zeros(basis.size, dtype=complex)
    for fiber, orbs in zip(disc.fibers, orbitals):
        coeffs += fiber.weight * density(orbs, basis).coeffs
    return PeriodicField(basis, coeffs)


def _diagonalize(model, disc, potential):
    return [
        diagonalize_projected(model, None, 0.0, f.basis, f.mask, potential=potential)
        for f in disc.fibers
    ]


def scf_step(model, rho_in, disc):
    """
    One fixed-point step: diagonalize H_{rho_in} in V_N (no shift), fill the
    N_el lowest states of every fiber.

    Returns:
        (orbitals, rho_out, slices) with per-fiber OrbitalSets and SpectralSlices.
    """
    n = float(np.real(rho_in.mean()) * model.lattice.volume)
    if abs(n - model.n_el) > 1e-8 * model.n_el:
        raise ValueError(f"input density integrates to {n}, expected {model.n_el}")
    slices = _diagonalize(model, disc, total_potential(model, rho_in))
    orbitals = [s.occupied() for s in slices]
    return orbitals, _bz_density(orbitals, disc), slices


def run_scf(model, disc, cfg=None, hook=None):
    """
    Run SCF iterations and capture every iterate.

    Args:
        model: ModelSpec.
        disc: Discretization.
        cfg: ScfConfig (defaults when omitted).
        hook: callable(record, history) invoked once per iterate, after the
            probe diagonalization, so gamma_{m+1} is available; the return
            value is stored in record.bounds.

    Returns:
        ScfHistory (converged=False plus a warning when max_iter is reached).
    """
    cfg = cfg or ScfConfig()
    history = ScfHistory(config=cfg)
    mixer = _mixer(cfg)
    weights = disc.weights
    rho_in = initial_density(model, disc, cfg)
    slices = None
    for m in range(1, cfg.max_iter + 1):
        if slices is None:
            orbitals, rho_out, slices = scf_step(model, rho_in, disc)
        else:
            orbitals = [s.occupied() for s in slices]
            rho_out = _bz_density(orbitals, disc)
        residual = float((rho_out - rho_in).norm())
        potential = total_potential(model, rho_out)
        probe = _diagonalize(model, disc, potential)
        record = ScfRecord(
            m=m,
            orbitals=orbitals,
            eigenvalues=[s.unshifted_eigenvalues[: model.n_el] for s in slices],
            density=rho_out,
            energy=total_energy(model, orbitals, weights, rho_out),
            residual=residual,
            probe=probe,
            potential=potential,
            input_density=rho_in,
        )
        history.records.append(record)
        history.final_residual = residual
        log.debug("scf m=%d E=%.15g residual=%.3e", m, record.energy, residual)
        if hook is not None:
            record.bounds = hook(record, history) or {}
        if residual < cfg.density_tol or not model.density_dependent:
            history.converged = True
            break
        if mixer.exact:
            rho_in, slices = rho_out, probe
        else:
            rho_in = mixer(rho_in, rho_out)
            slices = None
    if not history.converged:
        msg = f"SCF not converged after {cfg.max_iter} iterations (residual {history.final_residual:.3e})"
        history.warnings.append(msg)
        warnings.warn(msg, ScfNotConverged, stacklevel=2)
    return history
