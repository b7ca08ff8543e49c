"""
A posteriori bounds on the ground-state energy error.

Everything here works in the reference space of one k-fiber, which stands in
for the full space. With A = H_rho + s > 0 and the eigenpairs (eps_i, phi_i)
of Pi_N A Pi_N, the residuals r_i = eps_i phi_i - A phi_i live in V_N^perp and
give the cluster bound

    eta^2 = sum_i <r_i, A^{-1} r_i> + 4 eps_Nel c_N^2 sum_i |A^{-1} r_i|^2,
    c_N = (1 - eps_Nel / eps_{Nel+1})^{-1},

with 0 <= sum_i (eps_{i,N} - eps_i) <= eta^2. A^{-1} is either applied
exactly (eta_full) or through the truncated Neumann series of the splitting
A = H_0 + W (eta_0, eta_1), optionally with the remainder estimate that turns
the truncation back into an upper bound (the guaranteed variants).

The energy bound is err_disc + err_scf with
    err_disc = Tr((H_m - mu) gamma_{m+1}),  mu = (sum eps_i - eta^2) / N_el,
    err_scf  = Tr(H_m gamma_m) - Tr(H_m gamma_{m+1}).
"""

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse.linalg

from .model import apply_potential, hamiltonian_matrix
from .pw_basis import PeriodicField

__all__ = [
    "VARIANTS",
    "GUARANTEED_VARIANTS",
    "EstimatorUnavailable",
    "SplitOperator",
    "ResidualSet",
    "BoundReport",
    "apply_H0_inverse",
    "apply_W",
    "opnorm_terms",
    "default_shift",
    "residuals",
    "relative_gap_constant",
    "eta_from_solutions",
    "eta_full",
    "truncated_solutions",
    "eta_truncated",
    "opnorm_bound",
    "neumann_remainder",
    "eta_guaranteed",
    "mu_lower_bound",
    "error_components",
    "shift_for_opnorm",
    "optimize_shift",
    "fiber_bounds",
]

VARIANTS = ("eta_full", "eta0", "eta1", "eta0_g", "eta1_g", "eta0_g_opt", "eta1_g_opt")
GUARANTEED_VARIANTS = ("eta_full", "eta0_g", "eta1_g", "eta0_g_opt", "eta1_g_opt")
NEEDS_OPNORM = ("eta0_g", "eta1_g", "eta0_g_opt", "eta1_g_opt")

DENSE_LIMIT = 4096
COARSE_RESIDUAL_TOL = 1e-8
NEGATIVE_TOL = 1e-12


class EstimatorUnavailable(RuntimeError):
    """The requested estimator cannot be evaluated for this iterate."""


class SplitOperator:
    """
    Shifted Hamiltonian A = H + s on a reference sphere, split as A = H_0 + W.

    H_0 keeps the dense block Pi_N A Pi_N and replaces the V_N^perp block by
    the Fourier-diagonal -Delta/2 + <V> + s; W holds the two off-diagonal
    blocks and the perp-block fluctuation V - <V>.

    Args:
        basis: reference orbital basis.
        mask: computational sphere V_N inside basis.
        potential: total potential V_tot on a potential basis sharing the grid.
        shift: constant s.
        gap_denominator: "printed" uses eps_Nel in the middle term of the
            operator-norm estimate, "next" uses eps_{Nel+1}.
    """

    def __init__(self, basis, mask, potential, shift, gap_denominator="printed"):
        if gap_denominator not in ("printed", "next"):
            raise ValueError("gap_denominator must be 'printed' or 'next'")
        self.basis = basis
        self.mask = np.asarray(mask, dtype=bool)
        self.perp = ~self.mask
        self.potential = potential
        self.shift = float(shift)
        self.gap_denominator = gap_denominator
        values = potential.real_values()
        self.mean_potential = float(np.real(potential.mean()))
        self.potential_sup = float(np.abs(values).max())
        self.fluctuation_sup = float(np.abs(values - self.mean_potential).max())
        self.perp_diagonal = basis.kinetic[self.perp] + self.mean_potential + self.shift
        self.perp_floor = float(basis.kinetic[self.perp].min()) if self.perp.any() else np.inf
        self._coarse_factor = None
        self._full_factor = None

    def with_shift(self, shift):
        return SplitOperator(self.basis, self.mask, self.potential, shift, self.gap_denominator)

    # --- dense pieces -------------------------------------------------------

    @property
    def coarse_matrix(self):
        return hamiltonian_matrix(self.basis, self.potential, self.shift, self.mask)

    def coarse_factor(self):
        """Cholesky factorization of A_N = Pi_N A Pi_N."""
        if self._coarse_factor is None:
            try:
                self._coarse_factor = scipy.linalg.cho_factor(self.coarse_matrix)
            except np.linalg.LinAlgError as exc:
                raise EstimatorUnavailable("A_N is not positive definite") from exc
        return self._coarse_factor

    def full_factor(self):
        """Cholesky factorization of A on the whole reference sphere."""
        if self._full_factor is None:
            mat = hamiltonian_matrix(self.basis, self.potential, self.shift)
            try:
                self._full_factor = scipy.linalg.cho_factor(mat)
            except np.linalg.LinAlgError as exc:
                raise EstimatorUnavailable("A is not positive definite") from exc
        return self._full_factor

    # --- operator applications (rows of coeffs are vectors) ----------------

    def apply_A(self, coeffs):
        coeffs = np.atleast_2d(coeffs)
        return (self.basis.kinetic + self.shift) * coeffs + apply_potential(
            self.potential, self.basis, coeffs
        )

    def apply_H0(self, coeffs):
        coeffs = np.atleast_2d(coeffs)
        out = np.zeros_like(coeffs, dtype=complex)
        out[:, self.mask] = self.coarse_matrix_apply(coeffs[:, self.mask])
        out[:, self.perp] = self.perp_diagonal * coeffs[:, self.perp]
        return out

    def coarse_matrix_apply(self, block):
        inside = np.zeros((block.shape[0], self.basis.size), dtype=complex)
        inside[:, self.mask] = block
        return self.apply_A(inside)[:, self.mask]

    def apply_H0_inverse(self, coeffs):
        """Blockwise H_0^{-1}: dense solve in V_N, diagonal division in V_N^perp."""
        coeffs = np.atleast_2d(coeffs)
        out = np.zeros_like(coeffs, dtype=complex)
        if np.any(self.perp_diagonal <= 0):
            raise EstimatorUnavailable("H_0 perp block is not positive")
        out[:, self.perp] = coeffs[:, self.perp] / self.perp_diagonal
        coarse = coeffs[:, self.mask]
        if np.any(coarse):
            out[:, self.mask] = scipy.linalg.cho_solve(self.coarse_factor(), coarse.T).T
        return out

    def apply_W(self, coeffs):
        """W f = Pi_N V Pi_perp f + Pi_perp V Pi_N f + Pi_perp (V - <V>) Pi_perp f."""
        coeffs = np.atleast_2d(coeffs)
        v_full = apply_potential(self.potential, self.basis, coeffs)
        out = np.zeros_like(coeffs, dtype=complex)
        out[:, self.perp] = v_full[:, self.perp] - self.mean_potential * coeffs[:, self.perp]
        if self.perp.any():
            only_perp = np.where(self.perp, coeffs, 0)
            out[:, self.mask] = apply_potential(self.potential, self.basis, only_perp)[:, self.mask]
        return out

    def solve(self, coeffs, method="cg", tol=1e-13):
        """
        A^{-1} applied to each row.

        method "cg" is matrix-free conjugate gradients preconditioned by H_0
        (the way a planewave code inverts A); "dense" factorizes A and serves
        as the oracle.
        """
        coeffs = np.atleast_2d(coeffs)
        if method == "dense":
            if self.basis.size > DENSE_LIMIT:
                raise EstimatorUnavailable(f"dense solve limited to {DENSE_LIMIT} planewaves")
            return scipy.linalg.cho_solve(self.full_factor(), coeffs.T).T
        if method != "cg":
            raise ValueError("method must be 'cg' or 'dense'")
        n = self.basis.size
        op = scipy.sparse.linalg.LinearOperator(
            (n, n), matvec=lambda x: self.apply_A(x.reshape(1, -1))[0], dtype=complex
        )
        prec = scipy.sparse.linalg.LinearOperator(
            (n, n), matvec=lambda x: self.apply_H0_inverse(x.reshape(1, -1))[0], dtype=complex
        )
        out = np.empty_like(coeffs, dtype=complex)
        for i, rhs in enumerate(coeffs):
            norm = np.linalg.norm(rhs)
            if norm == 0:
                out[i] = 0.0
                continue
            sol, info = scipy.sparse.linalg.cg(op, rhs, rtol=tol, atol=0.0, M=prec, maxiter=10 * n)
            if info != 0:
                raise EstimatorUnavailable(f"CG did not converge (info={info})")
            out[i] = sol
        return out


def _as_rows(f):
    if isinstance(f, PeriodicField):
        return f.coeffs[None, :], f.basis
    return np.atleast_2d(f), None


def apply_H0_inverse(split, f):
    """H_0^{-1} f for a PeriodicField on split.basis or an array of rows."""
    rows, basis = _as_rows(f)
    out = split.apply_H0_inverse(rows)
    return PeriodicField(basis, out[0]) if basis is not None else out


def apply_W(split, f):
    """W f for a PeriodicField on split.basis or an array of rows."""
    rows, basis = _as_rows(f)
    out = split.apply_W(rows)
    return PeriodicField(basis, out[0]) if basis is not None else out


def default_shift(eigenvalues):
    """Smallest shift making A positive with margin 0.1: max(0, 0.1 - lambda_1)."""
    return max(0.0, 0.1 - float(eigenvalues[0]))


@dataclass(eq=False)
class ResidualSet:
    """
    Residuals of the occupied eigenpairs of Pi_N H Pi_N.

    The residual r_i = lambda_i phi_i - H phi_i does not depend on the shift;
    the shifted eigenvalues eps = lambda + shift do.

    Attributes:
        vectors: (n_el, n_pw) residuals in the reference basis, zero on V_N.
        lam: (n_el + 1,) unshifted eigenvalues lambda_1..lambda_{Nel+1}.
        shift: shift of A.
        coarse_norms: norms of Pi_N r_i before zeroing (solver diagnostic).
    """

    vectors: np.ndarray
    lam: np.ndarray
    shift: float
    coarse_norms: np.ndarray = None

    @property
    def n_el(self):
        return self.vectors.shape[0]

    @property
    def eps(self):
        return self.lam + self.shift

    @property
    def norms(self):
        return np.linalg.norm(self.vectors, axis=1)

    def with_shift(self, shift):
        return ResidualSet(self.vectors, self.lam, float(shift), self.coarse_norms)


def residuals(slice_, split):
    """
    Residuals of the occupied eigenpairs of a SpectralSlice w.r.t. split's A.

    Raises:
        ValueError: if the part of a residual inside V_N exceeds 1e-8, meaning
            the slice does not come from the same operator and mask.
    """
    n_el = slice_.n_occ
    lam = np.asarray(slice_.unshifted_eigenvalues[: n_el + 1], dtype=float)
    phi = slice_.vectors[:n_el]
    eps = lam[:n_el] + split.shift
    res = eps[:, None] * phi - split.apply_A(phi)
    coarse = np.linalg.norm(res[:, split.mask], axis=1)
    if np.any(coarse > COARSE_RESIDUAL_TOL):
        raise ValueError(f"residual inside V_N is {coarse.max():.3e}; inconsistent inputs")
    res[:, split.mask] = 0.0
    return ResidualSet(res, lam, split.shift, coarse)


def relative_gap_constant(eps_nel, eps_next):
    """c_N = (1 - eps_Nel / eps_next)^{-1} for 0 < eps_Nel < eps_next."""
    if not (eps_nel > 0 and eps_next > eps_nel):
        raise EstimatorUnavailable(
            f"relative gap undefined: eps_Nel={eps_nel:.6g}, lower bound={eps_next:.6g}"
        )
    return 1.0 / (1.0 - eps_nel / eps_next)


def _gap_terms(res):
    eps = res.eps
    c_n = relative_gap_constant(eps[res.n_el - 1], eps[res.n_el])
    return eps[res.n_el - 1], c_n


def eta_from_solutions(res, solutions):
    """sum_i Re<r_i, x_i> + 4 eps_Nel c_N^2 sum_i |x_i|^2 for x_i ~ A^{-1} r_i."""
    eps_nel, c_n = _gap_terms(res)
    first = float(np.sum(np.real(np.sum(np.conj(res.vectors) * solutions, axis=1))))
    second = float(np.sum(np.abs(solutions) ** 2))
    return first + 4.0 * eps_nel * c_n**2 * second


def eta_full(res, split, method="cg"):
    """eta^2 with A^{-1} r_i from a full solve in the reference space."""
    if not np.any(res.vectors):
        _gap_terms(res)
        return 0.0
    return eta_from_solutions(res, split.solve(res.vectors, method))


def truncated_solutions(res, split, order):
    """chi_i = sum_{n <= order} (-H_0^{-1} W)^n H_0^{-1} r_i."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    chi = split.apply_H0_inverse(res.vectors)
    if order == 1:
        chi = chi - split.apply_H0_inverse(split.apply_W(chi))
    return chi


def eta_truncated(res, split, order):
    """eta_0^2 or eta_1^2: eta^2 with A^{-1} replaced by the truncated Neumann series."""
    if not np.any(res.vectors):
        _gap_terms(res)
        return 0.0
    return eta_from_solutions(res, truncated_solutions(res, split, order))


def opnorm_terms(res_over_eps, potential_sup, fluctuation_sup, eps_denominator,
                 perp_floor, mean_potential, shift):
    """
    The three terms of the operator-norm estimate of H_0^{-1} W.

    Args:
        res_over_eps: (n_el, n_pw) rows r_i / eps_i.
        potential_sup: |V_tot|_inf.
        fluctuation_sup: |V_tot - <V_tot>|_inf.
        eps_denominator: eps_Nel (or eps_{Nel+1}).
        perp_floor: smallest kinetic energy in V_N^perp.
        mean_potential, shift: <V_tot> and s.

    Returns:
        (sqrt(lambda_max(R^* R)), |V|_inf / eps, (|V - <V>|_inf + |V|_inf) / (E_perp + <V> + s)).
    """
    rows = np.atleast_2d(res_over_eps)
    gram = rows.conj() @ rows.T
    coarse = math.sqrt(max(float(scipy.linalg.eigvalsh(gram)[-1]), 0.0)) if rows.size else 0.0
    if eps_denominator <= 0:
        raise EstimatorUnavailable("nonpositive eigenvalue in the operator-norm estimate")
    perp_denom = perp_floor + mean_potential + shift
    if perp_denom <= 0:
        raise EstimatorUnavailable("nonpositive perp-block denominator")
    return coarse, potential_sup / eps_denominator, (fluctuation_sup + potential_sup) / perp_denom


def _opnorm_parts(res, split):
    eps = res.eps
    n_el = res.n_el
    if np.any(eps[:n_el] <= 0):
        raise EstimatorUnavailable("shifted eigenvalues must be positive")
    denom = eps[n_el - 1] if split.gap_denominator == "printed" else eps[n_el]
    return opnorm_terms(res.vectors / eps[:n_el, None], split.potential_sup,
                        split.fluctuation_sup, denom, split.perp_floor,
                        split.mean_potential, split.shift)


def opnorm_bound(split, res):
    """
    Computable upper bound q >= |H_0^{-1} W|.

    q = sqrt(lambda_max(R^* R)) + |V|_inf / eps_Nel
        + (|V - <V>|_inf + |V|_inf) / (E_perp + <V> + s),
    where R has columns r_i / eps_i and E_perp is the smallest kinetic energy
    in V_N^perp. When V_N is the whole reference sphere, W = 0 and q = 0.
    """
    if not split.perp.any():
        return 0.0
    return float(sum(_opnorm_parts(res, split)))


def neumann_remainder(res, split, order, q):
    """
    Per-orbital bounds e~_i = q^{L+1} |H_0^{-1} r_i| / (1 - q) on the
    truncation error |A^{-1} r_i - chi_i|.
    """
    if not q < 1:
        raise EstimatorUnavailable(f"operator-norm bound {q:.4g} >= 1")
    pre = np.linalg.norm(split.apply_H0_inverse(res.vectors), axis=1)
    return q ** (order + 1) * pre / (1.0 - q)


def eta_guaranteed(res, split, order, q=None):
    """
    eta_{L,g}^2 = eta_L^2 + sum_i [ |r_i| e_i + 4 eps_Nel c_N^2 (2 e_i |chi_i| + e_i^2) ],
    an upper bound on eta^2 whenever q = opnorm_bound < 1.
    """
    if q is None:
        q = opnorm_bound(split, res)
    eps_nel, c_n = _gap_terms(res)
    if not np.any(res.vectors):
        return 0.0
    chi = truncated_solutions(res, split, order)
    remainder = neumann_remainder(res, split, order, q)
    base = eta_from_solutions(res, chi)
    chi_norms = np.linalg.norm(chi, axis=1)
    correction = res.norms * remainder + 4.0 * eps_nel * c_n**2 * (
        2.0 * remainder * chi_norms + remainder**2
    )
    return base + float(np.sum(correction))


def mu_lower_bound(eigenvalues, eta_sq, shift=0.0):
    """
    mu = (sum_i eps_i - eta^2) / N_el - shift.

    Args:
        eigenvalues: the N_el shifted eigenvalues eps_i.
        eta_sq: bound on sum_i (eps_{i,N} - eps_i).
        shift: shift to remove, so the result refers to the unshifted H.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    return (math.fsum(eigenvalues) - eta_sq) / len(eigenvalues) - shift


def error_components(next_eigenvalues, trace_current, eta_sq):
    """
    err_disc = Tr((H_m - mu) gamma_{m+1}) and err_scf = Tr(H_m gamma_m) - Tr(H_m gamma_{m+1}).

    Tr(H_m gamma_{m+1}) is the sum of the (unshifted) eigenvalues lambda_{i,m+1}.
    mu is kept as an exact rational so the cancellation in err_disc is exact.

    Args:
        next_eigenvalues: lambda_{i,N,m+1}, i = 1..N_el (unshifted).
        trace_current: Tr(H_m gamma_m).
        eta_sq: eta^2 for the shifted operator.

    Returns:
        (err_disc, err_scf, mu) with mu the unshifted lower bound as a float.

    Raises:
        ArithmeticError: if a component is below -1e-12.
    """
    lam = [Fraction(float(x)) for x in next_eigenvalues]
    n_el = len(lam)
    trace_next = sum(lam, Fraction(0))
    mu = (trace_next - Fraction(float(eta_sq))) / n_el
    err_disc = float(trace_next - n_el * mu)
    err_scf = float(Fraction(float(trace_current)) - trace_next)
    if err_disc < -NEGATIVE_TOL or err_scf < -NEGATIVE_TOL:
        raise ArithmeticError(f"negative error component: disc={err_disc:.3e}, scf={err_scf:.3e}")
    return err_disc, err_scf, float(mu)


def _q_function(res, split):
    """q(s) for every shift s, reusing the shift-independent residuals."""
    n_el = res.n_el
    gram = res.vectors.conj() @ res.vectors.T
    lam = res.lam
    denom_idx = n_el - 1 if split.gap_denominator == "printed" else n_el
    numer = split.fluctuation_sup + split.potential_sup

    def q(s):
        eps = lam + s
        if np.any(eps[: n_el + 1] <= 0):
            return np.inf
        scaled = gram / np.outer(eps[:n_el], eps[:n_el])
        coarse = math.sqrt(max(float(scipy.linalg.eigvalsh(scaled)[-1]), 0.0))
        if not split.perp.any():
            return 0.0
        perp_denom = split.perp_floor + split.mean_potential + s
        if perp_denom <= 0:
            return np.inf
        return coarse + split.potential_sup / eps[denom_idx] + numer / perp_denom

    return q


def shift_for_opnorm(res, split, target=0.5, start=None):
    """
    Smallest shift >= start with opnorm bound q(s) <= target (q decreases in s).
    """
    q = _q_function(res, split)
    lo = default_shift(res.lam) if start is None else float(start)
    if q(lo) <= target:
        return lo
    step = max(1.0, abs(lo))
    hi = lo + step
    while q(hi) > target:
        step *= 2.0
        hi = lo + step
        if step > 1e12:
            raise EstimatorUnavailable("no shift satisfies the operator-norm condition")
    return float(scipy.optimize.brentq(lambda s: q(s) - target, lo, hi, xtol=1e-12, rtol=1e-12))


def optimize_shift(res, split, order, n_scan=48, rtol=1e-3):
    """
    Shift minimizing the guaranteed bound eta_{L,g}^2(s) over the admissible set
    {s >= default shift : q(s) < 1}.

    A log-spaced scan above the admissibility threshold (plus the shift used by
    the non-optimized guaranteed variant) brackets the minimum, which is then
    refined by golden-section search to relative tolerance rtol.

    Returns:
        (shift, eta_sq).
    """
    q = _q_function(res, split)
    s_pos = max(default_shift(res.lam), split.shift)
    # eta_g blows up as q(s) -> 1, so the scan starts just above that point
    s_lo = shift_for_opnorm(res, split, target=1.0, start=s_pos)
    scale = max(1.0, abs(s_lo), float(res.lam[res.n_el] - res.lam[0]))
    shifts = s_lo + np.geomspace(1e-8 * scale, 1e4 * scale, n_scan)
    shifts = np.unique(np.append(shifts, shift_for_opnorm(res, split, 0.5, s_pos)))

    def value(s):
        if not s >= s_pos or not q(s) < 1:
            return np.inf
        try:
            return eta_guaranteed(res.with_shift(s), split.with_shift(s), order)
        except EstimatorUnavailable:
            return np.inf

    values = np.array([value(s) for s in shifts])
    if not np.isfinite(values).any():
        raise EstimatorUnavailable("empty admissible shift interval")
    best = int(np.argmin(values))
    s_best, v_best = float(shifts[best]), float(values[best])
    if 0 < best < len(shifts) - 1:
        bracket = (shifts[best - 1], shifts[best], shifts[best + 1])
        try:
            opt = scipy.optimize.minimize_scalar(value, bracket=bracket, method="golden",
                                                 options={"xtol": rtol})
        except ValueError:
            opt = None
        if opt is not None and np.isfinite(opt.fun) and opt.fun < v_best:
            s_best, v_best = float(opt.x), float(opt.fun)
    return s_best, v_best


@dataclass(eq=False)
class BoundReport:
    """
    Energy error bound for one SCF iterate and one estimator variant.

    Attributes:
        variant: one of VARIANTS.
        eta_sq: eta^2 (sum over fibers with k-weights for several fibers).
        mu_lb: lower bound mu on the mean eigenvalue (unshifted; per fiber list
            in fiber_mu).
        err_disc, err_scf: error components.
        shift_used: shift of A (first fiber; all in fiber_shifts).
        opnorm_bound: q when computed.
        guaranteed: whether the bound is mathematically guaranteed.
        notes: validity notes.
    """

    variant: str
    eta_sq: float
    mu_lb: float
    err_disc: float
    err_scf: float
    shift_used: float
    opnorm_bound: float = None
    guaranteed: bool = False
    notes: list = field(default_factory=list)
    fiber_mu: list = field(default_factory=list)
    fiber_shifts: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def total(self):
        return self.err_disc + self.err_scf


def _eta_for_variant(variant, res, split, gshift_target):
    """(eta_sq, shift, q) for one fiber."""
    if variant == "eta_full":
        return eta_full(res, split), split.shift, None
    if variant in ("eta0", "eta1"):
        return eta_truncated(res, split, int(variant[3])), split.shift, None
    order = int(variant[3])
    if variant.endswith("_opt"):
        s, eta_sq = optimize_shift(res, split, order)
    else:
        s = shift_for_opnorm(res, split, target=gshift_target, start=split.shift)
        sp = split.with_shift(s)
        eta_sq = eta_guaranteed(res.with_shift(s), sp, order)
    q = opnorm_bound(split.with_shift(s), res.with_shift(s))
    return eta_sq, s, q


def fiber_bounds(model, fibers, probe_slices, current_orbitals, potential,
                 variants=VARIANTS, shift=None, gshift_target=0.5, gap_denominator="printed",
                 timer=None):
    """
    Bound reports for one SCF iterate gamma_m.

    Args:
        model: ModelSpec (convexity decides the guaranteed label).
        fibers: Fiber list (reference basis, mask, weight).
        probe_slices: per-fiber SpectralSlice of Pi_N H_m Pi_N, H_m = H_{rho(gamma_m)},
            computed without shift; their occupied states form gamma_{m+1}.
        current_orbitals: per-fiber OrbitalSet of gamma_m.
        potential: total potential of H_m.
        variants: estimator variants to evaluate.
        shift: fixed shift for A (default: per-fiber default_shift).
        gshift_target: q targeted by the non-optimized guaranteed variants.
        gap_denominator: passed to SplitOperator.
        timer: optional dict accumulating seconds per variant.

    Returns:
        dict variant -> BoundReport (variants that could not be evaluated map
        to a report with NaN values and a note).
    """
    weights = np.array([f.weight for f in fibers])
    traces = []
    splits, ress = [], []
    for fiber, sl, orbs in zip(fibers, probe_slices, current_orbitals):
        s = default_shift(sl.unshifted_eigenvalues) if shift is None else float(shift)
        split = SplitOperator(fiber.basis, fiber.mask, potential, s, gap_denominator)
        hphi = split.apply_A(orbs.coeffs) - s * orbs.coeffs
        traces.append(float(np.sum(np.real(np.sum(np.conj(orbs.coeffs) * hphi, axis=1)))))
        splits.append(split)
        ress.append(residuals(sl, split))

    reports = {}
    for variant in variants:
        t0 = time.perf_counter()
        notes = []
        etas, shifts, qs, mus, terms = [], [], [], [], []
        ok = True
        for sl, split, res, trace in zip(probe_slices, splits, ress, traces):
            try:
                eta_sq, s, q = _eta_for_variant(variant, res, split, gshift_target)
            except EstimatorUnavailable as exc:
                notes.append(str(exc))
                ok = False
                break
            lam = sl.unshifted_eigenvalues[: sl.n_occ]
            err_disc, err_scf, mu = error_components(lam, trace, eta_sq)
            etas.append(eta_sq)
            shifts.append(s)
            qs.append(q)
            mus.append(mu)
            terms.append((err_disc, err_scf))
        elapsed = time.perf_counter() - t0
        if timer is not None:
            timer[variant] = timer.get(variant, 0.0) + elapsed
        if not ok:
            reports[variant] = BoundReport(variant, np.nan, np.nan, np.nan, np.nan, np.nan,
                                           None, False, notes)
            continue
        err_disc = float(weights @ np.array([t[0] for t in terms]))
        err_scf = float(weights @ np.array([t[1] for t in terms]))
        q_max = None if qs[0] is None else float(max(qs))
        guaranteed = variant in GUARANTEED_VARIANTS and model.convex
        if variant in NEEDS_OPNORM:
            guaranteed = guaranteed and q_max is not None and q_max < 1
        if not model.convex:
            notes.append("nonconvex functional: bound is an estimate")
        notes.append("eps_{Nel+1} lower bound taken as the variational eigenvalue")
        reports[variant] = BoundReport(
            variant,
            float(weights @ np.array(etas)),
            mus[0],
            err_disc,
            err_scf,
            shifts[0],
            q_max,
            guaranteed,
            notes,
            mus,
            shifts,
            elapsed,
        )
    return reports
