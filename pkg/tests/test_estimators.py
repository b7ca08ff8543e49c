import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from pwbounds import Discretization, Lattice, ModelSpec
from pwbounds.estimators import (
    EstimatorUnavailable,
    SplitOperator,
    apply_H0_inverse,
    apply_W,
    default_shift,
    error_components,
    eta_full,
    eta_guaranteed,
    eta_truncated,
    fiber_bounds,
    mu_lower_bound,
    neumann_remainder,
    opnorm_bound,
    opnorm_terms,
    optimize_shift,
    relative_gap_constant,
    residuals,
    shift_for_opnorm,
    truncated_solutions,
)
from pwbounds.linear_solver import diagonalize_projected
from pwbounds.model import constant_potential, hamiltonian_matrix
from pwbounds.pw_basis import PeriodicField

from conftest import iterate_split, linear_problem, toy_disc, toy_history, toy_model


@pytest.fixture(scope="module")
def hist():
    return toy_history()


@pytest.fixture(scope="module")
def last(hist):
    return iterate_split(hist.last)


def dense_A(split):
    return hamiltonian_matrix(split.basis, split.potential, split.shift)


def test_H0_inverse_single_perp_mode(last):
    split, _ = last
    j = np.flatnonzero(split.perp)[3]
    f = np.zeros(split.basis.size, dtype=complex)
    f[j] = 1.0
    out = apply_H0_inverse(split, PeriodicField(split.basis, f))
    expect = 1.0 / (split.basis.kinetic[j] + split.mean_potential + split.shift)
    np.testing.assert_allclose(out.coeffs, f * expect, rtol=1e-15)


def test_splitting_identity(last, rng):
    split, _ = last
    f = rng.standard_normal((3, split.basis.size)) + 1j * rng.standard_normal((3, split.basis.size))
    lhs = split.apply_H0(f) + apply_W(split, f)
    ref = f @ dense_A(split).T
    np.testing.assert_allclose(lhs, ref, atol=1e-11 * np.abs(ref).max())
    np.testing.assert_allclose(split.apply_A(f), ref, atol=1e-11 * np.abs(ref).max())
    # H_0^{-1} inverts H_0
    back = split.apply_H0_inverse(split.apply_H0(f))
    np.testing.assert_allclose(back, f, atol=1e-10 * np.abs(f).max())


def test_W_has_zero_coarse_block(last, rng):
    split, _ = last
    f = np.zeros(split.basis.size, dtype=complex)
    f[split.mask] = rng.standard_normal(split.mask.sum())
    assert np.abs(split.apply_W(f)[0, split.mask]).max() == 0.0


def test_opnorm_perp_term_arithmetic():
    terms = opnorm_terms(np.zeros((2, 5)), potential_sup=20.5, fluctuation_sup=20.5,
                         eps_denominator=2.0, perp_floor=400.0, mean_potential=0.25, shift=0.75)
    assert terms[0] == 0.0
    assert terms[1] == pytest.approx(20.5 / 2.0)
    assert terms[2] == pytest.approx(41 / 401, rel=1e-15)
    assert terms[2] == pytest.approx(0.1022, abs=1e-4)
    with pytest.raises(EstimatorUnavailable):
        opnorm_terms(np.zeros((1, 3)), 1.0, 1.0, 0.0, 4.0, 0.0, 1.0)
    with pytest.raises(EstimatorUnavailable):
        opnorm_terms(np.zeros((1, 3)), 1.0, 1.0, 1.0, 4.0, -5.0, 0.0)


def test_opnorm_constant_potential():
    lat = Lattice.interval(10.0)
    disc = Discretization.build(lat, 10.0, 40.0)
    model = ModelSpec(lat, 1, constant_potential(disc.potential_basis, 2.0), "linear")
    fib = disc.fibers[0]
    sl = diagonalize_projected(model, None, 0.0, fib.basis, fib.mask)
    split = SplitOperator(fib.basis, fib.mask, model.external.field, default_shift(sl.eigenvalues))
    res = residuals(sl, split)
    assert np.abs(res.vectors).max() == 0.0
    assert res.coarse_norms.max() < 1e-12
    assert split.fluctuation_sup == pytest.approx(0.0, abs=1e-13)
    # only V_N <-> V_N^perp coupling through |V|_inf remains; no residual term
    eps = res.eps
    expect = 2.0 / eps[0] + 2.0 / (split.perp_floor + 2.0 + split.shift)
    assert opnorm_bound(split, res) == pytest.approx(expect, rel=1e-12)
    # the true W vanishes for constant V, so every eta variant is exact
    assert eta_full(res, split) == 0.0
    assert eta_truncated(res, split, 0) == 0.0


@pytest.mark.parametrize("which", ["default", "guaranteed"])
def test_opnorm_dominates_true_norm(hist, which):
    rec = hist.last
    split, res = iterate_split(rec)
    if which == "guaranteed":
        s = shift_for_opnorm(res, split)
        split, res = split.with_shift(s), res.with_shift(s)
    n = split.basis.size
    eye = np.eye(n, dtype=complex)
    mat = split.apply_H0_inverse(split.apply_W(eye)).T
    # power iteration on M^* M
    v = np.random.default_rng(0).standard_normal(n).astype(complex)
    for _ in range(500):
        v = mat.conj().T @ (mat @ v)
        v /= np.linalg.norm(v)
    power = np.linalg.norm(mat @ v)
    assert power <= np.linalg.norm(mat, 2) * (1 + 1e-12)
    assert opnorm_bound(split, res) >= np.linalg.norm(mat, 2)


def test_relative_gap_constant():
    assert relative_gap_constant(1.0, 2.0) == 2.0
    for bad in ((0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (-1.0, 1.0)):
        with pytest.raises(EstimatorUnavailable):
            relative_gap_constant(*bad)


def test_neumann_remainder_arithmetic(last):
    split, res = last
    pre = np.linalg.norm(split.apply_H0_inverse(res.vectors), axis=1)
    scaled = res.with_shift(res.shift)
    scaled.vectors = res.vectors * (0.1 / pre[:, None])
    np.testing.assert_allclose(neumann_remainder(scaled, split, 0, 0.5), 0.1, rtol=1e-14)
    np.testing.assert_allclose(neumann_remainder(scaled, split, 1, 0.5), 0.05, rtol=1e-14)
    assert np.all(neumann_remainder(scaled, split, 0, 1e-300) < 1e-299)
    with pytest.raises(EstimatorUnavailable):
        neumann_remainder(scaled, split, 0, 1.0)


def test_mu_arithmetic():
    assert mu_lower_bound([1.0, 1.0, 1.0], 0.3) == pytest.approx(0.9, rel=1e-15)
    assert mu_lower_bound([0.5, 1.0, 2.5], 0.0) == pytest.approx(4.0 / 3.0)
    assert mu_lower_bound([1.5, 1.5, 1.5], 0.3, shift=0.5) == pytest.approx(0.9, rel=1e-15)


def test_error_components_identity():
    rng = np.random.default_rng(3)
    for _ in range(200):
        lam = np.sort(rng.normal(size=4) * 10)
        eta_sq = 10.0 ** rng.uniform(-14, 2)
        trace = float(np.sum(lam)) + 10.0 ** rng.uniform(-12, 0)
        disc, scf, mu = error_components(lam, trace, eta_sq)
        assert disc == eta_sq
        assert scf >= 0
    with pytest.raises(ArithmeticError):
        error_components([1.0, 2.0], 2.9, 0.1)
    with pytest.raises(ArithmeticError):
        error_components([1.0, 2.0], 3.0, -0.1)


def test_zero_residuals_at_reference_cutoff():
    disc = toy_disc().reference()
    model = toy_model()
    fib = disc.fibers[0]
    sl = diagonalize_projected(model, None, 0.0, fib.basis, fib.mask)
    split = SplitOperator(fib.basis, fib.mask, model.external.field, default_shift(sl.eigenvalues))
    res = residuals(sl, split)
    assert np.abs(res.vectors).max() == 0.0
    assert opnorm_bound(split, res) == 0.0
    assert eta_full(res, split) == 0.0
    assert eta_truncated(res, split, 0) == 0.0
    assert eta_truncated(res, split, 1) == 0.0
    assert eta_guaranteed(res, split, 0) == 0.0


def test_residuals_match_dense(last):
    split, res = last
    mat = dense_A(split)
    phi = toy_history().last.probe[0].vectors[:3]
    eps = res.eps[:3]
    dense = eps[:, None] * phi - phi @ mat.T
    np.testing.assert_allclose(res.norms, np.linalg.norm(dense, axis=1), rtol=1e-10)
    assert np.all(np.linalg.norm(dense[:, split.mask], axis=1) < 1e-10)


def test_residuals_reject_inconsistent_slice(hist):
    rec = hist.last
    fib = toy_disc().fibers[0]
    split = SplitOperator(fib.basis, fib.mask, toy_model().external.field, 1.0)
    with pytest.raises(ValueError):
        residuals(rec.probe[0], split)


def test_cg_matches_dense(last):
    split, res = last
    a = eta_full(res, split, method="cg")
    b = eta_full(res, split, method="dense")
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(ValueError):
        eta_full(res, split, method="lu")


@pytest.mark.xfail(strict=True, reason="eta0 and eta differ by far more than 1% on converged iterates")
def test_eta0_within_one_percent_of_eta_late(hist):
    for rec in hist.records[-5:]:
        split, res = iterate_split(rec)
        assert eta_truncated(res, split, 0) == pytest.approx(eta_full(res, split, "dense"), rel=0.01)


def test_first_order_closer_than_zeroth(last):
    split, res = last
    eta = eta_full(res, split, "dense")
    assert abs(eta_truncated(res, split, 1) - eta) <= abs(eta_truncated(res, split, 0) - eta)


def test_guarantee_chain_every_iteration(hist):
    for rec in hist.records:
        split, res = iterate_split(rec)
        for order in (0, 1):
            s = rec.bounds[f"eta{order}_g"].shift_used
            sp, rs = split.with_shift(s), res.with_shift(s)
            q = opnorm_bound(sp, rs)
            assert q < 1
            eta = eta_full(rs, sp, "dense")
            g = eta_guaranteed(rs, sp, order)
            assert g >= eta * (1 - 1e-12)
            assert g >= eta_truncated(rs, sp, order)


def test_remainder_domination_every_iteration(hist):
    for rec in hist.records:
        split, res = iterate_split(rec)
        s = shift_for_opnorm(res, split)
        sp, rs = split.with_shift(s), res.with_shift(s)
        q = opnorm_bound(sp, rs)
        exact = sp.solve(rs.vectors, "dense")
        for order in (0, 1):
            err = np.linalg.norm(exact - truncated_solutions(rs, sp, order), axis=1)
            bound = neumann_remainder(rs, sp, order, q)
            assert np.all(err <= bound * (1 + 1e-12))


def test_mu_below_reference_mean(hist):
    model = toy_model()
    fib = toy_disc().fibers[0]
    for rec in hist.records[::5] + [hist.last]:
        ref = diagonalize_projected(model, None, 0.0, fib.basis, potential=rec.potential)
        mean_ref = np.mean(ref.eigenvalues[:3])
        for name in ("eta_full", "eta0_g", "eta1_g", "eta0_g_opt", "eta1_g_opt"):
            assert rec.bounds[name].mu_lb <= mean_ref + 1e-12


def test_cluster_bound_on_toy_iterate(hist):
    model = toy_model()
    fib = toy_disc().fibers[0]
    rec = hist.records[len(hist) // 2]
    split, res = iterate_split(rec)
    ref = diagonalize_projected(model, None, 0.0, fib.basis, potential=rec.potential)
    gap = np.sum(rec.probe[0].eigenvalues[:3] - ref.eigenvalues[:3])
    assert 0 <= gap <= eta_full(res, split, "dense")


def test_shift_bookkeeping_invariance(last):
    split, res = last
    lam = res.lam[:3]
    eta_sq = eta_full(res, split)
    mus = [mu_lower_bound(lam + s, eta_sq, shift=s) for s in (0.0, split.shift, 3.7, 41.0)]
    np.testing.assert_allclose(mus, mus[0], rtol=1e-12)
    disc, scf, mu = error_components(lam, float(np.sum(lam)) + 1e-3, eta_sq)
    assert mu == pytest.approx(mus[0], rel=1e-12)


def test_optimized_shift_never_worse(hist):
    for rec in hist.records:
        b = rec.bounds
        for order in (0, 1):
            opt, base = b[f"eta{order}_g_opt"], b[f"eta{order}_g"]
            assert opt.err_disc <= base.err_disc * (1 + 1e-12)
            assert opt.opnorm_bound < 1
            assert opt.shift_used >= b["eta_full"].shift_used - 1e-15


def test_optimize_shift_constraints(last):
    split, res = last
    s, value = optimize_shift(res, split, 0)
    assert s >= split.shift
    assert opnorm_bound(split.with_shift(s), res.with_shift(s)) < 1
    assert value == pytest.approx(eta_guaranteed(res.with_shift(s), split.with_shift(s), 0), rel=1e-14)


def test_shift_for_opnorm_hits_target(last):
    split, res = last
    s = shift_for_opnorm(res, split, target=0.5)
    assert opnorm_bound(split.with_shift(s), res.with_shift(s)) == pytest.approx(0.5, abs=1e-9)
    assert shift_for_opnorm(res, split, target=1e6) == split.shift


def test_err_scf_vanishes_at_convergence(hist):
    assert hist.converged
    for name, report in hist.last.bounds.items():
        assert report.err_scf <= 1e-9
        assert abs(report.err_scf) <= 1e-10 * abs(hist.last.energy)


def test_err_disc_decreases_with_ecut(hist):
    model = toy_model()
    rec = hist.last
    values = []
    for ecut in (100.0, 200.0, 400.0):
        disc = toy_disc().with_ecut(ecut)
        fib = disc.fibers[0]
        sl = diagonalize_projected(model, None, 0.0, fib.basis, fib.mask, potential=rec.potential)
        rep = fiber_bounds(model, disc.fibers, [sl], [sl.occupied()], rec.potential, variants=("eta_full",))
        values.append(rep["eta_full"].err_disc)
    assert values[0] > values[1] > values[2] > 0


def test_report_flags(hist):
    b = hist.last.bounds
    for name in ("eta_full", "eta0_g", "eta1_g", "eta0_g_opt", "eta1_g_opt"):
        assert b[name].guaranteed
    for name in ("eta0", "eta1"):
        assert not b[name].guaranteed
    for report in b.values():
        assert report.err_disc == report.eta_sq
        assert report.err_disc >= 0
        assert any("variational" in n for n in report.notes)
    assert b["eta_full"].opnorm_bound is None


def test_unavailable_variant_reported(hist):
    rec = hist.last
    fib = toy_disc().fibers[0]
    # a negative fixed shift makes A indefinite: fixed-shift variants refuse,
    # the guaranteed one searches its own admissible shift above it
    reports = fiber_bounds(toy_model(), [fib], rec.probe, rec.orbitals, rec.potential,
                           variants=("eta_full", "eta0", "eta0_g"), shift=-50.0)
    for name in ("eta_full", "eta0"):
        report = reports[name]
        assert np.isnan(report.err_disc) and not report.guaranteed and report.notes
    assert reports["eta0_g"].guaranteed and reports["eta0_g"].shift_used > 0


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 100_000))
def test_linear_problem_bounds(seed):
    try:
        model, fiber, sl, ref = linear_problem(seed)
    except Exception as exc:  # degenerate Fermi level: not a valid instance
        if type(exc).__name__ == "DegenerateFermiError":
            return
        raise
    split = SplitOperator(fiber.basis, fiber.mask, model.external.field, default_shift(sl.eigenvalues))
    res = residuals(sl, split)
    n = model.n_el
    eta = eta_full(res, split, "dense")
    gap = np.sum(sl.eigenvalues[:n] - ref[:n])
    assert -1e-11 <= gap <= eta + 1e-11
    assert eta_full(res, split) == pytest.approx(eta, rel=1e-10, abs=1e-14)
    s = shift_for_opnorm(res, split)
    sp, rs = split.with_shift(s), res.with_shift(s)
    eta_s = eta_full(rs, sp, "dense")
    for order in (0, 1):
        assert eta_guaranteed(rs, sp, order) >= eta_s * (1 - 1e-12) - 1e-15
    disc, scf, mu = error_components(sl.eigenvalues[:n], float(np.sum(sl.eigenvalues[:n])), eta)
    assert disc == eta and abs(scf) <= 1e-14
    assert mu <= np.mean(ref[:n]) + 1e-11
