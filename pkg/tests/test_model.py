import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pwbounds.pw_basis import Lattice, PeriodicField, build_basis
from pwbounds.model import (
    DIRAC_EXCHANGE,
    ModelSpec,
    OrbitalSet,
    apply_hamiltonian,
    constant_potential,
    cosine_potential,
    coulomb_energy,
    density,
    hartree_potential,
    mean_field_potential,
    nonlinear_energy,
    potential_basis,
    potential_from_descriptor,
    random_potential_1d,
    total_energy,
    total_potential,
)

L = 10.0
G1 = 2 * np.pi / L


@pytest.fixture(scope="module")
def bases():
    orb = build_basis(Lattice.interval(L), 20.0)
    return orb, potential_basis(orb)


def unit(basis, n):
    c = np.zeros(basis.size, dtype=complex)
    c[basis.index_of([[n]])[0]] = 1.0
    return c


def random_orbitals(basis, n, rng):
    raw = rng.standard_normal((basis.size, n)) + 1j * rng.standard_normal((basis.size, n))
    q, _ = np.linalg.qr(raw)
    return OrbitalSet(basis, q.T)


def random_density(orb, pot, rng, n=2):
    """Positive real density of random orthonormal orbitals plus a constant."""
    rho = density(random_orbitals(orb, n, rng), pot)
    return rho + PeriodicField(pot, unit(pot, 0) * 0.2 * np.sqrt(L))


def test_random_potential_contract(bases):
    _, pot = bases
    v = random_potential_1d(pot, 7)
    c = v.field.coeffs
    assert c[pot.index_of([[0]])[0]] == 1.0
    g = np.abs(pot.gvectors[:, 0])
    inside = (g > 0) & (g <= 100.0)
    assert np.all(np.abs(c[inside]) <= 10.0 / g[inside] ** 1.1)
    assert v.field.is_real_valued()
    np.testing.assert_array_equal(random_potential_1d(pot, 7).field.coeffs, c)
    assert not np.array_equal(random_potential_1d(pot, 8).field.coeffs, c)


def test_random_potential_tail_and_truncation():
    lat = Lattice.interval(L)
    small = build_basis(lat, 100.0)
    big = build_basis(lat, 4000.0, grid_shape=None)
    vs, vb = random_potential_1d(small, 3), random_potential_1d(big, 3)
    pos = big.index_of(small.miller)
    np.testing.assert_array_equal(vb.field.coeffs[pos], vs.field.coeffs)
    g = np.abs(big.gvectors[:, 0])
    tail = g > 100.0
    np.testing.assert_allclose(vb.field.coeffs[tail], 1.0 / g[tail] ** 1.1, rtol=1e-15)


def test_random_potential_rejects_3d():
    with pytest.raises(ValueError):
        random_potential_1d(build_basis(Lattice.orthorhombic(2.0, 2.0, 2.0), 2.0), 0)


def test_descriptor_roundtrip(bases):
    _, pot = bases
    for v in (random_potential_1d(pot, 5, amplitude=3.0), constant_potential(pot, 0.7),
              cosine_potential(pot, [1.0, -0.5])):
        again = potential_from_descriptor(v.descriptor, pot)
        np.testing.assert_array_equal(again.field.coeffs, v.field.coeffs)
    with pytest.raises(ValueError):
        potential_from_descriptor({"kind": "nope"}, pot)


def test_convex_flag():
    lat = Lattice.interval(L)
    v = constant_potential(build_basis(lat, 4.0))
    assert ModelSpec(lat, 1, v, "linear").convex
    assert ModelSpec(lat, 1, v, "rhf").convex
    assert not ModelSpec(lat, 1, v, "rhf_xalpha").convex
    with pytest.raises(ValueError):
        ModelSpec(lat, 1, v, "lda")
    with pytest.raises(ValueError):
        ModelSpec(lat, 0, v)


def test_density_single_mode(bases):
    orb, pot = bases
    rho = density(OrbitalSet(orb, unit(orb, 0)), pot)
    np.testing.assert_allclose(rho.real_values(), 1 / L, rtol=1e-13)


def test_density_two_modes(bases):
    orb, pot = bases
    rho = density(OrbitalSet(orb, [unit(orb, 0), unit(orb, 1)]), pot)
    assert rho.mean().real * L == pytest.approx(2.0, rel=1e-13)
    x = pot.grid_points()[:, 0]
    # |e_0|^2 + |e_G|^2 = 2 / |Omega|
    np.testing.assert_allclose(rho.real_values(), 2 / L, rtol=1e-13)
    mix = np.array([unit(orb, 0) + unit(orb, 1), unit(orb, 0) - unit(orb, 1)]) / np.sqrt(2)
    rho2 = density(OrbitalSet(orb, mix), pot)
    np.testing.assert_allclose(rho2.real_values(), 2 / L, rtol=1e-13)
    single = density(OrbitalSet(orb, mix[:1]), pot)
    np.testing.assert_allclose(single.real_values(), (1 + np.cos(G1 * x)) / L, atol=1e-14)


def test_density_matches_grid_oracle(bases, rng):
    orb, pot = bases
    orbs = random_orbitals(orb, 2, rng)
    rho = density(orbs, pot)
    direct = np.sum(np.abs(orb.to_real(orbs.coeffs)) ** 2, axis=0)
    np.testing.assert_allclose(rho.real_values(), direct, atol=1e-12 * direct.max())
    assert rho.is_real_valued()
    assert rho.mean().real * L == pytest.approx(2.0, abs=1e-10)


def test_density_rejects_nonorthonormal(bases):
    orb, pot = bases
    with pytest.raises(ValueError):
        density(OrbitalSet(orb, [unit(orb, 0), unit(orb, 0)]), pot)


def test_hartree_examples(bases, rng):
    _, pot = bases
    assert np.all(hartree_potential(PeriodicField(pot, unit(pot, 0))).coeffs == 0)
    vh = hartree_potential(PeriodicField(pot, unit(pot, 1)))
    assert vh.coeffs[pot.index_of([[1]])[0]].real == pytest.approx(4 * np.pi / G1**2, rel=1e-14)
    assert 4 * np.pi / G1**2 == pytest.approx(31.83, abs=5e-3)
    c = rng.standard_normal(pot.size) + 1j * rng.standard_normal(pot.size)
    c[pot.index_of([[0]])[0]] = 0
    vh = hartree_potential(PeriodicField(pot, c))
    g2 = np.sum(pot.gvectors**2, axis=1)
    np.testing.assert_allclose(g2 * vh.coeffs - 4 * np.pi * c, 0, atol=1e-12 * np.abs(c).max())


def test_coulomb_examples(bases, rng):
    orb, pot = bases
    const = PeriodicField(pot, unit(pot, 0))
    assert coulomb_energy(const, const) == 0.0
    pair = PeriodicField(pot, unit(pot, 1) + unit(pot, -1))
    assert coulomb_energy(pair, pair) == pytest.approx(2 * 4 * np.pi / G1**2, rel=1e-14)
    assert coulomb_energy(pair, pair) == pytest.approx(63.66, abs=1e-2)
    r1, r2 = random_density(orb, pot, rng), random_density(orb, pot, rng)
    assert coulomb_energy(r1, r2) == pytest.approx(coulomb_energy(r2, r1), rel=1e-13)
    assert coulomb_energy(r1, r1) >= 0
    quad = pot.integrate(hartree_potential(r1).real_values() * r1.real_values())
    assert coulomb_energy(r1, r1) == pytest.approx(quad, rel=1e-10)


def test_free_electron_energies(bases):
    orb, pot = bases
    v0 = constant_potential(pot)
    model = ModelSpec(Lattice.interval(L), 1, v0, "linear")
    assert total_energy(model, OrbitalSet(orb, unit(orb, 0))) == 0.0
    e = total_energy(model, OrbitalSet(orb, unit(orb, 1)))
    assert e == pytest.approx(0.5 * G1**2, rel=1e-14)
    assert e == pytest.approx(0.19739, abs=1e-5)


def test_double_counting_identity():
    from pwbounds import Discretization, ScfConfig, run_scf

    lat = Lattice.interval(L)
    disc = Discretization.build(lat, 100.0, 100.0)
    model = ModelSpec(lat, 3, random_potential_1d(disc.potential_basis, 42), "rhf")
    hist = run_scf(model, disc, ScfConfig(density_tol=1e-12, max_iter=200))
    assert hist.converged
    rec = hist.last
    orbs = rec.orbitals[0]
    rho = rec.density
    # Tr(H_rho gamma) from Rayleigh quotients of H_{rho(gamma)} itself
    h_phi = apply_hamiltonian(model, rho, 0.0, PeriodicField(orbs.basis, orbs.coeffs[0]))
    trace = 0.0
    for i in range(orbs.n_orbitals):
        phi = PeriodicField(orbs.basis, orbs.coeffs[i])
        trace += phi.inner(apply_hamiltonian(model, rho, 0.0, phi)).real
    assert h_phi.basis is orbs.basis
    e = rec.energy
    assert e == pytest.approx(trace - 0.5 * coulomb_energy(rho, rho), abs=1e-10)
    # converged eigenvalues give the same value
    assert e == pytest.approx(np.sum(rec.probe[0].unshifted_eigenvalues[:3]) - 0.5 * coulomb_energy(rho, rho), abs=1e-10)


def dense_hamiltonian(basis, potential, shift):
    """Independent assembly: kinetic diagonal plus convolution with V_{G - G'}."""
    n = basis.miller[:, 0]
    pot = potential.basis
    mat = np.zeros((basis.size, basis.size), dtype=complex)
    for i, a in enumerate(n):
        for j, b in enumerate(n):
            pos = pot.index_of([[a - b]])[0]
            if pos >= 0:
                mat[i, j] = potential.coeffs[pos] / np.sqrt(L)
    return mat + np.diag(0.5 * (basis.gvectors[:, 0] + basis.kshift[0]) ** 2 + shift)


@pytest.mark.parametrize("functional", ["linear", "rhf", "rhf_xalpha"])
def test_apply_hamiltonian_dense_oracle(functional, rng):
    lat = Lattice.interval(L)
    orb = build_basis(lat, 6.0, [0.13])
    pot = build_basis(lat, 24.0, grid_shape=orb.grid_shape)
    model = ModelSpec(lat, 2, random_potential_1d(pot, 11), functional)
    rho = random_density(orb, pot, rng) if functional != "linear" else None
    if rho is not None:
        orb0 = build_basis(lat, 6.0, grid_shape=orb.grid_shape)
        rho = random_density(orb0, pot, rng)
    mat = dense_hamiltonian(orb, total_potential(model, rho), 0.3)
    phi = PeriodicField(orb, rng.standard_normal(orb.size) + 1j * rng.standard_normal(orb.size))
    out = apply_hamiltonian(model, rho, 0.3, phi)
    np.testing.assert_allclose(out.coeffs, mat @ phi.coeffs, atol=1e-11 * np.abs(mat @ phi.coeffs).max())
    np.testing.assert_allclose(mat, mat.conj().T, atol=1e-13)


def test_apply_hamiltonian_examples(bases):
    orb, pot = bases
    lat = Lattice.interval(L)
    model = ModelSpec(lat, 1, constant_potential(pot), "rhf")
    rho = PeriodicField(pot, unit(pot, 0) / np.sqrt(L))
    eg = PeriodicField(orb, unit(orb, 1))
    np.testing.assert_allclose(apply_hamiltonian(model, rho, 0.0, eg).coeffs, 0.5 * G1**2 * eg.coeffs, atol=1e-14)
    e0 = PeriodicField(orb, unit(orb, 0))
    np.testing.assert_allclose(apply_hamiltonian(model, rho, 2.5, e0).coeffs, 2.5 * e0.coeffs, atol=1e-14)


@pytest.mark.parametrize("functional", ["rhf", "rhf_xalpha"])
def test_hermiticity(functional, bases, rng):
    orb, pot = bases
    model = ModelSpec(Lattice.interval(L), 2, random_potential_1d(pot, 2), functional)
    rho = random_density(orb, pot, rng)
    psi = PeriodicField(orb, rng.standard_normal(orb.size) + 1j * rng.standard_normal(orb.size))
    phi = PeriodicField(orb, rng.standard_normal(orb.size) + 1j * rng.standard_normal(orb.size))
    a = psi.inner(apply_hamiltonian(model, rho, 0.1, phi))
    b = phi.inner(apply_hamiltonian(model, rho, 0.1, psi))
    assert abs(a - np.conj(b)) <= 1e-10 * abs(a)


def test_rhf_convexity_witness(bases, rng):
    orb, pot = bases
    model = ModelSpec(Lattice.interval(L), 2, random_potential_1d(pot, 2), "rhf")
    r1, r2 = random_density(orb, pot, rng), random_density(orb, pot, rng)
    d = r1 - r2
    slope = np.vdot(mean_field_potential(model, r2).coeffs, d.coeffs).real
    gap = nonlinear_energy(model, r1) - nonlinear_energy(model, r2) - slope
    assert gap == pytest.approx(0.5 * coulomb_energy(d, d), abs=1e-10)
    assert gap >= 0


@pytest.mark.parametrize("functional", ["rhf", "rhf_xalpha"])
def test_derivative_consistency(functional, bases, rng):
    orb, pot = bases
    model = ModelSpec(Lattice.interval(L), 2, random_potential_1d(pot, 2), functional,
                      xalpha_coefficient=DIRAC_EXCHANGE)
    rho = random_density(orb, pot, rng)
    other = random_density(orb, pot, rng)
    d = other - rho
    slope = np.vdot(mean_field_potential(model, rho).coeffs, d.coeffs).real
    errors = []
    for t in (1e-2, 1e-3):
        fd = (nonlinear_energy(model, rho + d * t) - nonlinear_energy(model, rho - d * t)) / (2 * t)
        errors.append(abs(fd - slope))
    # central differences: O(t^2)
    assert errors[1] <= 1e-6 * max(1.0, abs(slope))
    assert errors[1] < errors[0] or errors[0] < 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), amplitude=st.floats(0.0, 20.0))
def test_random_potential_is_real_and_bounded(seed, amplitude):
    pot = build_basis(Lattice.interval(L), 80.0)
    v = random_potential_1d(pot, seed, amplitude=amplitude)
    assert v.field.is_real_valued()
    g = np.abs(pot.gvectors[:, 0])
    inside = (g > 0) & (g <= 100.0)
    assert np.all(np.abs(v.field.coeffs[inside]) <= amplitude / g[inside] ** 1.1 + 1e-300)
