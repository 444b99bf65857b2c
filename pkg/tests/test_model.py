import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from casida1d.errors import InvalidDensity
from casida1d.model import (
    GridSpec, ModelSystem, SoftCoulombParams, XcPolynomial, default_model, hamiltonian,
    hartree_potential, kinetic_matrix, xc_derivatives,
)


def test_three_point_stencil():
    K = kinetic_matrix(GridSpec.unchecked(3, 1.0))
    np.testing.assert_array_equal(K, [[1, -0.5, 0], [-0.5, 1, -0.5], [0, -0.5, 1]])


def test_grid_rules():
    with pytest.raises(ValueError):
        GridSpec(15, 1.0)
    g = GridSpec(17, 2.0)
    assert g.x[8] == 0.0 and np.all(np.diff(g.x) > 0)
    np.testing.assert_array_equal(g.x, -g.x[::-1])


@settings(max_examples=20, deadline=None)
@given(st.integers(16, 120), st.floats(0.5, 30.0))
def test_kinetic_symmetric(n, L):
    K = kinetic_matrix(GridSpec(n, L))
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() > 0


def _oscillator_ground(n, L):
    g = GridSpec(n, L)
    return np.linalg.eigvalsh(kinetic_matrix(g) + np.diag(0.5 * g.x**2))[0], g.h


@pytest.mark.xfail(strict=True, reason="three-point stencil error h^2/32 = 1.26e-3 exceeds 1e-3 at n=200, L=20")
def test_oscillator_ground_energy_within_1e3():
    e0, _ = _oscillator_ground(200, 20.0)
    assert abs(e0 - 0.5) <= 1e-3


def test_oscillator_error_matches_stencil_prediction():
    # -h^2 <p^4>/24 with <p^4> = 3/4 for the oscillator ground state
    for n in (200, 400, 800):
        e0, h = _oscillator_ground(n, 20.0)
        assert e0 - 0.5 == pytest.approx(-h**2 / 32, rel=2e-2)


def test_hartree_zero_and_point_mass():
    m = default_model(n=101, L=10.0)
    assert np.array_equal(hartree_potential(m, np.zeros(101)), np.zeros(101))
    rho = np.zeros(101)
    rho[50] = 1.0 / m.grid.h
    np.testing.assert_allclose(hartree_potential(m, rho), 1 / np.sqrt(m.grid.x**2 + 1), rtol=1e-14)


def test_hartree_symmetry_linearity_and_matrix_free(rng):
    m = default_model(n=101, L=10.0)
    r = rng.random(101)
    sym = r + r[::-1]
    V = hartree_potential(m, sym)
    np.testing.assert_allclose(V, V[::-1], rtol=1e-14)
    r2 = rng.random(101)
    lin = hartree_potential(m, 2.0 * r + 3.0 * r2)
    np.testing.assert_allclose(lin, 2 * hartree_potential(m, r) + 3 * hartree_potential(m, r2), rtol=1e-12)
    np.testing.assert_allclose(hartree_potential(m, r, matrix_free=True), hartree_potential(m, r), rtol=1e-12)
    assert np.all(V >= 0)


def test_negative_density_rejected():
    m = default_model(n=32, L=5.0)
    rho = np.ones(32)
    rho[3] = -1e-3
    with pytest.raises(InvalidDensity):
        hartree_potential(m, rho)
    with pytest.raises(InvalidDensity):
        xc_derivatives(m.xc, rho)


def test_xc_values():
    e, v, dv = xc_derivatives(XcPolynomial(-0.25), np.array([1.0]))
    assert (e[0], v[0], dv[0]) == (-0.25, -0.5, -0.5)
    e, v, dv = xc_derivatives(XcPolynomial(0.7, -0.3, 0.2), np.zeros(3))
    assert np.all(e == 0) and np.all(v == 0) and np.all(dv == 1.4)


def test_xc_finite_differences():
    xc = XcPolynomial(-0.4, 0.3, -0.2)
    rho = np.linspace(0.1, 2.0, 7)
    _, v, dv = xc_derivatives(xc, rho)
    errs = []
    for s in (1e-2, 5e-3, 2.5e-3):
        ep, vp, _ = xc_derivatives(xc, rho + s)
        em, vm, _ = xc_derivatives(xc, rho - s)
        errs.append(np.abs((ep - em) / (2 * s) - v).max())
        np.testing.assert_allclose((vp - vm) / (2 * s), dv, atol=10 * s**2)
    # second-order convergence of the central difference
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_hamiltonian_cases(rng):
    g = GridSpec(64, 8.0)
    m0 = ModelSystem(g, SoftCoulombParams(Z=0.0), XcPolynomial(), 1)
    np.testing.assert_array_equal(hamiltonian(m0, np.zeros(64)), kinetic_matrix(g))
    H = hamiltonian(default_model(n=64, L=8.0), rng.random(64))
    assert np.array_equal(H, H.T)
    m1 = ModelSystem(GridSpec(400, 20.0), SoftCoulombParams(Z=1.0, a_ext=1.0), XcPolynomial(), 1)
    assert np.linalg.eigvalsh(hamiltonian(m1, np.zeros(400)))[0] < 0


def test_soft_coulomb_signs():
    sc = SoftCoulombParams(a=0.5, Z=3.0, a_ext=0.7)
    x = np.linspace(-5, 5, 11)
    assert np.all(sc.external(x) <= 0) and np.all(sc.interaction(x) > 0)
    with pytest.raises(ValueError):
        SoftCoulombParams(a=0.0)
