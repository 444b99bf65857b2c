import warnings

import numpy as np
import pytest
from scipy.optimize import minimize as sp_minimize

from casida1d.errors import AufbauWarning, MaxIterations, NotOrthonormal, PositiveOccupiedEigenvalue
from casida1d.groundstate import (
    coercivity_constant, energy, energy_expansion_residual, minimize, retract, solve, subspace_distance,
)
from casida1d.linops import PerpSpace
from casida1d.model import (
    GridSpec, ModelSystem, SoftCoulombParams, XcPolynomial, default_model, kinetic_matrix,
)
from conftest import random_orthogonal


def _noninteracting(n=120, L=12.0, N=2, Z=2.0):
    return ModelSystem(GridSpec(n, L), SoftCoulombParams(Z=Z), XcPolynomial(), N, interacting=False)


def test_invariants(small_model, small_gs):
    gs = small_gs
    h = gs.h
    assert np.abs(h * gs.psi.T @ gs.psi - np.eye(gs.N)).max() <= 1e-10
    assert np.abs(gs.H0 @ gs.psi - gs.psi * gs.eigenvalues).max() <= 1e-9
    assert np.all(gs.eigenvalues < 0) and np.all(np.diff(gs.eigenvalues) > 0)
    assert np.all(gs.rho >= 0) and abs(h * gs.rho.sum() - gs.N) <= 1e-8
    assert gs.residual <= 1e-12


def test_projected_gradient_vanishes(small_model, small_gs):
    gs = small_gs
    hpsi = gs.H0 @ gs.psi
    grad = hpsi - gs.psi @ (gs.h * gs.psi.T @ hpsi)
    assert np.abs(grad).max() <= 1e-9


def test_noninteracting_eigenvalues():
    m = _noninteracting()
    gs = minimize(m, tol=1e-10)
    e = np.linalg.eigvalsh(kinetic_matrix(m.grid) + np.diag(m.v_ext))
    np.testing.assert_allclose(gs.eigenvalues, e[:2], atol=1e-8)


def test_energy_kinetic_only():
    g = GridSpec(64, 6.0)
    m = ModelSystem(g, SoftCoulombParams(Z=0.0), XcPolynomial(), 2, interacting=False)
    _, v = np.linalg.eigh(kinetic_matrix(g))
    psi = v[:, :2] / np.sqrt(g.h)
    ray = sum(g.h * psi[:, i] @ kinetic_matrix(g) @ psi[:, i] for i in range(2))
    assert energy(m, psi) == pytest.approx(ray, rel=1e-13)


def test_energy_from_scratch():
    m = default_model(n=120, L=12.0, N=1, c2=-0.4, c3=0.1, c4=-0.05)
    x, h = m.grid.x, m.grid.h
    psi = np.exp(-x**2)[:, None]
    psi /= np.sqrt(h * np.sum(psi**2))
    rho = psi[:, 0] ** 2
    lap = np.zeros_like(psi[:, 0])
    p = np.concatenate([[0.0], psi[:, 0], [0.0]])
    lap = (p[2:] - 2 * p[1:-1] + p[:-2]) / h**2
    kin = -0.5 * h * np.sum(psi[:, 0] * lap)
    ext = -2.0 * h * np.sum(rho / np.sqrt(x**2 + 1))
    hart = 0.5 * h * h * sum(rho[i] * rho[j] / np.sqrt((x[i] - x[j]) ** 2 + 1)
                             for i in range(x.size) for j in range(x.size))
    xc = h * np.sum(-0.4 * rho**2 + 0.1 * rho**3 - 0.05 * rho**4)
    assert energy(m, psi) == pytest.approx(kin + ext + hart + xc, rel=1e-12)


def test_energy_rotation_invariance(small_model, small_gs, rng):
    E0 = energy(small_model, small_gs.psi)
    for _ in range(3):
        R = random_orthogonal(rng, small_gs.N)
        assert energy(small_model, small_gs.psi @ R) == pytest.approx(E0, rel=1e-10)


def test_energy_rejects_non_orthonormal(small_model, small_gs):
    with pytest.raises(NotOrthonormal):
        energy(small_model, 1.01 * small_gs.psi)


def _reference_scf(model, iters=3000, alpha=0.3, tol=1e-11):
    """Plain damped fixed-point iteration on the density, written independently."""
    x, h, N = model.grid.x, model.grid.h, model.N
    n = x.size
    T = (np.diag(np.full(n, 1.0)) - 0.5 * np.diag(np.ones(n - 1), 1) - 0.5 * np.diag(np.ones(n - 1), -1)) / h**2
    Vext = -model.sc.Z / np.sqrt(x**2 + model.sc.a_ext**2)
    Wk = h / np.sqrt((x[:, None] - x[None, :]) ** 2 + model.sc.a**2)
    c2 = model.xc.c2
    rho = np.zeros(n)
    for _ in range(iters):
        e, v = np.linalg.eigh(T + np.diag(Vext + Wk @ rho + 2 * c2 * rho))
        new = np.sum(v[:, :N] ** 2, axis=1) / h
        if np.abs(new - rho).max() < tol:
            break
        rho = rho + alpha * (new - rho)
    psi = v[:, :N] / np.sqrt(h)
    kin = h * np.sum(psi * (T @ psi))
    return kin + h * Vext @ rho + 0.5 * h * rho @ (Wk @ rho) + h * np.sum(c2 * rho**2)


def test_default_energy_matches_reference_scf(default_system):
    model, gs = default_system
    assert gs.energy == pytest.approx(_reference_scf(model), abs=1e-6)


def test_positive_occupied_eigenvalue():
    m = default_model(n=120, L=12.0, Z=2.0, N=3, c2=-0.5)
    with pytest.raises(PositiveOccupiedEigenvalue):
        minimize(m)


def test_max_iterations():
    with pytest.raises(MaxIterations):
        minimize(default_model(n=80, L=10.0), max_iter=3)


def test_non_aufbau_warns():
    m = _noninteracting(N=1)
    with pytest.warns(AufbauWarning):
        gs = minimize(m, occupation=[1])
    e = np.linalg.eigvalsh(kinetic_matrix(m.grid) + np.diag(m.v_ext))
    assert gs.eigenvalues[0] == pytest.approx(e[1], abs=1e-8)


def test_seed_determinism(small_model):
    a = minimize(small_model, seed=7)
    b = minimize(small_model, seed=7)
    assert np.array_equal(a.psi, b.psi) and a.energy == b.energy


def test_expansion_zero_direction(small_model, small_gs):
    assert energy_expansion_residual(small_model, small_gs, np.zeros_like(small_gs.psi), [1e-2, 1e-1]) == np.inf


@pytest.mark.parametrize("kind", ["growth", "random"])
def test_expansion_slope(small_model, small_gs, rng, kind):
    if kind == "growth":
        U = small_gs.psi.astype(complex)
    else:
        U = rng.standard_normal(small_gs.psi.shape) + 1j * rng.standard_normal(small_gs.psi.shape)
        U /= np.sqrt(small_gs.h) * np.linalg.norm(U)
    slope = energy_expansion_residual(small_model, small_gs, U, np.logspace(-3, -1, 7))
    assert slope >= 2.9


def test_subspace_distance_cases(small_gs, rng):
    psi, h = small_gs.psi, small_gs.h
    R = random_orthogonal(rng, 2)
    assert subspace_distance(h, psi, psi @ R) <= 1e-12
    other = small_gs.modes[:, 5:7]
    assert subspace_distance(h, psi, other) == pytest.approx(4.0, abs=1e-12)


def test_subspace_distance_bruteforce(small_model, small_gs, rng):
    h = small_gs.h
    psi = small_gs.psi
    phi = retract(small_model, psi + 0.4 * rng.standard_normal(psi.shape))

    def cost(theta):
        c, s = np.cos(theta[0]), np.sin(theta[0])
        best = np.inf
        for refl in (1.0, -1.0):
            R = np.array([[c, -s], [s, c]]) @ np.diag([1.0, refl])
            best = min(best, h * np.sum((psi - phi @ R) ** 2))
        return best

    starts = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    brute = min(sp_minimize(cost, [t], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14}).fun
                for t in starts)
    d = subspace_distance(h, psi, phi)
    assert d == pytest.approx(brute, abs=1e-6)
    assert d == pytest.approx(subspace_distance(h, phi, psi), abs=1e-12)


def test_gamma_noninteracting():
    m = _noninteracting()
    gs = solve(m, tol=1e-10)
    lam = gs.eigenvalues
    eps = gs.spectrum[gs.unocc]
    assert gs.gamma == pytest.approx(min(eps.min() - lam.max(), eps.min() - lam.min()), abs=1e-10)


def test_gamma_rotation_invariant_and_minmax(small_model, small_gs, rng):
    R = random_orthogonal(rng, 2)
    g2 = coercivity_constant(small_model, small_gs.rotated(R))
    assert g2.gamma == pytest.approx(small_gs.gamma, abs=1e-10)
    H = PerpSpace(small_gs, small_model).hessian_reim()
    for _ in range(5):
        c = rng.standard_normal(H.shape[0])
        assert small_gs.gamma <= c @ H @ c / (c @ c) + 1e-12
