import numpy as np
import pytest
from scipy.integrate import solve_ivp

from casida1d import dynamics as dyn
from casida1d.dynamics import (
    DenseLinearFlow, Drive, LinearizedPropagator, duhamel_residual, gaussian_pulse, propagate_linearized,
    propagate_nonlinear, propagate_orbitals, sinusoid, step_function,
)
from casida1d.errors import NonfiniteState, NotPerp, StepTooLarge
from casida1d.linops import PerpSpace, assemble, from_reim, to_reim


def _wnorm(gs, U):
    return np.sqrt(gs.h) * np.linalg.norm(U)


@pytest.fixture(scope="module")
def prop(small_gs, small_model):
    return LinearizedPropagator(small_gs, small_model)


@pytest.fixture(scope="module")
def pulse(small_model):
    return Drive(gaussian_pulse(2.0, 0.5), small_model.grid.x, 1e-3, "gaussian")


def _perp(gs, rng):
    U = rng.standard_normal(gs.psi.shape) + 1j * rng.standard_normal(gs.psi.shape)
    return U - gs.psi @ (gs.h * gs.psi.T @ U)


def test_drive_is_causal(pulse):
    assert pulse(-1.0) == 0.0
    np.testing.assert_array_equal(pulse(np.array([-2.0, -0.1])), [0.0, 0.0])
    assert Drive(step_function(), pulse.V_P)(0.5) == 1.0
    assert Drive(sinusoid(2.0), pulse.V_P)(-0.3) == 0.0
    with pytest.raises(ValueError):
        pulse.with_eps(-1.0)


def test_ground_state_is_stationary(small_gs, small_model, pulse):
    tr = propagate_nonlinear(small_model, small_gs, pulse.with_eps(0.0), 5.0, 0.01)
    assert max(_wnorm(small_gs, U) for U in tr.states) <= 1e-10


def test_time_reversibility(small_gs, small_model, pulse):
    _, fwd = propagate_orbitals(small_model, small_gs.psi, 3.0, 0.01, pulse, n_correct=3)
    _, back = propagate_orbitals(small_model, fwd[-1], 3.0, -0.01, pulse, n_correct=3, t0=3.0)
    assert np.abs(back[-1] - small_gs.psi).max() <= 1e-9


def test_norms_conserved(small_gs, small_model, pulse):
    _, orbs = propagate_orbitals(small_model, small_gs.psi, 5.0, 0.01, pulse.with_eps(0.05), save_every=50)
    for p in orbs:
        np.testing.assert_allclose(small_gs.h * np.sum(np.abs(p) ** 2, axis=0), 1.0, atol=1e-10)


def test_linearized_tracks_nonlinear(small_gs, small_model, pulse):
    tr = propagate_nonlinear(small_model, small_gs, pulse, 20.0, 0.01, save_every=10)
    lin = propagate_linearized(small_gs, small_model, pulse, 20.0, 0.1)
    np.testing.assert_allclose(tr.times, lin.times, atol=1e-12)
    scale = max(np.linalg.norm(U) for U in lin.states)
    err = max(np.linalg.norm(a - b) for a, b in zip(tr.states, lin.states))
    assert err / scale <= 0.05


def test_timestep_convergence_is_second_order(small_gs, small_model, pulse):
    x = small_model.grid.x
    obs = []
    for dt in (0.02, 0.01, 0.005):
        tr = propagate_nonlinear(small_model, small_gs, pulse, 10.0, dt, save_every=int(round(0.1 / dt)))
        obs.append(tr.observable(x, small_gs.rho, small_gs.h))
    ratio = np.abs(obs[0] - obs[1]).max() / np.abs(obs[1] - obs[2]).max()
    assert 3.2 <= ratio <= 5.5


def test_linearized_propagator_basics(prop, small_gs, rng):
    U = _perp(small_gs, rng)
    np.testing.assert_allclose(prop.apply(0.0, U), U, atol=1e-12)
    a = prop.apply(1.3, prop.apply(0.4, U))
    np.testing.assert_allclose(a, prop.apply(1.7, U), atol=1e-10)
    x = prop.space.to_casida(U)
    for t in (0.1, 1.0, 10.0):
        y = prop.unitary(t, x)
        assert np.linalg.norm(y) / np.linalg.norm(x) == pytest.approx(1.0, abs=1e-10)
        assert prop.energy(prop.apply_casida(t, x)) == pytest.approx(prop.energy(x), rel=1e-9)


def test_propagator_rejects_non_perp(prop, small_gs):
    with pytest.raises(NotPerp):
        prop.apply(1.0, small_gs.psi)


def test_excitations_without_coupling(small_gs, small_model):
    p0 = LinearizedPropagator(small_gs, small_model, delta=0.0)
    eps = small_gs.spectrum[small_gs.unocc]
    expected = np.sort(np.concatenate([eps - lam for lam in small_gs.eigenvalues]))
    np.testing.assert_allclose(p0.excitation_energies, expected, atol=1e-9)


def test_h2_amplification_bounded(prop):
    amp = prop.h2_amplification([0.0, 1.0, 10.0, 100.0])
    assert amp[0] == pytest.approx(1.0, abs=1e-10)
    bound = np.sqrt(prop.m_eigs.max() / prop.m_eigs.min())
    assert np.all(amp <= bound * (1 + 1e-10))


def test_constant_potential_gives_no_perp_response(small_gs, small_model, prop):
    drive = Drive(gaussian_pulse(1.0, 0.3), np.ones(small_gs.n), 1.0)
    lin = propagate_linearized(small_gs, small_model, drive, 3.0, 0.1, propagator=prop)
    for U in lin.states:
        perp = U - small_gs.psi @ (small_gs.h * small_gs.psi.T @ U)
        assert np.abs(perp).max() <= 1e-12


def test_zero_drive_gives_zero_response(small_gs, small_model, prop):
    drive = Drive(lambda t: np.zeros_like(t), small_model.grid.x, 1.0)
    lin = propagate_linearized(small_gs, small_model, drive, 2.0, 0.1, propagator=prop)
    assert max(np.abs(U).max() for U in lin.states) == 0.0


def test_linearized_matches_dense_ode(small_gs, small_model, pulse, prop):
    ops = assemble(small_gs, small_model, dense=True)
    Jr = ops.J.reim()
    L = -(Jr @ ops.M_dyn.reim())
    g0 = Jr @ to_reim(pulse.V_P[:, None] * small_gs.psi)
    lin = propagate_linearized(small_gs, small_model, pulse, 20.0, 0.1, propagator=prop)
    sol = solve_ivp(lambda t, y: L @ y - pulse(t) * g0, (0.0, 20.0), np.zeros(L.shape[0]),
                    t_eval=lin.times, method="DOP853", rtol=1e-11, atol=1e-13)
    err = max(_wnorm(small_gs, from_reim(sol.y[:, k], small_gs.n) - U) for k, U in enumerate(lin.states))
    assert err <= 1e-6


def test_duhamel_residual(small_gs, small_model, pulse):
    tr0 = propagate_nonlinear(small_model, small_gs, pulse.with_eps(0.0), 2.0, 0.01)
    assert duhamel_residual(tr0, small_gs, small_model, pulse.with_eps(0.0)) <= 1e-10
    flow = DenseLinearFlow(small_gs, small_model)
    res = []
    for dt in (0.02, 0.01):
        tr = propagate_nonlinear(small_model, small_gs, pulse, 5.0, dt)
        res.append(duhamel_residual(tr, small_gs, small_model, pulse, flow))
    assert res[1] < res[0]
    assert res[1] <= 1e-3


def test_step_too_large(small_gs, small_model, monkeypatch, pulse):
    real = dyn.kernels.cn_step
    monkeypatch.setattr(dyn.kernels, "cn_step", lambda *a: 1.01 * real(*a))
    with pytest.raises(StepTooLarge):
        propagate_orbitals(small_model, small_gs.psi, 0.1, 0.01, pulse)


def test_nonfinite_state(small_gs, small_model):
    V = np.full(small_gs.n, np.nan)
    with pytest.raises(NonfiniteState):
        propagate_orbitals(small_model, small_gs.psi, 0.1, 0.01, Drive(step_function(), V, 1.0))
