import numpy as np
import pytest

from casida1d.errors import ChannelInvalid, NoConvergence, SmoothingTooNarrow
from casida1d.linops import assemble, k0_apply, s0_apply
from casida1d.resonance import (
    SpectralMeasure, TransitionChannel, _Restricted, golden_rule_width, level_spacing, lorentzian,
    lorentzian_fwhm, pole_estimate, residue_check, schur_complement, transition_vector,
)


@pytest.fixture(scope="module")
def system(resonance_system):
    model, gs = resonance_system
    return model, gs, TransitionChannel.build(gs, 0, 2)


def test_channel_build(system):
    _, gs, ch = system
    assert ch.e0 == pytest.approx(gs.spectrum[2] - gs.eigenvalues[0], abs=1e-12)
    assert ch.e0 > -gs.eigenvalues[-1]
    assert ch.open_channels == (1,)
    assert 0 < ch.spacing < 0.2


@pytest.mark.parametrize("i0, a0", [(5, 2), (0, 0), (0, 1), (1, 2)])
def test_invalid_channels(system, i0, a0):
    _, gs, _ = system
    with pytest.raises(ChannelInvalid):
        TransitionChannel.build(gs, i0, a0)


def test_transition_vector(system):
    model, gs, ch = system
    U = transition_vector(gs, ch)
    assert gs.h * (np.vdot(U.X, U.X) + np.vdot(U.Y, U.Y)).real == pytest.approx(1.0, abs=1e-12)
    assert np.abs(U.Y).max() == 0.0
    assert np.abs(gs.h * gs.psi.T @ U.X).max() <= 1e-12
    ops = assemble(gs, model, dense=False)
    # (Omega + i e0 J) acting on (X, 0): Omega X - e0 X
    assert np.abs(ops.Omega(U.X) - ch.e0 * U.X).max() <= 1e-10


def test_first_order_shift(system):
    model, gs, ch = system
    X = transition_vector(gs, ch).X
    AX = 0.5 * (k0_apply(gs, model, X) - 1j * k0_apply(gs, model, 1j * X))
    r = _Restricted(gs, model, ch, 0.05)
    assert r.coupling() == pytest.approx(0.05 * gs.h * np.vdot(X, AX).real, abs=1e-10)


def test_schur_complement(system):
    model, gs, ch = system
    z = ch.e0 + 0.2j
    assert schur_complement(gs, model, z, 0.0, ch) == pytest.approx(ch.e0 - z, abs=1e-12)
    r = _Restricted(gs, model, ch, 0.05)
    S = schur_complement(gs, model, z, 0.05, ch)
    # 1/S is the (u, u) element of the full inverse
    inv_uu = np.vdot(r.u, np.linalg.solve(r.T(z), r.u))
    assert 1.0 / S == pytest.approx(inv_uu, rel=1e-9)
    with pytest.raises(ValueError):
        schur_complement(gs, model, ch.e0 - 0.1j, 0.05, ch)


def test_pole_without_coupling(system):
    model, gs, ch = system
    est = pole_estimate(gs, model, ch, 0.0)
    assert est.z_pole == ch.e0 and est.gamma == 0.0
    with pytest.raises(ValueError):
        pole_estimate(gs, model, ch, -0.1)


def test_pole_extrapolation_guard(system):
    model, gs, ch = system
    with pytest.raises(NoConvergence):
        pole_estimate(gs, model, ch, 0.05, eta_seq=np.array([3.0, 1.0, 0.3]) * ch.spacing, rtol=1e-3)


def test_golden_rule_scaling(system):
    model, gs, ch = system
    g1, terms = golden_rule_width(gs, model, ch, 0.05)
    g2, _ = golden_rule_width(gs, model, ch, 0.1)
    assert g1 > 0
    assert [t["i"] for t in terms] == [1]
    assert g2 / g1 == pytest.approx(4.0, abs=0.4)


def test_closed_channel_has_no_width(system):
    model, gs, _ = system
    ch = TransitionChannel.build(gs, 1, 2, require_embedded=False)
    assert ch.open_channels == ()
    g, terms = golden_rule_width(gs, model, ch, 0.1)
    assert g == 0.0 and terms == []


def test_smoothing_too_narrow(system):
    model, gs, ch = system
    with pytest.raises(SmoothingTooNarrow):
        golden_rule_width(gs, model, ch, 0.05, s=1e-4)


def test_spectral_measure_mass(system):
    _, gs, _ = system
    meas = SpectralMeasure(gs.spectrum, gs.modes, gs.h, 0.1)
    g = np.sin(np.linspace(0, 3, gs.n))
    assert meas.weights(g).sum() == pytest.approx(gs.h * g @ g, rel=1e-10)
    assert meas.total_mass() == gs.n
    with pytest.raises(ValueError):
        SpectralMeasure(gs.spectrum, gs.modes, gs.h, 0.0)


def test_residue_two_ways(system):
    _, gs, ch = system
    direct = 2 * np.sqrt(gs.h) * np.linalg.norm(gs.psi[:, 0] * gs.modes[:, 2])
    assert residue_check(gs, ch) == pytest.approx(direct, rel=1e-12)
    U = np.outer(gs.modes[:, 2], [1.0, 0.0])
    assert residue_check(gs, ch) == pytest.approx(np.sqrt(gs.h) * np.linalg.norm(s0_apply(gs, U)), rel=1e-12)


def test_level_spacing():
    assert level_spacing(np.arange(10) * 0.5, 2.2) == pytest.approx(0.5)
    with pytest.raises(ChannelInvalid):
        level_spacing([1.0], 1.0)


def test_lorentzian_fit_recovers_width():
    w = np.linspace(-1, 1, 401)
    y = lorentzian(w, 2.0, 0.1, 0.3, 0.01)
    w0, fwhm = lorentzian_fwhm(w, 1j * y, 0.1, 0.8)
    assert w0 == pytest.approx(0.1, abs=1e-8)
    assert fwhm == pytest.approx(0.3, rel=1e-8)
