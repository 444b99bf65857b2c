"""Embedded excitations: Schur complement, second-order pole, golden-rule width."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from . import kernels
from .errors import ChannelInvalid, NoConvergence, SingularRestriction, SmoothingTooNarrow
from .groundstate import GroundState
from .linops import CasidaVector, PerpSpace, s0_apply
from .model import ModelSystem

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


def level_spacing(spectrum, energy: float, k: int = 3) -> float:
    """Mean spacing of the ``2k`` box levels closest to ``energy``."""
    e = np.sort(np.asarray(spectrum))
    j = np.searchsorted(e, energy)
    lo, hi = max(0, j - k), min(e.size, j + k)
    if hi - lo < 2:
        raise ChannelInvalid("not enough levels to estimate the spacing")
    return float(np.mean(np.diff(e[lo:hi])))


def _canonical(gs: GroundState):
    """Eigen-decomposition of the Lagrange matrix: canonical energies and rotation."""
    w, v = np.linalg.eigh(0.5 * (gs.lagrange + gs.lagrange.conj().T))
    return w, v


@dataclass(frozen=True)
class TransitionChannel:
    """Bare transition ``i0 -> a0`` (0-based indices; ``a0`` indexes the H0 spectrum)."""

    i0: int
    a0: int
    e0: float
    spacing: float
    open_channels: tuple

    @classmethod
    def build(cls, gs: GroundState, i0: int, a0: int, margin: float = 5.0, gap_tol: float = 1e-6,
              require_embedded: bool = True) -> "TransitionChannel":
        lam, _ = _canonical(gs)
        N = gs.N
        if not 0 <= i0 < N:
            raise ChannelInvalid(f"i0={i0} is not an occupied index")
        if a0 not in set(gs.unocc.tolist()):
            raise ChannelInvalid(f"a0={a0} is not an unoccupied eigenindex")
        spec = gs.spectrum
        e0 = float(spec[a0] - lam[i0])
        for idx, val, pool in ((a0, spec[a0], np.delete(spec, a0)), (i0, lam[i0], np.delete(spec, gs.occ[i0]))):
            if np.abs(pool - val).min() < gap_tol:
                raise ChannelInvalid(f"level {idx} is not simple (gap < {gap_tol:g})")
        if require_embedded and not e0 > -lam[-1]:
            raise ChannelInvalid(f"e0={e0:.4g} is not embedded (needs > {-lam[-1]:.4g})")
        energies = e0 + lam
        positive = spec[spec > 0]
        ref = energies.max() if energies.max() > 0 else float(positive.min())
        spacing = level_spacing(positive, ref)
        for i, en in enumerate(energies):
            if abs(en) < margin * spacing:
                raise ChannelInvalid(
                    f"channel {i} sits {abs(en):.3g} from threshold (margin {margin * spacing:.3g})")
        opened = tuple(int(i) for i in np.flatnonzero(energies > 0))
        return cls(int(i0), int(a0), e0, spacing, opened)


@dataclass
class ResonanceEstimate:
    z_pole: complex
    dE: float
    gamma: float
    delta: float
    first_order: float = 0.0
    eta_seq: Sequence[float] = ()
    eta_values: List[complex] = field(default_factory=list)
    channels: List[dict] = field(default_factory=list)


@dataclass(frozen=True)
class SpectralMeasure:
    """Gaussian-smoothed spectral measure of ``H0`` from its box eigenpairs."""

    energies: np.ndarray
    modes: np.ndarray  # grid-normalized columns
    h: float
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("smoothing width must be positive")

    def weights(self, g) -> np.ndarray:
        return np.abs(self.h * (self.modes.conj().T @ g)) ** 2

    def states_under(self, E: float) -> int:
        return int(np.count_nonzero(np.abs(self.energies - E) <= 2 * self.s))

    def density(self, g, E: float) -> float:
        """``<g| p_s(E) |g>`` with a Gaussian kernel of width ``s``."""
        if self.states_under(E) < 5:
            raise SmoothingTooNarrow(f"fewer than 5 box states within 2s of E={E:.4g}; increase L or s")
        return float(kernels.gaussian_smooth(self.energies, self.weights(g), np.array([E]), self.s)[0])

    def total_mass(self) -> float:
        """Mass of the identity: one per eigenstate."""
        return float(self.energies.size)


def transition_vector(gs: GroundState, channel: TransitionChannel, model: Optional[ModelSystem] = None,
                      space: Optional[PerpSpace] = None) -> CasidaVector:
    """Unit Casida vector with upper block ``phi_a0`` in the ``i0`` sector and lower block 0."""
    _, v = _canonical(gs)
    phi = gs.modes[:, channel.a0]
    X = np.outer(phi, v[:, channel.i0].conj()).astype(complex)
    X = X / (np.sqrt(gs.h) * np.linalg.norm(X))
    return CasidaVector(X, np.zeros_like(X))


def _casida_coeffs(space: PerpSpace, U: CasidaVector) -> np.ndarray:
    cx = space.coefficients(U.X)
    cy = space.coefficients(U.Y)
    return np.concatenate([cx, cy])


def _complement_basis(u) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of the unit vector ``u``."""
    d = u.size
    Q, _ = np.linalg.qr(np.column_stack([u, np.eye(d, dtype=complex)]))
    return Q[:, 1:d]


class _Restricted:
    """``M + izJ`` and its compression to the complement of the transition vector."""

    def __init__(self, gs, model, channel, delta):
        self.space = PerpSpace(gs, model, delta)
        self.M = self.space.casida_M()
        self.Jd = np.diag(self.space.casida_J())
        self.u = _casida_coeffs(self.space, transition_vector(gs, channel))
        self.Q = _complement_basis(self.u)
        self.e0 = channel.e0

    def T(self, z):
        return self.M + np.diag(1j * z * self.Jd)

    def coupling(self) -> float:
        """First-order shift ``<U|K0 U>``."""
        Kd = self.M - self._omega_casida()
        return float(np.vdot(self.u, Kd @ self.u).real)

    def _omega_casida(self):
        om = self.space.omega
        Z = np.zeros_like(om)
        return np.block([[om, Z], [Z, om.conj()]])

    def second_order(self, z) -> complex:
        """``<U|K0 R(z) K0|U>`` with ``R`` the inverse of the compressed ``M + izJ``."""
        T = self.T(z)
        Tq = self.Q.conj().T @ T @ self.Q
        right = self.Q.conj().T @ (T @ self.u)
        left = (self.u.conj() @ T) @ self.Q
        try:
            sol = np.linalg.solve(Tq, right)
        except np.linalg.LinAlgError as exc:
            raise SingularRestriction(str(exc)) from exc
        if not np.all(np.isfinite(sol)) or np.abs(sol).max() > 1e10 * max(1.0, np.abs(right).max()):
            raise SingularRestriction(f"z={z} is within reach of a restricted eigenvalue")
        return complex(left @ sol)


def schur_complement(gs: GroundState, model: ModelSystem, z: complex, delta: float,
                     channel: TransitionChannel) -> complex:
    """``S(z) = (e0 - z) + <U|K0 U> - <U|(M+izJ) R(z) (M+izJ)|U>``, K0 scaled by ``delta``."""
    if not np.imag(z) > 0:
        raise ValueError("S(z) is evaluated in the upper half plane only")
    r = _Restricted(gs, model, channel, delta)
    return channel.e0 - z + r.coupling() - r.second_order(z)


def _richardson(etas, values):
    """Polynomial extrapolation to ``eta = 0`` (Neville tableau); returns the diagonal."""
    etas = np.asarray(etas, dtype=float)
    T = [complex(v) for v in values]
    diag = [T[0]]
    for k in range(1, len(T)):
        for j in range(len(T) - 1, k - 1, -1):
            T[j] = (etas[j - k] * T[j] - etas[j] * T[j - 1]) / (etas[j - k] - etas[j])
        diag.append(T[k])
    return diag


def pole_estimate(gs: GroundState, model: ModelSystem, channel: TransitionChannel, delta: float,
                  eta_seq: Optional[Sequence[float]] = None, rtol: float = 0.1) -> ResonanceEstimate:
    """Second-order pole ``e0 + <U|K0U> - <U|K0 R(e0+i eta) K0|U>`` extrapolated to ``eta -> 0``.

    ``eta_seq`` must decrease and stay above the box level spacing; the
    default is ``(6, 4.5, 3) * spacing``. Raises :class:`NoConvergence` when the
    last two extrapolation orders disagree in the width by more than ``rtol``.
    """
    if delta == 0:
        return ResonanceEstimate(complex(channel.e0), 0.0, 0.0, 0.0)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if eta_seq is None:
        eta_seq = tuple(channel.spacing * np.array([6.0, 4.5, 3.0]))
    eta_seq = np.asarray(eta_seq, dtype=float)
    if np.any(eta_seq <= 0) or np.any(np.diff(eta_seq) >= 0):
        raise ValueError("eta_seq must be positive and decreasing")
    r = _Restricted(gs, model, channel, delta)
    first = r.coupling()
    vals = [r.second_order(channel.e0 + 1j * eta) for eta in eta_seq]
    diag = _richardson(eta_seq, vals)
    second = diag[-1]
    z = channel.e0 + first - second
    if len(diag) > 1:
        g_last, g_prev = (-np.imag(channel.e0 + first - d) for d in diag[-2:])
        if abs(g_last - g_prev) > rtol * max(abs(g_last), 1e-300):
            raise NoConvergence(
                f"width extrapolation unstable ({g_prev:.3e} vs {g_last:.3e}); enlarge the box L")
    return ResonanceEstimate(complex(z), float(z.real - channel.e0), float(-z.imag), float(delta), first,
                             tuple(eta_seq.tolist()), vals)


def channel_vectors(gs: GroundState, model: ModelSystem, channel: TransitionChannel, delta: float):
    """``g_i = psi_i * (F rho_U)`` for each occupied ``i`` (canonical orbitals), ``F`` scaled by ``delta``."""
    _, v = _canonical(gs)
    psi = gs.psi @ v
    phi = gs.modes[:, channel.a0]
    F = delta * model.hxc_kernel(gs.rho)
    pot = F @ (psi[:, channel.i0].conj() * phi).real
    return psi * pot[:, None]


def golden_rule_width(gs: GroundState, model: ModelSystem, channel: TransitionChannel, delta: float,
                      s: Optional[float] = None):
    """``Gamma = pi sum_{i open} <g_i| p_s(e0 + lambda_i) |g_i>`` over positive-energy box states.

    Returns ``(Gamma, channels)`` where ``channels`` lists per-``i`` terms.
    The default width is four times the level spacing at the channel energy.
    """
    lam, _ = _canonical(gs)
    s = 4.0 * channel.spacing if s is None else float(s)
    pos = gs.spectrum > 0
    measure = SpectralMeasure(gs.spectrum[pos], gs.modes[:, pos], gs.h, s)
    g = channel_vectors(gs, model, channel, delta)
    out = []
    for i in channel.open_channels:
        E = channel.e0 + lam[i]
        term = np.pi * measure.density(g[:, i], E)
        out.append({"i": int(i), "energy": float(E), "gamma": float(max(term, 0.0))})
    return float(sum(c["gamma"] for c in out)), out


def residue_check(gs: GroundState, channel: TransitionChannel) -> float:
    """``||S0(U)||`` for the unnormalized transition variation ``U = phi_a0`` in sector ``i0``."""
    _, v = _canonical(gs)
    U = np.outer(gs.modes[:, channel.a0], v[:, channel.i0].conj())
    return float(np.sqrt(gs.h) * np.linalg.norm(s0_apply(gs, U)))


def lorentzian(w, amp, w0, fwhm, c):
    hw = 0.5 * fwhm
    return amp * hw**2 / ((w - w0) ** 2 + hw**2) + c


def lorentzian_fwhm(omega, values, center: float, window: float):
    """Fit ``|Im values|`` near ``center`` with a Lorentzian; returns ``(w0, fwhm)``."""
    omega = np.asarray(omega)
    y = np.abs(np.imag(values))
    sel = np.abs(omega - center) <= window
    wo, yo = omega[sel], y[sel]
    if wo.size < 5:
        raise ValueError("fit window holds fewer than 5 frequencies")
    k = np.argmax(yo)
    p0 = [yo[k] - yo.min(), wo[k], 0.25 * window, yo.min()]
    popt, _ = curve_fit(lorentzian, wo, yo, p0=p0, maxfev=20000)
    return float(popt[1]), float(abs(popt[2]))


def report(channel: TransitionChannel, est: ResonanceEstimate, gamma_golden: float, channels: list,
           s: float, gamma_lorentz: Optional[float] = None, extra: Optional[dict] = None) -> dict:
    out = {
        "e0": channel.e0,
        "dE": est.dE,
        "Gamma_schur": est.gamma,
        "Gamma_golden": gamma_golden,
        "Gamma_lorentz": gamma_lorentz,
        "channels": channels,
        "delta": est.delta,
        "s": s,
        "eta_seq": list(est.eta_seq),
    }
    if extra:
        out.update(extra)
    return out


def dump_report(path, rep: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rep, fh, indent=2, sort_keys=False)
        fh.write("\n")
