"""Time propagation: nonlinear Kohn-Sham flow and the linearized flow ``exp(-tJM)``."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import expm

from . import kernels
from .errors import NonfiniteState, NotAMinimum, StepTooLarge
from .groundstate import GroundState, overlap
from .linops import PerpSpace, assemble, k0_apply, to_reim, from_reim
from .model import ModelSystem, density, local_potential

log = logging.getLogger(__name__)


# -- drives ---------------------------------------------------------------------


@dataclass(frozen=True)
class Drive:
    """Perturbation ``eps * f(t) * V_P``; ``f`` is forced to vanish for ``t < 0``."""

    f: Callable[[np.ndarray], np.ndarray]
    V_P: np.ndarray
    eps: float = 1e-3
    label: str = "custom"

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        val = np.where(t < 0, 0.0, self.f(np.maximum(t, 0.0)))
        return float(val) if val.ndim == 0 else val

    def with_eps(self, eps: float) -> "Drive":
        return Drive(self.f, self.V_P, eps, self.label)


def gaussian_pulse(t0: float, sigma: float):
    def f(t):
        return np.exp(-0.5 * ((t - t0) / sigma) ** 2)

    return f


def step_function():
    def f(t):
        return np.ones_like(np.asarray(t, dtype=float))

    return f


def sinusoid(omega0: float):
    def f(t):
        return np.sin(omega0 * t)

    return f


# -- trajectories ---------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    states: List[np.ndarray]
    densities: List[np.ndarray]
    eps: float = 0.0
    orbitals: Optional[np.ndarray] = field(default=None, repr=False)  # final orbitals

    def observable(self, W, rho0, h: float) -> np.ndarray:
        """``<W, rho(t) - rho0>`` for every stored time."""
        W = np.asarray(W, dtype=float)
        return np.array([h * np.dot(W, r - rho0) for r in self.densities])

    def to_csv(self, path, W, rho0, h: float):
        obs = self.observable(W, rho0, h)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "norm_U", "observable"])
            for t, U, o in zip(self.times, self.states, obs):
                w.writerow([f"{t:.17g}", f"{np.sqrt(h) * np.linalg.norm(U):.17g}", f"{o:.17g}"])


# -- nonlinear propagation -------------------------------------------------------


def _cn_phase(lam, dt):
    """Per-step phase ``theta`` with ``exp(-j theta)`` the CN factor of ``exp(-j lam dt)``."""
    return 2.0 * np.arctan(0.5 * lam * dt)


def propagate_orbitals(model: ModelSystem, psi0, T: float, dt: float, drive: Optional[Drive] = None,
                       n_correct: int = 1, save_every: int = 1, t0: float = 0.0, frozen=None):
    """Crank-Nicolson propagation of ``j dPsi/dt = (H[rho] + eps f V_P) Psi``.

    Each step uses a predictor with the potential at the start of the step,
    then ``n_correct`` corrector passes with the potential at the mean density
    of the step. ``dt`` may be negative for backward propagation. A grid
    array ``frozen`` replaces the density-dependent potential by a fixed one.

    Returns ``(times, orbitals)`` with orbitals saved every ``save_every`` steps.
    """
    if dt == 0 or T < 0:
        raise ValueError("need dt != 0 and T >= 0")
    nsteps = int(round(T / abs(dt)))
    h = model.grid.h
    kin_diag = np.diag(model.kinetic).copy()
    off = -0.5 / h**2
    psi = np.array(psi0, dtype=np.complex128)
    norms0 = h * np.sum(np.abs(psi) ** 2, axis=0)
    times, saved = [t0], [psi.copy()]
    t = t0

    def pot(r):
        return frozen if frozen is not None else local_potential(model, r)

    for k in range(nsteps):
        tm = t + 0.5 * dt
        ext = 0.0 if drive is None or drive.eps == 0 else drive.eps * drive(tm) * drive.V_P
        rho = density(psi)
        new = kernels.cn_step(kin_diag + pot(rho) + ext, off, psi, dt)
        for _ in range(0 if frozen is not None else n_correct):
            rho_mid = 0.5 * (rho + density(new))
            new = kernels.cn_step(kin_diag + pot(rho_mid) + ext, off, psi, dt)
        if not np.all(np.isfinite(new)):
            raise NonfiniteState(f"non-finite orbitals at t={t + dt:.4g}")
        drift = np.abs(h * np.sum(np.abs(new) ** 2, axis=0) - norms0).max()
        if drift > 1e-6:
            raise StepTooLarge(f"norm drift {drift:.2e} at t={t + dt:.4g}; reduce dt")
        psi = new
        t = t0 + (k + 1) * dt
        if (k + 1) % save_every == 0 or k == nsteps - 1:
            times.append(t)
            saved.append(psi.copy())
    return np.array(times), saved


def propagate_nonlinear(model: ModelSystem, gs: GroundState, drive: Drive, T: float, dt: float = 0.01,
                        save_every: int = 1, n_correct: int = 1, interacting: bool = True) -> Trajectory:
    """Propagate from ``gs`` under ``drive`` and return ``U(t)`` of the phase ansatz.

    ``psi_i(t) = exp(-j theta_i t/dt) (psi_i^0 + eps u_i(t))`` where
    ``theta_i`` is the CN-discrete phase of ``lambda_i``; at ``eps = 0`` the
    ground state is then exactly stationary. For ``eps = 0`` the unscaled
    deviation is returned. ``interacting=False`` freezes the mean-field
    potential at its ground-state value.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not np.allclose(gs.lagrange, np.diag(gs.eigenvalues), atol=1e-12):
        raise ValueError("propagate_nonlinear expects canonical orbitals")
    frozen = None if interacting else local_potential(model, gs.rho)
    times, orbs = propagate_orbitals(model, gs.psi, T, dt, drive, n_correct, save_every, frozen=frozen)
    theta = _cn_phase(gs.eigenvalues, dt) / dt
    scale = 1.0 / drive.eps if drive.eps > 0 else 1.0
    states = [(np.exp(1j * theta * t)[None, :] * p - gs.psi) * scale for t, p in zip(times, orbs)]
    return Trajectory(times, states, [density(p) for p in orbs], drive.eps, orbs[-1])


# -- linearized propagation --------------------------------------------------------


class LinearizedPropagator:
    """``exp(-tJM)`` on ``Ran(1-P0)`` as ``M^{-1/2} exp(-t M^{1/2} J M^{1/2}) M^{1/2}``.

    Everything lives in Casida coefficients of :class:`PerpSpace`. The
    skew-Hermitian generator ``G = M^{1/2} J M^{1/2}`` is diagonalized once:
    ``iG = V diag(mu) V^H`` so ``exp(-tG) = V diag(exp(i mu t)) V^H``.
    """

    def __init__(self, gs: GroundState, model: ModelSystem, delta: float = 1.0):
        gs.require_minimum()
        self.gs = gs
        self.model = model
        self.space = PerpSpace(gs, model, delta)
        Mc = self.space.casida_M()
        w, Q = np.linalg.eigh(0.5 * (Mc + Mc.conj().T))
        floor = 0.5 * gs.gamma if delta == 1.0 else 0.0
        if w[0] <= floor:
            raise NotAMinimum(f"smallest eigenvalue of M is {w[0]:.3e} (floor {floor:.3e})")
        self.m_eigs = w
        self.sqrtM = (Q * np.sqrt(w)) @ Q.conj().T
        self.isqrtM = (Q / np.sqrt(w)) @ Q.conj().T
        self.Mc = Mc
        Jd = np.concatenate([np.full(w.size // 2, 1j), np.full(w.size // 2, -1j)])
        self.Jdiag = Jd
        G = self.sqrtM @ (Jd[:, None] * self.sqrtM)
        iG = 1j * G
        mu, V = np.linalg.eigh(0.5 * (iG + iG.conj().T))
        self.G = G
        self.mu = mu
        self.V = V
        self._left = self.isqrtM @ V        # modal -> Casida coefficients
        self._right = V.conj().T @ self.sqrtM  # Casida coefficients -> modal

    @property
    def excitation_energies(self) -> np.ndarray:
        """Positive eigenfrequencies of ``-JM`` (the Casida excitation energies)."""
        return np.sort(self.mu[self.mu > 0])

    def unitary(self, t: float, x) -> np.ndarray:
        """``exp(-t M^{1/2} J M^{1/2}) x``."""
        return self.V @ (np.exp(1j * self.mu * t) * (self.V.conj().T @ x))

    def apply_casida(self, t: float, x) -> np.ndarray:
        x = np.asarray(x)
        ph = np.exp(1j * self.mu * t)
        if x.ndim == 1:
            return self._left @ (ph * (self._right @ x))
        return self._left @ (ph[:, None] * (self._right @ x))

    def apply(self, t: float, U0) -> np.ndarray:
        """``exp(-tJM) U0`` for a grid variation ``U0`` in ``Ran(1-P0)``."""
        x = self.space.to_casida(U0)
        return self.space.from_casida(self.apply_casida(t, x), physical=False)

    def apply_J(self, x) -> np.ndarray:
        return self.Jdiag * x

    def energy(self, x) -> float:
        """``<x|M x>`` for a Casida coefficient vector."""
        return float(np.vdot(x, self.Mc @ x).real)

    def resolvent(self, z: complex, b) -> np.ndarray:
        """``(M + i z J)^{-1} b`` from the modal decomposition (Im z > 0 or off-spectrum)."""
        rhs = -self.Jdiag * b if np.ndim(b) == 1 else -self.Jdiag[:, None] * b
        denom = 1j * (self.mu + z)
        modal = self._right @ rhs
        if modal.ndim == 1:
            return self._left @ (modal / denom)
        return self._left @ (modal / denom[:, None])

    def h2_amplification(self, times) -> np.ndarray:
        """``||M exp(-tJM) M^{-1}||_2`` at each time (``x -> ||Mx||`` is H2-equivalent)."""
        out = []
        for t in times:
            E = self.sqrtM @ self.V @ (np.exp(1j * self.mu * t)[:, None] * (self.V.conj().T @ self.isqrtM))
            out.append(np.linalg.norm(E, 2))
        return np.array(out)

    # Duhamel integrals

    def modal_integrals(self, f: Callable, times, n_gl: Optional[int] = None) -> np.ndarray:
        """``I_k(t) = int_0^t exp(i mu_k (t - s)) f(s) ds`` for every mode and time in ``times``.

        Cumulative Gauss-Legendre quadrature between consecutive times.
        """
        times = np.asarray(times, dtype=float)
        out = np.zeros((self.mu.size, times.size), dtype=complex)
        if times.size == 0:
            return out
        if n_gl is None:
            dmax = np.max(np.diff(times)) if times.size > 1 else times[0]
            n_gl = int(min(64, max(16, np.abs(self.mu).max() * dmax + 12)))
        xg, wg = np.polynomial.legendre.leggauss(n_gl)
        acc = np.zeros(self.mu.size, dtype=complex)
        prev = 0.0
        for j, t in enumerate(times):
            d = t - prev
            if d > 0:
                s = prev + 0.5 * d * (xg + 1.0)
                fw = 0.5 * d * wg * f(s)
                acc = np.exp(1j * self.mu * d) * acc + np.exp(1j * np.outer(self.mu, t - s)) @ fw
            out[:, j] = acc
            prev = t
        return out


def linearized_propagator_apply(gs: GroundState, model: ModelSystem, t: float, U0,
                                propagator: Optional[LinearizedPropagator] = None) -> np.ndarray:
    prop = propagator or LinearizedPropagator(gs, model)
    return prop.apply(t, U0)


def propagate_linearized(gs: GroundState, model: ModelSystem, drive: Drive, T: float, dt_out: float = 0.1,
                         substeps: int = 4, propagator: Optional[LinearizedPropagator] = None) -> Trajectory:
    """First-order response ``U1(t)`` to ``f(t) V_P`` (``eps`` is not applied).

    The perp channel is the exact modal Duhamel integral; the gauge channel
    ``Psi0 A(t)`` solves ``dA/dt = -j([Lambda, A] + h Psi0^T diag(q) Psi0)``
    with ``q = F delta_rho + f V_P`` by Simpson quadrature on a grid refined
    by ``substeps``. The growth channel stays zero for this forcing. Stored
    densities are ``rho0 + S0(U1)``.
    """
    prop = propagator or LinearizedPropagator(gs, model)
    space = prop.space
    nout = int(round(T / dt_out))
    fine = np.linspace(0.0, nout * dt_out, nout * substeps + 1)
    b = space.forcing(drive.V_P)
    y = -(prop._right @ (prop.Jdiag * b))
    I = prop.modal_integrals(drive, fine)
    X = prop._left @ (I * y[:, None])  # Casida coefficients at fine times
    drho = np.real(space.density_of(X))  # n x len(fine)

    psi = gs.psi
    h = gs.h
    lam_w, lam_v = np.linalg.eigh(gs.lagrange)
    F = space.kernel
    q = F @ drho + np.outer(drive.V_P, drive(fine))
    # occupied block of the potential, in the eigenbasis of the Lagrange matrix
    Q = np.einsum("ki,kt,kj->tij", psi, q, psi) * h
    Q = np.einsum("ai,tij,jb->tab", lam_v.T, Q, lam_v)
    wdiff = lam_w[:, None] - lam_w[None, :]
    # C(t) = -j int_0^t exp(-j w (t - s)) Q(s) ds, integrating factor + composite Simpson
    g = np.exp(1j * wdiff[None] * fine[:, None, None]) * Q
    C = np.zeros_like(g)
    for k in range(1, fine.size):
        if k % 2 == 0:
            C[k] = C[k - 2] + (fine[k] - fine[k - 2]) / 6 * (g[k - 2] + 4 * g[k - 1] + g[k])
        else:  # trapezoid fill-in for odd points, refined by Simpson on even ones
            C[k] = (C[k - 1] + 0.5 * (fine[k] - fine[k - 1]) * (g[k - 1] + g[k])) if k == 1 else \
                C[k - 1] + (fine[k] - fine[k - 1]) / 12 * (-g[k - 2] + 8 * g[k - 1] + 5 * g[k])
    C = -1j * np.exp(-1j * wdiff[None] * fine[:, None, None]) * C
    A = np.einsum("ia,tab,bj->tij", lam_v, C, lam_v.T)

    idx = np.arange(0, fine.size, substeps)
    states, dens = [], []
    for k in idx:
        U = space.from_casida(X[:, k], physical=False) + psi @ A[k]
        states.append(U)
        dens.append(gs.rho + drho[:, k])
    return Trajectory(fine[idx], states, dens, 1.0)


# -- Duhamel consistency ----------------------------------------------------------


def remainder(model: ModelSystem, gs: GroundState, U, eps: float, ft: float, V_P) -> np.ndarray:
    """Higher-order terms ``R(U, eps, t)`` of the phase-rotated evolution."""
    psi0 = gs.psi
    dv = local_potential(model, density(psi0 + eps * U)) - local_potential(model, gs.rho)
    return (eps * ft * np.asarray(V_P)[:, None] * U + dv[:, None] * (psi0 / eps + U)
            - k0_apply(gs, model, U))


class DenseLinearFlow:
    """Exact ``exp(-J M_dyn tau)`` on the full variation space via a dense matrix exponential."""

    def __init__(self, gs: GroundState, model: ModelSystem):
        ops = assemble(gs, model, dense=True)
        self.n = gs.n
        L = ops.J.reim() @ ops.M_dyn.reim()
        self.L = -L  # dU/dt = -J M_dyn U - J g
        self.Jr = ops.J.reim()
        self._cache = {}

    def step(self, tau: float) -> np.ndarray:
        key = round(tau, 14)
        if key not in self._cache:
            self._cache[key] = expm(self.L * tau)
        return self._cache[key]


def duhamel_residual(trajectory: Trajectory, gs: GroundState, model: ModelSystem, drive: Drive,
                     flow: Optional[DenseLinearFlow] = None) -> float:
    """Max over stored times of ``||U(t) - Duhamel(t)||`` (weighted L2 norm).

    The right-hand side ``-int_0^t exp(-J M_dyn (t-s)) J (f V_P Psi0 + R(U(s))) ds``
    uses the exact dense exponential and the trapezoid rule on the
    trajectory's own time samples.
    """
    eps = trajectory.eps
    times = trajectory.times
    if eps == 0:
        return float(max(np.sqrt(gs.h) * np.linalg.norm(U) for U in trajectory.states))
    flow = flow or DenseLinearFlow(gs, model)
    n = gs.n
    forcing = []
    for t, U in zip(times, trajectory.states):
        ft = drive(t)
        g = ft * drive.V_P[:, None] * gs.psi + remainder(model, gs, U, eps, ft, drive.V_P)
        forcing.append(-(flow.Jr @ to_reim(g)))
    W = np.zeros_like(forcing[0])
    worst = 0.0
    for k in range(1, times.size):
        d = times[k] - times[k - 1]
        E = flow.step(d)
        W = E @ W + 0.5 * d * (E @ forcing[k - 1] + forcing[k])
        diff = from_reim(W, n) - trajectory.states[k]
        worst = max(worst, np.sqrt(gs.h) * np.linalg.norm(diff))
    return float(worst)
