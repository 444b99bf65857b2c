"""Density-density linear response in time and frequency, Dyson check, kick spectra."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .dynamics import Drive, LinearizedPropagator, propagate_nonlinear
from .errors import SingularSystem
from .groundstate import GroundState
from .model import ModelSystem

log = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class FrequencyGrid:
    omega: np.ndarray
    eta: float = 5e-3

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", w)
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if w.ndim != 1 or (w.size > 1 and np.any(np.diff(w) <= 0)):
            raise ValueError("omega must be a strictly increasing 1D array")

    @classmethod
    def linspace(cls, wmin: float, wmax: float, n: int, eta: float = 5e-3) -> "FrequencyGrid":
        return cls(np.linspace(wmin, wmax, n), eta)

    @property
    def spacing(self) -> float:
        return float(self.omega[1] - self.omega[0]) if self.omega.size > 1 else 0.0

    @property
    def z(self) -> np.ndarray:
        return self.omega + 1j * self.eta


@dataclass
class SpectrumResult:
    omega: np.ndarray
    values: np.ndarray  # <W|chi(omega) V_P>
    eta: float
    meta: dict = field(default_factory=dict)

    def is_dissipative(self, tol: float = 1e-12) -> bool:
        """``Im <= 0`` for ``omega > 0`` (meaningful when W = V_P)."""
        pos = self.omega > 0
        scale = max(1.0, np.abs(self.values).max())
        return bool(np.all(self.values.imag[pos] <= tol * scale))

    def peaks(self, rel_height: float = 1e-3) -> np.ndarray:
        """Frequencies of local maxima of ``|Im|`` above ``rel_height * max``."""
        return self.omega[peak_indices(np.abs(self.values.imag), rel_height)]

    def to_csv(self, path, extra: Optional[dict] = None):
        extra = extra or {}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["omega", "re", "im", *extra.keys()])
            for om, v in zip(self.omega, self.values):
                w.writerow([f"{om:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}", *extra.values()])


def peak_indices(y, rel_height: float = 1e-3) -> np.ndarray:
    y = np.asarray(y)
    if y.size < 3:
        return np.array([], dtype=int)
    inner = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]) & (y[1:-1] > rel_height * y.max())
    return np.flatnonzero(inner) + 1


def _propagator(gs, model, delta, propagator):
    if propagator is not None:
        return propagator
    return LinearizedPropagator(gs, model, delta)


def chi_time(gs: GroundState, model: ModelSystem, V_P, t, delta: float = 1.0,
             propagator: Optional[LinearizedPropagator] = None) -> np.ndarray:
    """``chi(t) V_P = -theta(t) S0(exp(-tJM) J (1-P0) V_P Psi0)`` as grid densities.

    Scalar ``t`` gives an ``n`` array; array ``t`` gives ``n x len(t)``.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((gs.n, ts.size))
    live = ts >= 0
    if np.any(live):
        prop = _propagator(gs, model, delta, propagator)
        Jb = prop.apply_J(prop.space.forcing(V_P))
        modal = prop._right @ Jb
        X = prop._left @ (np.exp(1j * np.outer(prop.mu, ts[live])) * modal[:, None])
        out[:, live] = -np.real(prop.space.density_of(X))
    return out[:, 0] if np.ndim(t) == 0 else out


def chi_freq(gs: GroundState, model: ModelSystem, V_P, W=None, freq: Optional[FrequencyGrid] = None,
             delta: float = 1.0, method: str = "spectral",
             propagator: Optional[LinearizedPropagator] = None) -> SpectrumResult:
    """``<W|chi(omega + i eta) V_P> = -<W|S0 (M + i z J)^{-1} (1-P0) V_P Psi0>``.

    ``method="spectral"`` reuses the eigendecomposition of the sandwiched
    generator for every frequency; ``method="direct"`` LU-factorizes the
    doubled system at each frequency.
    """
    if freq is None:
        raise ValueError("a FrequencyGrid is required")
    V_P = np.asarray(V_P, dtype=float)
    W = V_P if W is None else np.asarray(W, dtype=float)
    h = gs.h
    if method == "spectral":
        prop = _propagator(gs, model, delta, propagator)
        space = prop.space
        b = space.forcing(V_P)
        rows = h * (W @ space.density_matrix()) @ prop._left
        cols = prop._right @ (-prop.Jdiag * b)
        denom = 1j * (prop.mu[None, :] + freq.z[:, None])
        if np.abs(denom).min() < SINGULAR_TOL:
            raise SingularSystem("frequency hits an eigenvalue of the doubled system")
        vals = -(cols[None, :] * rows[None, :] / denom).sum(axis=1)
    elif method == "direct":
        from .linops import PerpSpace

        space = propagator.space if propagator is not None else PerpSpace(gs, model, delta)
        Mc, Jc = space.casida_M(), np.diag(space.casida_J())
        b = space.forcing(V_P)
        row = h * (W @ space.density_matrix())
        vals = np.empty(freq.omega.size, dtype=complex)
        for k, z in enumerate(freq.z):
            lu, piv = sla.lu_factor(Mc + np.diag(1j * z * Jc), check_finite=False)
            if np.abs(np.diag(lu)).min() < SINGULAR_TOL:
                raise SingularSystem(f"singular doubled system at omega={z.real:.6g}")
            vals[k] = -row @ sla.lu_solve((lu, piv), b)
    else:
        raise ValueError(f"unknown method {method!r}")
    meta = {"eta": freq.eta, "n": gs.n, "L": model.grid.L, "N": gs.N, "delta": delta, "method": method}
    return SpectrumResult(freq.omega.copy(), vals, freq.eta, meta)


def response_matrices(gs: GroundState, model: ModelSystem, z, delta: float = 1.0,
                      propagator: Optional[LinearizedPropagator] = None) -> np.ndarray:
    """``chi(z)`` as an ``n x n`` matrix mapping grid potentials to grid densities."""
    prop = _propagator(gs, model, delta, propagator)
    space = prop.space
    left = space.density_matrix() @ prop._left
    right = prop._right @ (-prop.Jdiag[:, None] * space.forcing_matrix())
    z = np.atleast_1d(z)
    return np.stack([-(left / (1j * (prop.mu + zz))) @ right for zz in z])


def dyson_residual(gs: GroundState, model: ModelSystem, V_P=None, W=None, freq: Optional[FrequencyGrid] = None,
                   delta: float = 1.0) -> float:
    """Max over frequencies of ``||chi - chi0 - chi0 F chi|| / ||chi||`` (Frobenius).

    ``chi0`` uses the same ``Omega`` with the coupling switched off and
    ``F = delta * (h w + diag v_xc'(rho0))``. ``V_P`` and ``W`` are accepted for
    interface symmetry; the identity is checked on full matrices.
    """
    chi = response_matrices(gs, model, freq.z, delta)
    chi0 = response_matrices(gs, model, freq.z, 0.0)
    F = delta * model.hxc_kernel(gs.rho)
    worst = 0.0
    for c, c0 in zip(chi, chi0):
        res = c - c0 - c0 @ F @ c
        nrm = np.linalg.norm(c)
        worst = max(worst, np.linalg.norm(res) / nrm if nrm > 0 else np.linalg.norm(res))
    return float(worst)


def damped_transform(times, signal, omega, eta: float, t_ref: float = 0.0) -> np.ndarray:
    """Trapezoid ``int s(t) exp((i omega - eta)(t - t_ref)) dt`` over the samples."""
    times = np.asarray(times)
    tau = times - t_ref
    wts = np.full(times.size, 0.0)
    d = np.diff(times)
    wts[:-1] += 0.5 * d
    wts[1:] += 0.5 * d
    kern = np.exp(np.outer(1j * np.asarray(omega) - eta, tau))
    return kern @ (wts * np.asarray(signal))


def kick_spectrum(gs: GroundState, model: ModelSystem, V_P, T: float, dt: float, eta: float, W=None,
                  omega=None, eps: float = 1e-3, sigma: float = 0.05, t0: Optional[float] = None,
                  interacting: bool = True) -> SpectrumResult:
    """Spectrum from a nonlinear run driven by a narrow unit-area Gaussian pulse.

    The damped transform of ``<W, delta_rho(t)>/eps`` is divided by the
    pulse's own transform ``exp(-sigma^2 omega^2 / 2)``.
    """
    V_P = np.asarray(V_P, dtype=float)
    W = V_P if W is None else np.asarray(W, dtype=float)
    t0 = 6 * sigma if t0 is None else t0
    omega = np.linspace(0.0, 3.0, 601) if omega is None else np.asarray(omega, dtype=float)
    norm = 1.0 / (sigma * np.sqrt(2 * np.pi))

    def pulse(t):
        return norm * np.exp(-0.5 * ((t - t0) / sigma) ** 2)

    drive = Drive(pulse, V_P, eps, "gaussian")
    tr = propagate_nonlinear(model, gs, drive, T, dt, interacting=interacting)
    sig = tr.observable(W, gs.rho, gs.h) / eps
    vals = damped_transform(tr.times, sig, omega, eta, t0)
    vals = vals * np.exp(0.5 * (sigma * omega) ** 2)
    meta = {"eta": eta, "n": gs.n, "L": model.grid.L, "N": gs.N, "T": T, "dt": dt, "eps": eps, "sigma": sigma}
    return SpectrumResult(omega, vals, eta, meta)
