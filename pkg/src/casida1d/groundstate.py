"""Ground-state minimization on the orthonormal-orbital manifold."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AufbauWarning,
    MaxIterations,
    NotAMinimum,
    NotOrthonormal,
    PositiveOccupiedEigenvalue,
)
from .model import ModelSystem, density, hamiltonian, hartree_potential, xc_derivatives

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class GroundState:
    """Converged Kohn-Sham state.

    ``psi`` holds grid values, orthonormal under ``h * psi^H psi``. For the
    canonical state ``lagrange`` is ``diag(eigenvalues)``; a rotated copy
    (see :meth:`rotated`) carries the full matrix ``h * psi^H H0 psi``.
    ``spectrum``/``modes`` hold the complete eigendecomposition of ``H0``
    with grid-normalized eigenvectors, and ``occ`` the occupied indices
    into it.
    """

    psi: np.ndarray
    h: float
    eigenvalues: np.ndarray
    rho: np.ndarray
    energy: float
    H0: np.ndarray
    spectrum: np.ndarray
    modes: np.ndarray
    occ: np.ndarray
    lagrange: np.ndarray
    residual: float
    iterations: int
    gamma: Optional[float] = None

    @property
    def N(self) -> int:
        return self.psi.shape[1]

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    @property
    def unocc(self) -> np.ndarray:
        mask = np.ones(self.spectrum.size, dtype=bool)
        mask[self.occ] = False
        return np.flatnonzero(mask)

    def rotated(self, R) -> "GroundState":
        """Same state expressed with orbitals ``psi @ R`` (R orthogonal)."""
        R = np.asarray(R)
        return replace(self, psi=self.psi @ R, lagrange=R.conj().T @ self.lagrange @ R)

    def require_minimum(self):
        if self.gamma is None:
            raise NotAMinimum("coercivity constant has not been computed")
        if not self.gamma > 0:
            raise NotAMinimum(f"gamma = {self.gamma:.3e} <= 0: not a non-degenerate minimum")


def overlap(h: float, psi, phi=None) -> np.ndarray:
    phi = psi if phi is None else phi
    return h * (np.asarray(psi).conj().T @ np.asarray(phi))


def check_orthonormal(h: float, psi, tol: float = ORTHO_TOL):
    err = np.abs(overlap(h, psi) - np.eye(np.shape(psi)[1])).max()
    if err > tol:
        raise NotOrthonormal(f"orbitals deviate from orthonormality by {err:.3e}")


def energy(model: ModelSystem, psi, check: bool = True) -> float:
    """Kinetic + external + Hartree + xc energy of the orbital matrix ``psi``.

    ``check=False`` evaluates the same functional off the manifold, which the
    expansion tests need.
    """
    h = model.grid.h
    psi = np.asarray(psi)
    if check:
        check_orthonormal(h, psi)
    rho = density(psi)
    kin = h * np.real(np.sum(psi.conj() * (model.kinetic @ psi)))
    ext = h * np.dot(model.v_ext, rho)
    hart = 0.5 * h * np.dot(rho, hartree_potential(model, rho))
    e_xc, _, _ = xc_derivatives(model.xc, rho)
    return float(kin + ext + hart + h * np.sum(e_xc))


def _orbitals_from(model, H):
    e, v = np.linalg.eigh(H)
    return e, v / np.sqrt(model.grid.h)


def _canonicalize_degenerate(x, values, vecs, h, tol=1e-8):
    """Fix the basis inside clusters of (near-)degenerate eigenvalues by diagonalizing x."""
    vecs = vecs.copy()
    start = 0
    while start < values.size:
        stop = start + 1
        while stop < values.size and values[stop] - values[stop - 1] < tol:
            stop += 1
        if stop - start > 1:
            block = vecs[:, start:stop]
            _, rot = np.linalg.eigh(h * block.T @ (x[:, None] * block))
            vecs[:, start:stop] = block @ rot
        start = stop
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _occupied(e, N, occupation):
    if occupation is None:
        return np.arange(N)
    occ = np.sort(np.asarray(occupation, dtype=int))
    if occ.size != N or np.unique(occ).size != N:
        raise ValueError(f"occupation override must list {N} distinct indices")
    if not np.array_equal(occ, np.arange(N)):
        warnings.warn(f"non-Aufbau occupation {occ.tolist()}", AufbauWarning, stacklevel=3)
    return occ


def scf_residual(model: ModelSystem, psi) -> float:
    """Max-norm of ``H[rho_psi] psi - psi Lambda`` with ``Lambda = h psi^H H psi``."""
    H = hamiltonian(model, density(psi))
    hpsi = H @ psi
    lam = overlap(model.grid.h, psi, hpsi)
    return float(np.abs(hpsi - psi @ lam).max())


def minimize(
    model: ModelSystem,
    seed: int = 0,
    tol: float = 1e-9,
    mixing: float = 0.3,
    max_iter: int = 5000,
    occupation: Optional[Sequence[int]] = None,
) -> GroundState:
    """Damped self-consistent field iteration with linear density mixing.

    When the residual stalls for 200 iterations the mixing parameter is
    halved (at most four times). The returned orbitals are exact eigenvectors
    of the stored ``H0``; ``residual`` measures self-consistency.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n, N, h = model.grid.n, model.N, model.grid.h
    rng = np.random.default_rng(seed)

    e, vecs = _orbitals_from(model, hamiltonian(model, np.zeros(n)))
    occ = _occupied(e, N, occupation)
    psi = vecs[:, occ]
    # seeded perturbation of the starting guess, re-orthonormalized
    psi = psi + 1e-3 * rng.standard_normal(psi.shape) * np.abs(psi).max()
    psi = _ortho(h, psi)
    rho_in = density(psi)

    best, stall, alpha, halvings = np.inf, 0, mixing, 0
    for it in range(1, max_iter + 1):
        H = hamiltonian(model, rho_in)
        e, vecs = _orbitals_from(model, H)
        occ = _occupied(e, N, occupation)
        psi = vecs[:, occ]
        res = scf_residual(model, psi)
        if res <= tol:
            break
        if res < 0.9 * best:
            best, stall = res, 0
        else:
            stall += 1
            if stall >= 200 and halvings < 4:
                alpha *= 0.5
                halvings += 1
                stall = 0
                log.info("SCF stalled at %.3e; mixing reduced to %.3g", res, alpha)
        rho_in = rho_in + alpha * (density(psi) - rho_in)
    else:
        raise MaxIterations(f"SCF did not reach tol={tol:.1e} in {max_iter} iterations (residual {res:.3e})")

    modes = _canonicalize_degenerate(model.grid.x, e, vecs, h)
    psi = modes[:, occ]
    lam = e[occ]
    if np.any(lam >= 0):
        raise PositiveOccupiedEigenvalue(f"occupied eigenvalues {lam} are not all negative")
    rho0 = density(psi)
    return GroundState(
        psi=psi,
        h=h,
        eigenvalues=lam.copy(),
        rho=rho0,
        energy=energy(model, psi),
        H0=H,
        spectrum=e,
        modes=modes,
        occ=occ,
        lagrange=np.diag(lam),
        residual=res,
        iterations=it,
    )


def _ortho(h, psi):
    """``psi (h psi^H psi)^{-1/2}`` (Loewdin orthonormalization)."""
    s = overlap(h, psi)
    w, v = np.linalg.eigh(s)
    return psi @ (v * (1.0 / np.sqrt(w))) @ v.conj().T


def retract(model: ModelSystem, psi):
    """Map an orbital matrix back onto the manifold by Loewdin orthonormalization."""
    return _ortho(model.grid.h, np.asarray(psi))


def quadratic_model(model: ModelSystem, gs: GroundState, V) -> float:
    """Second-order model ``E + 2Re<H psi|V> + <V|H V> + Re<V|K_psi V>`` around ``gs.psi``."""
    from .linops import k_apply_general

    h = model.grid.h
    psi = gs.psi
    H = hamiltonian(model, density(psi))
    V = np.asarray(V, dtype=complex)
    first = 2 * h * np.real(np.sum((H @ psi).conj() * V))
    second = h * np.real(np.sum(V.conj() * (H @ V)))
    second += h * np.real(np.sum(V.conj() * k_apply_general(model, psi, V)))
    return energy(model, psi, check=False) + first + second


def energy_expansion_residual(model: ModelSystem, gs: GroundState, U, eps_list) -> float:
    """Log-log slope of ``|E(psi + eps U) - quadratic model|`` against eps.

    Returns ``inf`` when every residual is exactly zero (e.g. ``U = 0``).
    """
    eps_list = np.asarray(eps_list, dtype=float)
    res = np.array([
        abs(energy(model, gs.psi + e * U, check=False) - quadratic_model(model, gs, e * U))
        for e in eps_list
    ])
    if np.all(res == 0):
        return float("inf")
    slope, _ = np.polyfit(np.log(eps_list), np.log(res), 1)
    return float(slope)


def expansion_residuals(model: ModelSystem, gs: GroundState, U, eps_list) -> np.ndarray:
    return np.array([
        abs(energy(model, gs.psi + e * U, check=False) - quadratic_model(model, gs, e * U))
        for e in np.asarray(eps_list, dtype=float)
    ])


def subspace_distance(h: float, psi, phi) -> float:
    """``min_R ||psi - phi R||^2 = 2N - 2 tr(Sigma)``, Sigma = singular values of ``phi^H psi``."""
    sv = np.linalg.svd(overlap(h, phi, psi), compute_uv=False)
    N = np.shape(psi)[1]
    return float(min(max(2 * N - 2 * np.sum(sv), 0.0), 2 * N))


def coercivity_constant(model: ModelSystem, gs: GroundState, tol: float = 1e-10) -> GroundState:
    """Smallest eigenvalue of ``U -> Re<U|M_dyn U>`` on ``Ran(1 - P0)``.

    Returns a copy of ``gs`` with ``gamma`` set. Raises :class:`NotAMinimum`
    when ``gamma <= -tol``; a value in ``(-tol, 0]`` is stored and flagged by
    :meth:`GroundState.require_minimum` downstream.
    """
    from .linops import PerpSpace

    space = PerpSpace(gs, model)
    gamma = float(np.linalg.eigvalsh(space.hessian_reim())[0])
    if gamma <= -tol:
        raise NotAMinimum(f"gamma = {gamma:.3e}: not a local minimum")
    return replace(gs, gamma=gamma)


def solve(model: ModelSystem, seed: int = 0, tol: float = 1e-9, **kw) -> GroundState:
    """:func:`minimize` followed by :func:`coercivity_constant`."""
    return coercivity_constant(model, minimize(model, seed=seed, tol=tol, **kw))
