"""Discretized 1D model system: grid, kinetic stencil, potentials, xc functional.

All grid functions are stored as point values on ``GridSpec.x``. The
quadrature weight is the uniform spacing ``h`` (Dirichlet zeros are implied
one step outside each end), so ``<u|v> = h * sum(conj(u) * v)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidDensity
from . import kernels

MIN_POINTS = 16


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[-L, L]`` with ``n`` points and Dirichlet boundaries."""

    n: int
    L: float
    strict: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if self.strict and self.n < MIN_POINTS:
            raise ValueError(f"n must be >= {MIN_POINTS}, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @classmethod
    def unchecked(cls, n: int, L: float) -> "GridSpec":
        """A grid that skips the minimum-size rule (for stencil checks)."""
        return cls(n, L, strict=False)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(-self.L, self.L, self.n)
        if self.n % 2 == 1:
            x[self.n // 2] = 0.0
        return x

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    def integrate(self, f) -> float:
        return float(self.h * np.sum(f))


@dataclass(frozen=True)
class SoftCoulombParams:
    a: float = 1.0
    Z: float = 2.0
    a_ext: float = 1.0

    def __post_init__(self):
        if not self.a > 0 or not self.a_ext > 0:
            raise ValueError("softening lengths a and a_ext must be positive")
        if self.Z < 0:
            raise ValueError("Z must be nonnegative")

    def interaction(self, r):
        return 1.0 / np.sqrt(np.asarray(r) ** 2 + self.a**2)

    def external(self, x):
        return -self.Z / np.sqrt(np.asarray(x) ** 2 + self.a_ext**2)


@dataclass(frozen=True)
class XcPolynomial:
    """``e_xc(rho) = c2 rho^2 + c3 rho^3 + c4 rho^4``.

    No constant or linear coefficient exists, so ``e_xc(0) = e_xc'(0) = 0``
    holds by construction.
    """

    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.c2 == 0.0 and self.c3 == 0.0 and self.c4 == 0.0


@dataclass(frozen=True)
class ModelSystem:
    grid: GridSpec
    sc: SoftCoulombParams
    xc: XcPolynomial
    N: int
    interacting: bool = True

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.N >= self.grid.n:
            raise ValueError("N must be smaller than the number of grid points")

    @cached_property
    def v_ext(self) -> np.ndarray:
        return self.sc.external(self.grid.x)

    @cached_property
    def coulomb_matrix(self) -> np.ndarray:
        """Dense kernel ``w(x_i - x_j)``; zero when the interaction is switched off."""
        x = self.grid.x
        if not self.interacting:
            return np.zeros((x.size, x.size))
        return self.sc.interaction(x[:, None] - x[None, :])

    @cached_property
    def kinetic(self) -> np.ndarray:
        return kinetic_matrix(self.grid)

    def hxc_kernel(self, rho0) -> np.ndarray:
        """Density-response kernel ``h*w + diag(v_xc'(rho0))`` acting on grid densities."""
        _, _, dv = xc_derivatives(self.xc, rho0)
        return self.grid.h * self.coulomb_matrix + np.diag(dv)


def default_model(n: int = 300, L: float = 20.0, **kw) -> ModelSystem:
    """Z=2, N=2 soft-Coulomb system used as the reference configuration."""
    sc = SoftCoulombParams(a=kw.pop("a", 1.0), Z=kw.pop("Z", 2.0), a_ext=kw.pop("a_ext", 1.0))
    xc = XcPolynomial(kw.pop("c2", -1.0), kw.pop("c3", 0.0), kw.pop("c4", 0.0))
    N = kw.pop("N", 2)
    if kw:
        raise TypeError(f"unexpected arguments: {sorted(kw)}")
    return ModelSystem(GridSpec(n, L), sc, xc, N)


def kinetic_matrix(grid: GridSpec) -> np.ndarray:
    """``-1/2`` times the three-point Laplacian with Dirichlet ends."""
    n, h = grid.n, grid.h
    t = np.zeros((n, n))
    idx = np.arange(n)
    t[idx, idx] = 1.0 / h**2
    t[idx[:-1], idx[1:]] = -0.5 / h**2
    t[idx[1:], idx[:-1]] = -0.5 / h**2
    return t


def _check_density(rho):
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0):
        raise InvalidDensity(f"density has negative entries (min {rho.min():.3e})")
    return rho


def hartree_potential(model: ModelSystem, rho, matrix_free: bool = False) -> np.ndarray:
    """``V_H(x_i) = h * sum_j w(x_i - x_j) rho_j``."""
    rho = _check_density(rho)
    if not model.interacting:
        return np.zeros_like(rho)
    if matrix_free:
        return kernels.soft_coulomb_sum(model.grid.x, rho, model.sc.a, model.grid.h)
    return model.grid.h * (model.coulomb_matrix @ rho)


def xc_derivatives(xc: XcPolynomial, rho):
    """Return ``(e_xc, v_xc, v_xc')`` evaluated pointwise."""
    rho = _check_density(rho)
    c2, c3, c4 = xc.c2, xc.c3, xc.c4
    e = rho * rho * (c2 + rho * (c3 + rho * c4))
    v = rho * (2 * c2 + rho * (3 * c3 + rho * 4 * c4))
    dv = 2 * c2 + rho * (6 * c3 + rho * 12 * c4)
    return e, v, dv


def local_potential(model: ModelSystem, rho) -> np.ndarray:
    """Diagonal of ``H[rho]``: ``V_ext + V_H + v_xc``."""
    _, v_xc, _ = xc_derivatives(model.xc, rho)
    return model.v_ext + hartree_potential(model, rho) + v_xc


def hamiltonian(model: ModelSystem, rho) -> np.ndarray:
    """Mean-field Hamiltonian ``-1/2 Laplacian + V_ext + V_H[rho] + v_xc(rho)``."""
    return model.kinetic + np.diag(local_potential(model, rho))


def density(orbitals) -> np.ndarray:
    """``sum_i |psi_i|^2`` for an ``n x N`` orbital matrix."""
    psi = np.asarray(orbitals)
    return np.sum(np.abs(psi) ** 2, axis=1)
