"""Real-linear operator algebra for orbital variations.

An orbital variation ``U`` is an ``n x N`` complex array; the orbital
imaginary unit is numpy's ``1j``. Real-linear maps ``U -> A U + B conj(U)``
act on ``vec(U)`` (orbital-major: ``U.reshape(-1, order="F")``).

Two representations of the complexified space are used:

* Casida: ``U -> (U, conj(U)) / sqrt(2)``, operators ``[[A, B], [conj(B), conj(A)]]``;
* real/imaginary: ``U -> (Re U, Im U)``, operators
  ``[[Ar + Br, -Aj + Bj], [Aj + Bj, Ar - Br]]``.

Inner products carry the uniform quadrature weight ``h``; since it is a
scalar, Hermitian-ness of the stored matrices is literal.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import NotPerp
from .groundstate import GroundState, overlap
from .model import ModelSystem, density, xc_derivatives

SQRT2 = np.sqrt(2.0)
DENSE_LIMIT = 1200  # n*N above which assemble() returns matrix-free operators


def vec(U) -> np.ndarray:
    return np.asarray(U).reshape(-1, order="F")


def unvec(v, n: int) -> np.ndarray:
    return np.asarray(v).reshape(n, -1, order="F")


def inner(h: float, U, V) -> complex:
    """Weighted inner product ``<U|V>`` on grid values."""
    return complex(h * np.vdot(np.asarray(U).ravel(), np.asarray(V).ravel()))


def real_inner(h: float, U, V) -> float:
    return inner(h, U, V).real


# -- density maps ----------------------------------------------------------


def s_apply(psi, U) -> np.ndarray:
    """``sum_j conj(psi_j) u_j + psi_j conj(u_j)`` for any orbital matrix ``psi``."""
    psi = np.asarray(psi)
    U = np.asarray(U)
    return 2.0 * np.real(np.sum(psi.conj() * U, axis=1))


def s0_apply(gs: GroundState, U) -> np.ndarray:
    U = np.asarray(U)
    if U.shape != gs.psi.shape:
        raise ValueError(f"variation shape {U.shape} does not match orbitals {gs.psi.shape}")
    return s_apply(gs.psi, U)


def potential_variation(gs: GroundState, v) -> np.ndarray:
    """``v -> v Psi0``: the orbital variation generated by a multiplicative potential."""
    return np.asarray(v)[:, None] * gs.psi


def s0_adjoint(gs: GroundState, v) -> np.ndarray:
    """Adjoint of ``s0_apply`` for the real inner product: ``Re<S0* v|U> = <v|S0 U>``.

    This equals ``2 v Psi0``; :func:`potential_variation` is the unscaled map.
    """
    return 2.0 * potential_variation(gs, v)


def k_apply_general(model: ModelSystem, psi, U, delta: float = 1.0) -> np.ndarray:
    """``(K_psi U)_i = (V_H[S U] + v_xc'(rho_psi) S U) psi_i``, scaled by ``delta``."""
    from .model import hartree_potential

    psi = np.asarray(psi)
    s = s_apply(psi, U)
    _, _, dv = xc_derivatives(model.xc, density(psi))
    pot = dv * s
    if model.interacting:
        pot = pot + model.grid.h * (model.coulomb_matrix @ s)
    return delta * pot[:, None] * psi


def k0_apply(gs: GroundState, model: ModelSystem, U, delta: float = 1.0) -> np.ndarray:
    return k_apply_general(model, gs.psi, U, delta)


# -- operator type -----------------------------------------------------------


@dataclass(frozen=True)
class RealLinearOp:
    """``U -> A vec(U) + B conj(vec(U))`` with dense blocks or matrix-free appliers."""

    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    n: int = 0
    apply_fn: Optional[Callable] = None
    name: str = ""

    @property
    def dense(self) -> bool:
        return self.A is not None

    def __call__(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=complex)
        if self.apply_fn is not None:
            return self.apply_fn(U)
        v = vec(U)
        return unvec(self.A @ v + self.B @ v.conj(), U.shape[0])

    def casida(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.B.conj(), self.A.conj()]])

    def reim(self) -> np.ndarray:
        Ar, Aj, Br, Bj = self.A.real, self.A.imag, self.B.real, self.B.imag
        return np.block([[Ar + Br, -Aj + Bj], [Aj + Bj, Ar - Br]])

    def __add__(self, other: "RealLinearOp") -> "RealLinearOp":
        if self.dense and other.dense:
            return RealLinearOp(self.A + other.A, self.B + other.B, self.n)
        return RealLinearOp(n=self.n, apply_fn=lambda U: self(U) + other(U))

    def __sub__(self, other: "RealLinearOp") -> "RealLinearOp":
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "RealLinearOp":
        if self.dense:
            return RealLinearOp(c * self.A, c * self.B, self.n)
        return RealLinearOp(n=self.n, apply_fn=lambda U: c * self(U))

    def __matmul__(self, other: "RealLinearOp") -> "RealLinearOp":
        if self.dense and other.dense:
            A = self.A @ other.A + self.B @ other.B.conj()
            B = self.A @ other.B + self.B @ other.A.conj()
            return RealLinearOp(A, B, self.n)
        return RealLinearOp(n=self.n, apply_fn=lambda U: self(other(U)))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        C = self.casida()
        return bool(np.abs(C - C.conj().T).max() <= tol * max(1.0, np.abs(C).max()))


class Operators(NamedTuple):
    Omega: RealLinearOp
    Lambda: RealLinearOp
    P0: RealLinearOp
    K0: RealLinearOp
    M_dyn: RealLinearOp
    M: RealLinearOp
    J: RealLinearOp
    Q0: RealLinearOp  # 1 - P0


def assemble(gs: GroundState, model: ModelSystem, delta: float = 1.0, dense: Optional[bool] = None) -> Operators:
    """Build the operators of the linearized dynamics at ``gs``.

    ``delta`` scales ``K0``. Dense blocks are used when ``n*N <= DENSE_LIMIT``
    unless ``dense`` says otherwise.
    """
    gs.require_minimum()
    n, N, h = gs.n, gs.N, model.grid.h
    psi = gs.psi
    if dense is None:
        dense = n * N <= DENSE_LIMIT
    lam = gs.lagrange
    P = h * psi @ psi.conj().T

    if not dense:
        H0 = gs.H0

        def omega(U):
            return H0 @ U - U @ lam

        def lam_fn(U):
            return U @ lam

        def p0(U):
            return P @ U

        def q0(U):
            return U - P @ U

        def j(U):
            return 1j * U

        def k0(U):
            return k0_apply(gs, model, U, delta)

        Om = RealLinearOp(n=n, apply_fn=omega, name="Omega")
        K = RealLinearOp(n=n, apply_fn=k0, name="K0")
        Q = RealLinearOp(n=n, apply_fn=q0, name="1-P0")
        Md = Om + K
        return Operators(
            Om, RealLinearOp(n=n, apply_fn=lam_fn), RealLinearOp(n=n, apply_fn=p0), K, Md,
            Q @ Md @ Q, RealLinearOp(n=n, apply_fn=j), Q,
        )

    I_n, I_N = np.eye(n), np.eye(N)
    Z = np.zeros((n * N, n * N), dtype=complex)
    Lam = RealLinearOp(np.kron(lam.T, I_n).astype(complex), Z, n, name="Lambda")
    H0 = RealLinearOp(np.kron(I_N, gs.H0).astype(complex), Z, n)
    Om = H0 - Lam
    P0 = RealLinearOp(np.kron(I_N, P).astype(complex), Z, n, name="P0")
    Q0 = RealLinearOp(np.eye(n * N, dtype=complex) - P0.A, Z, n, name="1-P0")
    F = delta * model.hxc_kernel(gs.rho)
    Dpsi = np.vstack([np.diag(psi[:, i]) for i in range(N)])  # v -> (psi_i v)_i
    G_conj = np.hstack([np.diag(psi[:, i].conj()) for i in range(N)])
    G = G_conj.conj()
    K = RealLinearOp((Dpsi @ F @ G_conj).astype(complex), (Dpsi @ F @ G).astype(complex), n, name="K0")
    Md = Om + K
    M = Q0 @ Md @ Q0
    J = RealLinearOp(1j * np.eye(n * N), Z, n, name="J")
    return Operators(Om, Lam, P0, K, Md, M, J, Q0)


# -- representations -----------------------------------------------------------


@dataclass(frozen=True)
class CasidaVector:
    """Element ``(X, Y)`` of the doubled space; physical vectors have ``Y = conj(X)``."""

    X: np.ndarray
    Y: np.ndarray

    def is_physical(self, tol: float = 1e-10) -> bool:
        return bool(np.abs(self.Y - self.X.conj()).max() <= tol)

    def stacked(self) -> np.ndarray:
        return np.concatenate([vec(self.X), vec(self.Y)])

    @classmethod
    def from_stacked(cls, v, n: int) -> "CasidaVector":
        v = np.asarray(v)
        half = v.size // 2
        return cls(unvec(v[:half], n), unvec(v[half:], n))

    def norm(self, h: float) -> float:
        return float(np.sqrt(h * (np.vdot(self.X, self.X) + np.vdot(self.Y, self.Y)).real))


def to_casida(U) -> CasidaVector:
    U = np.asarray(U, dtype=complex)
    return CasidaVector(U / SQRT2, U.conj() / SQRT2)


def from_casida(c: CasidaVector, physical: bool = True, tol: float = 1e-10) -> np.ndarray:
    """Inverse of :func:`to_casida`; rejects non-physical input when ``physical``."""
    if physical and not c.is_physical(tol):
        raise ValueError("Casida vector violates Y = conj(X)")
    return SQRT2 * c.X if physical else (c.X + c.Y.conj()) / SQRT2


def to_reim(U) -> np.ndarray:
    U = np.asarray(U)
    return np.concatenate([vec(U.real), vec(U.imag)])


def from_reim(v, n: int) -> np.ndarray:
    v = np.asarray(v)
    half = v.size // 2
    return unvec(v[:half], n) + 1j * unvec(v[half:], n)


def casida_to_reim(v) -> np.ndarray:
    """Complexified vector: stacked Casida coordinates to stacked real/imaginary ones."""
    v = np.asarray(v)
    half = v.size // 2
    X, Y = v[:half], v[half:]
    return np.concatenate([(X + Y) / SQRT2, (X - Y) / (1j * SQRT2)])


def reim_to_casida(v) -> np.ndarray:
    v = np.asarray(v)
    half = v.size // 2
    R, I = v[:half], v[half:]
    return np.concatenate([(R + 1j * I) / SQRT2, (R - 1j * I) / SQRT2])


def casida_transform(dim: int) -> np.ndarray:
    """Unitary ``C`` with ``casida = C @ reim`` on stacked vectors of half-size ``dim``."""
    I = np.eye(dim)
    return np.block([[I, 1j * I], [I, -1j * I]]) / SQRT2


# -- S / A / perp splitting ------------------------------------------------------


class VariationSplit(NamedTuple):
    U_S: np.ndarray
    U_A: np.ndarray
    U_perp: np.ndarray


def split_variation(gs: GroundState, U) -> VariationSplit:
    """Growth (``Psi0 S``), gauge (``Psi0 A``) and ``Ran(1-P0)`` parts of ``U``."""
    U = np.asarray(U, dtype=complex)
    C = overlap(gs.h, gs.psi, U)
    S = 0.5 * (C + C.conj().T)
    A = 0.5 * (C - C.conj().T)
    return VariationSplit(gs.psi @ S, gs.psi @ A, U - gs.psi @ C)


def split_basis(gs: GroundState, h: float):
    """Orthonormal real bases (real/imaginary coordinates) of the S, A and perp subspaces.

    Returns three matrices with columns in ``R^{2nN}``, orthonormal for the
    weighted product ``h * x.T @ y``.
    """
    psi = gs.psi
    n, N = psi.shape
    herm = []
    for i in range(N):
        for j in range(i, N):
            E = np.zeros((N, N), dtype=complex)
            E[i, j] = E[j, i] = 1.0
            herm.append(E)
            if i != j:
                F = np.zeros((N, N), dtype=complex)
                F[i, j], F[j, i] = 1j, -1j
                herm.append(F)
    s_cols = [to_reim(psi @ E) for E in herm]
    # skew-Hermitian matrices are j times Hermitian ones
    a_cols = [to_reim(psi @ (1j * E)) for E in herm]
    S = _orthonormal_columns(np.array(s_cols).T, h)
    A = _orthonormal_columns(np.array(a_cols).T, h)
    # perp: unoccupied modes in every sector, real and imaginary parts
    un = np.delete(gs.modes, gs.occ, axis=1)
    m = un.shape[1]
    perp = np.zeros((2 * n * N, 2 * m * N))
    for i in range(N):
        for part in range(2):
            rows = slice(part * n * N + i * n, part * n * N + (i + 1) * n)
            cols = slice((part * N + i) * m, (part * N + i + 1) * m)
            perp[rows, cols] = un
    return S, A, perp


def _orthonormal_columns(X, h):
    q, r = np.linalg.qr(X)
    keep = np.abs(np.diag(r)) > 1e-10 * np.abs(np.diag(r)).max()
    return q[:, keep] / np.sqrt(h)


# -- reduced Ran(1-P0) space -------------------------------------------------------


class PerpSpace:
    """``Ran(1-P0)`` in the basis of unoccupied eigenvectors of ``H0``.

    A perp variation ``U = Phi_u C`` is stored as the coefficient vector
    ``c = vec(C)`` of length ``m*N`` (``m = n - N``); the coefficient norm is
    the weighted L2 norm of ``U``. Casida vectors here are stacked ``(X, Y)``
    of length ``2 m N``.
    """

    def __init__(self, gs: GroundState, model: ModelSystem, delta: float = 1.0):
        self.gs = gs
        self.model = model
        self.delta = float(delta)
        self.h = model.grid.h
        self.phi = gs.modes[:, gs.unocc]
        self.eps = gs.spectrum[gs.unocc]
        self.n, self.N = gs.psi.shape
        self.m = self.phi.shape[1]

    @cached_property
    def D(self) -> np.ndarray:
        """Transition densities ``conj(psi_j) phi_a`` as columns, sector-major."""
        psi = self.gs.psi
        return np.hstack([psi[:, j].conj()[:, None] * self.phi for j in range(self.N)])

    @cached_property
    def omega(self) -> np.ndarray:
        m, N = self.m, self.N
        return np.kron(np.eye(N), np.diag(self.eps)) - np.kron(self.gs.lagrange.T, np.eye(m))

    @cached_property
    def kernel(self) -> np.ndarray:
        return self.delta * self.model.hxc_kernel(self.gs.rho)

    @cached_property
    def K_blocks(self):
        D = self.D
        FD = self.kernel @ D
        FDc = self.kernel @ D.conj()
        return self.h * D.conj().T @ FD, self.h * D.conj().T @ FDc

    @cached_property
    def A(self) -> np.ndarray:
        return self.omega + self.K_blocks[0]

    @property
    def B(self) -> np.ndarray:
        return self.K_blocks[1]

    def casida_M(self) -> np.ndarray:
        A, B = self.A, self.B
        return np.block([[A, B], [B.conj(), A.conj()]])

    def casida_J(self) -> np.ndarray:
        d = self.m * self.N
        return np.diag(np.concatenate([np.full(d, 1j), np.full(d, -1j)]))

    def hessian_reim(self) -> np.ndarray:
        """Real symmetric matrix of ``Re<U|M U>`` in real/imaginary coefficients."""
        A, B = self.A, self.B
        H = np.block([[A.real + B.real, -A.imag + B.imag], [A.imag + B.imag, A.real - B.real]])
        return 0.5 * (H + H.T)

    # coefficient maps

    def coefficients(self, U, check: bool = True, tol: float = 1e-10) -> np.ndarray:
        """Grid variation to perp coefficients; rejects occupied components when ``check``."""
        U = np.asarray(U, dtype=complex)
        if check:
            occ = overlap(self.h, self.gs.psi, U)
            scale = max(1.0, np.sqrt(self.h) * np.abs(U).max())
            if np.abs(occ).max() > tol * scale:
                raise NotPerp(f"variation has occupied components of size {np.abs(occ).max():.3e}")
        return vec(self.h * self.phi.T @ U)

    def grid(self, c) -> np.ndarray:
        return self.phi @ unvec(c, self.m)

    def to_casida(self, U) -> np.ndarray:
        c = self.coefficients(U)
        return np.concatenate([c, c.conj()]) / SQRT2

    def from_casida(self, x, physical: bool = True, tol: float = 1e-10) -> np.ndarray:
        d = self.m * self.N
        X, Y = x[:d], x[d:]
        if physical and np.abs(Y - X.conj()).max() > tol * max(1.0, np.abs(x).max()):
            raise ValueError("Casida vector violates Y = conj(X)")
        return self.grid(SQRT2 * X)

    def forcing(self, v) -> np.ndarray:
        """Casida coefficients of ``(1-P0) v Psi0``."""
        c = self.h * self.D.conj().T @ np.asarray(v, dtype=float)
        return np.concatenate([c, c.conj()]) / SQRT2

    def forcing_matrix(self) -> np.ndarray:
        """Columns are :meth:`forcing` of unit grid potentials."""
        Bc = self.h * self.D.conj().T
        return np.vstack([Bc, Bc.conj()]) / SQRT2

    def density_of(self, x) -> np.ndarray:
        """``S0`` applied to a complexified Casida coefficient vector (or matrix of them)."""
        d = self.m * self.N
        x = np.asarray(x)
        return SQRT2 * (self.D @ x[:d] + self.D.conj() @ x[d:])

    def density_matrix(self) -> np.ndarray:
        return SQRT2 * np.hstack([self.D, self.D.conj()])


# -- block structure ----------------------------------------------------------------

FORBIDDEN_BLOCKS = (("S", "A"), ("S", "perp"), ("perp", "A"))


def block_structure(gs: GroundState, model: ModelSystem, delta: float = 1.0) -> dict:
    """Blocks ``B_row^T h (-J M_dyn) B_col`` of the generator in the (S, A, perp) basis.

    Keys are ``(row, col)`` labels; the entry maps col-coordinates to
    row-coordinates.
    """
    ops = assemble(gs, model, delta, dense=True)
    L = -(ops.J.reim() @ ops.M_dyn.reim())
    bases = dict(zip(("S", "A", "perp"), split_basis(gs, gs.h)))
    return {(r, c): gs.h * bases[r].T @ L @ bases[c] for r in bases for c in bases}


def forbidden_block_max(blocks: dict) -> float:
    return float(max(np.abs(blocks[k]).max() for k in FORBIDDEN_BLOCKS))
