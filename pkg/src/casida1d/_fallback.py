"""Pure numpy/scipy versions of the hot kernels.

Every function here has a twin with the same signature in ``_kernels.pyx``.
"""

import numpy as np
from scipy.linalg import solve_banded


def cn_step(diag, off, psi, dt):
    """One Crank-Nicolson step for a tridiagonal Hamiltonian.

    Solves ``(1 + i dt/2 H) out = (1 - i dt/2 H) psi`` for every column of
    ``psi``, where ``H`` has diagonal ``diag`` and constant off-diagonal
    ``off``.
    """
    diag = np.asarray(diag, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.complex128)
    n = diag.shape[0]
    c = 0.5j * dt
    hpsi = diag[:, None] * psi
    hpsi[1:] += off * psi[:-1]
    hpsi[:-1] += off * psi[1:]
    rhs = psi - c * hpsi
    ab = np.empty((3, n), dtype=np.complex128)
    ab[0, :] = c * off
    ab[1, :] = 1.0 + c * diag
    ab[2, :] = c * off
    return solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)


def soft_coulomb_sum(x, rho, a, h):
    """``V_i = h * sum_j rho_j / sqrt((x_i - x_j)^2 + a^2)`` without storing the kernel."""
    x = np.asarray(x, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    out = np.empty_like(x)
    # row blocks keep peak memory at O(block * n)
    block = 256
    for start in range(0, x.shape[0], block):
        xs = x[start:start + block, None]
        out[start:start + block] = (1.0 / np.sqrt((xs - x[None, :]) ** 2 + a * a)) @ rho
    return h * out


def gaussian_smooth(energies, weights, points, s):
    """Gaussian-broadened spectral density ``sum_k w_k g_s(E - e_k)`` at each E."""
    energies = np.asarray(energies, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    points = np.atleast_1d(np.asarray(points, dtype=np.float64))
    d = (points[:, None] - energies[None, :]) / s
    return (np.exp(-0.5 * d * d) @ weights) / (np.sqrt(2.0 * np.pi) * s)
