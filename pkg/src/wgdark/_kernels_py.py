"""Pure numpy/scipy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` extension.
"""

import numpy as np
from scipy import sparse


def csr_matmul(indptr, indices, data, x):
    """A @ x with A given in CSR form and x a dense complex matrix (or vector)."""
    a = sparse.csr_matrix((data, indices, indptr), shape=(indptr.size - 1, x.shape[0]))
    return np.asarray(a @ x, dtype=complex)


def reduced_rhs(rho, sp, sq, gamma):
    """-(gamma/2){S^dag S, rho} + gamma S rho S^dag on a (P, Q, P, Q) tensor.

    ``sp[a]`` and ``sq[b]`` are the lowering amplitudes of the two ensembles.
    """
    sp2, sq2 = sp * sp, sq * sq
    hop = sp[1:, None] * sq[None, 1:]
    diag = sp2[:, None] + sq2[None, :]

    k = (diag[:, :, None, None] + diag[None, None, :, :]) * rho
    k[1:, :-1] += hop[:, :, None, None] * rho[:-1, 1:]
    k[:-1, 1:] += hop[:, :, None, None] * rho[1:, :-1]
    k[:, :, 1:, :-1] += hop[None, None, :, :] * rho[:, :, :-1, 1:]
    k[:, :, :-1, 1:] += hop[None, None, :, :] * rho[:, :, 1:, :-1]

    j = np.zeros_like(rho)
    a1, b1 = sp[1:], sq[1:]
    j[:-1, :, :-1, :] += (a1[:, None, None, None] * a1[None, None, :, None]) * rho[1:, :, 1:, :]
    j[:-1, :, :, :-1] += (a1[:, None, None, None] * b1[None, None, None, :]) * rho[1:, :, :, 1:]
    j[:, :-1, :-1, :] += (b1[None, :, None, None] * a1[None, None, :, None]) * rho[:, 1:, 1:, :]
    j[:, :-1, :, :-1] += (b1[None, :, None, None] * b1[None, None, None, :]) * rho[:, 1:, :, 1:]
    return gamma * j - 0.5 * gamma * k


def reduced_rk4(rho, sp, sq, gamma, dt, nsteps):
    """``nsteps`` fixed RK4 steps of :func:`reduced_rhs`; returns a new array."""
    y = np.array(rho, dtype=complex, copy=True)
    for _ in range(int(nsteps)):
        k1 = reduced_rhs(y, sp, sq, gamma)
        k2 = reduced_rhs(y + 0.5 * dt * k1, sp, sq, gamma)
        k3 = reduced_rhs(y + 0.5 * dt * k2, sp, sq, gamma)
        k4 = reduced_rhs(y + dt * k3, sp, sq, gamma)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y
