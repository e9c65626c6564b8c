# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

ctypedef fused index_t:
    cnp.int32_t
    cnp.int64_t


cdef void _csr_real(index_t[::1] indptr, index_t[::1] indices, double[::1] data,
                    double[:, ::1] x, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, p, j, c, w = x.shape[1]
    cdef double v
    for i in range(indptr.shape[0] - 1):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            v = data[p]
            for c in range(w):
                out[i, c] += v * x[j, c]


def csr_matmul(index_t[::1] indptr, index_t[::1] indices, data, x):
    """A @ x with A in CSR form and x a dense complex matrix (or vector).

    Complex A is applied as Re(A) @ x + i Im(A) @ x, skipping a vanishing part,
    which keeps every inner loop a real, unit-stride update.
    """
    x = np.asarray(x, dtype=np.complex128)
    vec = x.ndim == 1
    xm = np.ascontiguousarray(x.reshape(x.shape[0], -1))
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    out = np.zeros((nrows, xm.shape[1]), dtype=np.complex128)
    cdef double[:, ::1] xv = xm.view(np.float64)
    cdef double[:, ::1] ov = out.view(np.float64)
    data = np.asarray(data)
    cdef double[::1] dr
    re = np.ascontiguousarray(data.real, dtype=np.float64)
    if not np.iscomplexobj(data) or re.any():
        dr = re
        with nogil:
            _csr_real(indptr, indices, dr, xv, ov)
    if np.iscomplexobj(data):
        im = np.ascontiguousarray(data.imag, dtype=np.float64)
        if im.any():
            # Im(A) @ (i x) accumulates straight into out; swapping re/im inside
            # the inner loop would defeat vectorisation
            xv = np.ascontiguousarray(1j * xm).view(np.float64)
            dr = im
            with nogil:
                _csr_real(indptr, indices, dr, xv, ov)
    return out[:, 0] if vec else out


cdef void _rhs(double complex[:, :, :, ::1] r, double[::1] sp, double[::1] sq, double gamma,
               double complex[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t P = r.shape[0], Q = r.shape[1]
    cdef Py_ssize_t a, b, c, d
    cdef double ka, h = 0.5 * gamma
    cdef double complex acc
    for a in range(P):
        for b in range(Q):
            ka = sp[a] * sp[a] + sq[b] * sq[b]
            for c in range(P):
                for d in range(Q):
                    # anticommutator with K = S^dag S
                    acc = (ka + sp[c] * sp[c] + sq[d] * sq[d]) * r[a, b, c, d]
                    if a > 0 and b + 1 < Q:
                        acc = acc + sp[a] * sq[b + 1] * r[a - 1, b + 1, c, d]
                    if a + 1 < P and b > 0:
                        acc = acc + sp[a + 1] * sq[b] * r[a + 1, b - 1, c, d]
                    if c > 0 and d + 1 < Q:
                        acc = acc + sp[c] * sq[d + 1] * r[a, b, c - 1, d + 1]
                    if c + 1 < P and d > 0:
                        acc = acc + sp[c + 1] * sq[d] * r[a, b, c + 1, d - 1]
                    acc = -h * acc
                    # recycling S rho S^dag
                    if a + 1 < P:
                        if c + 1 < P:
                            acc = acc + gamma * sp[a + 1] * sp[c + 1] * r[a + 1, b, c + 1, d]
                        if d + 1 < Q:
                            acc = acc + gamma * sp[a + 1] * sq[d + 1] * r[a + 1, b, c, d + 1]
                    if b + 1 < Q:
                        if c + 1 < P:
                            acc = acc + gamma * sq[b + 1] * sp[c + 1] * r[a, b + 1, c + 1, d]
                        if d + 1 < Q:
                            acc = acc + gamma * sq[b + 1] * sq[d + 1] * r[a, b + 1, c, d + 1]
                    out[a, b, c, d] = acc


def reduced_rhs(rho, sp, sq, double gamma):
    """-(gamma/2){S^dag S, rho} + gamma S rho S^dag on a (P, Q, P, Q) tensor."""
    r = np.ascontiguousarray(rho, dtype=np.complex128)
    out = np.empty_like(r)
    _rhs(r, np.ascontiguousarray(sp, dtype=np.float64), np.ascontiguousarray(sq, dtype=np.float64),
         gamma, out)
    return out


def reduced_rk4(rho, sp, sq, double gamma, double dt, long nsteps):
    """``nsteps`` fixed RK4 steps of :func:`reduced_rhs`; returns a new array."""
    y = np.array(rho, dtype=np.complex128, order="C", copy=True)
    cdef double[::1] spv = np.ascontiguousarray(sp, dtype=np.float64)
    cdef double[::1] sqv = np.ascontiguousarray(sq, dtype=np.float64)
    cdef double complex[::1] yv = y.reshape(-1)
    tmp = np.empty_like(y)
    cdef double complex[::1] tv = tmp.reshape(-1)
    ks = [np.empty_like(y) for _ in range(4)]
    cdef double complex[:, :, :, ::1] y4 = y, t4 = tmp
    cdef double complex[:, :, :, ::1] k1 = ks[0], k2 = ks[1], k3 = ks[2], k4 = ks[3]
    cdef double complex[::1] f1 = ks[0].reshape(-1), f2 = ks[1].reshape(-1)
    cdef double complex[::1] f3 = ks[2].reshape(-1), f4 = ks[3].reshape(-1)
    cdef Py_ssize_t n = yv.shape[0], i
    cdef long s
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0
    with nogil:
        for s in range(nsteps):
            _rhs(y4, spv, sqv, gamma, k1)
            for i in range(n):
                tv[i] = yv[i] + h2 * f1[i]
            _rhs(t4, spv, sqv, gamma, k2)
            for i in range(n):
                tv[i] = yv[i] + h2 * f2[i]
            _rhs(t4, spv, sqv, gamma, k3)
            for i in range(n):
                tv[i] = yv[i] + dt * f3[i]
            _rhs(t4, spv, sqv, gamma, k4)
            for i in range(n):
                yv[i] = yv[i] + h6 * (f1[i] + 2.0 * f2[i] + 2.0 * f3[i] + f4[i])
    return y
