# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled multilayer stack kernel.

Mirrors _kernels.pure.stack_solve; the quadrature drivers call this with a
few hundred kpar nodes at a time, so the per-node work is plain C loops.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from "complex.h":
    double complex csqrt(double complex) nogil
    double complex cexp(double complex) nogil
    double cimag(double complex) nogil
    double creal(double complex) nogil

from libc.math cimport hypot, sqrt

BACKEND = "compiled"


cdef inline double complex _kz_branch(double complex eps, double complex mu,
                                      double complex k0sq, double kpar2) nogil:
    cdef double complex kz = csqrt(eps * mu * k0sq - kpar2)
    cdef double tiny
    if cimag(kz) < 0.0 or (cimag(kz) == 0.0 and creal(kz) < 0.0):
        kz = -kz
    # a kpar node within rounding of a light line cancels to kz = 0 exactly
    # and 0/0s the interface ratios; the true |kz| is below sqrt(ulp), so a
    # relative nudge off zero is inside the representation error
    if creal(kz) == 0.0 and cimag(kz) == 0.0:
        tiny = 1e-30 * sqrt(hypot(creal(k0sq), cimag(k0sq)))
        kz = tiny + 1j * tiny
    return kz


def stack_solve(eps, mu, thick, k0sq, kpar, want_amplitudes=False):
    """See _kernels.pure.stack_solve; identical contract."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] eps_a = np.ascontiguousarray(eps, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] mu_a = np.ascontiguousarray(mu, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] thick_a = np.ascontiguousarray(thick, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] kpar_a = np.ascontiguousarray(
        np.atleast_1d(kpar), dtype=np.float64)
    cdef Py_ssize_t nlay = eps_a.shape[0]
    cdef Py_ssize_t m = kpar_a.shape[0]
    cdef double complex k0sq_c = k0sq
    cdef bint want = bool(want_amplitudes)

    cdef cnp.ndarray[cnp.complex128_t, ndim=2] kz = np.empty((nlay, m), dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] rs = np.empty(m, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] rp = np.empty(m, dtype=np.complex128)

    cdef cnp.ndarray[cnp.complex128_t, ndim=2] a_s = None
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] b_s = None
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] a_p = None
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] b_p = None
    if want:
        a_s = np.zeros((nlay, m), dtype=np.complex128)
        b_s = np.zeros((nlay, m), dtype=np.complex128)
        a_p = np.zeros((nlay, m), dtype=np.complex128)
        b_p = np.zeros((nlay, m), dtype=np.complex128)

    # per-node scratch, heap-allocated once
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] phi = np.empty(nlay, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] rs_i = np.empty(nlay, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] rp_i = np.empty(nlay, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] ss = np.empty(nlay, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] sp = np.empty(nlay, dtype=np.complex128)

    cdef Py_ssize_t i, l
    cdef double kpar2
    cdef double complex a, b, ph2, ts, tp, run_s, run_p, d_s, d_p, s_lo_s, s_lo_p

    for i in range(m):
        kpar2 = kpar_a[i] * kpar_a[i]
        for l in range(nlay):
            kz[l, i] = _kz_branch(eps_a[l], mu_a[l], k0sq_c, kpar2)
            phi[l] = 1.0
            if 0 < l < nlay - 1:
                phi[l] = cexp(1j * kz[l, i] * thick_a[l])

        run_s = 0.0
        run_p = 0.0
        for l in range(nlay - 2, -1, -1):
            a = kz[l, i] * mu_a[l + 1]
            b = kz[l + 1, i] * mu_a[l]
            rs_i[l] = (a - b) / (a + b)
            a = kz[l, i] * eps_a[l + 1]
            b = kz[l + 1, i] * eps_a[l]
            rp_i[l] = (a - b) / (a + b)
            if l == nlay - 2:
                run_s = rs_i[l]
                run_p = rp_i[l]
            else:
                ph2 = phi[l + 1] * phi[l + 1]
                ts = run_s * ph2
                tp = run_p * ph2
                run_s = (rs_i[l] + ts) / (1.0 + rs_i[l] * ts)
                run_p = (rp_i[l] + tp) / (1.0 + rp_i[l] * tp)
            ss[l] = run_s
            sp[l] = run_p
        rs[i] = ss[0]
        rp[i] = sp[0]

        if want:
            a_s[0, i] = 1.0
            a_p[0, i] = 1.0
            b_s[0, i] = ss[0]
            b_p[0, i] = sp[0]
            for l in range(nlay - 1):
                if l + 1 <= nlay - 2:
                    s_lo_s = ss[l + 1]
                    s_lo_p = sp[l + 1]
                    ph2 = phi[l + 1] * phi[l + 1]
                else:
                    s_lo_s = 0.0
                    s_lo_p = 0.0
                    ph2 = 0.0
                d_s = a_s[l, i] * phi[l]
                d_p = a_p[l, i] * phi[l]
                a_s[l + 1, i] = (1.0 + rs_i[l]) * d_s / (1.0 + rs_i[l] * s_lo_s * ph2)
                a_p[l + 1, i] = (eps_a[l] / eps_a[l + 1]) * (1.0 + rp_i[l]) * d_p \
                    / (1.0 + rp_i[l] * s_lo_p * ph2)
                b_s[l + 1, i] = s_lo_s * a_s[l + 1, i] * phi[l + 1]
                b_p[l + 1, i] = s_lo_p * a_p[l + 1, i] * phi[l + 1]

    if want:
        return rs, rp, kz, (a_s, b_s, a_p, b_p)
    return rs, rp, kz, None
