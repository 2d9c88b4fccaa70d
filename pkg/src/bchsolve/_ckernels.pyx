# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused per-point step kernels (compiled)."""
import numpy as np
cimport cython
from libc.math cimport exp, cos, sin


def shifted_product(const double complex[::1] expo, const double complex[::1] phi,
                    const double[:, ::1] shift=None, const double complex[:, ::1] dphi=None):
    cdef Py_ssize_t n = phi.shape[0], i, d, nd = 0
    cdef double complex acc
    cdef double m
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    if shift is not None:
        nd = shift.shape[0]
    for i in range(n):
        acc = phi[i]
        for d in range(nd):
            acc = acc + shift[d, i] * dphi[d, i]
        m = exp(expo[i].real)
        o[i] = acc * (m * cos(expo[i].imag) + 1j * m * sin(expo[i].imag))
    return out


def norm2(const double complex[::1] psi):
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(psi.shape[0]):
        s += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
    return s


def weighted_mean(const double complex[::1] psi, const double[::1] f):
    cdef Py_ssize_t i
    cdef double w, num = 0.0, den = 0.0
    for i in range(psi.shape[0]):
        w = psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
        num += w * f[i]
        den += w
    return num / den
