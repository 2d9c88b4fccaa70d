"""Reference numpy implementations of the per-point step kernels."""
import numpy as np


def shifted_product(expo, phi, shift=None, dphi=None):
    """exp(expo) * (phi + sum_d shift[d] * dphi[d]) on flat arrays."""
    field = phi
    if shift is not None:
        field = phi + np.einsum("dn,dn->n", shift, dphi)
    return np.exp(expo) * field


def norm2(psi):
    return float(np.vdot(psi, psi).real)


def weighted_mean(psi, f):
    w = psi.real**2 + psi.imag**2
    return float(np.dot(w, f) / w.sum())
