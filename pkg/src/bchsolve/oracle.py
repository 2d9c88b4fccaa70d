"""Dense-matrix reference Hamiltonian for small grids.

The kinetic matrix is the exact spectral second derivative on the grid,
``F^-1 diag(k^2) F``, so the dense operator and the split-step propagator
share a discretisation and differ only by the splitting error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .dsl import evaluate_on_grid, evaluate_scalar, parse_potential
from .grid import Grid, Wavefunction

MAX_POINTS = 4096


class OracleError(ValueError):
    pass


def kinetic_matrix_1d(grid: Grid, dim: int = 0) -> np.ndarray:
    n = grid.bins
    f = np.fft.fft(np.eye(n), axis=0)
    k2 = grid.kaxes[dim] ** 2
    t = np.fft.ifft(k2[:, None] * f, axis=0)
    return 0.5 * (t.real + t.real.T)


@dataclass(frozen=True)
class DenseHamiltonian:
    grid: Grid
    matrix: np.ndarray

    def eigh(self):
        return linalg.eigh(self.matrix)

    def energies(self, count: int) -> np.ndarray:
        return linalg.eigh(self.matrix, eigvals_only=True, subset_by_index=[0, count - 1])

    def state(self, vector: np.ndarray) -> Wavefunction:
        psi = vector.reshape(self.grid.shape) / np.sqrt(self.grid.measure)
        return Wavefunction(self.grid, psi)


def dense_hamiltonian(potential, alpha, grid: Grid, tau: float = 0.0, params=None) -> DenseHamiltonian:
    """-d^2 + alpha U as a dense real symmetric matrix."""
    params = dict(params or {})
    if grid.size > MAX_POINTS:
        raise OracleError(f"dense oracle limited to {MAX_POINTS} points, grid has {grid.size}")
    if isinstance(potential, str):
        potential = parse_potential(potential, tuple(params))
    if isinstance(alpha, str):
        alpha = evaluate_scalar(parse_potential(alpha, tuple(params)), tau, params)
    n = grid.bins
    eye = np.eye(n)
    total = np.zeros((grid.size, grid.size))
    for d in range(grid.dims):
        term = np.ones((1, 1))
        for e in range(grid.dims):
            term = np.kron(term, kinetic_matrix_1d(grid, d) if e == d else eye)
        total += term
    u = evaluate_on_grid(potential, grid, tau, params).ravel()
    total[np.diag_indices_from(total)] += float(alpha) * u
    return DenseHamiltonian(grid, total)


def expm_evolve(dense: DenseHamiltonian, psi: Wavefunction, duration: float, mode: str = "real") -> Wavefunction:
    """Exact exp(-i H t) psi (real) or exp(-H t) psi (imaginary) via the eigenbasis."""
    w, v = dense.eigh()
    c = v.T @ psi.amplitudes.ravel()
    if mode == "real":
        c = c * np.exp(-1j * w * duration)
    elif mode == "imaginary":
        c = c * np.exp(-(w - w[0]) * duration)
    else:
        raise ValueError(f"mode must be 'real' or 'imaginary', got {mode!r}")
    return psi.with_amplitudes((v @ c).reshape(psi.grid.shape))


def oracle_spectrum(potential, alpha, grid: Grid, count: int, tau: float = 0.0, params=None) -> np.ndarray:
    return dense_hamiltonian(potential, alpha, grid, tau, params).energies(count)
