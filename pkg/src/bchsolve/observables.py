"""Measurements on wavefunctions: moments, energies, region weights, beats."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import POSITION, Wavefunction

NORM_TOLERANCE = 1e-6


class ObservableError(ValueError):
    pass


def _require_normalized(psi: Wavefunction) -> None:
    if psi.representation != POSITION:
        raise ObservableError("observables are measured in position space")
    n = psi.norm()
    if abs(n - 1.0) > NORM_TOLERANCE:
        raise ObservableError(f"state is not normalised (norm {n!r})")


def moments(psi: Wavefunction) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Mean position and standard deviation per dimension."""
    _require_normalized(psi)
    g = psi.grid
    rho = psi.density() * g.measure
    mean, spread = [], []
    for b in g.mesh():
        m1 = float(np.sum(rho * b))
        m2 = float(np.sum(rho * b * b))
        mean.append(m1)
        spread.append(math.sqrt(max(m2 - m1 * m1, 0.0)))
    return tuple(mean), tuple(spread)


def mean_momentum(psi: Wavefunction) -> tuple[float, ...]:
    _require_normalized(psi)
    g = psi.grid
    w = np.abs(np.fft.fftn(psi.amplitudes)) ** 2
    w /= w.sum()
    return tuple(float(np.sum(w * k)) for k in g.kmesh())


def energy_expectation(psi: Wavefunction, H, tau: float) -> float:
    """<psi|H(tau)|psi>: kinetic part in momentum space, potential part in position space."""
    _require_normalized(psi)
    g = psi.grid
    spec = np.fft.fftn(psi.amplitudes)
    kinetic = float(np.sum(H.ksq * (spec.real**2 + spec.imag**2))) * g.measure / g.size
    potential = float(np.sum(H.potential_field(tau) * psi.density())) * g.measure
    return kinetic + potential


def apply_hamiltonian(psi: Wavefunction, H, tau: float) -> np.ndarray:
    return np.fft.ifftn(H.ksq * np.fft.fftn(psi.amplitudes)) + H.potential_field(tau) * psi.amplitudes


def probability_in_region(psi: Wavefunction, region: Sequence[tuple[float, float]]) -> float:
    """Probability in cells whose centres lie in the box ``region`` (one interval per dim)."""
    g = psi.grid
    if len(region) != g.dims:
        raise ObservableError(f"region needs {g.dims} intervals")
    mask = np.ones(g.shape, dtype=bool)
    for (lo, hi), b in zip(region, g.mesh()):
        mask &= (b >= lo) & (b <= hi)
    if not mask.any():
        raise ObservableError(f"region {region} contains no grid cells")
    return float(np.sum(psi.density()[mask])) * g.measure


def beat_period(e_low: float, e_high: float) -> float:
    if e_high == e_low:
        raise ObservableError("beat period needs distinct energies")
    return 2 * math.pi / abs(e_high - e_low)


@dataclass(frozen=True)
class Snapshot:
    tau: float
    density: np.ndarray
    mean_position: tuple[float, ...]
    spread: tuple[float, ...]
    energy: float
    norm: float
    amplitudes: np.ndarray | None = None


def make_snapshot(psi: Wavefunction, H, tau: float, keep_amplitudes: bool = False) -> Snapshot:
    norm = psi.norm()
    unit = psi.with_amplitudes(psi.amplitudes / norm)
    mean, spread = moments(unit)
    return Snapshot(
        tau=float(tau),
        density=psi.density(),
        mean_position=mean,
        spread=spread,
        energy=energy_expectation(unit, H, tau),
        norm=norm,
        amplitudes=psi.amplitudes.copy() if keep_amplitudes else None,
    )
