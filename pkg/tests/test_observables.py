import math

import numpy as np
import pytest

from bchsolve.grid import Wavefunction, make_grid, normalize
from bchsolve.observables import (ObservableError, beat_period, energy_expectation, make_snapshot, mean_momentum,
                                  moments, probability_in_region)
from bchsolve.oracle import dense_hamiltonian
from bchsolve.propagator import EvolvePlan, Hamiltonian, StepConfig, evolve
from bchsolve.scenarios import gaussian_packet

S0 = 1 / math.sqrt(2)


@pytest.fixture(scope="module")
def free():
    g = make_grid(1, 1024, extent=32.0)
    return g, Hamiltonian("0", 1.0, g), gaussian_packet(g, (0.0,), (S0,), (4.0,))


def test_gaussian_moments(free):
    g, H, psi = free
    (m,), (s,) = moments(psi)
    assert m == pytest.approx(0.0, abs=1e-12) and s == pytest.approx(S0, abs=1e-6)
    assert mean_momentum(psi)[0] == pytest.approx(4.0, abs=1e-9)


def test_free_spreading(free):
    g, H, psi = free
    out, _ = evolve(psi, H, EvolvePlan(0.0, 0.5, StepConfig()))
    (m,), (s,) = moments(out)
    assert m == pytest.approx(4.0, abs=1e-3)
    assert s == pytest.approx(math.sqrt(0.5 + (0.5 / S0) ** 2), abs=1e-3)


def test_free_energy(free):
    g, H, psi = free
    assert energy_expectation(psi, H, 0.0) == pytest.approx(16 + 1 / (4 * S0 * S0), abs=1e-3)


def test_even_state_is_centred():
    g = make_grid(1, 64)
    psi = normalize(Wavefunction(g, np.exp(-g.axes[0] ** 2) * (1 + g.axes[0] ** 2)))[0]
    assert abs(moments(psi)[0][0]) < 1e-10
    assert probability_in_region(psi, [(-math.inf, 0.0)]) == pytest.approx(0.5, abs=1e-6)
    assert probability_in_region(psi, [(-math.inf, math.inf)]) == pytest.approx(1.0, abs=1e-10)


def test_harmonic_ground_energy():
    g = make_grid(1, 64)
    dense = dense_hamiltonian("x^2", 1.0, g)
    ground = dense.state(dense.eigh()[1][:, 0])
    assert energy_expectation(ground, Hamiltonian("x^2", 1.0, g), 0.0) == pytest.approx(1.0, abs=1e-3)


def test_unnormalized_rejected(free):
    _, H, psi = free
    with pytest.raises(ObservableError):
        moments(psi * 2)
    with pytest.raises(ObservableError):
        energy_expectation(psi * 2, H, 0.0)


def test_region_errors(free):
    _, _, psi = free
    with pytest.raises(ObservableError):
        probability_in_region(psi, [(100.0, 200.0)])
    with pytest.raises(ObservableError):
        probability_in_region(psi, [(0, 1), (0, 1)])


def test_beat_period():
    assert beat_period(2.59, 3.37) == pytest.approx(8.055, abs=1e-3)
    assert 0.5 * beat_period(13.8916, 13.8960) == pytest.approx(714, abs=2)
    assert 0.5 * beat_period(0.7377, 0.9834) == pytest.approx(12.79, abs=0.01)
    with pytest.raises(ObservableError):
        beat_period(1.0, 1.0)


def test_snapshot_of_unnormalized_state(free):
    _, H, psi = free
    sn = make_snapshot(psi * 3, H, 0.25, keep_amplitudes=True)
    assert sn.norm == pytest.approx(3.0) and sn.tau == 0.25
    assert sn.spread[0] == pytest.approx(S0, abs=1e-6)
    assert sn.amplitudes is not None and sn.density.shape == psi.grid.shape
