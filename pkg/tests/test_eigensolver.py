import math

import numpy as np
import pytest

from bchsolve.eigensolver import (ConvergenceError, EigenOptions, deflate, quantum_number_sequence, relax,
                                  residual, spectrum, trial_state)
from bchsolve.dsl import evaluate_on_grid, parse_potential
from bchsolve.grid import NormError, Wavefunction, inner_product, make_grid, normalize
from bchsolve.observables import energy_expectation
from bchsolve.propagator import Hamiltonian
from bchsolve.scenarios import SQUID_POTENTIAL

MATHIEU_ANALYTIC = [1.5457, 1.8897, 3.8591, 5.9170, 6.3704, 11.0477, 11.0784, 18.0330, 18.0338, 27.0208, 27.0209]
MATHIEU_TABLE_NUMERICAL = [1.5434, 1.8897, 3.8587, 5.9170, 6.3826, 11.0477, 11.1114, 18.0329, 18.0958, 27.0209,
                           27.1204]


@pytest.fixture(scope="module")
def harmonic():
    g = make_grid(1, 256)
    return Hamiltonian("x^2", 1.0, g)


@pytest.fixture(scope="module")
def harmonic_levels(harmonic):
    return spectrum(harmonic, 4)


@pytest.fixture(scope="module")
def mathieu_levels():
    g = make_grid(1, 256, periodic=True, extent=2 * math.pi)
    return spectrum(Hamiltonian("2 + 2*cos(2*x)", 1.0, g), 11)


def test_trial_ground_is_normalized_gaussian():
    g = make_grid(1, 64)
    psi = trial_state(g, parse_potential("x^2"), (0,))
    x = g.axes[0]
    ref, _ = normalize(Wavefunction(g, np.exp(-x**2)))
    assert np.allclose(psi.amplitudes, ref.amplitudes, atol=1e-14)
    assert psi.norm() == pytest.approx(1.0)


def test_trial_odd_parity_exact():
    g = make_grid(1, 64)
    a = trial_state(g, parse_potential("x^2"), (1,)).amplitudes
    assert np.array_equal(a, -a[::-1])


def test_periodic_trial_peaks_in_valleys():
    g = make_grid(1, 128, periodic=True, extent=2 * math.pi)
    u = parse_potential("2 + 2*cos(2*x)")
    psi = trial_state(g, u, (0,))
    a = np.abs(psi.amplitudes)
    assert np.allclose(a, a[::-1])
    assert evaluate_on_grid(u, g)[np.argmax(a)] == pytest.approx(evaluate_on_grid(u, g).min(), abs=1e-2)


def test_trial_validation():
    g = make_grid(2, 16)
    with pytest.raises(ValueError):
        trial_state(g, parse_potential("x^2"), (0,))
    with pytest.raises(ValueError):
        trial_state(g, parse_potential("x^2"), (0, -1))


def test_quantum_number_sequence():
    assert quantum_number_sequence(1, 3) == [(0,), (1,), (2,)]
    assert quantum_number_sequence(2, 4) == [(0, 0), (0, 1), (1, 0), (0, 2)]


def _random(g, seed):
    rng = np.random.default_rng(seed)
    psi = Wavefunction(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    return normalize(psi)[0]


def test_deflate():
    g = make_grid(1, 64)
    a, b, c = (_random(g, s) for s in (1, 2, 3))
    assert deflate(a, []) is a
    b = deflate(b, [a])
    out = deflate(c, [a, b])
    assert abs(inner_product(a, out)) < 1e-12 and abs(inner_product(b, out)) < 1e-12
    assert out.norm() == pytest.approx(1.0)
    with pytest.raises(NormError):
        deflate(a, [a])


def test_harmonic_spectrum(harmonic, harmonic_levels):
    assert [r.energy for r in harmonic_levels] == pytest.approx([1, 3, 5, 7], abs=1e-3)
    for r in harmonic_levels:
        recomputed = energy_expectation(r.state, harmonic, 0.0)
        assert abs(r.energy - recomputed) < 1e-10
        assert r.residual < 1e-4
        assert residual(r.state, harmonic, r.energy) == pytest.approx(r.residual, rel=1e-6)


def test_gram_matrix(harmonic_levels):
    states = [r.state for r in harmonic_levels]
    gram = np.array([[inner_product(a, b) for b in states] for a in states])
    assert np.max(np.abs(gram - np.eye(len(states)))) < 1e-6


def test_parity_and_phase(harmonic_levels):
    for n, r in enumerate(harmonic_levels):
        a = r.state.amplitudes
        assert np.allclose(a, (-1) ** n * a[::-1], atol=1e-6)
        half = a[len(a) // 2:]
        assert np.sum(half * np.abs(half)).real > 0


def test_energy_trace_decreases(harmonic):
    g = harmonic.grid
    rng = np.random.default_rng(0)
    trial = Wavefunction(g, np.exp(-g.axes[0] ** 2) * (1 + 0.3 * rng.normal(size=g.shape)))
    r = relax(normalize(trial)[0], harmonic)
    tail = np.array(r.trace[100:])
    assert np.all(np.diff(tail) <= 1e-12)
    assert r.energy == pytest.approx(1.0, abs=1e-3)


def test_mathieu_ground():
    g = make_grid(1, 256, periodic=True, extent=2 * math.pi)
    H = Hamiltonian("2 + 2*cos(2*x)", 1.0, g)
    r = relax(trial_state(g, H.potential, (0,)), H)
    assert r.energy == pytest.approx(1.5457, abs=0.01)


def test_mathieu_analytic_column(mathieu_levels):
    assert [r.energy for r in mathieu_levels] == pytest.approx(MATHIEU_ANALYTIC, abs=0.01)


@pytest.mark.xfail(strict=True, reason="the published numerical column is 0.062 and 0.100 above the analytic "
                   "values at levels 8 and 10; this solver tracks the analytic values")
def test_mathieu_published_numerical_column(mathieu_levels):
    assert [r.energy for r in mathieu_levels] == pytest.approx(MATHIEU_TABLE_NUMERICAL, abs=0.05)


def test_squid_ground_pair():
    params = {"phi0": math.pi, "beta_l": math.pi}
    g = make_grid(1, 512, extent=16.0, origin=math.pi)
    levels = spectrum(Hamiltonian(SQUID_POTENTIAL, 10.0, g, params), 2)
    assert [r.energy for r in levels] == pytest.approx([13.8916, 13.8960], abs=0.01)


def test_twod_needs_one_tuple_per_state(harmonic):
    with pytest.raises(ValueError):
        spectrum(harmonic, 2, quantum_numbers=[(0,)])
    with pytest.raises(ValueError):
        spectrum(harmonic, 0)


def test_options_validation():
    with pytest.raises(ValueError):
        EigenOptions(order=5)
    with pytest.raises(ValueError):
        EigenOptions(energy_tolerance=0)


def test_step_budget_exhausted(harmonic):
    g = harmonic.grid
    with pytest.raises(ConvergenceError) as err:
        relax(trial_state(g, harmonic.potential, (0,)), harmonic, opts=EigenOptions(max_steps=5))
    assert len(err.value.trace) == 5
