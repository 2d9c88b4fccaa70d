import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bchsolve.grid import (MOMENTUM, POSITION, GridError, NormError, RepresentationError, Wavefunction,
                           characteristic_scales, inner_product, make_grid, normalize, transform)


def random_state(g, seed=0):
    rng = np.random.default_rng(seed)
    return Wavefunction(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))


def test_periodic_spacing():
    g = make_grid(1, 16, periodic=True, extent=2 * math.pi)
    assert g.spacing[0] == pytest.approx(2 * math.pi / 16)


def test_alpha_scaled_spacing():
    g = make_grid(1, 64, alpha=16)
    assert g.spacing[0] == pytest.approx(0.5 * math.sqrt(2 * math.pi / 64))
    assert g.kspacing[0] == pytest.approx(2 * math.sqrt(2 * math.pi / 64))
    assert g.kspacing[0] / g.spacing[0] == pytest.approx(4.0)


@pytest.mark.parametrize("n", [12, 4, 100])
def test_bins_must_be_power_of_two(n):
    with pytest.raises(GridError):
        make_grid(1, n)


def test_bad_arguments():
    with pytest.raises(GridError):
        make_grid(4, 16)
    with pytest.raises(GridError):
        make_grid(1, 16, alpha=0)
    with pytest.raises(GridError):
        make_grid(1, 16, periodic=True)


def test_cell_centres_symmetric():
    g = make_grid(1, 32, extent=8.0, origin=1.0)
    x = g.axes[0]
    assert np.allclose(x - 1.0, -(x - 1.0)[::-1], atol=1e-14)
    assert x[0] == pytest.approx(1.0 - 4.0 + 0.125)


def test_reciprocity():
    for g in (make_grid(1, 64, alpha=3.0), make_grid(2, 16, periodic=True, extent=5.0)):
        for d, dk in zip(g.spacing, g.kspacing):
            assert d * dk * g.bins == pytest.approx(2 * math.pi)


@settings(max_examples=25, deadline=None)
@given(dims=st.integers(1, 3), log_n=st.integers(3, 5), seed=st.integers(0, 10_000),
       periodic=st.booleans())
def test_round_trip_and_parseval(dims, log_n, seed, periodic):
    g = make_grid(dims, 2**log_n, periodic=periodic, extent=7.0)
    psi = random_state(g, seed)
    phi = transform(psi, MOMENTUM)
    back = transform(phi, POSITION)
    assert np.max(np.abs(back.amplitudes - psi.amplitudes)) < 1e-12 * np.max(np.abs(psi.amplitudes))
    assert abs(phi.norm() ** 2 - psi.norm() ** 2) < 1e-12 * psi.norm() ** 2


def test_constant_goes_to_zero_mode():
    g = make_grid(1, 32, periodic=True, extent=2 * math.pi)
    phi = transform(Wavefunction(g, np.ones(32)), MOMENTUM)
    a = np.abs(phi.amplitudes)
    assert a[0] > 0 and np.max(a[1:]) < 1e-12 * a[0]


def test_gaussian_transform_matches_continuum():
    g = make_grid(1, 512, extent=40.0)
    x, k = g.axes[0], g.kaxes[0]
    s = 1 / math.sqrt(2)
    psi = Wavefunction(g, (2 * math.pi * s * s) ** -0.25 * np.exp(-x**2 / (4 * s * s)))
    phi = transform(psi, MOMENTUM).amplitudes
    exact = (2 * math.pi * s * s) ** -0.25 * math.sqrt(4 * math.pi * s * s) * np.exp(-s * s * k**2)
    big = np.abs(exact) > 1e-3 * np.abs(exact).max()
    assert np.max(np.abs(phi[big] - exact[big]) / np.abs(exact[big])) < 1e-6


def test_transform_representation_errors():
    g = make_grid(1, 16)
    psi = random_state(g)
    with pytest.raises(RepresentationError):
        transform(psi, POSITION)
    with pytest.raises(RepresentationError):
        transform(psi, "sideways")


def test_inner_product_properties():
    g = make_grid(1, 64, extent=10.0)
    a, b = random_state(g, 1), random_state(g, 2)
    assert abs(inner_product(a, b) - inner_product(b, a).conjugate()) < 1e-14 * abs(inner_product(a, b))
    u, _ = normalize(a)
    assert inner_product(u, u) == pytest.approx(1.0, abs=1e-14)
    x = g.axes[0]
    even = Wavefunction(g, np.exp(-x**2))
    odd = Wavefunction(g, x * np.exp(-x**2))
    assert abs(inner_product(even, odd)) < 1e-10


def test_inner_product_grid_mismatch():
    with pytest.raises(GridError):
        inner_product(random_state(make_grid(1, 16)), random_state(make_grid(1, 32)))


def test_normalize():
    g = make_grid(1, 64, extent=10.0)
    psi, n0 = normalize(random_state(g))
    same, n1 = normalize(psi)
    assert n1 == pytest.approx(1.0) and np.allclose(same.amplitudes, psi.amplitudes)
    again, n2 = normalize(psi * 2)
    assert n2 == pytest.approx(2.0) and np.allclose(again.amplitudes, psi.amplitudes)
    with pytest.raises(NormError):
        normalize(Wavefunction(g, np.zeros(64)))


def test_characteristic_scales():
    s = characteristic_scales(1.0, 1.0)
    assert (s.length, s.time, s.momentum, s.energy) == pytest.approx((1, 1, 1, 1))
    s = characteristic_scales(100.0, 1.0)
    assert s.length == pytest.approx(100 ** -0.25) and s.energy == pytest.approx(100**0.5)
    assert s.length * s.momentum == 1.0 and s.time * s.energy == pytest.approx(1.0, abs=1e-15)
    assert characteristic_scales(1.0, 2.0).length == pytest.approx(2 ** (-1 / 6))


def test_characteristic_scales_rejects_nonpositive():
    with pytest.raises(ValueError):
        characteristic_scales(0.0, 1.0)
