"""Phase-space lattice, wavefunctions and the position/momentum transform.

Transform conventions follow the continuum pair

    psi~(k) = int d^n b  exp(-i k.b) psi(b)
    psi(b)  = int d^n k / (2 pi)^n  exp(+i b.k) psi~(k)

discretised with cell-centred position samples and signed FFT-ordered momenta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

POSITION = "position"
MOMENTUM = "momentum"


class GridError(ValueError):
    pass


class RepresentationError(ValueError):
    pass


class NormError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Cell-centred rectangular lattice in 1..3 dimensions.

    ``origin`` is the centre of the box in each dimension; sample ``j`` sits at
    ``origin - N*spacing/2 + (j + 1/2)*spacing``.
    """

    dims: int
    bins: int
    spacing: tuple[float, ...]
    kspacing: tuple[float, ...]
    origin: tuple[float, ...]
    periodic: tuple[bool, ...]
    period: tuple[float | None, ...]
    _axes: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.dims <= 3:
            raise GridError(f"dims must be 1..3, got {self.dims}")
        if not _is_pow2(self.bins) or self.bins < 8:
            raise GridError(f"bins per dimension must be a power of two >= 8, got {self.bins}")
        axes = tuple(
            o + d * (np.arange(self.bins) + 0.5 - 0.5 * self.bins)
            for o, d in zip(self.origin, self.spacing)
        )
        kaxes = tuple(dk * np.fft.fftfreq(self.bins, 1.0 / self.bins) for dk in self.kspacing)
        for a in axes + kaxes:
            a.setflags(write=False)
        object.__setattr__(self, "_axes", (axes, kaxes))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.bins,) * self.dims

    @cached_property
    def size(self) -> int:
        return self.bins**self.dims

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return self._axes[0]

    @property
    def kaxes(self) -> tuple[np.ndarray, ...]:
        return self._axes[1]

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(self.bins * d for d in self.spacing)

    @cached_property
    def measure(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def kmeasure(self) -> float:
        return float(np.prod([dk / (2 * np.pi) for dk in self.kspacing]))

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def kmesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.kaxes, indexing="ij")

    def ksquared(self) -> np.ndarray:
        return sum(k**2 for k in self.kmesh())

    def point(self, index: Sequence[int]) -> tuple[float, ...]:
        return tuple(float(a[i]) for a, i in zip(self.axes, index))

    def describe(self) -> dict:
        return {
            "dims": self.dims,
            "bins": self.bins,
            "spacing": list(self.spacing),
            "kspacing": list(self.kspacing),
            "origin": list(self.origin),
            "periodic": list(self.periodic),
            "period": list(self.period),
        }


def _per_dim(value, dims, name):
    if isinstance(value, (list, tuple)):
        if len(value) != dims:
            raise GridError(f"{name} needs {dims} entries, got {len(value)}")
        return tuple(value)
    return (value,) * dims


def make_grid(
    dims: int,
    bins: int,
    alpha: float = 1.0,
    periodic: bool | Sequence[bool] = False,
    extent: float | None | Sequence[float | None] = None,
    origin: float | Sequence[float] = 0.0,
) -> Grid:
    """Build a grid.

    ``extent`` is the period for periodic dimensions and the box length for
    aperiodic ones.  An aperiodic dimension without an extent is sized from the
    coupling: ``spacing = alpha**-0.25 * sqrt(2 pi / N)``.
    """
    if not alpha > 0:
        raise GridError(f"alpha must be positive, got {alpha}")
    if not isinstance(bins, (int, np.integer)) or not _is_pow2(int(bins)) or bins < 8:
        raise GridError(f"bins per dimension must be a power of two >= 8, got {bins}")
    bins = int(bins)
    periodic = tuple(bool(p) for p in _per_dim(periodic, dims, "periodic"))
    extent = _per_dim(extent, dims, "extent")
    origin = tuple(float(o) for o in _per_dim(origin, dims, "origin"))

    spacing, kspacing, period = [], [], []
    for p, ext in zip(periodic, extent):
        if ext is not None and not ext > 0:
            raise GridError(f"extent must be positive, got {ext}")
        if p:
            if ext is None:
                raise GridError("periodic dimension requires a period")
            d = float(ext) / bins
            period.append(float(ext))
        else:
            d = float(ext) / bins if ext is not None else alpha**-0.25 * math.sqrt(2 * math.pi / bins)
            period.append(None)
        spacing.append(d)
        kspacing.append(2 * math.pi / (bins * d))
    return Grid(dims, bins, tuple(spacing), tuple(kspacing), origin, periodic, tuple(period))


@dataclass(frozen=True)
class Wavefunction:
    grid: Grid
    amplitudes: np.ndarray
    representation: str = POSITION

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != self.grid.shape:
            raise GridError(f"amplitude shape {amps.shape} does not match grid {self.grid.shape}")
        if self.representation not in (POSITION, MOMENTUM):
            raise RepresentationError(f"unknown representation {self.representation!r}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def weight(self) -> float:
        return self.grid.measure if self.representation == POSITION else self.grid.kmeasure

    def norm(self) -> float:
        return math.sqrt(float(np.vdot(self.amplitudes, self.amplitudes).real) * self.weight)

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def with_amplitudes(self, amps: np.ndarray) -> "Wavefunction":
        return Wavefunction(self.grid, amps, self.representation)

    def __add__(self, other: "Wavefunction") -> "Wavefunction":
        _check_compatible(self, other)
        return self.with_amplitudes(self.amplitudes + other.amplitudes)

    def __sub__(self, other: "Wavefunction") -> "Wavefunction":
        _check_compatible(self, other)
        return self.with_amplitudes(self.amplitudes - other.amplitudes)

    def __mul__(self, c) -> "Wavefunction":
        return self.with_amplitudes(self.amplitudes * c)

    __rmul__ = __mul__


def _check_compatible(a: Wavefunction, b: Wavefunction) -> None:
    if a.grid != b.grid:
        raise GridError("wavefunctions live on different grids")
    if a.representation != b.representation:
        raise RepresentationError("wavefunctions are in different representations")


def _offset_phase(grid: Grid) -> np.ndarray:
    # exp(-i k . b_first): aligns the FFT sum with the continuum kernel.
    first = [a[0] for a in grid.axes]
    return np.exp(-1j * sum(k * b0 for k, b0 in zip(grid.kmesh(), first)))


def transform(psi: Wavefunction, direction: str) -> Wavefunction:
    """Move ``psi`` to ``direction`` (``"momentum"`` or ``"position"``)."""
    g = psi.grid
    if direction == MOMENTUM:
        if psi.representation != POSITION:
            raise RepresentationError("to_momentum needs a position-space wavefunction")
        amps = g.measure * _offset_phase(g) * np.fft.fftn(psi.amplitudes)
    elif direction == POSITION:
        if psi.representation != MOMENTUM:
            raise RepresentationError("to_position needs a momentum-space wavefunction")
        scale = g.kmeasure * g.size
        amps = scale * np.fft.ifftn(np.conj(_offset_phase(g)) * psi.amplitudes)
    else:
        raise RepresentationError(f"unknown direction {direction!r}")
    return Wavefunction(g, amps, direction)


def inner_product(a: Wavefunction, b: Wavefunction) -> complex:
    """<a|b> with the measure of the shared representation."""
    _check_compatible(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes)) * a.weight


def normalize(psi: Wavefunction) -> tuple[Wavefunction, float]:
    n = psi.norm()
    if not math.isfinite(n) or n <= 0.0:
        raise NormError(f"cannot normalise a state with norm {n}")
    return psi.with_amplitudes(psi.amplitudes / n), n


@dataclass(frozen=True)
class ScaleEstimate:
    length: float
    time: float
    momentum: float
    energy: float


def characteristic_scales(alpha: float, p: float) -> ScaleEstimate:
    """Virial length/time scales of the ground state of ``-d^2 + alpha*(b^2)^p``."""
    if not (alpha > 0 and p > 0):
        raise ValueError("alpha and p must be positive")
    ap = alpha * p
    length = ap ** (-1.0 / (2 * p + 2))
    time = ap ** (-1.0 / (p + 1))
    return ScaleEstimate(length=length, time=time, momentum=1.0 / length, energy=1.0 / time)
