"""BCH split-operator steps (orders 1-3) and the evolution loop.

Every step does one forward FFT of the state, multiplies by a momentum-space
factor, and transforms back.  Orders 2 and 3 also transport the result along
the field ``h^2 grad V``.  The potential factors are evaluated in closed form
at the transported points, and the propagated field is carried with a
first-order spectral Taylor shift, which needs one extra inverse FFT per
dimension.  ``h`` is the complex step: ``dtau`` in real time and ``-i dtau``
in imaginary time, so every power of the step picks up the right phase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import fft as sfft

from . import kernels
from .dsl import DerivativeTrees, PotentialExpr, evaluate_at, evaluate_scalar, parse_potential
from .grid import POSITION, Grid, GridError, Wavefunction
from .observables import Snapshot, energy_expectation, make_snapshot

REAL = "real"
IMAGINARY = "imaginary"
WALL_THRESHOLD = 1e5
DRIFT_LIMIT = 1e-8
MAX_HALVINGS = 20
# The first-order transport multiplies a mode of wavenumber k by |1 + i s k|;
# capping |s| * k_max keeps that growth negligible where grad V is steep.
SHIFT_CAP = 0.25


class EvolutionError(RuntimeError):
    def __init__(self, message: str, tau: float | None = None):
        super().__init__(message)
        self.tau = tau


class Hamiltonian:
    """-d^2/db^2 + alpha(t) U(b, t) on a grid.

    Holds caches for the grid-derived arrays and for position factors keyed
    by ``(order, h, alpha, tau)``; the cached values are pure functions of
    the key, so sharing a Hamiltonian between evolutions is safe.
    """

    def __init__(self, potential, alpha_schedule, grid: Grid, params: Mapping[str, float] | None = None):
        self.params = dict(params or {})
        names = tuple(self.params)
        if isinstance(potential, str):
            potential = parse_potential(potential, names)
        if isinstance(alpha_schedule, (int, float)):
            alpha_schedule = repr(float(alpha_schedule))
        if isinstance(alpha_schedule, str):
            alpha_schedule = parse_potential(alpha_schedule, names)
        coords = alpha_schedule.tree.free_symbols() & {"x", "y", "z"}
        if coords:
            raise ValueError(f"alpha schedule may depend only on t, found {sorted(coords)}")
        self.potential: PotentialExpr = potential
        self.alpha_schedule: PotentialExpr = alpha_schedule
        self.grid = grid
        self.trees = DerivativeTrees.build(potential, grid.dims)
        self.static = not potential.tree.depends_on("t")
        self.mesh = grid.mesh()
        self.flat_mesh = [m.ravel() for m in self.mesh]
        self.kmesh = grid.kmesh()
        self.ksq = grid.ksquared()
        self._u_cache: dict = {}
        self._pos_cache: dict = {}
        self._kin_cache: dict = {}
        self._last_alpha = (None, None)

    def alpha(self, tau: float) -> float:
        if self._last_alpha[0] == tau:
            return self._last_alpha[1]
        a = evaluate_scalar(self.alpha_schedule, tau, self.params)
        if not a > 0:
            raise EvolutionError(f"coupling alpha({tau}) = {a} is not positive", tau)
        self._last_alpha = (tau, a)
        return a

    def _key_tau(self, tau):
        return None if self.static else float(tau)

    def u_field(self, tree_name: str, tau: float) -> np.ndarray:
        """A derivative of U on the flattened grid (cached for static U)."""
        key = (tree_name, self._key_tau(tau))
        hit = self._u_cache.get(key)
        if hit is None:
            tree = _pick_tree(self.trees, tree_name)
            hit = evaluate_at(tree, self.flat_mesh, tau, self.params)
            self._u_cache[key] = hit
        return hit

    def potential_field(self, tau: float) -> np.ndarray:
        """V = alpha(tau) U(b, tau) on the grid, in grid shape."""
        return self.alpha(tau) * self.u_field("u", tau).reshape(self.grid.shape)

    def position_factor(self, order: int, h: complex, alpha: float, tau: float):
        key = (order, h, alpha, self._key_tau(tau))
        hit = self._pos_cache.get(key)
        if hit is None:
            if len(self._pos_cache) > 8:
                self._pos_cache.clear()
            hit = _position_factor(self, order, h, alpha, tau)
            self._pos_cache[key] = hit
        return hit

    def kinetic_factor(self, h: complex) -> np.ndarray:
        hit = self._kin_cache.get(h)
        if hit is None:
            if len(self._kin_cache) > 8:
                self._kin_cache.clear()
            hit = np.exp(-1j * h * self.ksq)
            self._kin_cache[h] = hit
        return hit


def _pick_tree(trees: DerivativeTrees, name: str):
    if name == "u":
        return trees.u
    if name == "laplacian":
        return trees.laplacian
    if name == "bilaplacian":
        return trees.bilaplacian
    kind, *idx = name.split(":")
    if kind == "grad":
        return trees.grad[int(idx[0])]
    if kind == "second":
        return trees.second[int(idx[0])][int(idx[1])]
    raise KeyError(name)


def _position_factor(H: Hamiltonian, order: int, h: complex, alpha: float, tau: float):
    """Returns (exponent, shift or None) on the flattened grid."""
    dims = H.grid.dims
    u = H.u_field("u", tau)
    if order == 1:
        return -1j * h * alpha * u, None

    wall = alpha * u >= WALL_THRESHOLD if H.trees.has_wall else None
    h2 = (h * h).real  # dtau^2 in real time, -dtau^2 in imaginary time
    shift = np.stack([h2 * alpha * H.u_field(f"grad:{d}", tau) for d in range(dims)])
    if wall is not None:
        shift[:, wall] = 0.0
    for d in range(dims):
        lim = SHIFT_CAP * H.grid.spacing[d] / math.pi
        np.clip(shift[d], -lim, lim, out=shift[d])
    pts = [c + s for c, s in zip(H.flat_mesh, shift)]
    ev = lambda tree: alpha * evaluate_at(tree, pts, tau, H.params)  # noqa: E731
    v = ev(H.trees.u)
    # The Jacobian weight exp(h^2 lap V / 2) is carried by the skew form of
    # the transport in _advance, so only the phase goes here.
    expo = -1j * h * v
    if order == 3:
        gg = sum(ev(g) ** 2 for g in H.trees.grad)
        expo = expo + 1j * h**3 * ((2.0 / 3.0) * gg + (1.0 / 6.0) * ev(H.trees.bilaplacian))
    if wall is not None:
        expo[wall] = -1j * h * alpha * u[wall]
    if not np.any(shift):
        shift = None
    return expo, shift


def _curvature_means(H: Hamiltonian, flat: np.ndarray, alpha: float, tau: float):
    """Density-weighted means of d_j d_k V over the current state."""
    dims = H.grid.dims
    c = np.zeros((dims, dims))
    for j in range(dims):
        for k in range(j + 1):
            c[j, k] = alpha * kernels.weighted_mean(flat, H.u_field(f"second:{j}:{k}", tau))
            c[k, j] = c[j, k]
    return c


def _advance(amps: np.ndarray, H: Hamiltonian, tau_eval: float, h: complex, order: int) -> np.ndarray:
    """One step of size ``h`` with the potential frozen at ``tau_eval``."""
    if h == 0:
        return amps.copy()
    alpha = H.alpha(tau_eval)
    expo, shift = H.position_factor(order, h, alpha, tau_eval)
    spec = sfft.fftn(amps)
    if order == 3:
        c = _curvature_means(H, np.ascontiguousarray(amps).ravel(), alpha, tau_eval)
        kexp = -1j * h * H.ksq
        for j, kj in enumerate(H.kmesh):
            kexp = kexp - (2.0 / 3.0) * 1j * h**3 * c[j, j] * kj**2
            for k in range(j):
                kexp = kexp - (4.0 / 3.0) * 1j * h**3 * c[j, k] * kj * H.kmesh[k]
        spec *= np.exp(kexp)
    else:
        spec *= H.kinetic_factor(h)
    phi = sfft.ifftn(spec).ravel()
    if shift is None:
        out = kernels.shifted_product(expo, phi)
    else:
        # (s.grad + grad.s)/2 is anti-Hermitian under the spectral derivative;
        # s.grad alone is not, and its high-k modes grow by O(s k_max) per step.
        div = sum(1j * k * sfft.fftn((s * phi).reshape(amps.shape)) for s, k in zip(shift, H.kmesh))
        phi = phi + 0.5 * sfft.ifftn(div).ravel()
        dphi = np.stack([sfft.ifftn(0.5j * k * spec).ravel() for k in H.kmesh])
        out = kernels.shifted_product(expo, phi, shift, dphi)
    return out.reshape(amps.shape)


def _complex_step(dtau: float, mode: str) -> complex:
    if mode == REAL:
        return complex(dtau)
    if mode == IMAGINARY:
        return complex(0.0, -dtau)
    raise ValueError(f"mode must be 'real' or 'imaginary', got {mode!r}")


def _step(psi: Wavefunction, H: Hamiltonian, tau: float, dtau: float, mode: str, order: int) -> Wavefunction:
    if psi.representation != POSITION:
        raise ValueError("steps act on position-space wavefunctions")
    if psi.grid != H.grid:
        raise GridError("wavefunction and Hamiltonian live on different grids")
    amps = _advance(psi.amplitudes, H, tau + 0.5 * dtau, _complex_step(dtau, mode), order)
    return psi.with_amplitudes(amps)


def step_order1(psi: Wavefunction, H: Hamiltonian, tau: float, dtau: float, mode: str = REAL) -> Wavefunction:
    """Leading split: exp(-i h V) F^-1 exp(-i h k^2) F psi."""
    return _step(psi, H, tau, dtau, mode, 1)


def step_order2(psi: Wavefunction, H: Hamiltonian, tau: float, dtau: float, mode: str = REAL) -> Wavefunction:
    """Adds the first commutator: transport by h^2 grad V with its Jacobian weight exp(h^2 lap V / 2)."""
    return _step(psi, H, tau, dtau, mode, 2)


def step_order3(psi: Wavefunction, H: Hamiltonian, tau: float, dtau: float, mode: str = REAL) -> Wavefunction:
    """Adds the nested commutators, with d_j d_k V replaced by its mean over |psi|^2."""
    return _step(psi, H, tau, dtau, mode, 3)


STEPPERS = {1: step_order1, 2: step_order2, 3: step_order3}


@dataclass(frozen=True)
class StepConfig:
    order: int = 2
    mode: str = REAL
    dtau_base: float = 0.01
    dynamic: bool = False
    renorm_each_step: bool = False

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {self.order}")
        if self.mode not in (REAL, IMAGINARY):
            raise ValueError(f"mode must be 'real' or 'imaginary', got {self.mode!r}")
        if not self.dtau_base > 0:
            raise ValueError("dtau_base must be positive")
        if self.mode == IMAGINARY and not self.renorm_each_step:
            object.__setattr__(self, "renorm_each_step", True)


def choose_timestep(alpha_now: float, config: StepConfig, halvings: int = 0) -> float:
    """dtau_base / sqrt(max(alpha, 1)), halved ``halvings`` times."""
    if not alpha_now > 0:
        raise ValueError("alpha must be positive")
    return config.dtau_base / math.sqrt(max(alpha_now, 1.0)) / 2 ** min(halvings, MAX_HALVINGS)


@dataclass(frozen=True)
class EvolvePlan:
    t_start: float
    t_end: float
    config: StepConfig
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.t_end >= self.t_start:
            raise ValueError("t_end must not precede t_start")
        times = tuple(sorted(float(t) for t in self.snapshot_times))
        if times and (times[0] < self.t_start or times[-1] > self.t_end):
            raise ValueError("snapshot times must lie within [t_start, t_end]")
        object.__setattr__(self, "snapshot_times", times)


@dataclass
class EvolveStats:
    steps: int = 0
    retries: int = 0
    energies: list = field(default_factory=list)


def evolve(
    psi0: Wavefunction,
    H: Hamiltonian,
    plan: EvolvePlan,
    *,
    keep_amplitudes: bool = False,
    on_step: Callable[[float, Wavefunction], None] | None = None,
    stats: EvolveStats | None = None,
) -> tuple[Wavefunction, list[Snapshot]]:
    """Product of short steps from ``t_start`` to ``t_end``.

    Steps are clipped so that each requested snapshot time is a step boundary.
    """
    if psi0.grid != H.grid:
        raise GridError("initial state and Hamiltonian live on different grids")
    cfg = plan.config
    stats = stats if stats is not None else EvolveStats()
    tol = 1e-12 * max(1.0, abs(plan.t_end))
    pending = list(plan.snapshot_times)
    snaps: list[Snapshot] = []
    tau = plan.t_start
    psi = psi0
    if cfg.renorm_each_step:
        psi = psi.with_amplitudes(psi.amplitudes / psi.norm())

    def capture():
        while pending and pending[0] <= tau + tol:
            pending.pop(0)
            snaps.append(make_snapshot(psi, H, tau, keep_amplitudes=keep_amplitudes))

    capture()
    halvings, calm = 0, 0
    while tau < plan.t_end - tol:
        stop = min([t for t in pending if t > tau + tol] + [plan.t_end])
        while True:
            dt = min(choose_timestep(H.alpha(tau), cfg, halvings), stop - tau)
            new = _step(psi, H, tau, dt, cfg.mode, cfg.order)
            if not np.all(np.isfinite(new.amplitudes)):
                raise EvolutionError(f"non-finite amplitudes at tau={tau}", tau)
            if cfg.dynamic and cfg.mode == REAL and halvings < MAX_HALVINGS:
                n0, n1 = psi.norm(), new.norm()
                if abs(n1 - n0) > DRIFT_LIMIT * n0:
                    halvings += 1
                    calm = 0
                    stats.retries += 1
                    continue
            break
        psi = new
        if cfg.renorm_each_step:
            n = psi.norm()
            if not n > 0:
                raise EvolutionError(f"state vanished at tau={tau}", tau)
            psi = psi.with_amplitudes(psi.amplitudes / n)
        tau = stop if stop - (tau + dt) <= tol else tau + dt
        stats.steps += 1
        if halvings:
            calm += 1
            if calm >= 10:
                halvings -= 1
                calm = 0
        if cfg.mode == IMAGINARY:
            stats.energies.append(energy_expectation(psi, H, tau))
        if on_step is not None:
            on_step(tau, psi)
        capture()
    return psi, snaps

