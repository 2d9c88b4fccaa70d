"""Imaginary-time eigensolver: parity trial states, deflation, relaxation."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .dsl import evaluate_on_grid
from .grid import Grid, NormError, Wavefunction, inner_product
from .observables import apply_hamiltonian, energy_expectation
from .propagator import Hamiltonian, _advance, choose_timestep, StepConfig, IMAGINARY

TRIAL_EPSILON = 0.1
POLISH_INTERVAL = 50


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, trace=(), index: int | None = None):
        super().__init__(message)
        self.trace = list(trace)
        self.index = index


@dataclass(frozen=True)
class EigenOptions:
    energy_tolerance: float = 1e-8
    max_steps: int = 200_000
    reorth_every: int = 1
    order: int = 2
    dtau_base: float = 0.01
    # Once the energy settles, relaxation continues (halving dtau whenever
    # the residual stalls) until the residual reaches residual_target, or
    # stalls below residual_tolerance.  The split-step fixed point is biased
    # by O(dtau^order), and errors in earlier states leak into later ones
    # through deflation, hence the target well below the tolerance.
    residual_tolerance: float = 1e-4
    residual_target: float = 1e-5
    max_refinements: int = 8

    def __post_init__(self):
        if not self.energy_tolerance > 0:
            raise ValueError("energy_tolerance must be positive")
        if self.max_steps < 1 or self.reorth_every < 1:
            raise ValueError("max_steps and reorth_every must be >= 1")
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {self.order}")


@dataclass
class EigenResult:
    energy: float
    state: Wavefunction
    steps_taken: int
    residual: float
    trace: list = field(default_factory=list, repr=False)
    quantum_numbers: tuple[int, ...] = ()


def trial_state(g: Grid, U, quantum_numbers, params=None) -> Wavefunction:
    """Product of per-dimension guesses with definite parity about the origin.

    Aperiodic dimensions use b^(n mod 2) exp(-b^2); periodic ones use
    b^(n mod 2) / (U + eps) so the bulk sits in the valleys of U.  Periodic
    dimensions also get the even window 1 + cos(2 pi b / P) / 2: when U has a
    shorter period than the box, 1/U alone misses every even state whose
    period is the full box.
    """
    qn = tuple(int(n) for n in quantum_numbers)
    if len(qn) != g.dims or any(n < 0 for n in qn):
        raise ValueError(f"need {g.dims} non-negative quantum numbers, got {quantum_numbers}")
    mesh = g.mesh()
    psi = np.ones(g.shape)
    for d, (n, b) in enumerate(zip(qn, mesh)):
        rel = b - g.origin[d]
        if n % 2:
            psi = psi * rel
        if g.periodic[d]:
            psi = psi * (1.0 + 0.5 * np.cos(2 * math.pi * rel / g.period[d]))
        else:
            psi = psi * np.exp(-rel**2)
    if any(g.periodic):
        u = evaluate_on_grid(U, g, 0.0, params)
        psi = psi / (u - u.min() + TRIAL_EPSILON)
    out = Wavefunction(g, psi.astype(complex))
    return out * (1.0 / out.norm())


def deflate(psi: Wavefunction, basis) -> Wavefunction:
    """Remove the components of ``psi`` along ``basis`` (Gram-Schmidt, applied twice)."""
    if not basis:
        return psi
    amps = psi.amplitudes.copy()
    w = psi.weight
    for _ in range(2):
        for b in basis:
            amps -= np.vdot(b.amplitudes, amps) * w * b.amplitudes
    out = psi.with_amplitudes(amps)
    n = out.norm()
    if n < 1e-10:
        raise NormError("trial state lies in the span of the basis")
    return out * (1.0 / n)


def residual(psi: Wavefunction, H: Hamiltonian, energy: float, tau: float = 0.0) -> float:
    r = apply_hamiltonian(psi, H, tau) - energy * psi.amplitudes
    return math.sqrt(float(np.vdot(r, r).real) * psi.grid.measure)


def relax(psi_trial: Wavefunction, H: Hamiltonian, basis=(), opts: EigenOptions | None = None,
          tau0: float = 0.0) -> EigenResult:
    """Imaginary-time flow with the potential frozen at ``tau0``."""
    opts = opts or EigenOptions()
    basis = list(basis)
    alpha = H.alpha(tau0)
    cfg = StepConfig(order=opts.order, mode=IMAGINARY, dtau_base=opts.dtau_base)
    dt = choose_timestep(alpha, cfg)
    psi = deflate(psi_trial, basis)
    g = psi.grid
    shape, measure = g.shape, g.measure
    # Array-level copies of deflate() and energy_expectation() for the inner loop.
    vecs = np.array([b.amplitudes.ravel() for b in basis]) if basis else None
    ksq = H.ksq.ravel() / g.size
    pot = H.potential_field(tau0).ravel()
    amps = psi.amplitudes.ravel()
    trace: list[float] = []
    energy = energy_expectation(psi, H, tau0)
    refinements = 0
    settled = False
    last_res = math.inf
    stall_res = None
    checked = 0
    for step in range(1, opts.max_steps + 1):
        amps = _advance(amps.reshape(shape), H, tau0, complex(0.0, -dt), opts.order).ravel()
        if vecs is not None and step % opts.reorth_every == 0:
            for _ in range(2):
                amps = amps - (vecs.conj() @ amps * measure) @ vecs
        n2 = float(np.vdot(amps, amps).real) * measure
        if not (math.isfinite(n2) and n2 > 1e-20):
            raise ConvergenceError(f"state lost after {step} steps", trace)
        amps = amps / math.sqrt(n2)
        spec = sfft.fft(amps) if g.dims == 1 else sfft.fftn(amps.reshape(shape)).ravel()
        previous = energy
        energy = (float(ksq @ (spec.real**2 + spec.imag**2)) + float(pot @ (amps.real**2 + amps.imag**2))) * measure
        trace.append(energy)
        if not settled:
            settled = abs(energy - previous) < opts.energy_tolerance * dt
            if not settled:
                continue
        elif step - checked < POLISH_INTERVAL << refinements:
            # fixed window in imaginary time, whatever dtau has become
            continue
        checked = step
        # Energy has settled.  What remains in the residual is slow
        # contamination (shrinks at fixed dtau), the O(dtau^order) bias of
        # the split-step fixed point (stalls; halving dtau helps) or leakage
        # from errors in the deflation basis (stalls; halving does not help).
        psi = psi.with_amplitudes(amps.reshape(shape))
        res = residual(psi, H, energy, tau0)
        if res < opts.residual_target:
            return EigenResult(energy, psi, step, res, trace)
        if res > 0.95 * last_res:
            useless = stall_res is not None and res > 0.7 * stall_res
            if useless or refinements >= opts.max_refinements:
                if res < opts.residual_tolerance:
                    return EigenResult(energy, psi, step, res, trace)
                raise ConvergenceError(
                    f"energy settled at {energy} but residual {res:.3g} stays above "
                    f"{opts.residual_tolerance}", trace)
            refinements += 1
            stall_res = res
            dt *= 0.5
        last_res = res
    raise ConvergenceError(f"no convergence within {opts.max_steps} steps (last energy {energy})", trace)


def quantum_number_sequence(dims: int, count: int) -> list[tuple[int, ...]]:
    """Enumerate tuples by increasing sum, then lexicographically."""
    out: list[tuple[int, ...]] = []
    total = 0
    while len(out) < count:
        out.extend(sorted(q for q in itertools.product(range(total + 1), repeat=dims) if sum(q) == total))
        total += 1
    return out[:count]


def fix_phase(psi: Wavefunction) -> Wavefunction:
    """Make sum(psi*|psi|) over the positive orthant real and positive.

    Falls back to the whole domain when that sum vanishes, so states odd about
    the origin still get a deterministic sign.
    """
    g = psi.grid
    mask = np.ones(g.shape, dtype=bool)
    for d, b in enumerate(g.mesh()):
        mask &= b > g.origin[d]
    weighted = psi.amplitudes * np.abs(psi.amplitudes)
    s = weighted[mask].sum()
    if abs(s) < 1e-8 * np.abs(weighted).sum():
        s = weighted.sum()
    if abs(s) == 0:
        return psi
    return psi * (abs(s) / s)


def spectrum(H: Hamiltonian, count: int, opts: EigenOptions | None = None, tau0: float = 0.0,
             quantum_numbers=None) -> list[EigenResult]:
    """The ``count`` lowest states found one at a time, each deflated against the previous ones.

    ``quantum_numbers`` overrides the trial enumeration (one tuple per state).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    qns = list(quantum_numbers) if quantum_numbers is not None else quantum_number_sequence(H.grid.dims, count)
    if len(qns) != count:
        raise ValueError("need one quantum-number tuple per requested state")
    found: list[EigenResult] = []
    for i, qn in enumerate(qns):
        trial = trial_state(H.grid, H.potential, qn, H.params)
        try:
            res = relax(trial, H, [r.state for r in found], opts, tau0)
        except (ConvergenceError, NormError) as err:
            raise ConvergenceError(f"state {i} {qn}: {err}", getattr(err, "trace", ()), index=i) from err
        res.state = fix_phase(res.state)
        res.quantum_numbers = tuple(qn)
        found.append(res)
    found.sort(key=lambda r: r.energy)
    return found
