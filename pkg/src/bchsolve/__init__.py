"""Pseudo-spectral Schrodinger simulator with BCH split-operator steps.

Solves -d^2 psi + alpha(t) U(b, t) psi = i d_t psi on periodic or boxed grids
in one to three dimensions, in real or imaginary time.
"""
from .dsl import PotentialExpr, differentiate, evaluate, parse_potential
from .eigensolver import EigenOptions, EigenResult, deflate, relax, spectrum, trial_state
from .grid import Grid, Wavefunction, inner_product, make_grid, normalize, transform
from .kernels import BACKEND
from .observables import beat_period, energy_expectation, moments, probability_in_region
from .oracle import dense_hamiltonian, expm_evolve, oracle_spectrum
from .propagator import (
    EvolvePlan,
    Hamiltonian,
    StepConfig,
    choose_timestep,
    evolve,
    step_order1,
    step_order2,
    step_order3,
)
from .scenarios import Scenario, alpha_schedule_not_gate, builtin, load_config, run, serialize

__all__ = [
    "BACKEND", "EigenOptions", "EigenResult", "EvolvePlan", "Grid", "Hamiltonian", "PotentialExpr",
    "Scenario", "StepConfig", "Wavefunction", "alpha_schedule_not_gate", "beat_period", "builtin",
    "choose_timestep", "deflate", "dense_hamiltonian", "differentiate", "energy_expectation",
    "evaluate", "evolve", "expm_evolve", "inner_product", "load_config", "make_grid", "moments",
    "normalize", "oracle_spectrum", "parse_potential", "probability_in_region", "relax", "run",
    "serialize", "spectrum", "step_order1", "step_order2", "step_order3", "transform", "trial_state",
]
__version__ = "0.1.0"
