"""Command line: run scenarios, solve spectra, list builtins, validate against the oracle."""
from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .dsl import evaluate_scalar, parse_potential
from .grid import Wavefunction, make_grid
from .oracle import dense_hamiltonian, expm_evolve, oracle_spectrum
from .propagator import Hamiltonian, _advance
from .scenarios import BUILTIN_NAMES, ConfigError, ScenarioError, builtin, resolve, run

EXIT_OK, EXIT_SCENARIO, EXIT_CONFIG = 0, 1, 2


def _cmd_run(args) -> int:
    scenario = resolve(args.config)
    out = args.out or f"runs/{scenario.name}"
    report = run(scenario, out, order=args.order, snapshots=args.snapshots)
    print("\n".join(report.lines()))
    print(f"outputs in {out}")
    return EXIT_OK


def _cmd_eigen(args) -> int:
    scenario = resolve(args.config)
    report = run(scenario, args.out, eigen_count=args.count, evolve_enabled=False)
    for i, (e, r) in enumerate(zip(report.energies, report.residuals)):
        print(f"{i:3d}  {e:.10f}  residual {r:.2e}")
    for a, es in report.extra_spectra.items():
        print(f"alpha = {a:g}: " + ", ".join(f"{e:.10f}" for e in es))
    return EXIT_OK


def _cmd_list(args) -> int:
    for name in BUILTIN_NAMES:
        print(f"{name:14s} {builtin(name).description}")
    return EXIT_OK


def order_slopes(dtaus=(4e-3, 2e-3, 1e-3, 5e-4), horizon=1.0, n=64):
    """Log-log slopes of the global L2 error against the dense propagator (harmonic well)."""
    g = make_grid(1, n)
    x = g.axes[0]
    psi = Wavefunction(g, np.exp(-((x - 0.5) ** 2)) * np.exp(0.3j * x))
    psi = psi * (1.0 / psi.norm())
    H = Hamiltonian("x^2", 1.0, g)
    ref = expm_evolve(dense_hamiltonian("x^2", 1.0, g), psi, horizon).amplitudes
    slopes = {}
    for order in (1, 2, 3):
        errs = []
        for dt in dtaus:
            steps = int(round(horizon / dt))
            a = psi.amplitudes
            for _ in range(steps):
                a = _advance(a, H, 0.0, complex(horizon / steps), order)
            errs.append(math.sqrt(float(np.vdot(a - ref, a - ref).real) * g.measure))
        fit = np.polyfit(np.log(dtaus), np.log(errs), 1)
        slopes[order] = (float(fit[0]), errs)
    return slopes


def _cmd_validate(args) -> int:
    failures = 0
    for name in ("harmonic", "mathieu", "cosine100", "squid_static"):
        s = builtin(name)
        report = run(s, None, evolve_enabled=False)
        count = min(4, len(report.energies))
        g = s.grid.build(eval_alpha(s))
        ref = oracle_spectrum(s.potential, eval_alpha(s), g, count, params=s.params)
        worst = max(abs(a - b) for a, b in zip(report.energies[:count], ref))
        ok = worst < 5e-3
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:13s} lowest {count} levels vs dense oracle: max |dE| = {worst:.2e}")
    for order, (slope, _) in order_slopes().items():
        ok = abs(slope - order) <= 0.3
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  order {order} global error slope {slope:.3f}")
    return EXIT_OK if failures == 0 else EXIT_SCENARIO


def eval_alpha(s) -> float:
    tau = s.eigen.tau if s.eigen else 0.0
    return evaluate_scalar(parse_potential(s.alpha, tuple(s.params)), tau, s.params)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bchsolve", description="Split-operator Schrodinger simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a config file or builtin:NAME")
    p.add_argument("config", help="config path or builtin:NAME")
    p.add_argument("--out", default=None, help="output directory (default runs/NAME)")
    p.add_argument("--order", type=int, choices=(1, 2, 3), default=None, help="propagator order override")
    p.add_argument("--snapshots", type=int, default=None, help="number of snapshots")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eigen", help="solve the lowest K levels of a scenario")
    p.add_argument("config")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eigen)

    p = sub.add_parser("list", help="list builtin scenarios")
    p.set_defaults(func=_cmd_list)

    p = sub.add_parser("validate", help="compare the solvers with the dense oracle")
    p.set_defaults(func=_cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioError as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
