"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--sizes 256 4096 16384] [--repeat 200]

Times each kernel on random inputs and one full order-2 step on a harmonic
grid, for both backends, and checks they agree.
"""
import argparse
import importlib
import timeit

import numpy as np


def load_backends():
    out = {"python": importlib.import_module("bchsolve._pykernels")}
    try:
        out["compiled"] = importlib.import_module("bchsolve._ckernels")
    except ImportError:
        print("compiled backend not built; timing the fallback only")
    return out


def bench(sizes, repeat):
    rng = np.random.default_rng(0)
    backends = load_backends()
    print(f"{'kernel':18s} {'n':>7s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for n in sizes:
        expo = rng.normal(size=n) * 0.01 + 1j * rng.normal(size=n)
        phi = rng.normal(size=n) + 1j * rng.normal(size=n)
        shift = rng.normal(size=(2, n)) * 1e-4
        dphi = rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))
        f = rng.normal(size=n)
        cases = {
            "shifted_product": lambda k: k.shifted_product(expo, phi, shift, dphi),
            "norm2": lambda k: k.norm2(phi),
            "weighted_mean": lambda k: k.weighted_mean(phi, f),
        }
        for name, call in cases.items():
            results = {b: call(k) for b, k in backends.items()}
            ref = results["python"]
            for b, r in results.items():
                if not np.allclose(r, ref, rtol=1e-12, atol=1e-12):
                    raise SystemExit(f"{name}: backend {b} disagrees with the fallback")
            times = {b: min(timeit.repeat(lambda: call(k), number=repeat, repeat=3)) / repeat
                     for b, k in backends.items()}
            row = " ".join(f"{times[b] * 1e6:10.1f}us" for b in backends)
            speed = f"{times['python'] / times['compiled']:8.2f}x" if "compiled" in times else ""
            print(f"{name:18s} {n:7d} {row} {speed}")


def bench_step(repeat):
    import os
    import subprocess
    import sys

    code = (
        "import timeit, numpy as np\n"
        "from bchsolve import make_grid, Hamiltonian, kernels\n"
        "from bchsolve.propagator import _advance\n"
        "g = make_grid(1, 1024); x = g.axes[0]\n"
        "H = Hamiltonian('x^2 + 0.1*x^4', 1.0, g)\n"
        "a = np.exp(-x**2 + 0.5j*x).astype(complex)\n"
        "for o in (2, 3):\n"
        f"    t = min(timeit.repeat(lambda: _advance(a, H, 0.0, 0.001+0j, o), number={repeat}, repeat=3)) / {repeat}\n"
        "    print(f'order-{o} step  n=1024  {kernels.BACKEND:>9s} {t*1e6:10.1f}us')\n"
    )
    for pure in ("0", "1"):
        env = dict(os.environ, BCHSOLVE_PURE_PYTHON=pure)
        subprocess.run([sys.executable, "-c", code], env=env, check=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 4096, 16384])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    bench(args.sizes, args.repeat)
    bench_step(args.repeat)


if __name__ == "__main__":
    main()
