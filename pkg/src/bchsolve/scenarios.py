"""Scenario configs, the built-in experiments, and the run driver.

Config files are line oriented.  ``[section]`` headers prefix the keys that
follow (``[grid]`` then ``n = 256`` is ``grid.n = 256``); keys before the
first header are top level.  ``#`` starts a comment.  Numeric values are
expressions in the declared parameters (``origin = phi0``), so ``pi`` and
``sqrt(2)`` work; ``inf`` and ``-inf`` are accepted where bounds are expected.

Top level: name, description, potential, alpha, param.NAME
grid.*    dims, n, periodic, extent, origin, alpha
eigen.*   count, order, dtau, tolerance, reorth_every, tau, extra_alphas
init.*    kind (eigen | superposition | gaussian), state, states, weights,
          center, sigma, k0
evolve.*  t_start, t_end, order, mode, dtau, dynamic, renorm
region.*  NAME = lo, hi [; lo, hi ...]   (one interval per dimension)
output.*  snapshots, amplitudes, series_every, beat, pair_timing
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dsl import ExprEvalError, ExprSyntaxError, evaluate_scalar, parse_potential
from .eigensolver import EigenOptions, EigenResult, spectrum
from .grid import Grid, Wavefunction, make_grid
from .observables import beat_period, energy_expectation, moments, probability_in_region
from .propagator import IMAGINARY, REAL, EvolvePlan, EvolveStats, Hamiltonian, StepConfig, evolve

PARAM_PREFIX = "param."


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class ScenarioError(RuntimeError):
    def __init__(self, message: str, stage: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ------------------------------------------------------------------ data model


@dataclass(frozen=True)
class GridSpec:
    dims: int = 1
    n: int = 256
    periodic: tuple[bool, ...] = (False,)
    extent: tuple[float | None, ...] = (None,)
    origin: tuple[float, ...] = (0.0,)
    alpha: float | None = None  # coupling used to size alpha-scaled dimensions

    def build(self, alpha_default: float) -> Grid:
        a = self.alpha if self.alpha is not None else alpha_default
        return make_grid(self.dims, self.n, alpha=a, periodic=list(self.periodic),
                         extent=list(self.extent), origin=list(self.origin))


@dataclass(frozen=True)
class EigenSpec:
    count: int = 4
    order: int = 2
    dtau: float = 0.01
    tolerance: float = 1e-8
    reorth_every: int = 1
    tau: float = 0.0
    extra_alphas: tuple[float, ...] = ()

    def options(self) -> EigenOptions:
        return EigenOptions(energy_tolerance=self.tolerance, reorth_every=self.reorth_every,
                            order=self.order, dtau_base=self.dtau)


@dataclass(frozen=True)
class InitSpec:
    kind: str = "eigen"
    state: int = 0
    states: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    sigma: tuple[float, ...] = ()
    k0: tuple[float, ...] = ()


@dataclass(frozen=True)
class EvolveSpec:
    t_start: float = 0.0
    t_end: float = 1.0
    order: int = 2
    mode: str = REAL
    dtau: float = 0.01
    dynamic: bool = False
    renorm: bool = False


@dataclass(frozen=True)
class OutputSpec:
    snapshots: int = 5
    amplitudes: bool = False
    series_every: int = 1
    beat: tuple[int, ...] = ()
    pair_timing: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    potential: str
    alpha: str
    grid: GridSpec
    params: dict = field(default_factory=dict)
    description: str = ""
    eigen: EigenSpec | None = None
    init: InitSpec | None = None
    evolve: EvolveSpec | None = None
    regions: dict = field(default_factory=dict)
    output: OutputSpec = OutputSpec()


# ------------------------------------------------------------------ parsing


_SECTIONS = ("grid", "eigen", "init", "evolve", "region", "output")
_TOP_KEYS = ("name", "description", "potential", "alpha")
_KEYS = {
    "grid": ("dims", "n", "periodic", "extent", "origin", "alpha"),
    "eigen": ("count", "order", "dtau", "tolerance", "reorth_every", "tau", "extra_alphas"),
    "init": ("kind", "state", "states", "weights", "center", "sigma", "k0"),
    "evolve": ("t_start", "t_end", "order", "mode", "dtau", "dynamic", "renorm"),
    "output": ("snapshots", "amplitudes", "series_every", "beat", "pair_timing"),
}


def _split_lines(text: str) -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line)`` with section prefixes applied."""
    raw: dict[str, tuple[str, int]] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"malformed section header {body!r}", lineno)
            section = body[1:-1].strip()
            if section not in _SECTIONS and section != "":
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in body:
            raise ConfigError(f"expected key = value, got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if section and not key.startswith(section + "."):
            key = f"{section}.{key}"
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {raw[key][1]})", lineno)
        _check_key(key, lineno)
        raw[key] = (value, lineno)
    return raw


def _check_key(key: str, lineno: int) -> None:
    if key in _TOP_KEYS or key.startswith(PARAM_PREFIX) or key.startswith("region."):
        if key.startswith(("param.", "region.")) and not key.split(".", 1)[1].isidentifier():
            raise ConfigError(f"bad name in key {key!r}", lineno)
        return
    head, _, tail = key.partition(".")
    if head in _KEYS and tail in _KEYS[head]:
        return
    raise ConfigError(f"unknown key {key!r}", lineno)


class _Reader:
    def __init__(self, raw, params):
        self.raw = raw
        self.params = params
        self.used: set[str] = set()

    def has(self, key):
        return key in self.raw

    def text(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        self.used.add(key)
        return self.raw[key][0]

    def line(self, key):
        return self.raw[key][1] if key in self.raw else None

    def number(self, text: str, key: str) -> float:
        t = text.strip()
        if t in ("inf", "+inf"):
            return math.inf
        if t == "-inf":
            return -math.inf
        try:
            return evaluate_scalar(parse_potential(t, tuple(self.params)), 0.0, self.params)
        except (ExprSyntaxError, ExprEvalError) as err:
            raise ConfigError(f"{key}: {err}", self.line(key)) from err

    def num(self, key, default):
        return self.number(self.text(key), key) if key in self.raw else default

    def integer(self, key, default):
        if key not in self.raw:
            return default
        v = self.number(self.text(key), key)
        if v != int(v):
            raise ConfigError(f"{key} must be an integer, got {v}", self.line(key))
        return int(v)

    def nums(self, key, default=()):
        if key not in self.raw:
            return tuple(default)
        t = self.text(key)
        return tuple(self.number(p, key) for p in t.split(",")) if t.strip() else ()

    def ints(self, key, default=()):
        vals = self.nums(key, default)
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{key} must list integers", self.line(key))
        return tuple(int(v) for v in vals)

    def flag(self, key, default):
        if key not in self.raw:
            return default
        t = self.text(key).lower()
        if t in ("true", "yes", "1", "on"):
            return True
        if t in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key} must be true or false, got {t!r}", self.line(key))

    def per_dim(self, key, dims, default, conv):
        if key not in self.raw:
            return (default,) * dims
        parts = [p.strip() for p in self.text(key).split(",")]
        if len(parts) == 1:
            parts = parts * dims
        if len(parts) != dims:
            raise ConfigError(f"{key} needs 1 or {dims} entries", self.line(key))
        return tuple(conv(p) for p in parts)


def load_config(text: str) -> Scenario:
    raw = _split_lines(text)
    params = {}
    reader = _Reader(raw, params)
    for key in sorted(k for k in raw if k.startswith(PARAM_PREFIX)):
        params[key[len(PARAM_PREFIX):]] = reader.number(reader.text(key), key)

    name = reader.text("name", "unnamed")
    potential = reader.text("potential")
    alpha = reader.text("alpha", "1")
    for key, value in (("potential", potential), ("alpha", alpha)):
        try:
            expr = parse_potential(value, tuple(params))
        except ExprSyntaxError as err:
            raise ConfigError(f"{key}: {err}", reader.line(key)) from err
        if key == "alpha" and expr.tree.free_symbols() & {"x", "y", "z"}:
            raise ConfigError("alpha may depend only on t and parameters", reader.line(key))

    dims = reader.integer("grid.dims", 1)
    if not 1 <= dims <= 3:
        raise ConfigError(f"grid.dims must be 1..3, got {dims}", reader.line("grid.dims"))

    def bool_part(p):
        return p.lower() in ("true", "yes", "1", "on")

    def extent_part(p):
        return None if p.lower() in ("auto", "none") else reader.number(p, "grid.extent")

    grid = GridSpec(
        dims=dims,
        n=reader.integer("grid.n", 256),
        periodic=reader.per_dim("grid.periodic", dims, False, bool_part),
        extent=reader.per_dim("grid.extent", dims, None, extent_part),
        origin=reader.per_dim("grid.origin", dims, 0.0, lambda p: reader.number(p, "grid.origin")),
        alpha=reader.num("grid.alpha", None),
    )
    for p, e in zip(grid.periodic, grid.extent):
        if p and e is None:
            raise ConfigError("periodic dimensions need grid.extent (the period)", reader.line("grid.periodic"))

    eigen = None
    if any(k.startswith("eigen.") for k in raw):
        eigen = EigenSpec(
            count=reader.integer("eigen.count", 4),
            order=reader.integer("eigen.order", 2),
            dtau=reader.num("eigen.dtau", 0.01),
            tolerance=reader.num("eigen.tolerance", 1e-8),
            reorth_every=reader.integer("eigen.reorth_every", 1),
            tau=reader.num("eigen.tau", 0.0),
            extra_alphas=reader.nums("eigen.extra_alphas"),
        )
        if eigen.count < 1:
            raise ConfigError("eigen.count must be >= 1", reader.line("eigen.count"))
        if eigen.order not in (1, 2, 3):
            raise ConfigError("eigen.order must be 1, 2 or 3", reader.line("eigen.order"))
        if any(not a > 0 for a in eigen.extra_alphas):
            raise ConfigError("eigen.extra_alphas must be positive", reader.line("eigen.extra_alphas"))

    init = None
    if any(k.startswith("init.") for k in raw):
        kind = reader.text("init.kind", "eigen")
        if kind not in ("eigen", "superposition", "gaussian"):
            raise ConfigError(f"unknown init.kind {kind!r}", reader.line("init.kind"))
        init = InitSpec(
            kind=kind,
            state=reader.integer("init.state", 0),
            states=reader.ints("init.states"),
            weights=reader.nums("init.weights"),
            center=reader.nums("init.center", (0.0,) * dims),
            sigma=reader.nums("init.sigma", (1 / math.sqrt(2),) * dims),
            k0=reader.nums("init.k0", (0.0,) * dims),
        )
        if kind == "gaussian":
            for key, v in (("init.center", init.center), ("init.sigma", init.sigma), ("init.k0", init.k0)):
                if len(v) != dims:
                    raise ConfigError(f"{key} needs {dims} entries", reader.line(key))
            if any(not s > 0 for s in init.sigma):
                raise ConfigError("init.sigma must be positive", reader.line("init.sigma"))
        else:
            if eigen is None:
                raise ConfigError(f"init.kind = {kind} needs an [eigen] section", reader.line("init.kind"))
            idx = (init.state,) if kind == "eigen" else init.states
            if kind == "superposition":
                if not idx:
                    raise ConfigError("init.states is empty", reader.line("init.kind"))
                if init.weights and len(init.weights) != len(idx):
                    raise ConfigError("init.weights must match init.states", reader.line("init.weights"))
            if any(not 0 <= i < eigen.count for i in idx):
                raise ConfigError(f"eigenpair index out of range for eigen.count = {eigen.count}",
                                  reader.line("init.state") or reader.line("init.states"))

    evolve_spec = None
    if any(k.startswith("evolve.") for k in raw):
        evolve_spec = EvolveSpec(
            t_start=reader.num("evolve.t_start", 0.0),
            t_end=reader.num("evolve.t_end", 1.0),
            order=reader.integer("evolve.order", 2),
            mode=reader.text("evolve.mode", REAL),
            dtau=reader.num("evolve.dtau", 0.01),
            dynamic=reader.flag("evolve.dynamic", False),
            renorm=reader.flag("evolve.renorm", False),
        )
        if evolve_spec.mode not in (REAL, IMAGINARY):
            raise ConfigError(f"evolve.mode must be real or imaginary", reader.line("evolve.mode"))
        if evolve_spec.order not in (1, 2, 3):
            raise ConfigError("evolve.order must be 1, 2 or 3", reader.line("evolve.order"))
        if not evolve_spec.t_end >= evolve_spec.t_start:
            raise ConfigError("evolve.t_end precedes evolve.t_start", reader.line("evolve.t_end"))
        if not evolve_spec.dtau > 0:
            raise ConfigError("evolve.dtau must be positive", reader.line("evolve.dtau"))
        if init is None:
            raise ConfigError("an [evolve] section needs an [init] section")

    regions = {}
    for key in sorted(k for k in raw if k.startswith("region.")):
        parts = [p for p in reader.text(key).split(";") if p.strip()]
        box = []
        for p in parts:
            lo_hi = [s for s in p.split(",")]
            if len(lo_hi) != 2:
                raise ConfigError(f"{key}: each interval is 'lo, hi'", reader.line(key))
            lo, hi = (reader.number(s, key) for s in lo_hi)
            if not lo < hi:
                raise ConfigError(f"{key}: empty interval [{lo}, {hi}]", reader.line(key))
            box.append((lo, hi))
        if len(box) != dims:
            raise ConfigError(f"{key} needs {dims} interval(s)", reader.line(key))
        regions[key.split(".", 1)[1]] = tuple(box)

    output = OutputSpec(
        snapshots=reader.integer("output.snapshots", 5),
        amplitudes=reader.flag("output.amplitudes", False),
        series_every=reader.integer("output.series_every", 1),
        beat=reader.ints("output.beat"),
        pair_timing=reader.flag("output.pair_timing", False),
    )
    if output.snapshots < 0 or output.series_every < 1:
        raise ConfigError("output.snapshots must be >= 0 and output.series_every >= 1")
    if output.beat and (len(output.beat) != 2 or eigen is None or max(output.beat) >= eigen.count):
        raise ConfigError("output.beat needs two eigenpair indices below eigen.count", reader.line("output.beat"))
    if output.pair_timing and (eigen is None or eigen.count < 4):
        raise ConfigError("output.pair_timing needs eigen.count >= 4", reader.line("output.pair_timing"))

    return Scenario(
        name=name, potential=potential, alpha=alpha, grid=grid, params=params,
        description=reader.text("description", ""), eigen=eigen, init=init,
        evolve=evolve_spec, regions=regions, output=output,
    )


def load_config_file(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    return load_config(text)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "auto"
    if isinstance(v, float):
        return "inf" if v == math.inf else "-inf" if v == -math.inf else repr(v)
    return str(v)


def _join(vals) -> str:
    return ", ".join(_fmt(v) for v in vals)


def serialize(s: Scenario) -> str:
    """Config text that load_config() turns back into an equal Scenario."""
    out = [f"name = {s.name}"]
    if s.description:
        out.append(f"description = {s.description}")
    out.append(f"potential = {s.potential}")
    out.append(f"alpha = {s.alpha}")
    for k, v in s.params.items():
        out.append(f"{PARAM_PREFIX}{k} = {_fmt(float(v))}")
    g = s.grid
    out += ["", "[grid]", f"dims = {g.dims}", f"n = {g.n}", f"periodic = {_join(g.periodic)}",
            f"extent = {_join(g.extent)}", f"origin = {_join(g.origin)}"]
    if g.alpha is not None:
        out.append(f"alpha = {_fmt(float(g.alpha))}")
    if s.eigen:
        e = s.eigen
        out += ["", "[eigen]", f"count = {e.count}", f"order = {e.order}", f"dtau = {_fmt(e.dtau)}",
                f"tolerance = {_fmt(e.tolerance)}", f"reorth_every = {e.reorth_every}", f"tau = {_fmt(e.tau)}"]
        if e.extra_alphas:
            out.append(f"extra_alphas = {_join(e.extra_alphas)}")
    if s.init:
        i = s.init
        out += ["", "[init]", f"kind = {i.kind}", f"state = {i.state}"]
        if i.states:
            out.append(f"states = {_join(i.states)}")
        if i.weights:
            out.append(f"weights = {_join(i.weights)}")
        out += [f"center = {_join(i.center)}", f"sigma = {_join(i.sigma)}", f"k0 = {_join(i.k0)}"]
    if s.evolve:
        v = s.evolve
        out += ["", "[evolve]", f"t_start = {_fmt(v.t_start)}", f"t_end = {_fmt(v.t_end)}", f"order = {v.order}",
                f"mode = {v.mode}", f"dtau = {_fmt(v.dtau)}", f"dynamic = {_fmt(v.dynamic)}",
                f"renorm = {_fmt(v.renorm)}"]
    if s.regions:
        out += ["", "[region]"]
        for k, box in s.regions.items():
            out.append(f"{k} = " + "; ".join(f"{_fmt(lo)}, {_fmt(hi)}" for lo, hi in box))
    o = s.output
    out += ["", "[output]", f"snapshots = {o.snapshots}", f"amplitudes = {_fmt(o.amplitudes)}",
            f"series_every = {o.series_every}", f"pair_timing = {_fmt(o.pair_timing)}"]
    if o.beat:
        out.append(f"beat = {_join(o.beat)}")
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------ builtins


NOT_GATE_FALL = 5.0
NOT_GATE_RISE = 17.8
NOT_GATE_CAPTION_RISE = 13.8


def not_gate_schedule_text(rise_centre: float = NOT_GATE_RISE) -> str:
    return (f"10 - 4.8*(erf((t - 5)/(0.8*sqrt(2))) - erf((t - {rise_centre!r})/(1.6*sqrt(2))))")


def alpha_schedule_not_gate(tau: float, rise_centre: float = NOT_GATE_RISE) -> float:
    """Coupling 10 -> 0.4 -> 10: a fall centred at 5 and a rise at ``rise_centre``.

    The rise sits one half beat of the alpha = 0.4 ground pair (12.8) after
    the fall.  Pass ``NOT_GATE_CAPTION_RISE`` for the alternative timing.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return evaluate_scalar(parse_potential(not_gate_schedule_text(rise_centre)), tau)


SQUID_POTENTIAL = "1 - cos(x) + (x - phi0)^2/(2*beta_l)"

_SQUID_HEAD = f"""
potential = {SQUID_POTENTIAL}
param.phi0 = pi
param.beta_l = pi
[grid]
n = 512
extent = 16
origin = phi0
"""

_BUILTIN_TEXT = {
    "harmonic": """
name = harmonic
description = harmonic oscillator, alpha = 1; levels 2n + 1
potential = x^2
alpha = 1
[grid]
n = 256
[eigen]
count = 4
""",
    "mathieu": """
name = mathieu
description = U = 2 + 2 cos 2x on one 2 pi period; Mathieu spectrum
potential = 2 + 2*cos(2*x)
alpha = 1
[grid]
n = 256
periodic = true
extent = 2*pi
[eigen]
count = 11
""",
    "cosine100": """
name = cosine100
description = U = 2 + 2 cos 2x at alpha = 100; near-degenerate pairs
potential = 2 + 2*cos(2*x)
alpha = 100
[grid]
n = 256
periodic = true
extent = 2*pi
[eigen]
count = 10
""",
    "twod": """
name = twod
description = 2D periodic potential; beat of (psi00 + psi01)/sqrt 2
potential = 3 + cos(2*y) - 2*cos(x)*cos(y)
alpha = 1
[grid]
dims = 2
n = 128
periodic = true
extent = 2*pi
[eigen]
count = 3
[init]
kind = superposition
states = 0, 1
weights = 1, 1
[evolve]
t_end = 8
[output]
beat = 0, 1
snapshots = 5
series_every = 10
""",
    "gauss_free": """
name = gauss_free
description = free Gaussian packet; horizon short enough that nothing wraps
potential = 0
alpha = 1
[grid]
n = 1024
extent = 32
[init]
kind = gaussian
center = 0
sigma = 1/sqrt(2)
k0 = 4
[evolve]
t_end = 1
""",
    "gauss_wall": """
name = gauss_wall
description = Gaussian packet reflecting off a hard wall at x = 8
# A finite wall with dtau*height = 1: a 1e6 wall aliases to a leaky phase step.
potential = wall(-100, 8, 2000)
alpha = 1
[grid]
n = 1024
extent = 32
[init]
kind = gaussian
center = 0
sigma = 1/sqrt(2)
k0 = 4
[evolve]
t_end = 2.5
dtau = 0.0005
""",
    "gauss_box": """
name = gauss_box
description = Gaussian packet in a box with hard walls at x = -8 and x = 8
potential = wall(-8, 8, 2000)
alpha = 1
[grid]
n = 1024
extent = 32
[init]
kind = gaussian
center = 0
sigma = 1/sqrt(2)
k0 = 4
[evolve]
t_end = 40
dtau = 0.0005
[output]
series_every = 200
""",
    "squid_static": "name = squid_static\n"
    "description = SQUID, beta_L = phi0 = pi, alpha = 10, with the alpha = 0.4 spectrum\n"
    "alpha = 10\n" + _SQUID_HEAD + """
[eigen]
count = 4
extra_alphas = 0.4
[output]
pair_timing = true
""",
    "squid_not": "name = squid_not\n"
    "description = SQUID NOT gate: alpha lowered 10 -> 0.4 for half a beat, then raised\n"
    f"alpha = {not_gate_schedule_text()}\n" + _SQUID_HEAD + """
[eigen]
count = 4
extra_alphas = 0.4
[init]
kind = superposition
states = 0, 1
weights = 1, 1
[evolve]
t_end = 24
[region]
negative = -inf, phi0
positive = phi0, inf
[output]
pair_timing = true
series_every = 10
""",
}

BUILTIN_NAMES = tuple(_BUILTIN_TEXT)


def builtin(name: str) -> Scenario:
    if name not in _BUILTIN_TEXT:
        raise ConfigError(f"unknown builtin {name!r}; available: {', '.join(BUILTIN_NAMES)}")
    return load_config(_BUILTIN_TEXT[name])


def builtin_text(name: str) -> str:
    builtin(name)
    return _BUILTIN_TEXT[name].lstrip()


def resolve(ref: str) -> Scenario:
    """``builtin:NAME`` or a config-file path."""
    if ref.startswith("builtin:"):
        return builtin(ref.split(":", 1)[1])
    return load_config_file(ref)


# ------------------------------------------------------------------ running


@dataclass
class PairTiming:
    alpha: float
    half_beat: float
    delta_10: float
    transition: float


@dataclass
class RunReport:
    name: str
    alpha_text: str
    energies: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    extra_spectra: dict = field(default_factory=dict)
    timings: list = field(default_factory=list)
    beat: float | None = None
    initial_energy: float | None = None
    final_energy: float | None = None
    final_norm: float | None = None
    final_mean: tuple = ()
    final_spread: tuple = ()
    final_regions: dict = field(default_factory=dict)
    steps: int = 0
    retries: int = 0
    wall_clock: float = 0.0
    out_dir: str | None = None

    def lines(self) -> list[str]:
        out = [f"scenario {self.name}", f"alpha(t) = {self.alpha_text}"]
        if self.energies:
            out.append("energies: " + ", ".join(f"{e:.6f}" for e in self.energies))
        for a, es in self.extra_spectra.items():
            out.append(f"energies at alpha={a:g}: " + ", ".join(f"{e:.6f}" for e in es))
        for t in self.timings:
            out.append(f"alpha={t.alpha:g}: half beat pi/(E1-E0) = {t.half_beat:.4f}; "
                       f"dE10 = {t.delta_10:.5f}; 2 pi/dE10 = {t.transition:.4f}")
        if self.beat is not None:
            out.append(f"beat period = {self.beat:.4f}")
        if self.final_energy is not None:
            out.append(f"energy: initial {self.initial_energy:.6f}, final {self.final_energy:.6f}")
            out.append(f"final norm {self.final_norm:.12f}, mean {_tuple_str(self.final_mean)}, "
                       f"spread {_tuple_str(self.final_spread)}")
            for k, p in self.final_regions.items():
                out.append(f"P({k}) = {p:.6f}")
            out.append(f"steps {self.steps}, retries {self.retries}")
        out.append(f"wall clock {self.wall_clock:.2f} s")
        return out


def _tuple_str(t) -> str:
    return "(" + ", ".join(f"{v:.6f}" for v in t) + ")"


def pair_timing(energies, alpha: float) -> PairTiming:
    """Time scales of a double well from its two lowest parity pairs."""
    e0, e1, e2, e3 = energies[:4]
    d10 = 0.5 * (e2 + e3) - 0.5 * (e0 + e1)
    return PairTiming(alpha, 0.5 * beat_period(e0, e1), d10, 2 * math.pi / d10)


def gaussian_packet(g: Grid, center, sigma, k0) -> Wavefunction:
    """Product of normalised 1D packets with density spread ``sigma``."""
    psi = np.ones(g.shape, dtype=complex)
    for b, c, s, k in zip(g.mesh(), center, sigma, k0):
        psi = psi * (2 * math.pi * s * s) ** -0.25 * np.exp(-((b - c) ** 2) / (4 * s * s) + 1j * k * b)
    return Wavefunction(g, psi)


def build_initial(s: Scenario, g: Grid, states: list[EigenResult]) -> Wavefunction:
    init = s.init
    if init.kind == "gaussian":
        psi = gaussian_packet(g, init.center, init.sigma, init.k0)
    elif init.kind == "eigen":
        psi = states[init.state].state
    else:
        weights = init.weights or (1.0,) * len(init.states)
        amps = sum(w * states[i].state.amplitudes for i, w in zip(init.states, weights))
        psi = Wavefunction(g, amps)
    return psi * (1.0 / psi.norm())


def snapshot_times(t0: float, t1: float, count: int) -> tuple[float, ...]:
    if count <= 0:
        return ()
    if t1 == t0 or count == 1:
        return (t1,) if count == 1 and t1 != t0 else (t0,)
    return tuple(sorted(set(float(t) for t in np.linspace(t0, t1, count))))


def _g17(v: float) -> str:
    return "%.17g" % v


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_array(a) -> str:
    return "[" + ",".join(_g17(float(v)) for v in np.ravel(a)) + "]"


def run(s: Scenario, out_dir=None, *, order: int | None = None, snapshots: int | None = None,
        eigen_count: int | None = None, evolve_enabled: bool = True) -> RunReport:
    """Execute ``s``: eigensolve and/or evolve, and write the data files to ``out_dir``."""
    started = time.perf_counter()
    if order is not None:
        if s.eigen:
            s = replace(s, eigen=replace(s.eigen, order=order))
        if s.evolve:
            s = replace(s, evolve=replace(s.evolve, order=order))
    if snapshots is not None:
        s = replace(s, output=replace(s.output, snapshots=snapshots))
    if eigen_count is not None:
        s = replace(s, eigen=replace(s.eigen or EigenSpec(), count=eigen_count))
    report = RunReport(name=s.name, alpha_text=s.alpha)

    stage = "setup"
    try:
        t_first = s.evolve.t_start if (s.evolve and evolve_enabled) else (s.eigen.tau if s.eigen else 0.0)
        alpha0 = evaluate_scalar(parse_potential(s.alpha, tuple(s.params)), t_first, s.params)
        g = s.grid.build(alpha0)
        H = Hamiltonian(s.potential, s.alpha, g, s.params)

        states: list[EigenResult] = []
        energy_rows = []
        if s.eigen:
            stage = "eigensolve"
            opts = s.eigen.options()
            states = spectrum(H, s.eigen.count, opts, tau0=s.eigen.tau)
            report.energies = [r.energy for r in states]
            report.residuals = [r.residual for r in states]
            a_main = H.alpha(s.eigen.tau)
            energy_rows += [(i, r, a_main) for i, r in enumerate(states)]
            if s.output.pair_timing:
                report.timings.append(pair_timing(report.energies, a_main))
            for a in s.eigen.extra_alphas:
                Ha = Hamiltonian(s.potential, float(a), g, s.params)
                extra = spectrum(Ha, s.eigen.count, opts, tau0=s.eigen.tau)
                report.extra_spectra[float(a)] = [r.energy for r in extra]
                energy_rows += [(i, r, float(a)) for i, r in enumerate(extra)]
                if s.output.pair_timing:
                    report.timings.append(pair_timing(report.extra_spectra[float(a)], float(a)))
            if s.output.beat:
                i, j = s.output.beat
                report.beat = beat_period(report.energies[i], report.energies[j])

        series_rows = []
        snaps = []
        if s.evolve and evolve_enabled:
            stage = "evolve"
            ev = s.evolve
            psi0 = build_initial(s, g, states)
            cfg = StepConfig(order=ev.order, mode=ev.mode, dtau_base=ev.dtau, dynamic=ev.dynamic,
                             renorm_each_step=ev.renorm)
            plan = EvolvePlan(ev.t_start, ev.t_end, cfg,
                              snapshot_times(ev.t_start, ev.t_end, s.output.snapshots))
            stats = EvolveStats()
            report.initial_energy = energy_expectation(psi0, H, ev.t_start)
            counter = [0]

            def record(tau, psi):
                series_rows.append(_series_row(tau, psi, H, s.regions))

            record(ev.t_start, psi0)

            def on_step(tau, psi):
                counter[0] += 1
                if counter[0] % s.output.series_every == 0 or tau >= ev.t_end:
                    record(tau, psi)

            final, snaps = evolve(psi0, H, plan, keep_amplitudes=s.output.amplitudes, on_step=on_step, stats=stats)
            if series_rows[-1][0] != ev.t_end:
                record(ev.t_end, final)
            unit = final * (1.0 / final.norm())
            report.final_norm = final.norm()
            report.final_energy = energy_expectation(unit, H, ev.t_end)
            report.final_mean, report.final_spread = moments(unit)
            report.final_regions = {k: probability_in_region(unit, box) for k, box in s.regions.items()}
            report.steps, report.retries = stats.steps, stats.retries

        if out_dir is not None:
            stage = "output"
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            if energy_rows:
                text = "index,energy,residual,steps,alpha\n" + "".join(
                    f"{i},{_g17(r.energy)},{_g17(r.residual)},{r.steps_taken},{_g17(a)}\n" for i, r, a in energy_rows)
                _atomic_write(out / "energies.csv", text)
            if series_rows:
                _atomic_write(out / "series.csv", _series_csv(series_rows, g.dims, s.regions))
            if snaps:
                _atomic_write(out / "snapshots.jsonl", "".join(_snapshot_json(sn, g) + "\n" for sn in snaps))
            # report.txt leaves out the wall clock so reruns are byte-identical
            _atomic_write(out / "report.txt", "\n".join(report.lines()[:-1]) + "\n")
            report.out_dir = str(out)
    except (ConfigError, ScenarioError):
        raise
    except Exception as err:  # annotate with the stage that failed
        raise ScenarioError(f"{type(err).__name__}: {err}", stage) from err
    report.wall_clock = time.perf_counter() - started
    return report


def _series_row(tau, psi, H, regions):
    n = psi.norm()
    unit = psi * (1.0 / n)
    mean, spread = moments(unit)
    probs = [probability_in_region(unit, box) for box in regions.values()]
    return (float(tau), n, energy_expectation(unit, H, tau), mean, spread, probs)


def _series_csv(rows, dims, regions) -> str:
    axes = "xyz"[:dims]
    head = ["tau", "norm", "energy"] + [f"mean_{a}" for a in axes] + [f"spread_{a}" for a in axes]
    head += [f"P_{k}" for k in regions]
    lines = [",".join(head)]
    for tau, n, e, mean, spread, probs in rows:
        lines.append(",".join(_g17(v) for v in (tau, n, e, *mean, *spread, *probs)))
    return "\n".join(lines) + "\n"


def _snapshot_json(sn, g: Grid) -> str:
    parts = [f'"tau":{_g17(sn.tau)}', f'"grid":{json.dumps(_grid_json(g), sort_keys=True)}',
             f'"energy":{_g17(sn.energy)}', f'"norm":{_g17(sn.norm)}', f'"density":{_json_array(sn.density)}']
    if sn.amplitudes is not None:
        parts += [f'"re":{_json_array(sn.amplitudes.real)}', f'"im":{_json_array(sn.amplitudes.imag)}']
    return "{" + ",".join(parts) + "}"


def _grid_json(g: Grid) -> dict:
    d = g.describe()
    d["origin"] = [_g17(v) for v in d["origin"]]
    d["spacing"] = [_g17(v) for v in d["spacing"]]
    d["kspacing"] = [_g17(v) for v in d["kspacing"]]
    d["period"] = [None if p is None else _g17(p) for p in d["period"]]
    return d
