import json
import math

import numpy as np
import pytest

from bchsolve.scenarios import (BUILTIN_NAMES, NOT_GATE_CAPTION_RISE, ConfigError, ScenarioError,
                                alpha_schedule_not_gate, builtin, builtin_text, load_config, load_config_file,
                                resolve, run, serialize)
from bchsolve.dsl import evaluate_scalar, parse_potential

MINIMAL = """
potential = x^2
alpha = 1
[grid]
n = 256
[eigen]
count = 4
"""

PACKET = """
name = packet
potential = x^2
alpha = 1
[grid]
n = 128
extent = 16
[init]
kind = gaussian
center = 1
sigma = 0.7
k0 = 0.5
[evolve]
t_start = {t0}
t_end = {t1}
[output]
snapshots = 3
amplitudes = true
"""


def test_minimal_config():
    s = load_config(MINIMAL)
    assert s.potential == "x^2" and s.alpha == "1"
    assert s.grid.n == 256 and s.eigen.count == 4 and s.evolve is None


def test_syntax_error_reports_potential_line():
    with pytest.raises(ConfigError) as err:
        load_config("name = bad\npotential = cos(\n")
    assert err.value.line == 2 and "offset 4" in str(err.value)


@pytest.mark.parametrize("text, line", [
    ("potential = x\n[grid]\nbins = 8\n", 3),
    ("potential = x\npotential = y\n", 2),
    ("potential = x\n[nonsense]\n", 2),
    ("potential = x\nnot a pair\n", 2),
    ("potential = x\n[eigen]\ncount = 2\n[init]\nstate = 3\n", 5),
    ("potential = x\nalpha = 1 + x\n", 2),
    ("potential = x\n[grid]\nperiodic = true\n", 3),
])
def test_config_errors_carry_lines(text, line):
    with pytest.raises(ConfigError) as err:
        load_config(text)
    assert err.value.line == line


def test_missing_potential():
    with pytest.raises(ConfigError):
        load_config("alpha = 1\n")


def test_not_gate_schedule():
    s = builtin("squid_not")
    a = parse_potential(s.alpha)
    assert evaluate_scalar(a, 0.0) == pytest.approx(10.0, abs=1e-4)
    assert alpha_schedule_not_gate(0.0) == pytest.approx(10.0, abs=1e-3)
    assert alpha_schedule_not_gate(9.0) == pytest.approx(0.41, abs=0.02)
    assert alpha_schedule_not_gate(30.0) == pytest.approx(10.0, abs=1e-3)
    assert alpha_schedule_not_gate(9.0, NOT_GATE_CAPTION_RISE) == pytest.approx(0.41, abs=0.02)
    with pytest.raises(ValueError):
        alpha_schedule_not_gate(-1.0)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_round_trip(name):
    s = builtin(name)
    assert load_config(serialize(s)) == s
    assert load_config(builtin_text(name)) == s


def test_builtin_contents():
    assert len(BUILTIN_NAMES) == 9
    g = builtin("gauss_free").init
    assert g.center == (0.0,) and g.sigma == pytest.approx((1 / math.sqrt(2),)) and g.k0 == (4.0,)
    sq = builtin("squid_static")
    assert sq.params == {"phi0": math.pi, "beta_l": math.pi} and sq.alpha == "10"


def test_unknown_builtin_lists_names():
    with pytest.raises(ConfigError) as err:
        builtin("nope")
    for name in BUILTIN_NAMES:
        assert name in str(err.value)
    with pytest.raises(ConfigError):
        resolve("builtin:nope")


def test_resolve_file(tmp_path):
    p = tmp_path / "h.cfg"
    p.write_text(MINIMAL)
    assert resolve(str(p)) == load_config(MINIMAL)
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.cfg")


def test_zero_step_plan(tmp_path):
    rep = run(load_config(PACKET.format(t0=0.5, t1=0.5)), tmp_path)
    assert rep.steps == 0
    lines = (tmp_path / "snapshots.jsonl").read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["tau"] == 0.5
    assert rep.final_energy == rep.initial_energy
    series = (tmp_path / "series.csv").read_text().splitlines()
    assert len(series) == 2


def test_outputs_and_determinism(tmp_path):
    s = load_config(PACKET.format(t0=0, t1=0.3))
    run(s, tmp_path / "a")
    run(s, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["report.txt", "series.csv", "snapshots.jsonl"]
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    head = (tmp_path / "a" / "series.csv").read_text().splitlines()[0]
    assert head == "tau,norm,energy,mean_x,spread_x"
    snaps = [json.loads(line) for line in (tmp_path / "a" / "snapshots.jsonl").read_text().splitlines()]
    assert [sn["tau"] for sn in snaps] == pytest.approx([0.0, 0.15, 0.3])
    assert {"re", "im", "density", "grid", "energy", "norm"} <= set(snaps[0])
    assert len(snaps[0]["density"]) == 128


def test_eigen_outputs(tmp_path):
    rep = run(load_config(MINIMAL), tmp_path)
    rows = (tmp_path / "energies.csv").read_text().splitlines()
    assert rows[0] == "index,energy,residual,steps,alpha"
    assert [float(r.split(",")[1]) for r in rows[1:]] == pytest.approx([1, 3, 5, 7], abs=1e-3)
    assert rep.energies == pytest.approx([1, 3, 5, 7], abs=1e-3)


def test_mathieu_run(tmp_path):
    run(builtin("mathieu"), tmp_path, eigen_count=2)
    first = (tmp_path / "energies.csv").read_text().splitlines()[1].split(",")
    assert float(first[1]) == pytest.approx(1.54, abs=0.01)


def test_regions_in_series(tmp_path):
    text = PACKET.format(t0=0, t1=0.1) + "[region]\nleft = -inf, 0\nright = 0, inf\n"
    run(load_config(text), tmp_path)
    rows = (tmp_path / "series.csv").read_text().splitlines()
    assert rows[0].endswith("P_left,P_right")
    p = [float(v) for v in rows[-1].split(",")[-2:]]
    assert sum(p) == pytest.approx(1.0, abs=1e-9)


def test_failures_name_the_stage():
    text = "potential = 1/x\nalpha = 1\n[grid]\nn = 8\nperiodic = true\nextent = 8\norigin = 0.5\n[eigen]\ncount = 1\n"
    with pytest.raises(ScenarioError) as err:
        run(load_config(text))
    assert err.value.stage == "setup" or err.value.stage == "eigensolve"
    assert "(0.0,)" in str(err.value)
