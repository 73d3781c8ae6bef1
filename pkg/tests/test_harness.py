import csv
import json
import math
from dataclasses import asdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inviscid_lab.config import ConfigError, SweepConfig, dumps, load_config, loads
from inviscid_lab.diagnostics import ASSUMPTION_COLUMNS, CRITERIA_COLUMNS, ENERGY_COLUMNS
from inviscid_lab.fitting import fit_rate
from inviscid_lab.outputs import CRITERIA_EXTRA, emit_outputs, json_safe
from inviscid_lab.sweep import FIT_METRICS, evaluate_nu, run_sweep, solve_and_store

SHEAR = """\
sweep.scenario = "shear_analytic"   # exact playback
sweep.nu_list = [1e-2, 1e-3, 1e-4]
sweep.samples = 9
grid.policy = "refined"
grid.nx = 8
grid.ny = 129
"""


def canon(obj) -> str:
    """Exact text form; NaN compares equal to NaN here."""
    return json.dumps(json_safe(obj), sort_keys=True)


# -- config ----------------------------------------------------------------------


def test_empty_config_is_all_defaults():
    assert loads("") == SweepConfig()
    assert loads("# only a comment\n\n") == SweepConfig()


def test_values_comments_and_bare_words():
    cfg = loads(SHEAR + 'output.dir = "a#b"  # hash inside quotes\ncorrector.scale = power\n')
    assert cfg.sweep.nu_list == [1e-2, 1e-3, 1e-4]
    assert cfg.output.dir == "a#b"
    assert cfg.corrector.scale == "power"
    assert cfg.nu0 == 1e-2
    assert cfg.t_min == pytest.approx(1e-3)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("sweep.nu_list = [1e-3]\nsweep.bogus = 1\n", ":2: unknown key 'sweep.bogus'; valid keys:"),
        ("nothing.here = 1\n", "valid keys: sweep.scenario"),
        ("grid.nx = 1.5\n", ":1: grid.nx: expected an integer"),
        ("sweep.T = \"long\"\n", ":1: sweep.T: expected a number"),
        ("output.svg = 1\n", "expected true or false"),
        ("grid.nx = 8\ngrid.nx = 9\n", ":2: grid.nx already set on line 1"),
        ("sweep.nu_list = [1e-3, 1e-2]\n", "strictly decreasing"),
        ("sweep.nu_list = [1e-3, -1e-4]\n", "positive"),
        ("sweep.scenario = \"pipe\"\n", "sweep.scenario must be one of"),
        ("sweep.samples = 2\n", "at least 3"),
        ("checks.enabled = [\"speed\"]\n", "unknown checks"),
        ("this line has no equals sign\n", "expected 'section.key = value'"),
        ("sweep.nu_list = [1e-3,\n", "cannot parse value"),
    ],
)
def test_config_errors_name_the_line(text, fragment):
    with pytest.raises(ConfigError) as err:
        loads(text, "case.cfg")
    assert fragment in str(err.value)
    assert "case.cfg" in str(err.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "absent.cfg")


@settings(max_examples=40, deadline=None)
@given(
    nus=st.lists(st.floats(1e-8, 1.0), min_size=0, max_size=5, unique=True),
    nx=st.integers(4, 256),
    svg=st.booleans(),
    scale=st.sampled_from(["prandtl", "power"]),
)
def test_dumps_round_trip(nus, nx, svg, scale):
    cfg = SweepConfig().with_values(
        sweep__nu_list=sorted(nus, reverse=True), grid__nx=nx, output__svg=svg, corrector__scale=scale
    )
    assert loads(dumps(cfg)) == cfg


# -- fitting ------------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    exponent=st.floats(-2.0, 2.0),
    log_pref=st.floats(-5.0, 5.0),
    n=st.integers(3, 8),
)
def test_fit_recovers_exact_power_laws(exponent, log_pref, n):
    nus = [10.0 ** (-k) for k in range(1, n + 1)]
    fit = fit_rate([(nu, math.exp(log_pref) * nu**exponent) for nu in nus])
    assert fit.status == "ok"
    assert abs(fit.exponent - exponent) <= 1e-10
    assert abs(fit.log_prefactor - log_pref) <= 1e-10
    assert fit.points_used == n


def test_fit_constant_and_scale_equivariance():
    pts = [(1e-2, 3.0), (1e-3, 3.0), (1e-4, 3.0)]
    fit = fit_rate(pts)
    assert abs(fit.exponent) <= 1e-12 and fit.r_squared == 1.0
    base = fit_rate([(1e-2, 0.5), (1e-3, 0.31), (1e-4, 0.17), (1e-5, 0.11)])
    scaled = fit_rate([(1e-2, 50.0), (1e-3, 31.0), (1e-4, 17.0), (1e-5, 11.0)])
    assert abs(scaled.exponent - base.exponent) <= 1e-12
    assert abs(scaled.log_prefactor - base.log_prefactor - math.log(100.0)) <= 1e-12


def test_fit_zero_and_degenerate_inputs():
    fit = fit_rate([(1e-2, 1.0), (1e-3, 0.0), (1e-4, 0.01), (1e-5, 0.001)])
    assert fit.status == "ok" and fit.excluded == (1e-3,) and fit.points_used == 3
    assert fit_rate([(1e-2, 0.0), (1e-3, 0.0)]).status == "identically_zero"
    short = fit_rate([(1e-2, 1.0), (1e-3, 0.5)])
    assert short.status == "too_few_points" and math.isnan(short.exponent)
    assert fit_rate([]).status == "too_few_points"
    with pytest.raises(ValueError):
        fit_rate([(1e-2, -1.0), (1e-3, 1.0), (1e-4, 1.0)])
    with pytest.raises(ValueError):
        fit_rate([(0.0, 1.0), (1e-3, 1.0), (1e-4, 1.0)])


# -- sweep -----------------------------------------------------------------------------


def test_zero_velocity_sweep_is_all_zero():
    cfg = loads(SHEAR + "flow.U0 = 0.0\n")
    rep = run_sweep(cfg)
    for r in rep.results:
        assert r.ok
        assert all(v == 0.0 for k, v in r.criteria.items() if k != "nu")
        assert r.sup_err_l2 == 0.0
    for name in ("sup_err_l2", "kato", "bt_boundary_vorticity"):
        assert rep.fits[name]["status"] == "identically_zero"


def test_nu_results_are_isolated():
    cfg = loads(SHEAR)
    full = run_sweep(cfg)
    part = run_sweep(cfg.with_values(sweep__nu_list=[1e-2, 1e-4]))
    by_nu = {r.nu: asdict(r) for r in full.results}
    for r in part.results:
        assert canon(asdict(r)) == canon(by_nu[r.nu])
    assert set(full.fits) == set(FIT_METRICS)


def test_parallel_sweep_matches_serial():
    cfg = loads(SHEAR)
    assert canon(run_sweep(cfg, jobs=2).to_dict()) == canon(run_sweep(cfg, jobs=1).to_dict())


def test_failed_nu_is_quarantined(tmp_path):
    text = f"""\
sweep.scenario = "snapshot_replay"
sweep.nu_list = [1e-2, 1e-3]
sweep.samples = 3
sweep.T = 0.02
grid.nx = 16
grid.ny = 33
flow.snapshot_dir = "{tmp_path}"
checks.enabled = ["complete", "identity"]
"""
    cfg = loads(text)
    solve_and_store(cfg.with_values(sweep__scenario="shear_numeric"), 1e-2, tmp_path)
    rep = run_sweep(cfg)
    status = {r.nu: r.status for r in rep.results}
    assert status[1e-2] == "ok"
    assert status[1e-3].startswith("quarantined")
    assert rep.checks["complete"] == {"passed": False, "quarantined": [1e-3]}
    assert not rep.passed
    assert canon(evaluate_nu(cfg, 1e-2).energy) == canon(rep.results[0].energy)


# -- outputs ---------------------------------------------------------------------------------


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_outputs_byte_identical(tmp_path):
    cfg = loads(SHEAR)
    emit_outputs(run_sweep(cfg).to_dict(), tmp_path / "a")
    emit_outputs(run_sweep(cfg).to_dict(), tmp_path / "b")
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    assert {"summary.json", "energy.csv", "criteria.csv", "assumptions.csv", "kato.svg"} <= set(a)


def test_csv_layout_and_no_svg(tmp_path):
    rep = run_sweep(loads(SHEAR)).to_dict()
    emit_outputs(rep, tmp_path, svg=False)
    assert not list(tmp_path.glob("*.svg"))
    with open(tmp_path / "energy.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["nu", *ENERGY_COLUMNS]
    assert len(rows) == 1 + 3 * 9
    with open(tmp_path / "criteria.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [*CRITERIA_COLUMNS, *CRITERIA_EXTRA]
    assert [float(r[0]) for r in rows[1:]] == [1e-2, 1e-3, 1e-4]
    with open(tmp_path / "assumptions.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(ASSUMPTION_COLUMNS)
    assert len(rows) == 1 + 3 * 4


def test_empty_sweep_writes_headers_only(tmp_path):
    rep = run_sweep(loads("sweep.nu_list = []\n"))
    assert rep.results == [] and rep.passed
    emit_outputs(rep.to_dict(), tmp_path)
    assert (tmp_path / "energy.csv").read_text() == ",".join(["nu", *ENERGY_COLUMNS]) + "\n"
    assert not list(tmp_path.glob("*.svg"))


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="cannot create output directory"):
        emit_outputs({"results": []}, blocker / "out")
