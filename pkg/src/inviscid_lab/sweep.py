"""Viscosity sweeps: one solve-and-diagnose job per nu, then rate fits."""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analytic import BumpSpec, EulerTrace
from .config import SweepConfig
from .corrector import CorrectorParams, CorrectorScale
from .diagnostics import (
    History,
    assumption_report,
    criteria_report,
    energy_history,
    history_from_runs,
    shear_history,
)
from .fields import Grid, lp_norm
from .fitting import fit_rate
from .solver import (
    InitialCondition,
    SolverConfig,
    SolverError,
    Trajectory,
    dump_snapshot,
    load_snapshot,
    run,
)

log = logging.getLogger(__name__)

FIT_METRICS = (
    "sup_err_l2",
    "sup_v_l2",
    "kato",
    "kelliher",
    "temam_wang",
    "bt_boundary_vorticity",
    "ckv",
    "wang_integral",
    "layer_sup_integral",
)


def sample_times(cfg: SweepConfig) -> np.ndarray:
    s = cfg.sweep
    if s.spacing == "geometric":
        t = np.geomspace(cfg.t_min, s.T, s.samples)
    else:
        t = np.linspace(cfg.t_min, s.T, s.samples)
    t[0], t[-1] = cfg.t_min, s.T
    return t


def grid_for(cfg: SweepConfig, nu: float) -> Grid:
    """Grid for one viscosity under the configured policy.

    ``refined`` grades the x2 nodes so that the first cell is
    sqrt(nu t_min)/cells_per_layer.
    """
    g = cfg.grid
    common = dict(length_x1=g.length_x1, height_x2=g.height_x2, top_bc=g.top_bc)
    if g.policy == "fixed":
        return Grid(g.nx, g.ny, grading=g.grading, **common)
    h0 = math.sqrt(nu * cfg.t_min) / g.cells_per_layer
    return Grid.with_wall_spacing(g.nx, g.ny, h0, **common)


def corrector_params(cfg: SweepConfig, nu: float, trace) -> CorrectorParams:
    c = cfg.corrector
    scale = CorrectorScale(c.scale, c.a) if c.scale == "power" else CorrectorScale()
    return CorrectorParams(nu, trace, BumpSpec(), scale, c.eta, cfg.nu0)


def initial_condition(cfg: SweepConfig) -> InitialCondition:
    f = cfg.flow
    if cfg.sweep.scenario == "perturbed_shear":
        return InitialCondition("perturbed_shear", f.U0, f.amplitude, f.mode, f.length_scale)
    return InitialCondition("shear", f.U0)


def solver_configs(cfg: SweepConfig, nu: float) -> tuple[SolverConfig, SolverConfig]:
    g = grid_for(cfg, nu)
    times = tuple(sample_times(cfg))
    ic = initial_condition(cfg)
    common = dict(
        t_end=cfg.sweep.T,
        sample_times=times,
        initial_condition=ic,
        cfl=cfg.solver.cfl,
        diffusion_safety=cfg.solver.diffusion_safety,
    )
    return SolverConfig(nu, g, **common), SolverConfig(0.0, g, **common)


def snapshot_dir(root, nu: float) -> Path:
    return Path(root) / f"nu_{nu:.6e}"


def solve_and_store(cfg: SweepConfig, nu: float, out) -> tuple[Trajectory, Trajectory]:
    """Run the Navier-Stokes and Euler solvers for one nu and dump every snapshot."""
    ns_cfg, e_cfg = solver_configs(cfg, nu)
    ns = run(ns_cfg)
    eu = run(e_cfg)
    d = snapshot_dir(out, nu)
    d.mkdir(parents=True, exist_ok=True)
    for k, (a, b) in enumerate(zip(ns, eu)):
        dump_snapshot(a, d / f"ns_{k:04d}", ns_cfg)
        dump_snapshot(b, d / f"euler_{k:04d}", e_cfg)
    return ns, eu


def load_stored_runs(directory, cfg: SweepConfig, nu: float) -> tuple[Trajectory, Trajectory]:
    d = Path(directory)
    pat = re.compile(r"^(ns|euler)_(\d{4})\.json$")
    found: dict[str, dict[int, Path]] = {"ns": {}, "euler": {}}
    for p in sorted(d.glob("*.json")):
        m = pat.match(p.name)
        if m:
            found[m.group(1)][int(m.group(2))] = p
    keys = sorted(found["ns"])
    if not keys or keys != sorted(found["euler"]):
        raise FileNotFoundError(f"{d}: expected matching ns_NNNN and euler_NNNN snapshots")
    ns_states = [load_snapshot(found["ns"][k]) for k in keys]
    e_states = [load_snapshot(found["euler"][k]) for k in keys]
    g = ns_states[0].grid
    times = tuple(s.time for s in ns_states)
    ns_cfg = SolverConfig(nu, g, times[-1], times, t_start=times[0])
    e_cfg = SolverConfig(0.0, g, times[-1], times, t_start=times[0])
    return Trajectory(ns_cfg, ns_states), Trajectory(e_cfg, e_states)


def build_history(cfg: SweepConfig, nu: float) -> tuple[History, dict]:
    """History for one nu plus run metadata (grid, dt range)."""
    scen = cfg.sweep.scenario
    times = sample_times(cfg)
    if scen == "shear_analytic":
        g = grid_for(cfg, nu)
        return shear_history(cfg.flow.U0, nu, g, times), {"grid": g.describe(), "dt": None, "steps": 0}
    if scen == "snapshot_replay":
        if not cfg.flow.snapshot_dir:
            raise ValueError("snapshot_replay needs flow.snapshot_dir")
        ns, eu = load_stored_runs(snapshot_dir(cfg.flow.snapshot_dir, nu), cfg, nu)
    else:
        ns_cfg, e_cfg = solver_configs(cfg, nu)
        ns, eu = run(ns_cfg), run(e_cfg)
    meta = {
        "grid": ns.config.grid.describe(),
        "dt": list(ns.dt_range) if ns.steps else None,
        "steps": ns.steps,
        "max_step_audit": max(ns.max_audit, eu.max_audit),
    }
    return history_from_runs(ns, eu), meta


@dataclass
class NuResult:
    nu: float
    status: str
    meta: dict = field(default_factory=dict)
    energy: list = field(default_factory=list)
    criteria: dict = field(default_factory=dict)
    assumptions: dict = field(default_factory=dict)
    assumption_rows: list = field(default_factory=list)
    sup_err_l2: float = math.nan
    sup_v_l2: float = math.nan
    identity_max: float = math.nan
    top_row_defect: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def evaluate_nu(cfg: SweepConfig, nu: float) -> NuResult:
    """Solve or play back one viscosity and evaluate every diagnostic."""
    try:
        hist, meta = build_history(cfg, nu)
    except (SolverError, FloatingPointError, ValueError, FileNotFoundError) as exc:
        log.warning("nu=%g quarantined: %s", nu, exc)
        return NuResult(nu, f"quarantined: {exc}")
    trace = hist.samples[0].trace if cfg.sweep.scenario != "shear_analytic" else EulerTrace.constant(cfg.flow.U0)
    params = corrector_params(cfg, nu, trace)
    energy = energy_history(hist, params)
    cr = criteria_report(hist, cfg.criteria.C, cfg.criteria.a)
    ar = assumption_report(hist, cfg.criteria.rho, cfg.nu0, cfg.criteria.a, cfg.criteria.c)
    errs = []
    top = 0.0
    for s in hist:
        d = s.u_ns - s.u_e
        errs.append(math.hypot(lp_norm(d.u1, 2), lp_norm(d.u2, 2)))
        top = max(top, float(np.max(np.abs(d.u1.values[:, -1]))))
    ident = [e.identity_residual for e in energy[1:-1]]
    meta["layer_flags"] = summarize_flags(cr.flags + ar.flags)
    return NuResult(
        nu=nu,
        status="ok",
        meta=meta,
        energy=[e.row() for e in energy],
        criteria={k: v for k, v in asdict(cr).items() if k != "flags"},
        assumptions={
            "rho": ar.rho,
            "equicontinuity_table": ar.equicontinuity_table,
            "uniform_integrability_table": ar.uniform_integrability_table,
            "boundedness_table": ar.boundedness_table,
            "mixed_table": [(r, list(v)) for r, v in ar.mixed_table],
            "wang_integral": ar.thm13[0],
            "layer_sup_integral": ar.thm13[1],
        },
        assumption_rows=ar.rows(),
        sup_err_l2=max(errs),
        sup_v_l2=math.sqrt(max(e[1] for e in (r.row() for r in energy))),
        identity_max=float(np.max(np.abs(ident))) if ident else math.nan,
        top_row_defect=top,
    )


def summarize_flags(flags) -> dict:
    """Per functional: how many (time, layer) pairs had under 4 cells or were clipped."""
    out: dict[str, dict] = {}
    for f in flags:
        d = out.setdefault(f.name, {"count": 0, "min_cells": math.inf, "clipped": 0})
        d["count"] += 1
        d["min_cells"] = min(d["min_cells"], f.cells)
        d["clipped"] += int(f.clipped)
    return out


def _metric(r: NuResult, name: str) -> float:
    if name in ("sup_err_l2", "sup_v_l2"):
        return getattr(r, name)
    if name in ("wang_integral", "layer_sup_integral"):
        return r.assumptions[name]
    return r.criteria[name]


@dataclass
class Report:
    config: dict
    nu0: float
    results: list
    fits: dict
    constants: dict
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "nu0": self.nu0,
            "results": [asdict(r) for r in self.results],
            "fits": self.fits,
            "constants": self.constants,
            "checks": self.checks,
            "passed": self.passed,
        }


def fit_all(results: list[NuResult]) -> dict:
    ok = [r for r in results if r.ok]
    fits = {}
    for name in FIT_METRICS:
        pts = [(r.nu, abs(_metric(r, name))) for r in ok if math.isfinite(_metric(r, name))]
        fits[name] = fit_rate(pts).as_dict()
    return fits


def evaluate_checks(cfg: SweepConfig, results: list[NuResult], fits: dict) -> dict:
    out = {}
    enabled = cfg.checks.enabled
    if "complete" in enabled:
        bad = [r.nu for r in results if not r.ok]
        out["complete"] = {"passed": not bad, "quarantined": bad}
    if "rate" in enabled:
        f = fits["sup_err_l2"]
        ok = f["status"] == "ok" and abs(f["exponent"] - cfg.checks.rate_exponent) <= cfg.checks.rate_tol
        out["rate"] = {"passed": bool(ok), "exponent": f["exponent"], "target": cfg.checks.rate_exponent}
    if "identity" in enabled:
        worst = max((r.identity_max for r in results if r.ok), default=math.nan)
        out["identity"] = {"passed": bool(worst <= cfg.checks.identity_tol), "max_residual": worst}
    return out


def _job(args):
    cfg, nu = args
    return evaluate_nu(cfg, nu)


def run_sweep(cfg: SweepConfig, jobs: int | None = None) -> Report:
    """Evaluate every nu (in parallel when jobs > 1) and fit the decay rates."""
    nus = list(cfg.sweep.nu_list)
    jobs = jobs or cfg.sweep.jobs
    if jobs > 1 and len(nus) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(nus))) as pool:
            results = list(pool.map(_job, [(cfg, nu) for nu in nus]))
    else:
        results = [evaluate_nu(cfg, nu) for nu in nus]
    fits = fit_all(results)
    bump = BumpSpec()
    constants = {
        "C_eta": bump.c_eta,
        "eta_prime_max": bump.derivative_bounds[0],
        "eta_second_max": bump.derivative_bounds[1],
        "bump_amplitude": bump.amplitude,
        "t_min": cfg.t_min,
        "T": cfg.sweep.T,
        "scale_log_slope": 0.5 if cfg.corrector.scale == "prandtl" else cfg.corrector.a,
    }
    return Report(cfg.echo(), cfg.nu0, results, fits, constants, evaluate_checks(cfg, results, fits))
