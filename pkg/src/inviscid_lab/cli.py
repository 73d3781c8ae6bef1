"""Command line entry point: ``inviscid-lab <subcommand> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .analytic import EulerTrace
from .config import ConfigError, SweepConfig, load_config
from .corrector import (
    QUANTITIES,
    CorrectorParams,
    expected_exponent,
    fit_scaling_table,
    heat_residual_constants,
    scaling_norms,
    zero_mean_check,
    zero_mean_tail,
)
from .outputs import emit_outputs, json_safe, write_csv
from .solver import SolverError
from .sweep import corrector_params, run_sweep, sample_times, snapshot_dir, solve_and_store

log = logging.getLogger("inviscid_lab")

SCALING_S = tuple(np.geomspace(1e-6, 1e-2, 9))
SCALING_P = {"u1": (1, 2, 4), "d1_u1": (1, 2, 4), "d2_u1": (1, 2, 4), "d12_u1": (1, 2, 4),
             "u2": (2, math.inf), "d1_u2": (2, math.inf)}
SCALING_TOL = 0.02
ZERO_MEAN_SAMPLES = 20
ZERO_MEAN_TOL = 1e-8
RESIDUAL_SPREAD = 0.2


def check_trace(cfg: SweepConfig) -> EulerTrace:
    """Wall trace used by the corrector suites: U0 + A cos(m x1) exp(-t)."""
    f = cfg.flow
    return EulerTrace.cosine(f.amplitude, f.mode, "exp", U0=f.U0)


def corrector_suite(cfg: SweepConfig) -> tuple[list[dict], dict]:
    """Scaling, zero-mean and heat-residual checks for the configured corrector.

    Returns the raw scaling rows and a result dict with one entry per suite,
    each carrying a ``passed`` flag.
    """
    trace = check_trace(cfg)
    nu0 = cfg.nu0 or 1e-2
    params = corrector_params(cfg.with_values(sweep__nu_list=[nu0]), nu0, trace)

    p_all = sorted({p for ps in SCALING_P.values() for p in ps})
    rows = [r for r in scaling_norms(params, SCALING_S, p_all) if r["p"] in SCALING_P[r["quantity"]]]
    slopes = []
    for s in fit_scaling_table(rows):
        exp = expected_exponent(s["quantity"], s["p"], params.scale)
        err = abs(s["slope"] - exp)
        p = s["p"] if math.isfinite(s["p"]) else "inf"
        slopes.append({**s, "p": p, "expected": exp, "error": err, "passed": bool(err <= SCALING_TOL)})
    slopes.sort(key=lambda r: (QUANTITIES.index(r["quantity"]), float(r["p"])))

    rng = np.random.default_rng(20240607)
    zm = []
    for _ in range(ZERO_MEAN_SAMPLES):
        x1 = float(rng.uniform(0.0, 2.0 * math.pi))
        t = float(rng.uniform(cfg.t_min, cfg.sweep.T))
        nu = float(10.0 ** rng.uniform(math.log10(nu0) - 3.0, math.log10(nu0)))
        p = CorrectorParams(nu, trace, params.bump, params.scale, params.eta_enabled, nu0)
        val = zero_mean_check(p, x1, t)
        bound = ZERO_MEAN_TOL * trace.sup(t)
        zm.append({"x1": x1, "t": t, "nu": nu, "integral": val, "tail": zero_mean_tail(p, x1, t),
                   "bound": bound, "passed": bool(abs(val) <= bound)})

    times = sample_times(cfg.with_values(sweep__samples=9))
    res = []
    for nu in cfg.sweep.nu_list or [nu0]:
        p = CorrectorParams(nu, trace, params.bump, params.scale, params.eta_enabled, nu0)
        c = heat_residual_constants(p, times)
        res.append({"nu": nu, "C1": c["C1"], "C2": c["C2"]})
    spread = {}
    for key in ("C1", "C2"):
        vals = [r[key] for r in res if r[key] > 0]
        spread[key] = (max(vals) / min(vals) - 1.0) if vals else 0.0
    result = {
        "trace": trace.describe(),
        "scale": params.scale.describe(),
        "scaling": {"rows": slopes, "passed": all(r["passed"] for r in slopes)},
        "zero_mean": {"samples": zm, "passed": all(r["passed"] for r in zm)},
        "heat_residual": {"rows": res, "spread": spread,
                          "passed": all(v < RESIDUAL_SPREAD for v in spread.values())},
    }
    result["passed"] = all(result[k]["passed"] for k in ("scaling", "zero_mean", "heat_residual"))
    return rows, result


def cmd_corrector_check(cfg: SweepConfig, args) -> int:
    rows, result = corrector_suite(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "scaling.csv", ("nu_t", "p", "quantity", "norm"),
              [[r["nu_t"], r["p"], r["quantity"], r["norm"]] for r in rows])
    path = out / "corrector_checks.json"
    path.write_text(json.dumps(json_safe(result), sort_keys=True, indent=1) + "\n")
    for r in result["scaling"]["rows"]:
        if not r["passed"]:
            log.warning("scaling %s p=%s: slope %.4f, expected %.4f", r["quantity"], r["p"], r["slope"], r["expected"])
    return 0 if result["passed"] else 1


def cmd_solve(cfg: SweepConfig, args) -> int:
    status = 0
    for nu in cfg.sweep.nu_list:
        try:
            ns, _ = solve_and_store(cfg, nu, args.out)
        except SolverError as exc:
            log.error("nu=%g: %s", nu, exc)
            status = 1
            continue
        log.info("nu=%g: %d steps into %s", nu, ns.steps, snapshot_dir(args.out, nu))
    return status


def _sweep_and_emit(cfg: SweepConfig, args) -> int:
    report = run_sweep(cfg, args.jobs)
    emit_outputs(report.to_dict(), args.out, svg=cfg.output.svg and not args.no_svg)
    for name, c in report.checks.items():
        log.info("check %s: %s", name, "pass" if c["passed"] else "FAIL")
    return 0 if report.passed else 1


def cmd_sweep(cfg: SweepConfig, args) -> int:
    return _sweep_and_emit(cfg, args)


def cmd_diagnose(cfg: SweepConfig, args) -> int:
    snaps = args.snapshots or cfg.flow.snapshot_dir
    if not snaps:
        raise ConfigError("diagnose needs --snapshots or flow.snapshot_dir")
    cfg = cfg.with_values(sweep__scenario="snapshot_replay", flow__snapshot_dir=str(snaps))
    return _sweep_and_emit(cfg, args)


def cmd_report(args) -> int:
    src = Path(args.summary) if args.summary else Path(args.out) / "summary.json"
    try:
        report = json.loads(src.read_text())
    except OSError as exc:
        raise OSError(f"cannot read {src}: {exc.strerror}") from None
    emit_outputs(report, args.out, svg=not args.no_svg)
    return 0 if report.get("passed") else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inviscid-lab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("corrector-check", "scaling, zero-mean and heat-residual suites for the corrector"),
        ("solve", "run the solvers for every nu and store snapshots"),
        ("sweep", "evaluate every nu and write the report files"),
        ("diagnose", "evaluate stored snapshots and write the report files"),
        ("report", "re-render report files from summary.json"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=name != "report", help="flat key = value config file")
        sp.add_argument("--out", help="output directory (default: output.dir from the config)")
        sp.add_argument("--no-svg", action="store_true", help="skip the plot files")
        sp.add_argument("--jobs", type=int, default=None, help="parallel workers for the sweep")
        if name == "diagnose":
            sp.add_argument("--snapshots", help="directory written by the solve command")
        if name == "report":
            sp.add_argument("--summary", help="summary.json to render (default: OUT/summary.json)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            if not args.out:
                args.out = "out"
            return cmd_report(args)
        cfg = load_config(args.config)
        if args.out is None:
            args.out = cfg.output.dir
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        handler = {
            "corrector-check": cmd_corrector_check,
            "solve": cmd_solve,
            "sweep": cmd_sweep,
            "diagnose": cmd_diagnose,
        }[args.command]
        return handler(cfg, args)
    except (ConfigError, OSError) as exc:
        print(f"inviscid-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
