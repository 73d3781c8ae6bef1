"""Report files: summary.json, energy/criteria/assumption CSVs and log-log plots.

Everything is written from the plain-dict form of a report, so a stored
``summary.json`` can be re-rendered without recomputing anything.  Output is
byte-for-byte reproducible: sorted JSON keys, 17-digit floats and SVGs with a
fixed hash salt and no timestamp.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .diagnostics import ASSUMPTION_COLUMNS, CRITERIA_COLUMNS, ENERGY_COLUMNS

CRITERIA_EXTRA = ("sup_err_l2", "sup_v_l2", "identity_max", "top_row_defect", "status")


def json_safe(obj):
    """JSON-safe copy: NaN and infinities become null, tuples become lists."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if hasattr(obj, "item"):
        return json_safe(obj.item())
    return obj


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float) or x is None:
        if x is None or (isinstance(x, float) and math.isnan(x)):
            return "nan"
        return f"{x:.17g}"
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


def write_summary(report: dict, out: Path) -> Path:
    path = out / "summary.json"
    text = json.dumps(json_safe(report), sort_keys=True, indent=1, allow_nan=False)
    try:
        path.write_text(text + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


def emit_outputs(report: dict, out, svg: bool = True) -> list[Path]:
    """Write all report files into ``out`` and return their paths."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    results = report.get("results", [])
    files = [write_summary(report, out)]

    energy_rows = []
    for r in results:
        for row in r.get("energy", []):
            energy_rows.append([r["nu"], *row])
    files.append(write_csv(out / "energy.csv", ("nu", *ENERGY_COLUMNS), energy_rows))

    crit_rows = []
    for r in results:
        c = r.get("criteria") or {}
        crit_rows.append(
            [r["nu"], *[c.get(k, math.nan) for k in CRITERIA_COLUMNS[1:]], *[r.get(k) for k in CRITERIA_EXTRA]]
        )
    files.append(write_csv(out / "criteria.csv", (*CRITERIA_COLUMNS, *CRITERIA_EXTRA), crit_rows))

    assume_rows = [row for r in results for row in r.get("assumption_rows", [])]
    files.append(write_csv(out / "assumptions.csv", ASSUMPTION_COLUMNS, assume_rows))

    if svg:
        files.extend(_plots(report, out))
    return files


def _plots(report: dict, out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "inviscid-lab"
    paths = []
    ok = [r for r in report.get("results", []) if r.get("status") == "ok"]
    for name, fit in sorted(report.get("fits", {}).items()):
        pts = []
        for r in ok:
            if name in ("sup_err_l2", "sup_v_l2"):
                v = r.get(name)
            elif name in ("wang_integral", "layer_sup_integral"):
                v = r["assumptions"].get(name)
            else:
                v = r["criteria"].get(name)
            if v is not None and isinstance(v, float) and math.isfinite(v) and v > 0:
                pts.append((r["nu"], abs(v)))
        if not pts:
            continue
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        xs, ys = zip(*pts)
        ax.loglog(xs, ys, "o", label=name)
        if fit.get("status") == "ok":
            e, lp = fit["exponent"], fit["log_prefactor"]
            ax.loglog(xs, [math.exp(lp) * x**e for x in xs], "-", label=f"slope {e:.3f}")
        ax.set_xlabel("nu")
        ax.set_ylabel(name)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths
