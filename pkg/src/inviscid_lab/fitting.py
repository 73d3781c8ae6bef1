"""Power-law rate fits on log-log data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RateFit:
    """value ~ exp(log_prefactor) * nu**exponent.

    ``status`` is ``"ok"``, ``"identically_zero"`` when every value is zero,
    or ``"too_few_points"`` when fewer than three positive values remain.
    """

    exponent: float
    log_prefactor: float
    r_squared: float
    points_used: int
    status: str = "ok"
    excluded: tuple = field(default=())

    @property
    def prefactor(self) -> float:
        return math.exp(self.log_prefactor)

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "log_prefactor": self.log_prefactor,
            "r_squared": self.r_squared,
            "points_used": self.points_used,
            "status": self.status,
            "excluded": list(self.excluded),
        }


def _declined(status: str, used: int, excluded) -> RateFit:
    return RateFit(math.nan, math.nan, math.nan, used, status, tuple(excluded))


def fit_rate(points, min_points: int = 3) -> RateFit:
    """Least squares of log(value) on log(nu).

    Zero values are dropped and listed in ``excluded``; negative or
    non-finite values are rejected.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if any(x <= 0 or not math.isfinite(x) for x, _ in pts):
        raise ValueError("abscissae must be positive and finite")
    if any(y < 0 or not math.isfinite(y) for _, y in pts):
        raise ValueError("values must be non-negative and finite")
    excluded = [x for x, y in pts if y == 0.0]
    kept = [(x, y) for x, y in pts if y > 0.0]
    if pts and not kept:
        return _declined("identically_zero", 0, excluded)
    if len(kept) < min_points:
        return _declined("too_few_points", len(kept), excluded)
    lx = np.log([x for x, _ in kept])
    ly = np.log([y for _, y in kept])
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.sum(ly**2))) else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(float(slope), float(intercept), r2, len(kept), "ok", tuple(excluded))
