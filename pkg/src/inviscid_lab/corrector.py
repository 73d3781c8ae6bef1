"""Boundary-layer corrector u^K built from the caloric erfc lift and a bump.

With s = nu t, layer thickness delta(s), zeta = x2/delta, E = erfc(zeta),
G = exp(-zeta^2) and F = E - delta eta(x2):

    u1 = -U F,                     u2 = delta dU/dx1 R,
    R  = (1/sqrt(pi) - int_1^{x2} eta) - G/sqrt(pi) + zeta E.

Every derivative below is the closed-form derivative of these expressions.
The Prandtl scale delta = sqrt(4 s) makes the erfc part an exact solution of
the heat equation, so its contribution to the residual is set to zero
exactly rather than left as a cancellation of two large numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .analytic import INV_SQRT_PI, BumpSpec, EulerTrace, bump_integral_on_nodes, erfc
from .fields import Grid, ScalarField, VelocityField, lp_norm

TWO_OVER_SQRT_PI = 2.0 * INV_SQRT_PI

QUANTITIES = ("u1", "d1_u1", "d2_u1", "d12_u1", "u2", "d1_u2")


@dataclass(frozen=True)
class CorrectorScale:
    """Layer thickness as a function of s = nu t.

    ``prandtl``: delta = sqrt(4 s).  ``power``: delta = s**a with 0 < a < 1.
    """

    variant: str = "prandtl"
    a: float = 0.5

    def __post_init__(self):
        if self.variant not in ("prandtl", "power"):
            raise ValueError(f"unknown scale variant {self.variant!r}")
        if self.variant == "power" and not 0.0 < self.a < 1.0:
            raise ValueError(f"power scale needs 0 < a < 1, got {self.a}")

    @classmethod
    def power(cls, a: float) -> CorrectorScale:
        return cls("power", a)

    def delta(self, s: float) -> float:
        if self.variant == "prandtl":
            return math.sqrt(4.0 * s)
        return s**self.a

    def ddelta(self, s: float) -> float:
        if self.variant == "prandtl":
            return 1.0 / math.sqrt(s)
        return self.a * s ** (self.a - 1.0)

    def log_slope(self, s: float) -> float:
        """s delta'(s) / delta(s); constant for both variants."""
        return s * self.ddelta(s) / self.delta(s)

    def describe(self) -> dict:
        return {"variant": self.variant, "a": self.a if self.variant == "power" else 0.5}


@dataclass(frozen=True)
class CorrectorParams:
    nu: float
    trace: EulerTrace
    bump: BumpSpec = field(default_factory=BumpSpec)
    scale: CorrectorScale = field(default_factory=CorrectorScale)
    eta_enabled: bool = True
    nu0: float | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"corrector needs nu > 0, got {self.nu}")
        if self.nu0 is not None and self.nu > self.nu0 * (1 + 1e-12):
            raise ValueError(f"nu={self.nu} exceeds the run constant nu0={self.nu0}")


@dataclass(frozen=True, eq=False)
class CorrectorField:
    t: float
    delta: float
    u1: ScalarField
    u2: ScalarField
    d1_u1: ScalarField
    d2_u1: ScalarField
    d12_u1: ScalarField
    d1_u2: ScalarField
    heat_residual_1: ScalarField
    heat_residual_2: ScalarField

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    @property
    def d2_u2(self) -> ScalarField:
        return -self.d1_u1

    @property
    def velocity(self) -> VelocityField:
        return VelocityField(self.u1, self.u2)

    def get(self, quantity: str) -> ScalarField:
        if quantity not in QUANTITIES:
            raise ValueError(f"unknown corrector quantity {quantity!r}; choose from {QUANTITIES}")
        return getattr(self, quantity)


class _Profiles:
    """x2-dependent factors of the corrector at one time, on a node vector."""

    def __init__(self, params: CorrectorParams, x2: np.ndarray, t: float):
        nu = params.nu
        s = nu * t
        sc = params.scale
        d = sc.delta(s)
        dd = sc.ddelta(s)
        self.delta, self.ddelta = d, dd
        zeta = x2 / d
        with np.errstate(under="ignore"):
            E = erfc(zeta)
            G = np.exp(-zeta * zeta)
        bump = params.bump
        if params.eta_enabled:
            eta, eta1, eta2 = bump.eta(x2), bump.eta_prime(x2), bump.eta_second(x2)
            ieta = bump_integral_on_nodes(bump, x2)
        else:
            eta = eta1 = eta2 = ieta = np.zeros_like(x2)

        self.F = E - d * eta
        self.F2 = -TWO_OVER_SQRT_PI * G / d - d * eta1
        self.R = (INV_SQRT_PI - ieta) - INV_SQRT_PI * G + zeta * E
        if not params.eta_enabled:
            self.R = INV_SQRT_PI - INV_SQRT_PI * G + zeta * E

        rate = nu * dd / d  # d(log delta)/dt
        if sc.variant == "prandtl":
            caloric = np.zeros_like(x2)
        else:
            caloric = TWO_OVER_SQRT_PI * G * zeta * (rate - 2.0 * nu / d**2)
        # (d_t - nu d_22) F
        self.heatF = caloric - nu * dd * eta + nu * d * eta2
        self.Rt = -E * zeta * rate
        self.nu_ddelta = nu * dd


def build_corrector(params: CorrectorParams, grid: Grid, t: float, trace=None) -> CorrectorField:
    """Evaluate u^K, its derivatives and heat residuals on the grid nodes at time t.

    ``trace`` overrides ``params.trace``; it only needs an ``at(x1, t)`` method
    returning a :class:`~inviscid_lab.analytic.TraceSample`.
    """
    if not t > 0:
        raise ValueError(f"the corrector is singular at t = 0; got t={t}")
    tr = (trace or params.trace).at(grid.x1, t)
    p = _Profiles(params, grid.x2, t)
    d = p.delta

    def outer(a, b):
        return ScalarField(grid, np.multiply.outer(a, b))

    nu = params.nu
    heat1 = -np.multiply.outer(tr.dt - nu * tr.d11, p.F) - np.multiply.outer(tr.U, p.heatF)
    d12_u1 = -np.multiply.outer(tr.d1, p.F2)
    heat2 = (
        np.multiply.outer(p.nu_ddelta * tr.d1 + d * tr.d1t - nu * d * tr.d111, p.R)
        + d * np.multiply.outer(tr.d1, p.Rt)
        + nu * d12_u1
    )
    return CorrectorField(
        t=t,
        delta=d,
        u1=outer(-tr.U, p.F),
        u2=outer(d * tr.d1, p.R),
        d1_u1=outer(-tr.d1, p.F),
        d2_u1=outer(-tr.U, p.F2),
        d12_u1=ScalarField(grid, d12_u1),
        d1_u2=outer(d * tr.d11, p.R),
        heat_residual_1=ScalarField(grid, heat1),
        heat_residual_2=ScalarField(grid, heat2),
    )


def u1_profile(params: CorrectorParams, x1: float, t: float):
    """Callable x2 -> u^K_1(x1, x2, t) for scalar quadrature."""
    U = float(params.trace.at(np.array([x1]), t).U[0])
    nu = params.nu
    d = params.scale.delta(nu * t)
    bump = params.bump

    def f(x2):
        e = float(erfc(x2 / d))
        if params.eta_enabled:
            e -= d * float(bump.eta(x2))
        return -U * e

    return f


def zero_mean_tail(params: CorrectorParams, x1: float, t: float, upper: float = 10.0) -> float:
    """Bound on |int_upper^inf u^K_1 dx2|.

    Beyond x2 = 2 only the erfc part survives, and its tail integral is
    below delta * erfc(upper/delta).
    """
    U = abs(float(params.trace.at(np.array([x1]), t).U[0]))
    d = params.scale.delta(params.nu * t)
    return U * d * float(erfc(upper / d))


def zero_mean_check(params: CorrectorParams, x1: float, t: float, upper: float = 10.0) -> float:
    """Adaptive quadrature of u^K_1 over 0 < x2 < upper; the residual of the zero-mean property.

    The neglected tail is bounded by :func:`zero_mean_tail`.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if params.trace.is_zero:
        return 0.0
    f = u1_profile(params, x1, t)
    d = params.scale.delta(params.nu * t)
    pts = sorted({min(x, upper) for x in (d, 3 * d, 6 * d, 1.0, 1.5, 2.0)} - {upper})
    total = 0.0
    edges = [0.0, *pts, upper]
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            val, _ = quad(f, a, b, epsabs=1e-15, epsrel=1e-13, limit=200)
            total += val
    return total


# -- scaling laws ----------------------------------------------------------


def expected_exponent(quantity: str, p: float, scale: CorrectorScale | None = None) -> float:
    """Exponent of (nu t) in the L^p bound on each corrector quantity."""
    a = 0.5 if scale is None or scale.variant == "prandtl" else scale.a
    inv = 0.0 if math.isinf(p) else 1.0 / p
    if quantity in ("u1", "d1_u1"):
        return a * inv
    if quantity in ("d2_u1", "d12_u1"):
        return a * (inv - 1.0)
    if quantity in ("u2", "d1_u2"):
        return a
    raise ValueError(f"unknown quantity {quantity!r}")


def scaling_grid(s: float, scale: CorrectorScale | None = None, nx: int = 32, ny: int = 2001,
                 cells_per_layer: float = 40.0) -> Grid:
    """Wall-graded grid resolving a corrector layer of thickness delta(s)."""
    scale = scale or CorrectorScale()
    return Grid.with_wall_spacing(nx, ny, scale.delta(s) / cells_per_layer)


def scaling_norms(params: CorrectorParams, s_samples, p_values, quantities=QUANTITIES,
                  nx: int = 32, ny: int = 2001) -> list[dict]:
    """L^p norms of corrector quantities at each s = nu t.

    Each sample is evaluated at t = 1 with viscosity s, on its own graded
    grid.  Rows: ``{"nu_t", "p", "quantity", "norm"}``.
    """
    rows = []
    for s in s_samples:
        pr = CorrectorParams(s, params.trace, params.bump, params.scale, params.eta_enabled)
        g = scaling_grid(s, params.scale, nx, ny)
        ck = build_corrector(pr, g, 1.0)
        for q in quantities:
            f = ck.get(q)
            for p in p_values:
                rows.append({"nu_t": float(s), "p": float(p), "quantity": q, "norm": lp_norm(f, p)})
    return rows


def _check_samples(s_samples) -> np.ndarray:
    s = np.asarray(sorted(s_samples), dtype=float)
    if s.size < 4:
        raise ValueError("scaling fit needs at least 4 samples of nu t")
    if np.any(s <= 0) or math.log10(s[-1] / s[0]) < 2.0 - 1e-9:
        raise ValueError("scaling samples must be positive and span at least two decades")
    return s


def scaling_exponents(params: CorrectorParams, p: float, quantity: str, s_samples) -> float:
    """Least-squares slope of log ||quantity||_p against log(nu t)."""
    s = _check_samples(s_samples)
    rows = scaling_norms(params, s, [p], [quantity])
    norms = np.array([r["norm"] for r in rows])
    if np.any(norms <= 0):
        raise ValueError(f"{quantity} vanishes identically; no exponent to fit")
    slope, _ = np.polyfit(np.log(s), np.log(norms), 1)
    return float(slope)


def fit_scaling_table(rows: list[dict]) -> list[dict]:
    """Slopes per (quantity, p) from the rows of :func:`scaling_norms`."""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["quantity"], r["p"]), []).append((r["nu_t"], r["norm"]))
    out = []
    for (q, p), pts in groups.items():
        s, n = np.array(pts).T
        if np.all(n > 0) and len(s) >= 2:
            slope = float(np.polyfit(np.log(s), np.log(n), 1)[0])
        else:
            slope = float("nan")
        out.append({"quantity": q, "p": p, "slope": slope})
    return out


# -- heat residuals ----------------------------------------------------------


def heat_residual_norm(params: CorrectorParams, grid: Grid, t: float) -> tuple[float, float]:
    """L2 norms of (d_t - nu Delta) u^K_1 and (d_t - nu Delta) u^K_2."""
    if params.trace.is_zero:
        return 0.0, 0.0
    ck = build_corrector(params, grid, t)
    return lp_norm(ck.heat_residual_1, 2), lp_norm(ck.heat_residual_2, 2)


def heat_residual_bounds(nu: float, t: float) -> tuple[float, float]:
    """Rate functions the two residual norms are bounded by, up to a constant."""
    return (nu * t) ** 0.25 + math.sqrt(nu / t), math.sqrt(nu / t) + math.sqrt(nu * t)


def heat_residual_constants(params: CorrectorParams, times, nx: int = 32, ny: int = 2001) -> dict:
    """Realized constants max_t ||residual_i(t)|| / bound_i(t) over the given times."""
    times = np.asarray(times, dtype=float)
    nu = params.nu
    g = scaling_grid(nu * float(times.min()), params.scale, nx, ny)
    c1 = c2 = 0.0
    rows = []
    for t in times:
        r1, r2 = heat_residual_norm(params, g, float(t))
        b1, b2 = heat_residual_bounds(nu, float(t))
        c1, c2 = max(c1, r1 / b1), max(c2, r2 / b2)
        rows.append({"t": float(t), "residual_1": r1, "residual_2": r2, "bound_1": b1, "bound_2": b2})
    return {"nu": nu, "C1": c1, "C2": c2, "rows": rows}
