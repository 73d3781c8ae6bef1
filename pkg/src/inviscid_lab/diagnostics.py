"""Energy decomposition, vanishing-viscosity criteria and layer functionals.

A :class:`History` is a list of :class:`FlowSample` records at increasing
times for one viscosity.  Each sample carries the Navier-Stokes and Euler
velocities on a common grid, the Euler wall trace, and whatever exact
derivatives are known; missing derivatives are taken from the second-order
stencils in :mod:`inviscid_lab.fields`.

All time integrals are trapezoid sums over the sample times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analytic import INV_SQRT_PI, AnalyticShear
from .corrector import CorrectorField, CorrectorParams, CorrectorScale, build_corrector
from .fields import (
    Grid,
    ScalarField,
    VelocityField,
    d1,
    d2,
    integrate,
    layer_cut,
    layer_integral_x2,
    layer_norm,
)
from .solver import SolverConfig, Trajectory, trace_from_state

MIN_LAYER_CELLS = 4


def _grad(v: VelocityField):
    g = v.grid
    a, b = v.u1.values, v.u2.values
    return (d1(a, g), d2(a, g), d1(b, g), d2(b, g))


@dataclass(frozen=True, eq=False)
class FlowSample:
    """Navier-Stokes and Euler fields at one time.

    ``grad_ns`` and ``grad_ue`` hold (d1 u1, d2 u1, d1 u2, d2 u2); ``lap_ue``
    holds (Laplacian u1, Laplacian u2).  Omitted entries are filled in by
    finite differences.
    """

    t: float
    u_ns: VelocityField
    omega_ns: ScalarField
    u_e: VelocityField
    trace: object
    grad_ns: tuple | None = None
    grad_ue: tuple | None = None
    lap_ue: tuple | None = None

    def __post_init__(self):
        if self.u_ns.grid != self.u_e.grid:
            raise ValueError("Navier-Stokes and Euler samples live on different grids")
        if self.grad_ns is None:
            object.__setattr__(self, "grad_ns", _grad(self.u_ns))
        if self.grad_ue is None:
            object.__setattr__(self, "grad_ue", _grad(self.u_e))
        if self.lap_ue is None:
            g = self.grid
            w = self.grad_ue[1] - self.grad_ue[2]
            object.__setattr__(self, "lap_ue", (d2(w, g), -d1(w, g)))

    @property
    def grid(self) -> Grid:
        return self.u_ns.grid


@dataclass
class History:
    nu: float
    samples: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def grid(self) -> Grid:
        return self.samples[0].grid

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def time_integral(times, values) -> float:
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        return 0.0
    if times.size == 1:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


# -- building histories ------------------------------------------------------


def shear_history(U0: float, nu: float, grid: Grid, times) -> History:
    """Exact impulsively started shear sampled on the grid, with exact gradients."""
    sh = AnalyticShear(U0, nu)
    trace = sh.trace()
    zero = np.zeros((grid.nx, grid.ny))
    u_e = VelocityField(ScalarField(grid, zero + U0), ScalarField(grid, zero))
    grad_ue = (zero, zero, zero, zero)
    hist = History(nu)
    for t in times:
        u1 = np.broadcast_to(sh.u1(grid.x2, t), (grid.nx, grid.ny))
        w = np.broadcast_to(sh.omega(grid.x2, t), (grid.nx, grid.ny))
        u = VelocityField(ScalarField(grid, u1), ScalarField(grid, zero))
        hist.samples.append(
            FlowSample(
                t=float(t),
                u_ns=u,
                omega_ns=ScalarField(grid, w),
                u_e=u_e,
                trace=trace,
                grad_ns=(zero, np.array(w), zero, zero),
                grad_ue=grad_ue,
                lap_ue=(zero, zero),
            )
        )
    return hist


def history_from_runs(ns: Trajectory, euler: Trajectory) -> History:
    """Pair Navier-Stokes and Euler snapshots taken at the same times."""
    if ns.times != euler.times:
        raise ValueError("Navier-Stokes and Euler runs were sampled at different times")
    ecfg: SolverConfig = euler.config
    hist = History(ns.config.nu)
    for sn, se in zip(ns, euler):
        v = sn.velocity
        u1 = v.u1.values.copy()
        u1[:, 0] = 0.0  # no-slip is exact on the wall row
        u_ns = VelocityField(ScalarField(v.grid, u1), v.u2)
        hist.samples.append(
            FlowSample(
                t=sn.time,
                u_ns=u_ns,
                omega_ns=sn.omega,
                u_e=se.velocity,
                trace=trace_from_state(se, ecfg),
            )
        )
    return hist


# -- v and the energy decomposition ------------------------------------------


def compute_v(u_ns: VelocityField, u_e: VelocityField, u_k: VelocityField) -> VelocityField:
    if not (u_ns.grid == u_e.grid == u_k.grid):
        raise ValueError("compute_v needs all three velocities on one grid")
    return VelocityField(
        u_ns.u1 - u_e.u1 - u_k.u1,
        u_ns.u2 - u_e.u2 - u_k.u2,
        wall_tol=math.inf,
    )


ENERGY_COLUMNS = (
    "t",
    "v_l2_sq",
    "dissipation",
    "lin_stretch",
    "lin_visc",
    "T1",
    "T2",
    "T3",
    "T4",
    "T5",
    "T6",
    "t6_nu",
    "identity_residual",
)


@dataclass(frozen=True)
class EnergyBreakdown:
    t: float
    v_l2_sq: float
    dissipation: float
    lin_stretch: float
    lin_visc: float
    T1: float
    T2: float
    T3: float
    T4: float
    T5: float
    T6: float
    t6_nu: float
    identity_residual: float = math.nan

    @property
    def t_sum(self) -> float:
        return self.T1 + self.T2 + self.T3 + self.T4 + self.T5 + self.T6

    def row(self) -> list:
        return [getattr(self, c) for c in ENERGY_COLUMNS]


def t6_integrand(u_ns: VelocityField, U: np.ndarray, delta: float) -> np.ndarray:
    """u1 u2 U exp(-x2^2/delta^2) on the nodes."""
    g = u_ns.grid
    zeta = g.x2 / delta
    with np.errstate(under="ignore"):
        kernel = np.exp(-zeta * zeta)
    return u_ns.u1.values * u_ns.u2.values * np.multiply.outer(U, kernel)


def energy_breakdown(sample: FlowSample, params: CorrectorParams, ck: CorrectorField | None = None) -> EnergyBreakdown:
    """Terms of the energy balance for v = u^NS - u^E - u^K at one time."""
    g = sample.grid
    t = sample.t
    nu = params.nu
    if ck is None:
        ck = build_corrector(params, g, t, trace=sample.trace)
    uK = ck.velocity
    v = compute_v(sample.u_ns, sample.u_e, uK)
    v1, v2 = v.u1.values, v.u2.values
    n1, n2 = sample.u_ns.u1.values, sample.u_ns.u2.values
    k1, k2 = uK.u1.values, uK.u2.values
    e11, e21, e12, e22 = sample.grad_ue  # d1 uE1, d2 uE1, d1 uE2, d2 uE2
    s11, s21, s12, s22 = sample.grad_ns
    kd11, kd21 = ck.d1_u1.values, ck.d2_u1.values
    kd12, kd22 = ck.d1_u2.values, -kd11

    def I(f):
        return integrate(f, g)

    grad_v = (s11 - e11 - kd11, s21 - e21 - kd21, s12 - e12 - kd12, s22 - e22 - kd22)
    dissipation = nu * I(sum(c * c for c in grad_v))
    lin_stretch = -I(v1 * (v1 * e11 + v2 * e21) + v2 * (v1 * e12 + v2 * e22))
    lin_visc = nu * I(sample.lap_ue[0] * v1 + sample.lap_ue[1] * v2)
    T1 = -I(ck.heat_residual_1.values * v1 + ck.heat_residual_2.values * v2)
    T2 = -I(k1 * (n1 * e11 + n2 * e21) + k2 * (n1 * e12 + n2 * e22))
    T3 = -I(v1 * (k1 * e11 + k2 * e21) + v2 * (k1 * e12 + k2 * e22))
    T4 = -I(n1 * n2 * kd12)
    T5 = -I((n1 * n1 - n2 * n2) * kd11)
    T6 = -I(n1 * n2 * kd21)
    U = sample.trace.at(g.x1, t).U
    t6_nu = -2.0 * INV_SQRT_PI / ck.delta * I(t6_integrand(sample.u_ns, U, ck.delta))
    return EnergyBreakdown(
        t=t,
        v_l2_sq=I(v1 * v1 + v2 * v2),
        dissipation=dissipation,
        lin_stretch=lin_stretch,
        lin_visc=lin_visc,
        T1=T1,
        T2=T2,
        T3=T3,
        T4=T4,
        T5=T5,
        T6=T6,
        t6_nu=t6_nu,
    )


def _centered_derivative(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Derivative of the local quadratic interpolant at interior samples; NaN at the ends."""
    out = np.full_like(f, np.nan)
    hm = t[1:-1] - t[:-2]
    hp = t[2:] - t[1:-1]
    out[1:-1] = (
        -hp / (hm * (hm + hp)) * f[:-2] + (hp - hm) / (hm * hp) * f[1:-1] + hm / (hp * (hm + hp)) * f[2:]
    )
    return out


def identity_audit(breakdowns: list[EnergyBreakdown]) -> tuple[list[EnergyBreakdown], float]:
    """Fill in the energy-identity residual at interior times and return its max modulus."""
    if len(breakdowns) < 3:
        raise ValueError("the identity audit needs at least 3 sample times")
    t = np.array([b.t for b in breakdowns])
    e = np.array([b.v_l2_sq for b in breakdowns])
    dedt = _centered_derivative(t, e)
    out = []
    for b, de in zip(breakdowns, dedt):
        r = 0.5 * de + b.dissipation - b.lin_stretch - b.lin_visc - b.t_sum
        out.append(replace(b, identity_residual=float(r)))
    res = np.array([b.identity_residual for b in out[1:-1]])
    return out, float(np.max(np.abs(res)))


def energy_history(history: History, params: CorrectorParams) -> list[EnergyBreakdown]:
    rows = [energy_breakdown(s, params) for s in history]
    if len(rows) >= 3:
        rows, _ = identity_audit(rows)
    return rows


# -- T6 layer split ----------------------------------------------------------


def t6_split(u_ns: VelocityField, trace, nu: float, t: float, rho: float,
             scale: CorrectorScale | None = None) -> tuple[float, float]:
    """T_{6,nu} split into the contributions from x2 <= rho and x2 > rho."""
    scale = scale or CorrectorScale()
    g = u_ns.grid
    delta = scale.delta(nu * t)
    f = t6_integrand(u_ns, trace.at(g.x1, t).U, delta)
    pref = -2.0 * INV_SQRT_PI / delta
    total = pref * integrate(f, g)
    if rho <= 0:
        return 0.0, total
    inner = pref * g.h1 * float(np.sum(layer_integral_x2(f, g, rho)))
    outer = pref * g.h1 * float(np.sum(layer_integral_x2(f, g, rho, upper=True)))
    return inner, outer


def t6_tail_bound(u_ns: VelocityField, trace, nu: float, t: float, rho: float,
                  scale: CorrectorScale | None = None) -> float:
    """Bound on |outer part|: (2/(sqrt(pi) delta)) sup|U| exp(-rho^2/delta^2) ||u1 u2||_{L1(x2 > rho)}."""
    scale = scale or CorrectorScale()
    g = u_ns.grid
    delta = scale.delta(nu * t)
    U = np.abs(trace.at(g.x1, t).U).max()
    prod = np.abs(u_ns.u1.values * u_ns.u2.values)
    mass = g.h1 * float(np.sum(layer_integral_x2(prod, g, max(rho, 1e-300), upper=True)))
    with np.errstate(under="ignore"):
        return 2.0 * INV_SQRT_PI / delta * U * math.exp(-((rho / delta) ** 2)) * mass


# -- criteria ----------------------------------------------------------------


@dataclass
class LayerFlag:
    name: str
    t: float
    rho: float
    cells: float
    clipped: bool = False


def _layer_check(grid: Grid, rho: float, name: str, t: float, flags: list | None):
    if flags is None:
        return
    cut = layer_cut(grid, rho)
    if cut.cells < MIN_LAYER_CELLS or cut.clipped:
        flags.append(LayerFlag(name, t, rho, cut.cells, cut.clipped))


def _layer_sum(f: np.ndarray, grid: Grid, rho: float) -> float:
    return grid.h1 * float(np.sum(layer_integral_x2(f, grid, rho)))


def kato_functional(history: History, C: float = 1.0, flags: list | None = None) -> float:
    """nu int_0^T int_{x2 <= C nu} |grad u^NS|^2."""
    nu = history.nu
    rho = C * nu
    vals = []
    for s in history:
        _layer_check(s.grid, rho, "kato", s.t, flags)
        gsq = sum(c * c for c in s.grad_ns)
        vals.append(nu * _layer_sum(gsq, s.grid, rho))
    return time_integral(history.times, vals)


def kelliher_functional(history: History, C: float = 1.0, flags: list | None = None) -> float:
    """nu^-1 int_0^T ||u^NS||^2 over x2 <= C nu."""
    nu = history.nu
    rho = C * nu
    vals = []
    for s in history:
        _layer_check(s.grid, rho, "kelliher", s.t, flags)
        u = s.u_ns
        vals.append(_layer_sum(u.u1.values**2 + u.u2.values**2, s.grid, rho) / nu)
    return time_integral(history.times, vals)


def temam_wang_functional(history: History, a: float = 0.5, flags: list | None = None) -> float:
    """nu int_0^T int_{x2 <= nu^a} |d1 u^NS|^2."""
    nu = history.nu
    rho = nu**a
    vals = []
    for s in history:
        _layer_check(s.grid, rho, "temam_wang", s.t, flags)
        f = s.grad_ns[0] ** 2 + s.grad_ns[2] ** 2
        vals.append(nu * _layer_sum(f, s.grid, rho))
    return time_integral(history.times, vals)


def bt_boundary_vorticity(history: History) -> float:
    """nu int_0^T int |omega^NS(x1, 0, t)| dx1 dt."""
    nu = history.nu
    vals = [nu * s.grid.h1 * float(np.sum(np.abs(s.omega_ns.values[:, 0]))) for s in history]
    return time_integral(history.times, vals)


def ckv_functional(history: History, a: float = 0.5, flags: list | None = None) -> float:
    """int_0^T ||(U^E (omega^NS + delta/(nu t)))_-||^2 over x2 <= nu t/delta, delta = (nu t)^a."""
    nu = history.nu
    vals = []
    for s in history:
        g = s.grid
        st = nu * s.t
        delta = st**a
        rho = st / delta
        _layer_check(g, rho, "ckv", s.t, flags)
        U = s.trace.at(g.x1, s.t).U
        f = U[:, None] * (s.omega_ns.values + delta / st)
        neg = np.maximum(-f, 0.0)
        vals.append(_layer_sum(neg * neg, g, rho))
    return time_integral(history.times, vals)


CRITERIA_COLUMNS = ("nu", "kato", "kelliher", "temam_wang", "bt_boundary_vorticity", "ckv")


@dataclass
class CriteriaReport:
    nu: float
    kato: float
    kelliher: float
    temam_wang: float
    bt_boundary_vorticity: float
    ckv: float
    flags: list = field(default_factory=list)

    def row(self) -> list:
        return [getattr(self, c) for c in CRITERIA_COLUMNS]


def criteria_report(history: History, C: float = 1.0, a: float = 0.5) -> CriteriaReport:
    flags: list = []
    return CriteriaReport(
        nu=history.nu,
        kato=kato_functional(history, C, flags),
        kelliher=kelliher_functional(history, C, flags),
        temam_wang=temam_wang_functional(history, a, flags),
        bt_boundary_vorticity=bt_boundary_vorticity(history),
        ckv=ckv_functional(history, a, flags),
        flags=flags,
    )


# -- assumption functionals ------------------------------------------------------


def _check_rho(history: History, rho: float):
    if not rho > 0:
        raise ValueError(f"layer thickness must be positive, got {rho}")


def equicontinuity_modulus(history: History, rho_list) -> list[tuple[float, float]]:
    """E(rho) = int_0^T int sup_{0 < x2 <= rho} |u1 u2| dx1 dt for each rho."""
    out = []
    for rho in rho_list:
        _check_rho(history, rho)
        vals = []
        for s in history:
            prod = ScalarField(s.grid, s.u_ns.u1.values * s.u_ns.u2.values)
            vals.append(layer_norm(prod, rho, 1, math.inf))
        out.append((float(rho), time_integral(history.times, vals)))
    return out


def uniform_integrability(history: History, rho: float, p_x1: float = 1) -> float:
    """I(rho) = int_0^T ||d1 u1 1_{x2<rho}||^2 in L^{p_x1}_{x1} L^1_{x2}."""
    _check_rho(history, rho)
    vals = [layer_norm(ScalarField(s.grid, s.grad_ns[0]), rho, p_x1, 1) ** 2 for s in history]
    return time_integral(history.times, vals)


def boundedness(history: History, rho: float, p_x1: float = math.inf) -> float:
    """B(rho) = int_0^T ||u1 1_{x2<rho}||^2 in L^{p_x1}_{x1} L^inf_{x2}."""
    _check_rho(history, rho)
    vals = [layer_norm(s.u_ns.u1, rho, p_x1, math.inf) ** 2 for s in history]
    return time_integral(history.times, vals)


def mixed_variants(history: History, rho: float) -> tuple[float, float]:
    """(I, B) with L^2 in x1 in place of L^1 and L^inf."""
    return uniform_integrability(history, rho, 2), boundedness(history, rho, 2)


def wang_integrand(nu: float, t, a: float, c: float):
    s = nu * np.asarray(t, dtype=float)
    delta = s**a
    return nu / delta + delta / np.asarray(t, dtype=float) ** (1.0 + c)


def thm13_functionals(history: History, a: float = 0.5, c: float = 0.5,
                      flags: list | None = None) -> tuple[float, float]:
    """(wang_integral, layer_sup_integral) over the sample times.

    The layer is x2 <= (nu t)^a sqrt(log(1/nu)); it is clipped at the top of
    the strip and the clipping is recorded in ``flags``.
    """
    nu = history.nu
    if not 0 < a < 1:
        raise ValueError(f"need 0 < a < 1, got {a}")
    if not c > 0:
        raise ValueError(f"need c > 0, got {c}")
    if not nu < 1:
        raise ValueError("the layer uses log(1/nu) and needs nu < 1")
    times = history.times
    wang = time_integral(times, wang_integrand(nu, times, a, c))
    vals = []
    for s in history:
        rho = (nu * s.t) ** a * math.sqrt(math.log(1.0 / nu))
        _layer_check(s.grid, rho, "thm13", s.t, flags)
        prod = ScalarField(s.grid, s.u_ns.u1.values * s.u_ns.u2.values)
        vals.append(layer_norm(prod, rho, math.inf, math.inf))
    return wang, time_integral(times, vals)


ASSUMPTION_COLUMNS = (
    "nu",
    "rho",
    "E",
    "I",
    "B",
    "B_over_nu0",
    "I_mixed",
    "B_mixed",
    "wang_integral",
    "layer_sup_integral",
    "layer_clipped",
)


@dataclass
class AssumptionReport:
    nu: float
    nu0: float
    rho: list
    equicontinuity_table: list
    uniform_integrability_table: list
    boundedness_table: list
    mixed_table: list
    thm13: tuple
    flags: list = field(default_factory=list)

    def rows(self) -> list[list]:
        clipped = any(f.clipped for f in self.flags if f.name == "thm13")
        out = []
        for k, rho in enumerate(self.rho):
            B = self.boundedness_table[k][1]
            out.append([
                self.nu,
                rho,
                self.equicontinuity_table[k][1],
                self.uniform_integrability_table[k][1],
                B,
                B / self.nu0,
                self.mixed_table[k][1][0],
                self.mixed_table[k][1][1],
                self.thm13[0],
                self.thm13[1],
                int(clipped),
            ])
        return out


def assumption_report(history: History, rho_list, nu0: float, a: float = 0.5, c: float = 0.5) -> AssumptionReport:
    flags: list = []
    for s in history:
        for rho in rho_list:
            _layer_check(s.grid, rho, "assumption", s.t, flags)
    return AssumptionReport(
        nu=history.nu,
        nu0=nu0,
        rho=[float(r) for r in rho_list],
        equicontinuity_table=equicontinuity_modulus(history, rho_list),
        uniform_integrability_table=[(float(r), uniform_integrability(history, r)) for r in rho_list],
        boundedness_table=[(float(r), boundedness(history, r)) for r in rho_list],
        mixed_table=[(float(r), mixed_variants(history, r)) for r in rho_list],
        thm13=thm13_functionals(history, a, c, flags),
        flags=flags,
    )

