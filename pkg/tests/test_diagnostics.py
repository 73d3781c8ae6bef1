import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate as spi
from scipy import special

from conftest import observed_orders
from manufactured import NU, PAIRS, TRACES, T, field_callables, manufactured_grid, manufactured_sample, oracle_terms
from inviscid_lab.analytic import EulerTrace
from inviscid_lab.corrector import CorrectorParams, build_corrector
from inviscid_lab.diagnostics import (
    FlowSample,
    History,
    bt_boundary_vorticity,
    boundedness,
    ckv_functional,
    compute_v,
    criteria_report,
    energy_breakdown,
    energy_history,
    equicontinuity_modulus,
    identity_audit,
    kato_functional,
    kelliher_functional,
    mixed_variants,
    shear_history,
    t6_split,
    t6_tail_bound,
    temam_wang_functional,
    thm13_functionals,
    time_integral,
    uniform_integrability,
    wang_integrand,
)
from inviscid_lab.fields import Grid, ScalarField, VelocityField, layer_norm
from inviscid_lab.fitting import fit_rate

TERMS = ("v_l2_sq", "dissipation", "lin_stretch", "lin_visc", "T1", "T2", "T3", "T4", "T5", "T6", "t6_nu")
T_TERMS = ("T1", "T2", "T3", "T4", "T5", "T6")
U0 = 1.0
T_MIN, T_END = 1e-3, 1.0
TIMES = np.geomspace(T_MIN, T_END, 41)


def shear_grid(nu, C=1.0):
    return Grid.with_wall_spacing(8, 401, C * nu / 40, height_x2=4.0)


def zero_velocity(grid):
    z = ScalarField(grid, np.zeros((grid.nx, grid.ny)))
    return VelocityField(z, z)


def replay(sample, times):
    """History of copies of one sample relabelled at the given times."""
    return History(NU, [replace(sample, t=float(t)) for t in times])


@pytest.fixture(scope="module")
def manufactured():
    g = manufactured_grid()
    return {pair: manufactured_sample(g, pair) for pair in PAIRS}


@pytest.fixture(scope="module")
def breakdowns(manufactured):
    return {pair: energy_breakdown(s, CorrectorParams(NU, TRACES[pair])) for pair, s in manufactured.items()}


# -- compute_v ---------------------------------------------------------------


def test_compute_v_trivial_and_mismatch():
    g = Grid(16, 33)
    X1, X2 = g.mesh
    u = VelocityField(ScalarField(g, np.sin(X1) * X2), ScalarField(g, np.zeros_like(X1)))
    ck = build_corrector(CorrectorParams(1e-3, EulerTrace.zero()), g, 0.5)
    v = compute_v(u, u, ck.velocity)
    assert np.all(v.u1.values == 0) and np.all(v.u2.values == 0)
    with pytest.raises(ValueError):
        compute_v(u, u, zero_velocity(Grid(16, 17)))


def test_compute_v_vanishes_on_wall_for_shear():
    nu, t = 1e-3, 0.5
    g = shear_grid(nu)
    s = shear_history(U0, nu, g, [t]).samples[0]
    ck = build_corrector(CorrectorParams(nu, EulerTrace.constant(U0)), g, t)
    v = compute_v(s.u_ns, s.u_e, ck.velocity)
    assert np.max(np.abs(v.u1.values[:, 0])) <= 1e-10
    assert np.max(np.abs(v.u2.values[:, 0])) <= 1e-10


# -- energy breakdown: zero structure ----------------------------------------


def test_shear_has_no_t4_t5_t6():
    nu = 1e-3
    hist = shear_history(U0, nu, shear_grid(nu), TIMES[::10])
    for b in energy_history(hist, CorrectorParams(nu, EulerTrace.constant(U0))):
        assert abs(b.T4) <= 1e-12 and abs(b.T5) <= 1e-12 and abs(b.T6) <= 1e-12
        assert all(math.isfinite(getattr(b, k)) for k in TERMS)


def test_zero_trace_gives_zero_terms(manufactured):
    s = manufactured["b"]
    s0 = FlowSample(s.t, s.u_ns, s.omega_ns, s.u_e, EulerTrace.zero(), s.grad_ns, s.grad_ue, s.lap_ue)
    b = energy_breakdown(s0, CorrectorParams(NU, EulerTrace.zero()))
    for k in T_TERMS + ("t6_nu",):
        assert getattr(b, k) == 0.0


# -- energy breakdown against the manufactured oracle -------------------------


@pytest.mark.parametrize("pair", sorted(PAIRS))
def test_terms_match_manufactured_oracle(pair, breakdowns):
    oracle = oracle_terms(pair)
    b = breakdowns[pair]
    scale = max(abs(oracle[k]) for k in TERMS)
    for k in TERMS:
        exact = oracle[k]
        if abs(exact) > 1e-12 * scale:
            assert abs(getattr(b, k) / exact - 1) <= 1e-6, k
        else:
            # zero by x1 parity for this pair
            assert abs(getattr(b, k)) <= 1e-14 * scale, k


def test_parity_pair_exercises_every_term():
    oracle = oracle_terms("b")
    assert min(abs(oracle[k]) for k in TERMS) > 1e-5


def test_quadrature_error_is_second_order(breakdowns):
    # half the resolution of manufactured_grid()
    g = Grid.with_wall_spacing(32, 8001, math.sqrt(4 * NU * T) / 800, height_x2=4.0)
    coarse = energy_breakdown(manufactured_sample(g, "b"), CorrectorParams(NU, TRACES["b"]))
    oracle = oracle_terms("b")
    for k in ("dissipation", "lin_stretch", "T1", "T6"):
        e_coarse = abs(getattr(coarse, k) - oracle[k])
        e_fine = abs(getattr(breakdowns["b"], k) - oracle[k])
        assert e_coarse / e_fine >= 3.5, k


# -- T6 split ------------------------------------------------------------------


@pytest.mark.parametrize("rho", [0.02, 0.05, 0.3])
def test_t6_split_matches_oracle_and_adds_up(rho, manufactured, breakdowns):
    s = manufactured["b"]
    inner, outer = t6_split(s.u_ns, TRACES["b"], NU, T, rho)
    oracle = oracle_terms("b", rho)
    # both parts are measured against the size of the unsplit integral: the
    # Gaussian tail beyond rho can be many orders of magnitude below it
    ref = abs(oracle["t6_nu"])
    assert abs(inner - oracle["t6_inner"]) <= 1e-6 * ref
    assert abs(outer - oracle["t6_outer"]) <= 1e-6 * ref
    total = breakdowns["b"].t6_nu
    assert abs(inner + outer - total) <= 1e-10 * abs(total)
    assert abs(outer) <= t6_tail_bound(s.u_ns, TRACES["b"], NU, T, rho)


def test_t6_split_degenerate_cases(manufactured, breakdowns):
    s = manufactured["b"]
    inner, outer = t6_split(s.u_ns, TRACES["b"], NU, T, 0.0)
    assert inner == 0.0
    assert abs(outer - breakdowns["b"].t6_nu) <= 1e-12 * abs(outer)
    nu = 1e-3
    sh = shear_history(U0, nu, shear_grid(nu), [0.5]).samples[0]
    assert t6_split(sh.u_ns, sh.trace, nu, 0.5, 0.01) == (0.0, 0.0)


def test_t6_tail_bound_decays_with_rho(manufactured):
    s = manufactured["b"]
    b = [t6_tail_bound(s.u_ns, TRACES["b"], NU, T, r) for r in (0.05, 0.1, 0.2)]
    assert b[0] > b[1] > b[2] >= 0


# -- identity audit --------------------------------------------------------------


def test_identity_audit_frozen_fields():
    g = Grid(16, 65, height_x2=2.0)
    X1, X2 = g.mesh
    u = VelocityField(ScalarField(g, np.full_like(X1, U0)), ScalarField(g, np.zeros_like(X1)))
    omega = ScalarField(g, np.zeros_like(X1))
    params = CorrectorParams(1e-3, EulerTrace.zero())
    rows = [energy_breakdown(FlowSample(t, u, omega, u, EulerTrace.zero()), params) for t in np.linspace(0.1, 1, 7)]
    audited, worst = identity_audit(rows)
    assert worst <= 1e-10
    assert math.isnan(audited[0].identity_residual) and math.isnan(audited[-1].identity_residual)


def test_identity_audit_needs_three_samples():
    g = Grid(8, 17)
    u = zero_velocity(g)
    rows = [energy_breakdown(FlowSample(t, u, u.u1, u, EulerTrace.zero()), CorrectorParams(1e-3, EulerTrace.zero()))
            for t in (0.1, 0.2)]
    with pytest.raises(ValueError):
        identity_audit(rows)


# -- criteria on the analytic shear ---------------------------------------------


def kato_oracle(nu, C=1.0):
    def inner(t):
        val, _ = spi.quad(lambda x: math.exp(-2 * x * x / (4 * nu * t)), 0, C * nu, epsabs=0, epsrel=1e-12)
        return U0**2 * val / (math.pi * nu * t)

    val, _ = spi.quad(inner, T_MIN, T_END, epsabs=0, epsrel=1e-10, limit=200)
    return nu * val


def kelliher_oracle(nu, C=1.0):
    def inner(t):
        val, _ = spi.quad(lambda x: special.erf(x / math.sqrt(4 * nu * t)) ** 2, 0, C * nu, epsabs=0, epsrel=1e-12)
        return 2 * math.pi * U0**2 * val

    val, _ = spi.quad(inner, T_MIN, T_END, epsabs=0, epsrel=1e-10, limit=200)
    return val / nu


def bt_oracle(nu):
    return nu * 2 * math.pi * U0 / math.sqrt(math.pi * nu) * 2 * (math.sqrt(T_END) - math.sqrt(T_MIN))


@pytest.fixture(scope="module")
def shear_runs():
    return {nu: shear_history(U0, nu, shear_grid(nu), TIMES) for nu in (1e-2, 1e-3, 1e-4)}


def test_kato_bt_kelliher_match_nested_quadrature(shear_runs):
    kato, bt = [], []
    for nu, hist in shear_runs.items():
        k = kato_functional(hist, 1.0)
        b = bt_boundary_vorticity(hist)
        # the kato oracle uses the layer integral on [0, 2 pi)
        assert abs(k / (2 * math.pi * kato_oracle(nu)) - 1) <= 0.01
        assert abs(b / bt_oracle(nu) - 1) <= 0.01
        assert abs(kelliher_functional(hist, 1.0) / kelliher_oracle(nu) - 1) <= 0.01
        kato.append(k)
        bt.append(b)
    assert kato[0] > kato[1] > kato[2]
    assert bt[0] > bt[1] > bt[2]


def test_kato_nested_layers(shear_runs):
    hist = shear_runs[1e-3]
    vals = [kato_functional(hist, C) for C in (0.25, 0.5, 1.0, 2.0)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_shear_zero_functionals(shear_runs):
    hist = shear_runs[1e-3]
    assert temam_wang_functional(hist) == 0.0
    assert ckv_functional(hist) == 0.0
    for _, e in equicontinuity_modulus(hist, [0.01, 0.1, 1.0]):
        assert e == 0.0
    assert uniform_integrability(hist, 0.1) == 0.0
    assert thm13_functionals(hist)[1] == 0.0


def test_zero_flow_gives_zero_criteria():
    g = shear_grid(1e-3)
    u = zero_velocity(g)
    hist = History(1e-3, [FlowSample(t, u, u.u1, u, EulerTrace.zero()) for t in (0.1, 0.2, 0.3)])
    rep = criteria_report(hist)
    for k in ("kato", "kelliher", "temam_wang", "bt_boundary_vorticity", "ckv"):
        assert getattr(rep, k) == 0.0
    assert boundedness(hist, 0.1) == 0.0 and uniform_integrability(hist, 0.1) == 0.0


def test_boundedness_shear_oracle(shear_runs):
    nu = 1e-3
    hist = shear_runs[nu]
    prev = 0.0
    for rho in (0.005, 0.02, 0.1, 1.0):
        exact = [U0**2 * special.erf(rho / math.sqrt(4 * nu * t)) ** 2 for t in TIMES]
        B = boundedness(hist, rho)
        assert abs(B / time_integral(TIMES, exact) - 1) <= 1e-3
        assert B >= prev
        prev = B
    # erf <= 1: B is at most T U0^2
    assert boundedness(hist, 3.0) <= (T_END - T_MIN) * U0**2 * (1 + 1e-12)


# -- assumption functionals on manufactured fields -----------------------------------


def test_mixed_variants_match_closed_forms(manufactured):
    # pair a: d1 u1 = cos(x1) (2 x2 - x2^2) e^{-x2}, whose x2-integral over (0, rho) is rho^2 e^{-rho}
    times = (0.3, 0.4, 0.5)
    hist = replay(manufactured["a"], times)
    span = times[-1] - times[0]
    rho = 1.0
    I_mixed, B_mixed = mixed_variants(hist, rho)
    assert abs(I_mixed / (span * math.pi * rho**4 * math.exp(-2 * rho)) - 1) <= 1e-6
    xs = 2 - math.sqrt(2)  # maximiser of (2 x - x^2) e^{-x}
    fmax = (2 * xs - xs * xs) * math.exp(-xs)
    assert abs(B_mixed / (span * math.pi * fmax**2) - 1) <= 1e-6


def test_assumption_tables_monotone_in_rho(manufactured):
    hist = replay(manufactured["b"], (0.3, 0.4, 0.5))
    rhos = [0.01, 0.05, 0.2, 1.0, 3.0]
    E = [e for _, e in equicontinuity_modulus(hist, rhos)]
    I = [uniform_integrability(hist, r) for r in rhos]
    B = [boundedness(hist, r) for r in rhos]
    for seq in (E, I, B):
        assert all(a <= b for a, b in zip(seq, seq[1:]))
    with pytest.raises(ValueError):
        uniform_integrability(hist, 0.0)


def test_equicontinuity_full_height_and_linear_decay(manufactured):
    s = manufactured["b"]
    g = s.grid
    # u^NS := u^E, which slips at the wall while u2 vanishes there
    hist = replay(FlowSample(s.t, s.u_e, s.omega_ns, s.u_e, s.trace), (0.3, 0.4, 0.5))
    top = g.x2[-1]
    (_, e_top), = equicontinuity_modulus(hist, [top])
    prod = ScalarField(g, s.u_e.u1.values * s.u_e.u2.values)
    assert abs(e_top - 0.2 * layer_norm(prod, top, 1, math.inf)) <= 1e-10 * e_top
    E = [e for _, e in equicontinuity_modulus(hist, [4e-3, 2e-3, 1e-3, 5e-4])]
    assert np.all(np.abs(np.asarray(observed_orders(E)) - 1.0) <= 0.05)


def ckv_oracle(trace, nu, t, K, a=0.5):
    st = nu * t
    delta = st**a
    rho = st / delta
    U = lambda x: trace.U(np.array([x]), t)[0]

    def f(x2, x1):
        w = -K * (2 + math.cos(x1)) * (1 + x2)
        return max(-U(x1) * (w + delta / st), 0.0) ** 2

    val, _ = spi.dblquad(f, 0, 2 * math.pi, 0, rho, epsabs=0, epsrel=1e-11)
    return val


def test_ckv_negative_layer_matches_quadrature(manufactured):
    s = manufactured["b"]
    g = s.grid
    X1, X2 = g.mesh
    K = 200.0  # large enough that omega + delta/(nu t) < 0 throughout the layer
    omega = ScalarField(g, -K * (2 + np.cos(X1)) * (1 + X2))
    trace = EulerTrace.constant(1.5)
    times = (0.3, 0.4, 0.5)
    hist = History(NU, [FlowSample(t, s.u_ns, omega, s.u_e, trace) for t in times])
    got = ckv_functional(hist)
    want = time_integral(times, [ckv_oracle(trace, NU, t, K) for t in times])
    assert abs(got / want - 1) <= 1e-6


# -- Wang integral ---------------------------------------------------------------------


def test_wang_integral_rate_matches_scalar_quadrature():
    a = c = 0.5
    nus = [1e-2, 1e-3, 1e-4, 1e-5]
    got, want = [], []
    g = Grid(8, 33)
    u = zero_velocity(g)
    for nu in nus:
        hist = History(nu, [FlowSample(float(t), u, u.u1, u, EulerTrace.zero()) for t in TIMES])
        got.append((nu, thm13_functionals(hist, a, c)[0]))
        val, _ = spi.quad(lambda t: float(wang_integrand(nu, t, a, c)), T_MIN, T_END, epsabs=0, epsrel=1e-12, limit=200)
        want.append((nu, val))
    e_got, e_want = fit_rate(got).exponent, fit_rate(want).exponent
    assert e_got > 0
    assert abs(e_got / e_want - 1) <= 0.02


def test_thm13_clipping_and_validation():
    g = Grid(8, 33, height_x2=0.1)
    u = zero_velocity(g)
    flags = []
    hist = History(0.5, [FlowSample(t, u, u.u1, u, EulerTrace.zero()) for t in (0.5, 0.75, 1.0)])
    thm13_functionals(hist, flags=flags)
    assert flags and all(f.clipped for f in flags)
    for bad in (dict(a=0.0), dict(a=1.0), dict(c=0.0)):
        with pytest.raises(ValueError):
            thm13_functionals(hist, **bad)
    with pytest.raises(ValueError):
        thm13_functionals(History(1.0, hist.samples))


def test_field_callables_are_divergence_free():
    # sanity check of the oracle itself: exact fields from the streamfunctions
    f = field_callables("b")
    x1 = np.linspace(0, 2 * np.pi, 7)
    x2 = np.linspace(0, 3, 7)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    for key in ("gn", "ge"):
        g = [fn(X1, X2) for fn in f[key]]
        assert np.max(np.abs(g[0] + g[3])) <= 1e-12
