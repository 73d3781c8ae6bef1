"""Vorticity-streamfunction solvers on the periodic half-strip.

Conventions: u1 = d2 psi, u2 = -d1 psi, omega = d2 u1 - d1 u2 = Laplacian(psi).
The streamfunction vanishes on the wall; on the top row it equals the flux
Q, a single number that evolves with the mean momentum balance
dQ/dt = nu (mean omega_top - mean omega_wall).

Time stepping is three-stage SSP Runge-Kutta on the interior vorticity.
Advection uses Arakawa's energy- and enstrophy-conserving Jacobian written in
index coordinates and divided by the local metric h1 * dx2/dj.  With nu > 0
the wall vorticity comes from Thom's formula after every stage; with nu = 0
the boundary rows are advected along the boundary.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from .analytic import TraceSample, erf
from .fields import Grid, ScalarField, VelocityField, d1, d2, dump_csv, load_csv

log = logging.getLogger(__name__)

IC_KINDS = ("shear", "perturbed_shear", "vortex_sheet_smoothed", "from_snapshot")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class InitialCondition:
    """Initial data families.

    shear: u1 = U0 (uniform, width 0) or U0 erf(x2/width); u2 = 0.
    perturbed_shear: uniform U0 plus psi' = amplitude sin(mode x1) x2 exp(-x2/length_scale).
    vortex_sheet_smoothed: omega = (U0/width) sech^2((x2 - y0 - amplitude sin(mode x1))/width),
        with the flux chosen so the mean wall slip is -U0.
    from_snapshot: vorticity and flux read from ``path`` (CSV plus sidecar JSON).
    """

    kind: str = "shear"
    U0: float = 1.0
    amplitude: float = 0.0
    mode: int = 1
    length_scale: float = 0.5
    width: float = 0.0
    y0: float = 1.0
    path: str = ""

    def __post_init__(self):
        if self.kind not in IC_KINDS:
            raise ValueError(f"initial condition must be one of {IC_KINDS}, got {self.kind!r}")
        if self.kind == "from_snapshot" and not self.path:
            raise ValueError("from_snapshot needs a path")
        if self.kind == "vortex_sheet_smoothed" and not self.width > 0:
            raise ValueError("smoothed vortex sheet needs width > 0")


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    grid: Grid
    t_end: float
    sample_times: tuple = ()
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    cfl: float = 0.4
    diffusion_safety: float = 0.25
    dt_max: float = math.inf
    t_start: float = 0.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("viscosity must be non-negative")
        object.__setattr__(self, "sample_times", tuple(float(t) for t in self.sample_times))
        st = self.sample_times
        if any(b <= a for a, b in zip(st, st[1:])):
            raise ValueError("sample_times must be strictly increasing")
        if st and (st[0] < self.t_start or st[-1] > self.t_end + 1e-12):
            raise ValueError("sample_times must lie in [t_start, t_end]")
        if not (self.cfl > 0 and self.diffusion_safety > 0):
            raise ValueError("cfl and diffusion_safety must be positive")

    @property
    def euler(self) -> bool:
        return self.nu == 0.0

    def describe(self) -> dict:
        d = {
            "nu": self.nu,
            "grid": self.grid.describe(),
            "t_end": self.t_end,
            "t_start": self.t_start,
            "sample_times": list(self.sample_times),
            "initial_condition": asdict(self.initial_condition),
            "cfl": self.cfl,
            "diffusion_safety": self.diffusion_safety,
            "dt_max": None if math.isinf(self.dt_max) else self.dt_max,
        }
        return d

    def digest(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SolverState:
    omega: ScalarField
    psi: ScalarField
    Q: float
    time: float
    steps: int = 0
    last_dt: float = 0.0
    audit: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.omega.grid

    @property
    def velocity(self) -> VelocityField:
        g = self.grid
        u2 = -d1(self.psi.values, g)
        u2[:, 0] = 0.0
        return VelocityField(ScalarField(g, d2(self.psi.values, g)), ScalarField(g, u2))


Snapshot = SolverState


@dataclass
class Trajectory:
    config: SolverConfig
    snapshots: list = field(default_factory=list)
    steps: int = 0
    max_audit: float = 0.0
    dt_range: tuple = (math.inf, 0.0)

    @property
    def times(self) -> list:
        return [s.time for s in self.snapshots]

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]


# -- Poisson ----------------------------------------------------------------


def _d22_coefficients(grid: Grid):
    h = grid.dx2
    hm, hp = h[:-1], h[1:]
    a = 2.0 / (hm * (hm + hp))
    c = 2.0 / (hp * (hm + hp))
    return a, -(a + c), c


@lru_cache(maxsize=16)
def _poisson_factor(grid: Grid):
    nk = grid.nx // 2 + 1
    a, b, c = _d22_coefficients(grid)
    k = np.arange(nk)
    lam = (2.0 / grid.h1**2) * (np.cos(2.0 * np.pi * k / grid.nx) - 1.0)
    main = (b[None, :] + lam[:, None]).ravel()
    lower = np.tile(np.append(a[1:], 0.0), nk)[:-1]
    upper = np.tile(np.append(c[:-1], 0.0), nk)[:-1]
    mat = diags([lower, main, upper], [-1, 0, 1], format="csc")
    return splu(mat), a, c


def poisson_solve(omega: ScalarField, grid: Grid | None = None, Q: float = 0.0) -> ScalarField:
    """Solve Laplacian(psi) = omega with psi = 0 on the wall and psi = Q on the top.

    Only interior values of omega are used.  The x1 Laplacian is the
    three-point one, diagonalized exactly by the discrete Fourier transform.
    """
    g = grid or omega.grid
    lu, a, c = _poisson_factor(g)
    nk = g.nx // 2 + 1
    rhs = np.fft.rfft(omega.values[:, 1:-1], axis=0)
    rhs[0, -1] -= c[-1] * Q * g.nx
    flat = rhs.ravel()
    sol = lu.solve(np.stack([flat.real, flat.imag], axis=1))
    hat = (sol[:, 0] + 1j * sol[:, 1]).reshape(nk, g.ny - 2)
    psi = np.empty((g.nx, g.ny))
    psi[:, 1:-1] = np.fft.irfft(hat, n=g.nx, axis=0)
    psi[:, 0] = 0.0
    psi[:, -1] = Q
    return ScalarField(g, psi)


# -- spatial operators -------------------------------------------------------


def arakawa(psi: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Arakawa's Jacobian d_i psi d_j omega - d_j psi d_i omega in index units, interior rows."""
    p = psi
    w = omega

    def sh(f, di, dj):
        # f at (i+di, j+dj) for interior j
        g = np.roll(f, -di, axis=0) if di else f
        n = f.shape[1]
        return g[:, 1 + dj : n - 1 + dj]

    pE, pW, pN, pS = sh(p, 1, 0), sh(p, -1, 0), sh(p, 0, 1), sh(p, 0, -1)
    wE, wW, wN, wS = sh(w, 1, 0), sh(w, -1, 0), sh(w, 0, 1), sh(w, 0, -1)
    pNE, pNW, pSE, pSW = sh(p, 1, 1), sh(p, -1, 1), sh(p, 1, -1), sh(p, -1, -1)
    wNE, wNW, wSE, wSW = sh(w, 1, 1), sh(w, -1, 1), sh(w, 1, -1), sh(w, -1, -1)

    j1 = (pE - pW) * (wN - wS) - (pN - pS) * (wE - wW)
    j2 = pE * (wNE - wSE) - pW * (wNW - wSW) - pN * (wNE - wNW) + pS * (wSE - wSW)
    j3 = wN * (pNE - pNW) - wS * (pSE - pSW) - wE * (pNE - pSE) + wW * (pNW - pSW)
    return (j1 + j2 + j3) / 12.0


def advection(psi: np.ndarray, omega: np.ndarray, grid: Grid) -> np.ndarray:
    """u . grad(omega) on interior rows, from Arakawa's Jacobian."""
    metric = grid.h1 * grid.metric[1:-1]
    return -arakawa(psi, omega) / metric[None, :]


def diffusion(omega: np.ndarray, grid: Grid) -> np.ndarray:
    """Five-point Laplacian on interior rows, three-point nonuniform in x2."""
    a, b, c = _d22_coefficients(grid)
    w = omega
    lap2 = a * w[:, :-2] + b * w[:, 1:-1] + c * w[:, 2:]
    lap1 = (np.roll(w, -1, axis=0) - 2.0 * w + np.roll(w, 1, axis=0))[:, 1:-1] / grid.h1**2
    return lap1 + lap2


def thom_wall(psi: np.ndarray, grid: Grid) -> np.ndarray:
    """Wall vorticity from psi_wall = 0 and d2 psi = 0 at the wall."""
    h = grid.dx2[0]
    return 2.0 * (psi[:, 1] - psi[:, 0]) / h**2


def thom_top(psi: np.ndarray, grid: Grid) -> np.ndarray:
    h = grid.dx2[-1]
    return 2.0 * (psi[:, -2] - psi[:, -1]) / h**2


def _mean_x1(row: np.ndarray) -> float:
    return float(np.mean(row))


class _Rhs:
    """Right-hand side of the semi-discrete system for one configuration."""

    def __init__(self, config: SolverConfig):
        self.cfg = config
        self.g = config.grid
        self.nu = config.nu

    def close(self, omega: np.ndarray, Q: float) -> tuple[np.ndarray, np.ndarray]:
        """Streamfunction for the interior vorticity, with boundary rows filled in (NS)."""
        g = self.g
        if not (np.all(np.isfinite(omega)) and math.isfinite(Q)):
            raise SolverError("non-finite vorticity")
        psi = poisson_solve(ScalarField(g, omega), g, Q).values
        if self.nu > 0:
            omega = omega.copy()
            omega[:, 0] = thom_wall(psi, g)
            if g.top_bc == "free_slip":
                omega[:, -1] = 0.0
            else:
                omega[:, -1] = thom_top(psi, g)
        return omega, psi

    def __call__(self, omega: np.ndarray, Q: float):
        omega, psi = self.close(omega, Q)
        g = self.g
        L = np.zeros_like(omega)
        L[:, 1:-1] = -advection(psi, omega, g)
        if self.nu > 0:
            L[:, 1:-1] += self.nu * diffusion(omega, g)
            dQ = self.nu * (_mean_x1(omega[:, -1]) - _mean_x1(omega[:, 0]))
        else:
            # impermeable wall and top: tangential advection of the boundary rows
            u_wall = d2(psi, g)
            for j in (0, -1):
                L[:, j] = -u_wall[:, j] * d1(omega[:, j : j + 1 or None], g)[:, 0]
            dQ = 0.0
        return L, dQ, omega, psi


def stable_dt(state: SolverState, config: SolverConfig) -> float:
    """Largest admissible step from the advective and diffusive limits."""
    g = config.grid
    v = state.velocity
    h2 = np.concatenate([[g.dx2[0]], np.minimum(g.dx2[:-1], g.dx2[1:]), [g.dx2[-1]]])
    rate = np.max(np.abs(v.u1.values) / g.h1 + np.abs(v.u2.values) / h2[None, :])
    dt = config.cfl / rate if rate > 0 else math.inf
    if config.nu > 0:
        hmin = min(g.h1, float(g.dx2.min()))
        dt = min(dt, config.diffusion_safety * hmin**2 / config.nu)
    dt = min(dt, config.dt_max)
    if not math.isfinite(dt):
        dt = config.t_end - state.time if config.t_end > state.time else 1.0
    return dt


def _step(state: SolverState, config: SolverConfig, dt: float) -> SolverState:
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return _rk3(state, config, dt)
    except SolverError as exc:
        raise SolverError(
            f"{exc} after step {state.steps + 1} at t={state.time + dt:.6g} (dt={dt:.3g})"
        ) from None


def _rk3(state: SolverState, config: SolverConfig, dt: float) -> SolverState:
    rhs = _Rhs(config)
    w0, Q0 = state.omega.values, state.Q
    L0, q0, w0c, _ = rhs(w0, Q0)
    w1 = w0c + dt * L0
    Q1 = Q0 + dt * q0
    L1, q1, w1c, _ = rhs(w1, Q1)
    w2 = 0.75 * w0c + 0.25 * (w1c + dt * L1)
    Q2 = 0.75 * Q0 + 0.25 * (Q1 + dt * q1)
    L2, q2, w2c, _ = rhs(w2, Q2)
    w3 = w0c / 3.0 + (2.0 / 3.0) * (w2c + dt * L2)
    Q3 = Q0 / 3.0 + (2.0 / 3.0) * (Q2 + dt * q2)

    if not (np.all(np.isfinite(w3)) and math.isfinite(Q3)):
        raise SolverError("non-finite vorticity")
    rows = slice(1, -1) if config.nu > 0 else slice(None)
    update = w3[:, rows] - w0c[:, rows] - dt * (L0[:, rows] / 6 + L1[:, rows] / 6 + 2 * L2[:, rows] / 3)
    scale = max(1.0, float(np.max(np.abs(w0c))), dt * float(np.max(np.abs(L0))))
    audit = float(np.max(np.abs(update))) / scale

    w3, psi = rhs.close(w3, Q3)
    g = config.grid
    return SolverState(
        omega=ScalarField(g, w3),
        psi=ScalarField(g, psi),
        Q=float(Q3),
        time=state.time + dt,
        steps=state.steps + 1,
        last_dt=dt,
        audit=audit,
    )


def ns_step(state: SolverState, config: SolverConfig, dt: float | None = None) -> SolverState:
    """One SSP-RK3 step of the Navier-Stokes vorticity equation."""
    if not config.nu > 0:
        raise ValueError("ns_step needs nu > 0; use euler_step for nu = 0")
    return _step(state, config, dt or stable_dt(state, config))


def euler_step(state: SolverState, config: SolverConfig, dt: float | None = None) -> SolverState:
    """One SSP-RK3 step of the Euler vorticity equation (impermeable walls)."""
    if config.nu != 0:
        raise ValueError("euler_step needs nu = 0")
    return _step(state, config, dt or stable_dt(state, config))


# -- initial data -------------------------------------------------------------


def initial_state(config: SolverConfig) -> SolverState:
    ic = config.initial_condition
    g = config.grid
    X1, X2 = g.mesh
    L = g.height_x2
    if ic.kind == "from_snapshot":
        snap = load_snapshot(ic.path, g)
        if snap.time != config.t_start:
            log.info("snapshot time %.6g replaces t_start %.6g", snap.time, config.t_start)
        state = snap
    else:
        if ic.kind == "shear":
            if ic.width > 0:
                z = X2 / ic.width
                omega = ic.U0 * 2.0 / math.sqrt(math.pi) * np.exp(-z * z) / ic.width
                d = ic.width
                Q = ic.U0 * (L * float(erf(L / d)) + d * (math.exp(-((L / d) ** 2)) - 1.0) / math.sqrt(math.pi))
            else:
                omega = np.zeros_like(X2)
                Q = ic.U0 * L
        elif ic.kind == "perturbed_shear":
            ell, m, A = ic.length_scale, ic.mode, ic.amplitude
            e = np.exp(-X2 / ell)
            s = np.sin(m * X1)
            # Laplacian of A sin(m x1) x2 exp(-x2/ell)
            omega = A * s * e * (-(m**2) * X2 - 2.0 / ell + X2 / ell**2)
            Q = ic.U0 * L
        else:
            ys = ic.y0 + ic.amplitude * np.sin(ic.mode * X1)
            omega = ic.U0 / ic.width / np.cosh((X2 - ys) / ic.width) ** 2
            psi0 = poisson_solve(ScalarField(g, omega), g, 0.0).values
            slip = float(np.mean(d2(psi0, g)[:, 0]))
            Q = L * (-ic.U0 - slip)
        omega = np.array(omega, dtype=float)
        psi = poisson_solve(ScalarField(g, omega), g, Q).values
        state = SolverState(ScalarField(g, omega), ScalarField(g, psi), float(Q), config.t_start)
    if config.nu > 0:
        w, psi = _Rhs(config).close(state.omega.values, state.Q)
        state = replace(state, omega=ScalarField(g, w), psi=ScalarField(g, psi))
    return state


# -- driver ---------------------------------------------------------------------


def run(config: SolverConfig, state: SolverState | None = None) -> Trajectory:
    """Integrate to each sample time and record a snapshot there."""
    traj = Trajectory(config)
    if not config.sample_times:
        return traj
    state = state or initial_state(config)
    step = euler_step if config.euler else ns_step
    lo, hi = math.inf, 0.0
    for target in config.sample_times:
        while state.time < target - 1e-14 * max(1.0, target):
            dt = stable_dt(state, config)
            remaining = target - state.time
            if dt >= remaining:
                dt = remaining
            elif dt > 0.5 * remaining:
                dt = 0.5 * remaining
            state = step(state, config, dt)
            lo, hi = min(lo, dt), max(hi, dt)
            traj.max_audit = max(traj.max_audit, state.audit)
            traj.steps += 1
        state = replace(state, time=target)
        traj.snapshots.append(state)
    traj.dt_range = (lo, hi)
    log.info("run nu=%g: %d steps, dt in [%.3g, %.3g]", config.nu, traj.steps, lo, hi)
    return traj


# -- snapshots -------------------------------------------------------------------


def dump_snapshot(state: SolverState, path, config: SolverConfig | None = None) -> tuple[Path, Path]:
    """Write vorticity as CSV and a JSON sidecar with time, flux, grid and config hash."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    meta_path = path.with_suffix(".json")
    dump_csv(state.omega, csv_path)
    meta = {
        "t": state.time,
        "Q": state.Q,
        "grid": state.grid.describe(),
        "nu": None if config is None else config.nu,
        "config_hash": None if config is None else config.digest(),
        "steps": state.steps,
    }
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return csv_path, meta_path


def grid_from_meta(meta: dict) -> Grid:
    gd = meta["grid"]
    return Grid(gd["nx"], gd["ny"], gd["length_x1"], gd["height_x2"], gd["top_bc"], gd["grading"])


def load_snapshot(path, grid: Grid | None = None) -> SolverState:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    g = grid_from_meta(meta)
    if grid is not None and grid != g:
        raise ValueError(f"{path}: snapshot grid {g} differs from configured grid {grid}")
    omega = load_csv(path.with_suffix(".csv"), g)
    psi = poisson_solve(omega, g, meta["Q"])
    return SolverState(omega, psi, float(meta["Q"]), float(meta["t"]), int(meta.get("steps", 0)))


# -- Euler wall trace from a discrete state ----------------------------------------


def _spectral_d1(f: np.ndarray, length: float, order: int = 1) -> np.ndarray:
    n = f.shape[0]
    k = np.fft.rfftfreq(n, d=length / (2.0 * np.pi * n))
    hat = np.fft.rfft(f) * (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        hat[-1] = 0.0
    return np.fft.irfft(hat, n=n)


@dataclass(frozen=True, eq=False)
class GridTrace:
    """Euler wall trace read off a discrete Euler state at one time."""

    time: float
    sample: TraceSample
    x1: np.ndarray

    def at(self, x1, t: float) -> TraceSample:
        if abs(t - self.time) > 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"grid trace is frozen at t={self.time}, asked for t={t}")
        if np.shape(x1) != self.x1.shape or np.max(np.abs(np.asarray(x1) - self.x1)) > 1e-12:
            raise ValueError("grid trace is only available on the solver's x1 nodes")
        return self.sample

    @property
    def is_zero(self) -> bool:
        return not np.any(self.sample.U) and not np.any(self.sample.dt)

    def sup(self, t: float) -> float:
        return float(np.max(np.abs(self.sample.U)))


def trace_from_state(state: SolverState, config: SolverConfig) -> GridTrace:
    """Wall trace U = d2 psi at x2 = 0 with spectral x1 derivatives.

    The time derivative solves Laplacian(psi_t) = omega_t with homogeneous
    boundary data (the Euler flux is constant), omega_t = -u . grad(omega).
    """
    if config.nu != 0:
        raise ValueError("the wall trace is taken from an Euler (nu = 0) state")
    g = state.grid
    L, _, _, _ = _Rhs(config)(state.omega.values, state.Q)
    psi_t = poisson_solve(ScalarField(g, L), g, 0.0).values
    U = d2(state.psi.values, g)[:, 0]
    Ut = d2(psi_t, g)[:, 0]
    lx = g.length_x1
    sample = TraceSample(
        U=U,
        d1=_spectral_d1(U, lx, 1),
        d11=_spectral_d1(U, lx, 2),
        d111=_spectral_d1(U, lx, 3),
        dt=Ut,
        d1t=_spectral_d1(Ut, lx, 1),
    )
    return GridTrace(state.time, sample, g.x1.copy())
