"""Special functions, Euler wall traces and exact reference flows.

The complementary error function is computed here rather than imported so
that its accuracy is under our control: a Maclaurin series for erf near the
origin and Laplace's continued fraction for the tail.  Against a 40-digit
reference it is good to about 2e-14 relative on [0, 10].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np

SQRT_PI = math.sqrt(math.pi)
INV_SQRT_PI = 1.0 / SQRT_PI

# crossover between the series and the continued fraction, and their lengths
_SERIES_MAX = 1.5
_SERIES_TERMS = 60
_CF_DEPTH = 50


def erfc(z):
    """Complementary error function, vectorized over ``z``."""
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    out = np.empty_like(a)

    small = a <= _SERIES_MAX
    x = a[small]
    x2 = x * x
    term = x.copy()
    acc = x.copy()
    for n in range(1, _SERIES_TERMS):
        term = term * (2.0 * x2 / (2 * n + 1))
        acc = acc + term
    out[small] = 1.0 - 2.0 * INV_SQRT_PI * np.exp(-x2) * acc

    x = a[~small]
    x2 = x * x
    # erfc(x) = 2x exp(-x^2) / sqrt(pi) / (2x^2 + 1 - 1*2/(2x^2 + 5 - 3*4/(2x^2 + 9 - ...)))
    f = 2.0 * x2 + 4.0 * _CF_DEPTH + 1.0
    for n in range(_CF_DEPTH, 0, -1):
        f = 2.0 * x2 + 4.0 * (n - 1) + 1.0 - (2 * n - 1) * (2 * n) / f
    with np.errstate(under="ignore"):
        out[~small] = 2.0 * x * np.exp(-x2) * INV_SQRT_PI / f

    out = np.where(z < 0, 2.0 - out, out)
    return out if out.ndim else float(out)


def erf(z):
    return 1.0 - erfc(z)


def erfc_eval(z: float) -> float:
    return float(erfc(float(z)))


# int_0^inf erfc(z)^2 dz = (2 - sqrt 2)/sqrt(pi); the L2 size of the shear defect
C0_SQUARED = (2.0 - math.sqrt(2.0)) / SQRT_PI
C0 = math.sqrt(C0_SQUARED)


# -- bump ------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_PANELS = 16


def _mollifier(r):
    s = 2.0 * np.asarray(r, dtype=float) - 3.0
    q = 1.0 - s * s
    inside = q > 0
    qs = np.where(inside, q, 1.0)
    return np.where(inside, np.exp(-1.0 / qs), 0.0), s, qs, inside


def _cumulative_mollifier(x) -> np.ndarray:
    """int_1^x of the unnormalized mollifier, composite Gauss-Legendre on [1, x]."""
    x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), 1.0, 2.0)
    edges = np.linspace(0.0, 1.0, _GL_PANELS + 1)
    total = np.zeros_like(x)
    width = x - 1.0
    for a, b in zip(edges[:-1], edges[1:]):
        lo = 1.0 + width * a
        hi = 1.0 + width * b
        nodes = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * _GL_NODES[None, :]
        total += 0.5 * (hi - lo) * (_mollifier(nodes)[0] @ _GL_WEIGHTS)
    return total


_MOLLIFIER_MASS = float(_cumulative_mollifier(2.0)[0])


@dataclass(frozen=True)
class BumpSpec:
    """Non-negative smooth bump on [1, 2] with mass 1/sqrt(pi).

    ``eta(r) = amplitude * exp(-1/(1 - (2r - 3)^2))`` inside (1, 2).  The
    amplitude is fixed by the mass; passing any other value is an error.
    """

    amplitude: float | None = None

    def __post_init__(self):
        c = INV_SQRT_PI / _MOLLIFIER_MASS
        if self.amplitude is None:
            object.__setattr__(self, "amplitude", c)
        elif abs(self.amplitude * _MOLLIFIER_MASS - INV_SQRT_PI) > 1e-12:
            raise ValueError(
                f"bump amplitude {self.amplitude!r} gives mass "
                f"{self.amplitude * _MOLLIFIER_MASS!r}, not 1/sqrt(pi)"
            )

    def eta(self, r):
        return self.amplitude * _mollifier(r)[0]

    def eta_prime(self, r):
        e, s, q, inside = _mollifier(r)
        return np.where(inside, self.amplitude * e * (-4.0 * s) / q**2, 0.0)

    def eta_second(self, r):
        e, s, q, inside = _mollifier(r)
        poly = 16.0 * s**2 / q**4 - 8.0 / q**2 - 32.0 * s**2 / q**3
        return np.where(inside, self.amplitude * e * poly, 0.0)

    def integral(self, r):
        """int_1^r eta, exactly 1/sqrt(pi) for r >= 2 and 0 for r <= 1."""
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        out = np.zeros_like(flat)
        mid = (flat > 1.0) & (flat < 2.0)
        if np.any(mid):
            out[mid] = self.amplitude * _cumulative_mollifier(flat[mid])
        out[flat >= 2.0] = INV_SQRT_PI
        return out.reshape(r.shape) if r.ndim else float(out[0])

    @property
    def mass(self) -> float:
        return float(self.amplitude * _MOLLIFIER_MASS)

    @cached_property
    def derivative_bounds(self) -> tuple[float, float]:
        """(max |eta'|, max |eta''|), found on a dense grid refined near the peaks."""
        r = np.linspace(1.0, 2.0, 200001)
        return float(np.max(np.abs(self.eta_prime(r)))), float(np.max(np.abs(self.eta_second(r))))

    @property
    def c_eta(self) -> float:
        """Realized constant: sup |eta'| + sup |eta''|."""
        a, b = self.derivative_bounds
        return a + b


@lru_cache(maxsize=64)
def _bump_integral_cached(bump: BumpSpec, x2: tuple) -> np.ndarray:
    out = bump.integral(np.array(x2))
    out.flags.writeable = False
    return out


def bump_integral_on_nodes(bump: BumpSpec, x2: np.ndarray) -> np.ndarray:
    """Cumulative bump integral on a node vector, memoized per vector."""
    return _bump_integral_cached(bump, tuple(np.asarray(x2, dtype=float).tolist()))


def r_profile(x2, t: float, nu: float, bump: BumpSpec | None = None, delta: float | None = None):
    """Normal-velocity profile R = (1/sqrt(pi) - int_1^{x2} eta) - exp(-z^2)/sqrt(pi) + z erfc(z).

    ``z = x2/delta`` with ``delta = sqrt(4 nu t)`` unless a scale is supplied.
    """
    if not t > 0:
        raise ValueError(f"R is defined only for t > 0, got t={t}")
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    bump = bump or BumpSpec()
    d = math.sqrt(4.0 * nu * t) if delta is None else delta
    x2 = np.asarray(x2, dtype=float)
    z = x2 / d
    with np.errstate(under="ignore"):
        out = (INV_SQRT_PI - bump.integral(x2)) - INV_SQRT_PI * np.exp(-z * z) + z * erfc(z)
    return out if np.ndim(out) else float(out)


# -- Euler wall traces ------------------------------------------------------


class TraceSample(NamedTuple):
    """Wall trace and its derivatives at one time, on a vector of x1 values."""

    U: np.ndarray
    d1: np.ndarray
    d11: np.ndarray
    d111: np.ndarray
    dt: np.ndarray
    d1t: np.ndarray


TRACE_KINDS = ("zero", "constant", "cosine")
MODULATIONS = ("none", "exp")


@dataclass(frozen=True)
class EulerTrace:
    """Tangential Euler velocity on the wall, U(x1, t).

    ``zero``: U = 0.  ``constant``: U = U0.  ``cosine``: U = U0 + A cos(k x1) g(t)
    with g = 1 or g = exp(-t).
    """

    kind: str = "zero"
    U0: float = 0.0
    A: float = 0.0
    k: int = 1
    modulation: str = "none"

    def __post_init__(self):
        if self.kind not in TRACE_KINDS:
            raise ValueError(f"trace kind must be one of {TRACE_KINDS}, got {self.kind!r}")
        if self.modulation not in MODULATIONS:
            raise ValueError(f"modulation must be one of {MODULATIONS}, got {self.modulation!r}")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError("wavenumber k must be a non-negative integer for periodicity")

    @classmethod
    def zero(cls) -> EulerTrace:
        return cls("zero")

    @classmethod
    def constant(cls, U0: float) -> EulerTrace:
        return cls("constant", U0=U0)

    @classmethod
    def cosine(cls, A: float, k: int = 1, modulation: str = "none", U0: float = 0.0) -> EulerTrace:
        return cls("cosine", U0=U0, A=A, k=k, modulation=modulation)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.U0 == 0.0 and (self.kind == "constant" or self.A == 0.0))

    @property
    def steady(self) -> bool:
        return self.kind != "cosine" or self.modulation == "none" or self.A == 0.0

    def _g(self, t):
        if self.modulation == "exp":
            return math.exp(-t), -math.exp(-t)
        return 1.0, 0.0

    def at(self, x1, t: float) -> TraceSample:
        x1 = np.asarray(x1, dtype=float)
        zero = np.zeros_like(x1)
        if self.kind == "zero":
            return TraceSample(zero, zero, zero, zero, zero, zero)
        if self.kind == "constant":
            return TraceSample(zero + self.U0, zero, zero, zero, zero, zero)
        g, gt = self._g(t)
        k = float(self.k)
        c, s = np.cos(k * x1), np.sin(k * x1)
        A = self.A
        return TraceSample(
            U=self.U0 + A * c * g,
            d1=-A * k * s * g,
            d11=-A * k**2 * c * g,
            d111=A * k**3 * s * g,
            dt=A * c * gt,
            d1t=-A * k * s * gt,
        )

    def U(self, x1, t):
        return self.at(x1, t).U

    def sup(self, t: float) -> float:
        """max over x1 of |U|."""
        g = self._g(t)[0]
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return abs(self.U0)
        return abs(self.U0) + abs(self.A * g)

    def describe(self) -> dict:
        return {"kind": self.kind, "U0": self.U0, "A": self.A, "k": self.k, "modulation": self.modulation}


# -- exact shear flow -------------------------------------------------------


def shear_exact(U0: float, nu: float, x2, t: float):
    """Impulsively started shear over a no-slip wall: U0 erf(x2/sqrt(4 nu t))."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    x2 = np.asarray(x2, dtype=float)
    out = U0 * erf(x2 / math.sqrt(4.0 * nu * t))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class AnalyticShear:
    """u1 = U0 erf(x2/sqrt(4 nu t)), u2 = 0, paired with the Euler flow (U0, 0)."""

    U0: float
    nu: float

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("AnalyticShear needs nu > 0")

    def delta(self, t: float) -> float:
        return math.sqrt(4.0 * self.nu * t)

    def u1(self, x2, t: float):
        return shear_exact(self.U0, self.nu, x2, t)

    def omega(self, x2, t: float):
        """Vorticity d2 u1 = U0 exp(-z^2)/sqrt(pi nu t)."""
        z = np.asarray(x2, dtype=float) / self.delta(t)
        return self.U0 * np.exp(-z * z) / math.sqrt(math.pi * self.nu * t)

    def psi(self, x2, t: float):
        """Streamfunction with psi = 0 on the wall and d2 psi = u1."""
        d = self.delta(t)
        x2 = np.asarray(x2, dtype=float)
        z = x2 / d
        return self.U0 * (x2 * erf(z) + d * (np.exp(-z * z) - 1.0) * INV_SQRT_PI)

    def wall_vorticity(self, t: float) -> float:
        return self.U0 / math.sqrt(math.pi * self.nu * t)

    def euler_distance(self, t: float, length_x1: float = 2.0 * math.pi) -> float:
        """Exact L2 distance to the Euler flow over the period times the half line."""
        return math.sqrt(length_x1) * abs(self.U0) * math.sqrt(self.delta(t)) * C0

    def trace(self) -> EulerTrace:
        return EulerTrace.constant(self.U0)
