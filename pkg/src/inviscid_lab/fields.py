"""Grids, discrete fields, finite-difference operators and layer norms.

The computational domain is the periodic strip ``[0, length_x1) x [0, height_x2]``
with the wall at ``x2 = 0``.  Nodes are ``(i*h1, x2[j])``; ``x2`` is uniform by
default or geometrically graded toward the wall.

Quadrature is the rectangle rule in ``x1`` (spectrally accurate for smooth
periodic integrands) and the trapezoid rule in ``x2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

TOP_BCS = ("free_slip", "no_slip")


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    length_x1: float = 2.0 * math.pi
    height_x2: float = 4.0
    top_bc: str = "free_slip"
    grading: float = 1.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid needs nx >= 8 and ny >= 8, got {self.nx}x{self.ny}")
        if self.nx % 2:
            raise ValueError(f"nx must be even for the trigonometric transforms, got {self.nx}")
        if not (self.length_x1 > 0 and self.height_x2 > 0):
            raise ValueError("domain lengths must be positive")
        if self.top_bc not in TOP_BCS:
            raise ValueError(f"top_bc must be one of {TOP_BCS}, got {self.top_bc!r}")
        if not self.grading > 0:
            raise ValueError("grading ratio must be positive")

    @classmethod
    def with_wall_spacing(cls, nx: int, ny: int, wall_spacing: float, **kwargs) -> Grid:
        """Grid whose first x2 cell has the requested width.

        The grading ratio is solved for; a uniform grid is returned when its
        spacing is already fine enough.
        """
        height = kwargs.get("height_x2", 4.0)
        n = ny - 1
        if height / n <= wall_spacing:
            return cls(nx, ny, grading=1.0, **kwargs)

        def first_cell(r):
            return height * (r - 1.0) / math.expm1(n * math.log(r)) - wall_spacing

        r_max = math.exp(min(math.log(2.0), 700.0 / n))
        if first_cell(r_max) > 0:
            raise ValueError(f"cannot reach wall spacing {wall_spacing} with {ny} nodes")
        ratio = brentq(first_cell, 1.0 + 1e-12, r_max, xtol=1e-15, rtol=1e-15)
        return cls(nx, ny, grading=ratio, **kwargs)

    @property
    def uniform(self) -> bool:
        return self.grading == 1.0

    @property
    def h1(self) -> float:
        return self.length_x1 / self.nx

    @property
    def h2(self) -> float:
        """Smallest x2 spacing (the wall cell)."""
        return float(self.dx2[0])

    @cached_property
    def x1(self) -> np.ndarray:
        return np.arange(self.nx) * self.h1

    @cached_property
    def x2(self) -> np.ndarray:
        n = self.ny - 1
        eta = np.arange(self.ny, dtype=float)
        if self.uniform:
            x = self.height_x2 * eta / n
        else:
            r = self.grading
            x = self.height_x2 * np.expm1(eta * math.log(r)) / math.expm1(n * math.log(r))
        x[0] = 0.0
        x[-1] = self.height_x2
        x.flags.writeable = False
        return x

    @cached_property
    def dx2(self) -> np.ndarray:
        return np.diff(self.x2)

    @cached_property
    def metric(self) -> np.ndarray:
        """dx2/d(index) of the grading map, evaluated at the nodes."""
        n = self.ny - 1
        if self.uniform:
            return np.full(self.ny, self.height_x2 / n)
        lr = math.log(self.grading)
        eta = np.arange(self.ny, dtype=float)
        return self.height_x2 * lr * np.exp(eta * lr) / math.expm1(n * lr)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    @cached_property
    def weights_x2(self) -> np.ndarray:
        """Trapezoid weights on the x2 nodes."""
        w = np.zeros(self.ny)
        w[:-1] += 0.5 * self.dx2
        w[1:] += 0.5 * self.dx2
        return w

    @property
    def area(self) -> float:
        return self.length_x1 * self.height_x2

    def zeros(self) -> ScalarField:
        return ScalarField(self, np.zeros((self.nx, self.ny)))

    def describe(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "length_x1": self.length_x1,
            "height_x2": self.height_x2,
            "top_bc": self.top_bc,
            "grading": self.grading,
            "h1": self.h1,
            "h2_wall": self.h2,
            "h2_top": float(self.dx2[-1]),
        }


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(
                f"field shape {values.shape} does not match grid ({self.grid.nx}, {self.grid.ny})"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> ScalarField:
        X1, X2 = grid.mesh
        return cls(grid, np.broadcast_to(fn(X1, X2), (grid.nx, grid.ny)))

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __abs__(self):
        return ScalarField(self.grid, np.abs(self.values))

    @property
    def wall(self) -> np.ndarray:
        return self.values[:, 0]


@dataclass(frozen=True)
class VelocityField:
    u1: ScalarField
    u2: ScalarField
    wall_tol: float = field(default=1e-9, repr=False, compare=False)

    def __post_init__(self):
        if self.u1.grid != self.u2.grid:
            raise ValueError("velocity components live on different grids")
        scale = max(1.0, float(np.max(np.abs(self.u2.values))))
        if np.max(np.abs(self.u2.wall)) > self.wall_tol * scale:
            raise ValueError("normal velocity must vanish on the wall row")

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    @classmethod
    def zeros(cls, grid: Grid) -> VelocityField:
        return cls(grid.zeros(), grid.zeros())

    def __add__(self, other: VelocityField) -> VelocityField:
        return VelocityField(self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other: VelocityField) -> VelocityField:
        return VelocityField(self.u1 - other.u1, self.u2 - other.u2)


# -- finite differences ----------------------------------------------------


def d1(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order central difference in the periodic direction."""
    return (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2.0 * grid.h1)


def d11(values: np.ndarray, grid: Grid) -> np.ndarray:
    return (np.roll(values, -1, axis=0) - 2.0 * values + np.roll(values, 1, axis=0)) / grid.h1**2


def d2(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order first derivative in x2 on the (possibly graded) nodes.

    Three-point central formula in the interior, one-sided three-point
    formulas on the wall and top rows.
    """
    f = values
    h = grid.dx2
    out = np.empty_like(f)
    hm, hp = h[:-1], h[1:]
    out[:, 1:-1] = (
        hm**2 * f[:, 2:] - hp**2 * f[:, :-2] + (hp**2 - hm**2) * f[:, 1:-1]
    ) / (hm * hp * (hm + hp))
    out[:, 0] = _one_sided(f[:, 0], f[:, 1], f[:, 2], h[0], h[1])
    out[:, -1] = -_one_sided(f[:, -1], f[:, -2], f[:, -3], h[-1], h[-2])
    return out


def _one_sided(f0, f1, f2, a, b):
    # derivative at node 0 from nodes at distances a and a + b
    c = a + b
    return (-(a + c) / (a * c) * f0 + c / (a * b) * f1 - a / (b * c) * f2)


def d22(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Second derivative in x2; one-sided four-point closures at the ends."""
    f = values
    h = grid.dx2
    out = np.empty_like(f)
    hm, hp = h[:-1], h[1:]
    out[:, 1:-1] = 2.0 * (
        (f[:, 2:] - f[:, 1:-1]) / hp - (f[:, 1:-1] - f[:, :-2]) / hm
    ) / (hm + hp)
    x = grid.x2
    out[:, 0] = _second_one_sided(f[:, :4], x[:4])
    out[:, -1] = _second_one_sided(f[:, -4:][:, ::-1], x[-4:][::-1])
    return out


def _second_one_sided(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    # exact for cubics on four arbitrary nodes, evaluated at x[0]
    w = _fd_weights(x[0], x, 2)
    return f @ w


def _fd_weights(x0: float, x: np.ndarray, order: int) -> np.ndarray:
    n = len(x)
    dx = x - x0
    A = np.vander(dx, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(A, rhs)


def laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    return d11(values, grid) + d22(values, grid)


def divergence(v: VelocityField) -> ScalarField:
    g = v.grid
    return ScalarField(g, d1(v.u1.values, g) + d2(v.u2.values, g))


def vorticity(v: VelocityField) -> ScalarField:
    """omega = d2 u1 - d1 u2."""
    g = v.grid
    return ScalarField(g, d2(v.u1.values, g) - d1(v.u2.values, g))


def gradient(v: VelocityField) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(d1 u1, d2 u1, d1 u2, d2 u2) by finite differences."""
    g = v.grid
    a, b = v.u1.values, v.u2.values
    return d1(a, g), d2(a, g), d1(b, g), d2(b, g)


# -- quadrature and norms --------------------------------------------------


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Domain integral of a nodal array."""
    return float(grid.h1 * np.sum(values @ grid.weights_x2))


def lp_norm(f: ScalarField, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    return integrate(a**p, f.grid) ** (1.0 / p)


@dataclass(frozen=True)
class LayerCut:
    """Where a layer 0 < x2 < rho ends on the grid.

    Nodes ``0..k`` lie inside the layer; the cut sits a fraction ``theta`` of
    the way across cell ``k``.  ``rho`` beyond the top is clipped.
    """

    rho: float
    k: int
    theta: float
    clipped: bool

    @property
    def cells(self) -> float:
        return self.k + self.theta


def layer_cut(grid: Grid, rho: float) -> LayerCut:
    if not rho > 0:
        raise ValueError(f"layer thickness must be positive, got {rho}")
    x = grid.x2
    clipped = rho > x[-1]
    rho = min(rho, float(x[-1]))
    k = int(np.searchsorted(x, rho, side="right")) - 1
    if k >= grid.ny - 1:
        return LayerCut(rho, grid.ny - 1, 0.0, clipped)
    theta = (rho - x[k]) / (x[k + 1] - x[k])
    if abs(theta - 1.0) < 1e-12:
        k, theta = k + 1, 0.0
    elif theta < 1e-12:
        theta = 0.0
    return LayerCut(rho, k, float(theta), clipped)


def _value_at_cut(g: np.ndarray, cut: LayerCut) -> np.ndarray:
    if cut.theta == 0.0:
        return g[:, cut.k]
    return (1.0 - cut.theta) * g[:, cut.k] + cut.theta * g[:, cut.k + 1]


def layer_integral_x2(g: np.ndarray, grid: Grid, rho: float, upper: bool = False) -> np.ndarray:
    """Integral over 0 < x2 < rho (or rho < x2 < top) for each x1 column.

    The partial cell is integrated with the trapezoid rule on the linear
    interpolant, so lower + upper reproduces the full trapezoid sum.
    """
    cut = layer_cut(grid, rho)
    x = grid.x2
    k = cut.k
    gr = _value_at_cut(g, cut)
    if not upper:
        seg = np.zeros(g.shape[0])
        if k > 0:
            seg = 0.5 * (g[:, 1 : k + 1] + g[:, :k]) @ grid.dx2[:k]
        return seg + 0.5 * (cut.rho - x[k]) * (g[:, k] + gr)
    if k >= grid.ny - 1:
        return np.zeros(g.shape[0])
    seg = 0.5 * (x[k + 1] - cut.rho) * (gr + g[:, k + 1])
    if k + 1 < grid.ny - 1:
        seg = seg + 0.5 * (g[:, k + 2 :] + g[:, k + 1 : -1]) @ grid.dx2[k + 1 :]
    return seg


def layer_sup_x2(g: np.ndarray, grid: Grid, rho: float) -> np.ndarray:
    """max over 0 <= x2 <= rho of |g| per column, with the interpolated cut value."""
    cut = layer_cut(grid, rho)
    a = np.abs(g)
    m = a[:, : cut.k + 1].max(axis=1)
    return np.maximum(m, np.abs(_value_at_cut(g, cut)))


def _outer(inner: np.ndarray, grid: Grid, p: float) -> float:
    if math.isinf(p):
        return float(inner.max())
    return float((grid.h1 * np.sum(inner**p)) ** (1.0 / p))


def layer_norm(f: ScalarField, rho: float, p_x1: float, p_x2: float) -> float:
    """Mixed norm L^{p_x1}_{x1} L^{p_x2}_{x2}(0 < x2 < rho); inner norm first."""
    if min(p_x1, p_x2) < 1:
        raise ValueError("norm exponents must be >= 1")
    g = f.grid
    if math.isinf(p_x2):
        inner = layer_sup_x2(f.values, g, rho)
    else:
        inner = layer_integral_x2(np.abs(f.values) ** p_x2, g, rho) ** (1.0 / p_x2)
    return _outer(inner, g, p_x1)


# -- CSV snapshots ---------------------------------------------------------

CSV_HEADER = ("i", "j", "x1", "x2", "value")


def dump_csv(f: ScalarField, path) -> Path:
    path = Path(path)
    g = f.grid
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(g.nx):
            x1 = float(g.x1[i])
            for j in range(g.ny):
                w.writerow(
                    (i, j, f"{x1:.17g}", f"{float(g.x2[j]):.17g}", f"{float(f.values[i, j]):.17g}")
                )
    return path


def load_csv(path, grid: Grid) -> ScalarField:
    """Read a field written by :func:`dump_csv` onto ``grid``.

    Node coordinates in the file are checked against the grid.
    """
    path = Path(path)
    values = np.empty((grid.nx, grid.ny))
    seen = 0
    with path.open(newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(r, start=2):
            i, j = int(row[0]), int(row[1])
            x1, x2 = float(row[2]), float(row[3])
            if abs(x1 - grid.x1[i]) > 1e-12 * grid.length_x1 or abs(x2 - grid.x2[j]) > 1e-12 * max(
                1.0, grid.height_x2
            ):
                raise ValueError(f"{path}:{lineno}: node ({i},{j}) does not match the grid")
            values[i, j] = float(row[4])
            seen += 1
    if seen != grid.nx * grid.ny:
        raise ValueError(f"{path}: expected {grid.nx * grid.ny} rows, found {seen}")
    return ScalarField(grid, values)
