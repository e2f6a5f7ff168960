"""Uniform grids on [0, 1] and discrete functions with trapezoid calculus.

All inner products, norms and means in the package are composite-trapezoid
quadratures on these grids.  For the smooth, exponentially localized
integrands that dominate this problem the trapezoid rule superconverges, so
the quadrature error sits far below the tolerances asserted in the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``n`` points on [0, 1], spacing ``dx = 1/(n-1)``."""

    n: int
    x: np.ndarray
    dx: float
    weights: np.ndarray  # trapezoid weights, sum exactly 1

    @classmethod
    def regular(cls, n: int) -> "Grid":
        if n < 2:
            raise InvalidArgumentError(f"grid needs at least 2 points, got {n}")
        x = np.linspace(0.0, 1.0, n)
        dx = 1.0 / (n - 1)
        w = np.full(n, dx)
        w[0] = w[-1] = dx / 2.0
        return cls(n=n, x=x, dx=dx, weights=w)

    @classmethod
    def for_eps(cls, eps: float, points_per_eps: int = 10) -> "Grid":
        """Grid satisfying the resolution contract dx <= eps / points_per_eps."""
        if eps <= 0:
            raise InvalidArgumentError("eps must be positive")
        n = int(math.ceil(points_per_eps / eps)) + 1
        return cls.regular(n)

    def resolves(self, eps: float, points_per_eps: int = 5) -> bool:
        return self.dx <= eps / points_per_eps + 1e-15

    # quadrature on raw value arrays (last axis = space)
    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return ((f * g) * self.weights).sum(axis=-1)

    def integral(self, f: np.ndarray) -> np.ndarray:
        return (f * self.weights).sum(axis=-1)

    def norm(self, f: np.ndarray) -> np.ndarray:
        return np.sqrt(self.inner(f, f))

    def norm_l4(self, f: np.ndarray) -> np.ndarray:
        f2 = f * f
        return self.integral(f2 * f2) ** 0.25

    def __eq__(self, other):
        return isinstance(other, Grid) and self.n == other.n

    def __hash__(self):
        return hash(("Grid", self.n))


def require_same_grid(a: "GridFunction", b: "GridFunction"):
    if a.grid != b.grid:
        raise InvalidArgumentError(
            f"grid mismatch: {a.grid.n} points vs {b.grid.n} points"
        )


@dataclass
class GridFunction:
    """Real values on a uniform grid; the discrete home of u, v and tangents."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise InvalidArgumentError(
                f"expected {self.grid.n} values, got shape {self.values.shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.n, float(c)))

    def inner(self, other: "GridFunction") -> float:
        require_same_grid(self, other)
        return float(self.grid.inner(self.values, other.values))

    def norm(self) -> float:
        return float(self.grid.norm(self.values))

    def norm_l4(self) -> float:
        return float(self.grid.norm_l4(self.values))

    def mean(self) -> float:
        return float(self.grid.integral(self.values))

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def __add__(self, other: "GridFunction") -> "GridFunction":
        require_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        require_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__
