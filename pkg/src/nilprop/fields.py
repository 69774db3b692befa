"""Uniform rectangular grids and complex sampled fields.

Nodes along an axis with half-width L and even point count N sit at
x_k = -L + k h, k = 0..N-1, h = 2L/N.  All quadrature in the package is
the trapezoidal/Riemann rule on these nodes, which is spectrally accurate
for data that has decayed below tolerance at the box edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AlgebraSpecError, GridMismatchError

SPACE_TAGS = ("g1", "group", "euclidean")


@dataclass(frozen=True)
class Grid:
    """Product of per-axis uniform 1-D grids."""

    L: tuple
    N: tuple

    def __post_init__(self):
        L = tuple(float(v) for v in np.atleast_1d(self.L))
        N = tuple(int(v) for v in np.atleast_1d(self.N))
        if len(L) != len(N):
            raise AlgebraSpecError("grid needs one half-width per axis")
        if any(v <= 0 for v in L):
            raise AlgebraSpecError("grid half-widths must be positive")
        if any(n <= 0 or n % 2 for n in N):
            raise AlgebraSpecError("grid point counts must be positive and even")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "N", N)

    @classmethod
    def cube(cls, dim: int, L: float, N: int) -> "Grid":
        return cls((L,) * dim, (N,) * dim)

    @property
    def dim(self) -> int:
        return len(self.N)

    @property
    def shape(self) -> tuple:
        return self.N

    @property
    def size(self) -> int:
        return int(np.prod(self.N))

    @property
    def h(self) -> tuple:
        return tuple(2 * L / n for L, n in zip(self.L, self.N))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis(self, a: int) -> np.ndarray:
        return -self.L[a] + self.h[a] * np.arange(self.N[a])

    def axes(self) -> list:
        return [self.axis(a) for a in range(self.dim)]

    def mesh(self) -> np.ndarray:
        """Coordinate array of shape (*N, dim)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def points(self) -> np.ndarray:
        """Flat (size, dim) coordinate array in C order."""
        return self.mesh().reshape(-1, self.dim)

    def subgrid(self, axes) -> "Grid":
        axes = list(axes)
        return Grid(tuple(self.L[a] for a in axes), tuple(self.N[a] for a in axes))


@dataclass(frozen=True)
class SampledField:
    """Complex samples of a function on a grid, tagged by the space it lives on."""

    grid: Grid
    values: np.ndarray
    space: str = "g1"
    mu: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.space not in SPACE_TAGS:
            raise AlgebraSpecError(f"unknown space tag {self.space!r}")
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise AlgebraSpecError(f"value shape {v.shape} does not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise AlgebraSpecError("field values must be finite")
        object.__setattr__(self, "values", v)
        if self.mu is not None:
            object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))

    def with_values(self, values: np.ndarray) -> "SampledField":
        return replace(self, values=np.asarray(values, dtype=complex))

    def norm2(self, weight: float = 1.0) -> float:
        """L^2 norm with the grid measure (optionally weighted, e.g. by |Pf|)."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume * weight))

    def check_same_grid(self, other: "SampledField") -> None:
        if self.grid != other.grid:
            raise GridMismatchError("fields live on different grids")


def sample(fn, grid: Grid, space: str = "g1", mu=None) -> SampledField:
    """Pointwise evaluation of a vectorised function of (..., dim) points."""
    values = np.asarray(fn(grid.mesh()), dtype=complex)
    return SampledField(grid=grid, values=values, space=space, mu=mu)


def relative_l2(a: SampledField, b: SampledField) -> float:
    a.check_same_grid(b)
    denom = np.linalg.norm(b.values)
    if denom == 0.0:
        return float(np.linalg.norm(a.values))
    return float(np.linalg.norm(a.values - b.values) / denom)
