"""Uniform 2D grid, multi-population density fields and discrete norms.

Densities live on a cell-centered finite-volume grid.  A field stores one
scalar array per population; index order is data[pop, i, j] with i the
x index and j the y index, so separable convolutions read A @ data @ B.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError

Rect = tuple[float, float, float, float]  # x0, y0, x1, y1

# An exit is a segment of the numerical-domain boundary: (side, lo, hi)
# with side in {"left", "right", "bottom", "top"} and lo/hi the span in
# the coordinate running along that side.
Exit = tuple[str, float, float]

_SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class GridSpec:
    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int
    room: Rect
    exits: tuple[Exit, ...] = ()

    def __post_init__(self):
        if self.dx <= 0 or self.dy <= 0:
            raise ConfigurationError("cell sizes must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError("need at least one cell per axis")
        rx0, ry0, rx1, ry1 = self.room
        eps = 1e-9 * max(self.width, self.height)
        if rx0 < self.x0 - eps or ry0 < self.y0 - eps \
                or rx1 > self.x1 + eps or ry1 > self.y1 + eps:
            raise ConfigurationError("room must lie inside the numerical domain")
        for side, lo, hi in self.exits:
            if side not in _SIDES:
                raise ConfigurationError(f"unknown boundary side {side!r}")
            if hi <= lo:
                raise ConfigurationError("empty exit segment")

    @property
    def x1(self) -> float:
        return self.x0 + self.nx * self.dx

    @property
    def y1(self) -> float:
        return self.y0 + self.ny * self.dy

    @property
    def width(self) -> float:
        return self.nx * self.dx

    @property
    def height(self) -> float:
        return self.ny * self.dy

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def xc(self) -> np.ndarray:
        """x coordinates of cell centers, shape (nx,)."""
        return self.x0 + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def yc(self) -> np.ndarray:
        """y coordinates of cell centers, shape (ny,)."""
        return self.y0 + (np.arange(self.ny) + 0.5) * self.dy


def make_grid(bounds: Rect, dx: float, dy: float,
              room: Rect | None = None,
              exits: tuple[Exit, ...] = ()) -> GridSpec:
    """Build a uniform grid tiling `bounds` exactly with dx-by-dy cells.

    Raises ConfigurationError if an extent is not an integer multiple of
    the cell size (relative tolerance 1e-9).
    """
    x0, y0, x1, y1 = bounds
    if x1 <= x0 or y1 <= y0:
        raise ConfigurationError("bounds must be a nonempty rectangle")
    nx = _divide_extent(x1 - x0, dx, "x")
    ny = _divide_extent(y1 - y0, dy, "y")
    if room is None:
        room = bounds
    return GridSpec(x0=x0, y0=y0, dx=dx, dy=dy, nx=nx, ny=ny,
                    room=room, exits=tuple(exits))


def _divide_extent(length: float, h: float, axis: str) -> int:
    if h <= 0:
        raise ConfigurationError(f"cell size on axis {axis} must be positive")
    n = length / h
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigurationError(
            f"extent not divisible by cell size on axis {axis}: "
            f"{length} / {h} = {n}")
    return int(round(n))


@dataclass
class PopulationField:
    """Densities of n populations on one grid; data shape (n, nx, ny)."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or self.data.shape[1:] != (self.grid.nx, self.grid.ny):
            raise ConfigurationError(
                f"field shape {self.data.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny})")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "PopulationField":
        return PopulationField(self.grid, self.data.copy())

    @classmethod
    def zeros(cls, grid: GridSpec, n: int) -> "PopulationField":
        return cls(grid, np.zeros((n, grid.nx, grid.ny)))

    @classmethod
    def from_arrays(cls, grid: GridSpec, *arrays: np.ndarray) -> "PopulationField":
        return cls(grid, np.stack([np.asarray(a, dtype=float) for a in arrays]))

    def mass(self) -> np.ndarray:
        """Per-population mass, sum of density times cell area."""
        return self.data.sum(axis=(1, 2)) * self.grid.cell_area


@dataclass(frozen=True)
class NormRecord:
    l1: np.ndarray
    linf: np.ndarray
    tv: np.ndarray

    @property
    def l1_total(self) -> float:
        return float(self.l1.sum())

    @property
    def linf_total(self) -> float:
        return float(self.linf.max(initial=0.0))

    @property
    def tv_total(self) -> float:
        return float(self.tv.sum())


def indicator_datum(grid: GridSpec, value: float, rect: Rect) -> np.ndarray:
    """Cell averages of value * indicator(rect); exact partial-cell overlap.

    The returned array integrates to value * area(rect) for any grid
    alignment of the rectangle.
    """
    rx0, ry0, rx1, ry1 = rect
    eps = 1e-9 * max(grid.width, grid.height)
    if rx0 < grid.x0 - eps or ry0 < grid.y0 - eps \
            or rx1 > grid.x1 + eps or ry1 > grid.y1 + eps:
        raise ConfigurationError("indicator rectangle lies outside the grid bounds")
    xl = grid.x0 + np.arange(grid.nx) * grid.dx
    yl = grid.y0 + np.arange(grid.ny) * grid.dy
    ox = np.clip(np.minimum(rx1, xl + grid.dx) - np.maximum(rx0, xl), 0.0, grid.dx)
    oy = np.clip(np.minimum(ry1, yl + grid.dy) - np.maximum(ry0, yl), 0.0, grid.dy)
    return value * np.outer(ox, oy) / grid.cell_area


def norms(fld: PopulationField) -> NormRecord:
    """Discrete L1, Linf and TV per population, deterministic order.

    TV uses forward differences: sum |r[i+1,j]-r[i,j]| dy + |r[i,j+1]-r[i,j]| dx.
    """
    g = fld.grid
    for i in range(fld.n):
        if not np.all(np.isfinite(fld.data[i])):
            raise NumericError(f"non-finite value in population {i}")
    l1 = np.abs(fld.data).sum(axis=(1, 2)) * g.cell_area
    linf = np.abs(fld.data).max(axis=(1, 2))
    dxdiff = np.abs(np.diff(fld.data, axis=1)).sum(axis=(1, 2)) * g.dy
    dydiff = np.abs(np.diff(fld.data, axis=2)).sum(axis=(1, 2)) * g.dx
    return NormRecord(l1=l1, linf=linf, tv=dxdiff + dydiff)
