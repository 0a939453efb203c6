"""Lattice domains, masks and grid functions.

A cell ``(ix, iy)`` stands for the closed square of side ``h`` centred at the
lattice point ``origin + (ix*h, iy*h)``.  Arrays are indexed ``[ix, iy]``.
Distances are measured centre to centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

# slack for comparing lattice distances against radii, in units of h
EPS = 1e-9

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float]
    h: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.nx < 4 or self.ny < 4:
            raise ValueError("grid needs at least 4 cells per axis")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def spanning(cls, lo: float, hi: float, n: int) -> "GridSpec":
        """Square grid of ``n`` x ``n`` cells whose centres run from lo to hi."""
        h = (hi - lo) / (n - 1)
        return cls((lo, lo), h, n, n)

    @classmethod
    def centered(cls, width: float, n: int) -> "GridSpec":
        """Square grid of extent ``width`` with cell ``n // 2`` at the origin."""
        h = width / n
        return cls((-(n // 2) * h, -(n // 2) * h), h, n, n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def extent(self) -> tuple[float, float]:
        return (self.nx * self.h, self.ny * self.h)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + self.h * np.arange(self.nx)
        y = self.origin[1] + self.h * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def cell_center(self, ix, iy):
        return (self.origin[0] + ix * self.h, self.origin[1] + iy * self.h)

    def nearest_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(round((x - self.origin[0]) / self.h))
        iy = int(round((y - self.origin[1]) / self.h))
        if not (0 <= ix < self.nx and 0 <= iy < self.ny):
            raise ValueError(f"point ({x}, {y}) lies outside the grid")
        return ix, iy


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class DomainMask:
    """Boolean lattice set on a fixed grid.

    Interior cells have all four neighbours in the set (cells beyond the grid
    frame count as outside); the remaining cells of the set are boundary cells.
    """

    __slots__ = ("grid", "cells", "_interior")

    def __init__(self, grid: GridSpec, cells):
        cells = np.array(cells, dtype=bool)
        if cells.shape != grid.shape:
            raise ValueError(f"mask shape {cells.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.cells = _frozen(cells)
        self._interior = None

    @classmethod
    def full(cls, grid):
        return cls(grid, np.ones(grid.shape, bool))

    @classmethod
    def empty(cls, grid):
        return cls(grid, np.zeros(grid.shape, bool))

    @classmethod
    def from_predicate(cls, grid, pred):
        X, Y = grid.coords()
        return cls(grid, np.broadcast_to(pred(X, Y), grid.shape))

    @property
    def interior(self) -> "DomainMask":
        if self._interior is None:
            inner = ndimage.binary_erosion(self.cells, structure=_FOUR, border_value=0)
            self._interior = DomainMask(self.grid, inner)
        return self._interior

    @property
    def boundary(self) -> "DomainMask":
        return DomainMask(self.grid, self.cells & ~self.interior.cells)

    def _check(self, other):
        if not isinstance(other, DomainMask):
            raise TypeError("expected a DomainMask")
        if other.grid != self.grid:
            raise ValueError("masks live on different grids")

    def complement(self):
        return DomainMask(self.grid, ~self.cells)

    def __or__(self, other):
        self._check(other)
        return DomainMask(self.grid, self.cells | other.cells)

    def __and__(self, other):
        self._check(other)
        return DomainMask(self.grid, self.cells & other.cells)

    def __sub__(self, other):
        self._check(other)
        return DomainMask(self.grid, self.cells & ~other.cells)

    def __eq__(self, other):
        if not isinstance(other, DomainMask):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.grid, self.cells.tobytes()))

    def __repr__(self):
        return f"DomainMask({self.grid.nx}x{self.grid.ny}, {self.count()} cells)"

    def issubset(self, other) -> bool:
        self._check(other)
        return not np.any(self.cells & ~other.cells)

    def count(self) -> int:
        return int(self.cells.sum())

    def is_empty(self) -> bool:
        return not self.cells.any()

    def indices(self) -> np.ndarray:
        """(n, 2) array of cell indices in raster order."""
        return np.argwhere(self.cells)

    def points(self) -> np.ndarray:
        idx = self.indices()
        return np.column_stack(self.grid.cell_center(idx[:, 0], idx[:, 1]))


class GridFunction:
    """Real values on the cells of a support mask.

    ``-inf`` is allowed and stored as the boolean flag ``neg_inf``; the value
    array itself always holds finite numbers (zero off the support and at
    flagged cells).  ``+inf`` and NaN on the support are rejected.
    """

    __slots__ = ("support", "values", "neg_inf")

    def __init__(self, support: DomainMask, values, neg_inf=None):
        vals = np.array(values, dtype=float)
        if vals.shape != support.grid.shape:
            vals = np.broadcast_to(vals, support.grid.shape).copy()
        on = support.cells
        flag = np.zeros(vals.shape, bool) if neg_inf is None else np.array(neg_inf, bool)
        flag = flag | (np.isneginf(vals) & on)
        flag &= on
        if np.any(np.isposinf(vals) & on):
            raise ValueError("+inf is not a permitted grid-function value")
        if np.any(np.isnan(vals) & on & ~flag):
            raise ValueError("NaN on the support")
        vals = np.where(on & ~flag, vals, 0.0)
        self.support = support
        self.values = _frozen(vals)
        self.neg_inf = _frozen(flag)

    @property
    def grid(self) -> GridSpec:
        return self.support.grid

    @classmethod
    def from_callable(cls, support: DomainMask, fn):
        X, Y = support.grid.coords()
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.asarray(fn(X, Y), dtype=float)
        vals = np.broadcast_to(vals, support.grid.shape)
        return cls(support, np.where(support.cells, vals, 0.0))

    @classmethod
    def constant(cls, support, c):
        return cls(support, np.full(support.grid.shape, float(c)))

    def masked(self) -> np.ndarray:
        """Copy with NaN off the support and -inf at flagged cells."""
        out = np.where(self.support.cells, self.values, np.nan)
        out[self.neg_inf] = -np.inf
        return out

    def finite_cells(self) -> np.ndarray:
        return self.support.cells & ~self.neg_inf

    def max(self) -> float:
        fin = self.finite_cells()
        return float(self.values[fin].max()) if fin.any() else -math.inf

    def min(self) -> float:
        if self.neg_inf.any():
            return -math.inf
        return float(self.values[self.support.cells].min())

    def finite_range(self) -> tuple[float, float]:
        fin = self.finite_cells()
        if not fin.any():
            return (0.0, 0.0)
        v = self.values[fin]
        return (float(v.min()), float(v.max()))

    def at(self, ix: int, iy: int) -> float:
        if not self.support.cells[ix, iy]:
            raise KeyError(f"cell ({ix}, {iy}) is off the support")
        return -math.inf if self.neg_inf[ix, iy] else float(self.values[ix, iy])

    def restrict(self, mask: DomainMask) -> "GridFunction":
        if not mask.issubset(self.support):
            raise ValueError("restriction mask leaves the support")
        return GridFunction(mask, self.values, self.neg_inf)

    def _compatible(self, other: "GridFunction"):
        if other.grid != self.grid or other.support != self.support:
            raise ValueError("grid functions must share grid and support")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._compatible(other)
            return GridFunction(self.support, self.values + other.values, self.neg_inf | other.neg_inf)
        return GridFunction(self.support, self.values + float(other), self.neg_inf)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            if other.neg_inf.any():
                raise ValueError("subtracting -inf would produce +inf")
            self._compatible(other)
            return GridFunction(self.support, self.values - other.values, self.neg_inf)
        return GridFunction(self.support, self.values - float(other), self.neg_inf)

    def __mul__(self, a):
        a = float(a)
        if self.neg_inf.any() and a <= 0:
            raise ValueError("non-positive multiple of -inf is undefined here")
        return GridFunction(self.support, self.values * a, self.neg_inf)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def maximum(self, other: "GridFunction") -> "GridFunction":
        self._compatible(other)
        a = np.where(self.neg_inf, -np.inf, self.values)
        b = np.where(other.neg_inf, -np.inf, other.values)
        m = np.maximum(a, b)
        return GridFunction(self.support, np.where(np.isneginf(m), 0.0, m), np.isneginf(m))

    def map(self, fn) -> "GridFunction":
        """Apply ``fn`` to the finite values; -inf cells stay flagged."""
        return GridFunction(self.support, np.where(self.neg_inf, 0.0, fn(self.values)), self.neg_inf)

    def same_as(self, other: "GridFunction") -> bool:
        return (
            self.support == other.support
            and np.array_equal(self.neg_inf, other.neg_inf)
            and np.array_equal(self.values, other.values)
        )


def _distance_array(cells: np.ndarray, h: float) -> np.ndarray:
    # distance_transform_edt measures to the nearest zero entry
    return ndimage.distance_transform_edt(~cells, sampling=h)


def _check_radius(r, h, what):
    if r < h * (1 - EPS):
        raise ValueError(f"{what} radius below resolution")


def distance_to_set(target: DomainMask, eval_on: DomainMask) -> GridFunction:
    """Euclidean distance from each cell of ``eval_on`` to the nearest target cell."""
    target._check(eval_on)
    if target.is_empty():
        raise ValueError("distance to empty set undefined")
    d = _distance_array(target.cells, target.grid.h)
    return GridFunction(eval_on, d)


def morph_closure(m: DomainMask, r: float) -> DomainMask:
    """Dilation by the closed disk of radius ``r``."""
    h = m.grid.h
    _check_radius(r, h, "closure")
    if m.is_empty():
        return DomainMask.empty(m.grid)
    return DomainMask(m.grid, _distance_array(m.cells, h) <= r + EPS * h)


def disk_footprint(r: float, h: float) -> np.ndarray:
    k = int(math.floor(r / h + EPS))
    o = np.arange(-k, k + 1)
    X, Y = np.meshgrid(o, o, indexing="ij")
    return (X * X + Y * Y) * h * h <= (r + EPS * h) ** 2


def morph_interior(m: DomainMask, r: float, outside: bool = False) -> DomainMask:
    """Erosion: cells whose whole radius-``r`` disk lies in ``m``.

    ``outside`` is the membership assumed for cells beyond the grid frame.
    """
    h = m.grid.h
    _check_radius(r, h, "interior")
    pad = int(math.ceil(r / h)) + 1
    padded = np.pad(m.cells, pad, constant_values=outside)
    if padded.all():
        return DomainMask(m.grid, m.cells.copy())
    d = _distance_array(~padded, h)
    inner = d[pad:-pad, pad:-pad] > r + EPS * h
    return DomainMask(m.grid, inner & m.cells)


class Component(NamedTuple):
    mask: DomainMask
    touches_boundary: bool


def components(m: DomainMask, ambient: DomainMask) -> list[Component]:
    """8-connected components of ``m`` with their boundary-touch flags.

    A component touches the boundary when one of its cells lies within
    sqrt(2)*h of a boundary cell of ``ambient``.
    """
    m._check(ambient)
    if not m.issubset(ambient):
        raise ValueError("mask is not contained in the ambient domain")
    if m.is_empty():
        return []
    labels, n = ndimage.label(m.cells, structure=_EIGHT)
    near = _distance_array(ambient.boundary.cells, m.grid.h) <= math.sqrt(2) * m.grid.h * (1 + EPS)
    out = []
    for k in range(1, n + 1):
        comp = labels == k
        out.append(Component(DomainMask(m.grid, comp), bool(np.any(near & comp))))
    return out


def hausdorff(a: DomainMask, b: DomainMask) -> float:
    """Two-sided Hausdorff distance between lattice sets."""
    a._check(b)
    if a.is_empty() and b.is_empty():
        return 0.0
    if a.is_empty() or b.is_empty():
        return math.inf
    da = _distance_array(a.cells, a.grid.h)
    db = _distance_array(b.cells, b.grid.h)
    return float(max(db[a.cells].max(), da[b.cells].max()))
