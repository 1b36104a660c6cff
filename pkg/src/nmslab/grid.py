"""Uniform square-cell grids, analytic shapes and their rasterization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import CapacityError, ConfigurationError, ParameterError

__all__ = [
    "Grid",
    "IndicatorField",
    "build_grid",
    "rasterize",
    "volume",
    "Shape",
    "Ball",
    "HalfSpace",
    "Annulus",
    "Cone",
    "HalfRing",
    "UnionShape",
    "IntersectionShape",
    "ComplementShape",
    "MAX_CELLS",
]

MAX_CELLS = 1 << 22


@dataclass(frozen=True)
class Grid:
    """Uniform decomposition of an axis-aligned box into square cells.

    Cells are ordered row-major over ``cells`` (the last axis varies fastest),
    and array axis ``k`` corresponds to coordinate ``x_{k+1}``.
    """

    n: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    cells: tuple[int, ...]
    h: float

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_measure(self) -> float:
        return self.h**self.n

    @property
    def box_volume(self) -> float:
        return float(np.prod([u - l for l, u in zip(self.lower, self.upper)]))

    def axis_centers(self, k: int) -> np.ndarray:
        return self.lower[k] + (np.arange(self.cells[k]) + 0.5) * self.h

    @property
    def centers(self) -> np.ndarray:
        """Cell centers as an array of shape (size, n)."""
        axes = [self.axis_centers(k) for k in range(self.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def index_of(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.cells))

    def scaled(self, lam: float) -> "Grid":
        return Grid(
            self.n,
            tuple(lam * v for v in self.lower),
            tuple(lam * v for v in self.upper),
            self.cells,
            lam * self.h,
        )

    def key(self) -> tuple:
        return (self.n, self.lower, self.upper, self.cells)


def build_grid(box, cells_per_axis, *, max_cells: int = MAX_CELLS) -> Grid:
    """Build a grid from per-axis bounds ``[(lo, hi), ...]`` and cell counts.

    A 1D box may be given as a plain pair ``(lo, hi)`` and a scalar count.
    """
    box_arr = np.asarray(box, dtype=float)
    if box_arr.ndim == 1:
        box_arr = box_arr.reshape(1, 2)
    if box_arr.ndim != 2 or box_arr.shape[1] != 2:
        raise ConfigurationError(f"box must be a list of (lower, upper) pairs, got {box!r}")
    n = box_arr.shape[0]
    if n not in (1, 2):
        raise ConfigurationError(f"only dimensions 1 and 2 are supported, got {n}")
    counts = np.atleast_1d(np.asarray(cells_per_axis))
    if counts.size == 1 and n > 1:
        counts = np.repeat(counts, n)
    if counts.size != n:
        raise ConfigurationError("cells_per_axis must have one entry per axis")
    if not np.all(counts == np.round(counts)) or np.any(counts < 2):
        raise ConfigurationError("cells_per_axis must be integers >= 2")
    counts = tuple(int(c) for c in counts)
    lengths = box_arr[:, 1] - box_arr[:, 0]
    if not np.all(np.isfinite(box_arr)) or np.any(lengths <= 0):
        raise ConfigurationError(f"degenerate box {box!r}")
    hs = lengths / np.asarray(counts, dtype=float)
    h = float(hs[0])
    if not np.allclose(hs, h, rtol=1e-12, atol=0.0):
        raise ConfigurationError(f"cells are not square: per-axis sizes {hs.tolist()}")
    total = 1
    for c in counts:
        total *= c
    if total > max_cells:
        raise CapacityError(f"grid has {total} cells, above the cap of {max_cells}")
    return Grid(
        n,
        tuple(float(v) for v in box_arr[:, 0]),
        tuple(float(v) for v in box_arr[:, 1]),
        counts,
        h,
    )


# --------------------------------------------------------------------------
# Shapes


class Shape:
    """Point-membership predicate on R^n; subclasses implement ``contains``."""

    def contains(self, points: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def __or__(self, other: "Shape") -> "Shape":
        return UnionShape((self, other))

    def __and__(self, other: "Shape") -> "Shape":
        return IntersectionShape((self, other))

    def __invert__(self) -> "Shape":
        return ComplementShape(self)


def _pts(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    return p


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("ball radius must be positive")

    def contains(self, points):
        p = _pts(points)
        c = np.asarray(self.center, dtype=float)
        return np.sum((p - c) ** 2, axis=1) < self.radius**2

    @property
    def classical_perimeter(self) -> float:
        n = len(self.center)
        return 2.0 if n == 1 else 2.0 * math.pi * self.radius

    @property
    def measure(self) -> float:
        n = len(self.center)
        return 2.0 * self.radius if n == 1 else math.pi * self.radius**2


@dataclass(frozen=True)
class HalfSpace(Shape):
    """The open half-space ``{x : x . normal < offset}``."""

    normal: tuple[float, ...]
    offset: float = 0.0

    def contains(self, points):
        p = _pts(points)
        return p @ np.asarray(self.normal, dtype=float) < self.offset

    def to_tail(self):
        from .tails import HalfSpaceTail

        return HalfSpaceTail(self.normal, self.offset)


@dataclass(frozen=True)
class Annulus(Shape):
    """``{rho < |x - center| < R}``."""

    rho: float
    R: float
    center: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        if not (0 < self.rho < self.R):
            raise ParameterError("annulus requires 0 < rho < R")

    def contains(self, points):
        p = _pts(points)
        r2 = np.sum((p - np.asarray(self.center, dtype=float)) ** 2, axis=1)
        return (r2 > self.rho**2) & (r2 < self.R**2)


@dataclass(frozen=True)
class Cone(Shape):
    """Supergraph ``{x2 >= ((x1 - h) tan(theta))_+}`` of a ramp.

    It coincides with the convex cone with vertex ``(h, 0)`` spanned by the
    directions of angle ``theta`` and ``pi``.
    """

    h: float = 1.0
    theta: float = math.pi / 8

    def __post_init__(self):
        if not (0 < self.theta < math.pi / 2):
            raise ParameterError("cone angle must lie in (0, pi/2)")
        if self.h < 1:
            raise ParameterError("cone vertex abscissa h must be >= 1")

    def contains(self, points):
        p = _pts(points)
        ramp = np.maximum((p[:, 0] - self.h) * math.tan(self.theta), 0.0)
        return p[:, 1] >= ramp

    @property
    def opening(self) -> float:
        return math.pi - self.theta

    def to_tail(self):
        from .tails import ConeTail

        mid = 0.5 * (self.theta + math.pi)
        return ConeTail((self.h, 0.0), (math.cos(mid), math.sin(mid)), self.opening, closed=True)


@dataclass(frozen=True)
class HalfRing(Shape):
    """``(B_{1+delta} minus B_1)`` intersected with ``{x_n < 0}``."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("half-ring width must be positive")

    def contains(self, points):
        p = _pts(points)
        r2 = np.sum(p**2, axis=1)
        return (r2 >= 1.0) & (r2 < (1.0 + self.delta) ** 2) & (p[:, -1] < 0)


@dataclass(frozen=True)
class UnionShape(Shape):
    parts: tuple[Shape, ...]

    def contains(self, points):
        out = np.zeros(_pts(points).shape[0], dtype=bool)
        for part in self.parts:
            out |= part.contains(points)
        return out


@dataclass(frozen=True)
class IntersectionShape(Shape):
    parts: tuple[Shape, ...]

    def contains(self, points):
        out = np.ones(_pts(points).shape[0], dtype=bool)
        for part in self.parts:
            out &= part.contains(points)
        return out


@dataclass(frozen=True)
class ComplementShape(Shape):
    inner: Shape

    def contains(self, points):
        return ~self.inner.contains(points)

    def to_tail(self):
        from .tails import as_tail, ComplementTail

        return ComplementTail(as_tail(self.inner))


# --------------------------------------------------------------------------
# Fields


@dataclass
class IndicatorField:
    """Per-cell values in [0, 1] plus a frozen mask (True = exterior data)."""

    values: np.ndarray
    frozen: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        self.frozen = np.asarray(self.frozen, dtype=bool).ravel()
        if self.values.size != self.grid.size or self.frozen.size != self.grid.size:
            raise ConfigurationError("field size does not match its grid")
        if np.any(self.values < 0) or np.any(self.values > 1) or not np.all(np.isfinite(self.values)):
            raise ParameterError("indicator values must lie in [0, 1]")

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0) | (self.values == 1)))

    def complement(self) -> "IndicatorField":
        return IndicatorField(1.0 - self.values, self.frozen.copy(), self.grid)

    def with_values(self, values: np.ndarray) -> "IndicatorField":
        return IndicatorField(np.asarray(values, dtype=float).copy(), self.frozen.copy(), self.grid)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


Predicate = Union[None, np.ndarray, Shape, Callable[[np.ndarray], np.ndarray]]


def _evaluate(pred, points: np.ndarray) -> np.ndarray:
    if isinstance(pred, Shape) or hasattr(pred, "contains"):
        return np.asarray(pred.contains(points), dtype=bool)
    return np.asarray(pred(points), dtype=bool)


def _subsample_offsets(n: int, h: float) -> np.ndarray:
    if n == 1:
        return ((np.arange(16) + 0.5) / 16 - 0.5)[:, None] * h
    t = (np.arange(4) + 0.5) / 4 - 0.5
    a, b = np.meshgrid(t, t, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1) * h


def rasterize(shape, grid: Grid, frozen_region: Predicate = None, *, subsample: bool = False) -> IndicatorField:
    """Sample ``shape`` on ``grid``.

    ``frozen_region`` marks exterior cells: a boolean mask, a shape or a
    callable on points (True = frozen), or None for no frozen cells.
    With ``subsample`` each value is the fraction of 16 sub-points inside.
    """
    centers = grid.centers
    if subsample:
        offs = _subsample_offsets(grid.n, grid.h)
        acc = np.zeros(grid.size)
        for o in offs:
            acc += _evaluate(shape, centers + o)
        values = acc / len(offs)
    else:
        values = _evaluate(shape, centers).astype(float)
    if frozen_region is None:
        frozen = np.zeros(grid.size, dtype=bool)
    elif isinstance(frozen_region, np.ndarray):
        frozen = frozen_region.astype(bool).ravel()
        if frozen.size != grid.size:
            raise ConfigurationError("frozen mask does not match the grid")
    else:
        frozen = _evaluate(frozen_region, centers)
    return IndicatorField(values, frozen, grid)


def volume(field: IndicatorField, region: np.ndarray | None = None) -> float:
    """``h^n`` times the sum of values over ``region`` (all cells by default)."""
    vals = field.values
    if region is not None:
        region = np.asarray(region, dtype=bool).ravel()
        if region.size != vals.size:
            raise ConfigurationError("region mask does not match the grid")
        vals = vals[region]
    return float(field.grid.cell_measure * np.sum(vals))
