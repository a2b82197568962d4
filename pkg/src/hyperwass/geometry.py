"""Half-open cubes, dyadic grids, and the two supported metrics.

Conventions used everywhere downstream:

* A cube is ``[origin, origin + side)^d``, half-open, so dyadic cells
  partition it exactly and every point lands in exactly one cell.
* Dyadic cells at level k are indexed flat in row-major order: axis 0
  varies slowest. Parent/child arithmetic works on these flat indices.
* ``torus`` distances wrap per axis with period ``side``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CeilingError, DegenerateGridError, OutOfDomainError

EUCLIDEAN = "euclidean"
TORUS = "torus"
_METRICS = (EUCLIDEAN, TORUS)

MAX_DIMENSION = 8
# Refuse to materialize explicit per-cell arrays beyond this many cells.
MATERIALIZE_CEILING = 2**26


@dataclass(frozen=True, eq=False)
class Cube:
    """Axis-aligned half-open cube with a metric attached."""

    dimension: int
    side: float
    origin: np.ndarray = None
    metric: str = EUCLIDEAN

    def __post_init__(self):
        d = self.dimension
        if not (1 <= d <= MAX_DIMENSION):
            raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}], got {d}")
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ValueError(f"cube side must be positive and finite, got {self.side}")
        if self.metric not in _METRICS:
            raise ValueError(f"metric must be one of {_METRICS}, got {self.metric!r}")
        origin = self.origin
        if origin is None:
            origin = np.zeros(d)
        origin = np.asarray(origin, dtype=float)
        if origin.shape != (d,):
            raise ValueError(f"origin must have shape ({d},), got {origin.shape}")
        if not np.all(np.isfinite(origin)):
            raise ValueError("origin must be finite")
        object.__setattr__(self, "side", float(self.side))
        object.__setattr__(self, "origin", origin)

    @property
    def volume(self) -> float:
        return self.side**self.dimension

    @property
    def top(self) -> np.ndarray:
        return self.origin + self.side

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask: which rows of ``points`` lie in the half-open cube."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.origin) & (pts < self.top), axis=1)

    def same_geometry(self, other: "Cube", rtol: float = 1e-9) -> bool:
        return (
            self.dimension == other.dimension
            and self.metric == other.metric
            and math.isclose(self.side, other.side, rel_tol=rtol, abs_tol=0.0)
            and bool(np.allclose(self.origin, other.origin, rtol=0.0, atol=rtol * max(1.0, self.side)))
        )


def cube_for_count(n: float, dimension: int, metric: str = EUCLIDEAN, centered: bool = True) -> Cube:
    """Cube of volume n: side n^(1/d), snapped to an exact integer when n = m^d."""
    if not (n > 0 and math.isfinite(n)):
        raise ValueError(f"n must be positive and finite, got {n}")
    side = float(n) ** (1.0 / dimension)
    snapped = round(side)
    if snapped >= 1 and float(snapped) ** dimension == float(n):
        side = float(snapped)
    origin = np.full(dimension, -side / 2.0) if centered else np.zeros(dimension)
    return Cube(dimension, side, origin, metric)


def _dyadic_depth(volume: float, dimension: int) -> int:
    # Largest K with (2^d)^K <= volume, computed by integer comparison so the
    # bracket is exact even when volume sits on a power of 2^d.
    base = 1 << dimension
    k = 0
    while float(base ** (k + 1)) <= volume:
        k += 1
    return k


@dataclass(frozen=True, eq=False)
class DyadicGrid:
    """Dyadic partition hierarchy of a cube, levels 0..depth."""

    cube: Cube
    depth: int

    @property
    def dimension(self) -> int:
        return self.cube.dimension

    def cells_per_axis(self, level: int) -> int:
        self._check_level(level)
        return 1 << level

    def num_cells(self, level: int) -> int:
        return (1 << (self.dimension * level))

    def cell_side(self, level: int) -> float:
        self._check_level(level)
        # Division by a power of two is exact in binary floating point.
        return self.cube.side / (1 << level)

    def cell_volume(self, level: int) -> float:
        return self.cell_side(level) ** self.dimension

    def cell_diameter(self, level: int) -> float:
        return self.cell_side(level) * math.sqrt(self.dimension)

    def _check_level(self, level: int):
        if not (0 <= level):
            raise ValueError(f"level must be >= 0, got {level}")

    def cell_index(self, level: int, points: np.ndarray) -> np.ndarray:
        """Flat row-major cell index at ``level`` for each point.

        Raises OutOfDomainError when a point is outside the cube.
        """
        self._check_level(level)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.cube.contains(pts)
        if not np.all(inside):
            bad = int(np.argmin(inside))
            raise OutOfDomainError(f"point {bad} at {pts[bad]} is outside the cube")
        m = self.cells_per_axis(level)
        s = self.cell_side(level)
        idx = np.floor((pts - self.cube.origin) / s).astype(np.int64)
        # A point one rounding away from the far face can floor to m; it is
        # still inside the half-open cube, so it belongs to the last cell.
        np.clip(idx, 0, m - 1, out=idx)
        return np.ravel_multi_index(idx.T, (m,) * self.dimension).astype(np.int64)

    def cell_multi_index(self, level: int, flat: np.ndarray) -> np.ndarray:
        m = self.cells_per_axis(level)
        flat = np.asarray(flat, dtype=np.int64)
        return np.stack(np.unravel_index(flat, (m,) * self.dimension), axis=-1)

    def cell_origin(self, level: int, flat: np.ndarray) -> np.ndarray:
        multi = self.cell_multi_index(level, flat)
        return self.cube.origin + multi * self.cell_side(level)

    def cell_center(self, level: int, flat: np.ndarray) -> np.ndarray:
        return self.cell_origin(level, flat) + self.cell_side(level) / 2.0

    def cell_centers(self, level: int) -> np.ndarray:
        """All cell centers at ``level``, ordered by flat index. Guarded."""
        n = self.num_cells(level)
        if n > MATERIALIZE_CEILING:
            raise CeilingError(
                f"level {level} has {n} cells, above the materialization "
                f"ceiling {MATERIALIZE_CEILING}"
            )
        return self.cell_center(level, np.arange(n, dtype=np.int64))

    def parent_index(self, level: int, flat: np.ndarray) -> np.ndarray:
        """Flat index of the parent cell at level - 1."""
        if level < 1:
            raise ValueError("level 0 cells have no parent")
        multi = self.cell_multi_index(level, flat)
        m = self.cells_per_axis(level - 1)
        return np.ravel_multi_index((multi // 2).T, (m,) * self.dimension).astype(np.int64)

    def child_indices(self, level: int, flat: int) -> np.ndarray:
        """Flat indices of the 2^d children at level + 1, row-major order."""
        multi = self.cell_multi_index(level, np.asarray([flat]))[0]
        d = self.dimension
        m = self.cells_per_axis(level + 1)
        offsets = np.stack(
            np.meshgrid(*([np.arange(2)] * d), indexing="ij"), axis=-1
        ).reshape(-1, d)
        children = multi * 2 + offsets
        return np.ravel_multi_index(children.T, (m,) * d).astype(np.int64)


def build_dyadic_grid(cube: Cube) -> DyadicGrid:
    """Grid with depth K, the largest K with (2^d)^K <= side^d and unit-or-larger cells."""
    if cube.side < 1.0:
        raise DegenerateGridError(
            f"cube side {cube.side} < 1: no dyadic level has unit-or-larger cells"
        )
    k = _dyadic_depth(cube.volume, cube.dimension)
    # The integer bracket can overshoot by one ulp through the float power;
    # enforce the cell-side invariant directly.
    while k > 0 and cube.side / (1 << k) < 1.0:
        k -= 1
    return DyadicGrid(cube, k)


def _wrapped_diffs(diffs: np.ndarray, side: float) -> np.ndarray:
    a = np.abs(diffs)
    return np.minimum(a, side - a)


def distance(cube: Cube, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Metric distance between points (broadcasting over leading axes)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diffs = x - y
    if cube.metric == TORUS:
        diffs = _wrapped_diffs(diffs, cube.side)
    return np.sqrt(np.sum(diffs * diffs, axis=-1))


def distance_matrix(X: np.ndarray, Y: np.ndarray, metric: str = EUCLIDEAN, side: float | None = None) -> np.ndarray:
    """Pairwise distances, shape (len(X), len(Y))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    diffs = X[:, None, :] - Y[None, :, :]
    if metric == TORUS:
        if side is None:
            raise ValueError("torus metric needs the cube side")
        diffs = _wrapped_diffs(diffs, side)
    elif metric != EUCLIDEAN:
        raise ValueError(f"unknown metric {metric!r}")
    return np.sqrt(np.einsum("ijk,ijk->ij", diffs, diffs))
