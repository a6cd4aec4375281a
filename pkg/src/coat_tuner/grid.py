"""Discrete parameter domain and the metric used by the Lipschitz operators.

Points are stored row-major with the last dimension varying fastest.  All
GP and set computations run on coordinates normalized to the unit cube;
physical ranges are only used for display and for calling evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GridError(ValueError):
    """Raised on invalid grid construction or out-of-range indices."""


@dataclass(frozen=True)
class Metric:
    """Euclidean distance on normalized coordinates (the only supported kind)."""

    kind: str = "euclidean"

    def __post_init__(self):
        if self.kind != "euclidean":
            raise GridError(f"unsupported metric kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class ParamGrid:
    """Uniform tensor grid over a box of physical parameters.

    Parameters
    ----------
    points_per_dim : sequence of int
        Number of grid points along every dimension.
    lo, hi : sequence of float
        Physical range of every dimension.
    """

    points_per_dim: tuple[int, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    coords: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.points_per_dim)
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if not counts:
            raise GridError("grid needs at least one dimension")
        if not (len(counts) == len(lo) == len(hi)):
            raise GridError("points_per_dim, lo and hi must have equal length")
        if any(c < 1 for c in counts):
            raise GridError("every dimension needs at least one point")
        if any(h < l for l, h in zip(lo, hi)):
            raise GridError("hi must be >= lo in every dimension")
        object.__setattr__(self, "points_per_dim", counts)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

        axes = [_unit_axis(c) for c in counts]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([m.ravel() for m in mesh], axis=1)
        coords = np.ascontiguousarray(coords, dtype=np.float64)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def uniform(cls, dims: int, count: int, lo: float = 0.0, hi: float = 1.0) -> "ParamGrid":
        return cls((count,) * dims, (lo,) * dims, (hi,) * dims)

    @property
    def dims(self) -> int:
        return len(self.points_per_dim)

    @property
    def total(self) -> int:
        return int(np.prod(self.points_per_dim))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points_per_dim

    def __len__(self) -> int:
        return self.total

    def _check_index(self, i) -> int:
        if isinstance(i, (bool, np.bool_)) or not isinstance(i, (int, np.integer)):
            raise GridError(f"flat index must be an integer, got {i!r}")
        if not 0 <= i < self.total:
            raise GridError(f"flat index {i} outside [0, {self.total})")
        return int(i)

    def index_to_coords(self, i: int) -> np.ndarray:
        """Normalized coordinates of flat index ``i``."""
        return self.coords[self._check_index(i)].copy()

    def index_to_multi(self, i: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(self._check_index(i), self.shape))

    def coords_to_index(self, x: Sequence[float]) -> int:
        """Flat index of the grid point nearest to normalized coordinates ``x``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dims:
            raise GridError(f"expected {self.dims} coordinates, got {x.size}")
        if np.any(~np.isfinite(x)) or np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
            raise GridError(f"normalized coordinates {x.tolist()} outside the unit cube")
        multi = tuple(
            int(round(float(v) * (c - 1))) if c > 1 else 0
            for v, c in zip(x, self.points_per_dim)
        )
        return int(np.ravel_multi_index(multi, self.shape))

    def to_physical(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lo)
        return lo + x * (np.asarray(self.hi) - lo)

    def to_normalized(self, p: Sequence[float]) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        lo = np.asarray(self.lo)
        span = np.asarray(self.hi) - lo
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(span > 0, (p - lo) / np.where(span > 0, span, 1.0), 0.0)
        return out

    def physical_to_index(self, p: Sequence[float]) -> int:
        return self.coords_to_index(self.to_normalized(p))

    def distances_from(self, i: int) -> np.ndarray:
        """Distances from point ``i`` to every grid point."""
        return point_distances(self.coords, self.coords[self._check_index(i)])

    def pairwise_distance(self, i: int, j: int, metric: Metric | None = None) -> float:
        a = self.coords[self._check_index(i)]
        b = self.coords[self._check_index(j)]
        return float(point_distances(b[None, :], a)[0])

    def distance_matrix(self) -> np.ndarray:
        """Dense ``total x total`` distances; only sensible for small grids."""
        c = self.coords
        d2 = np.zeros((len(c), len(c)))
        for k in range(c.shape[1]):
            diff = c[:, None, k] - c[None, :, k]
            d2 += diff * diff
        return np.sqrt(d2)


def pairwise_distance(g: ParamGrid, m: Metric | None, i: int, j: int) -> float:
    return g.pairwise_distance(i, j, m)


def index_to_coords(g: ParamGrid, i: int) -> np.ndarray:
    return g.index_to_coords(i)


def coords_to_index(g: ParamGrid, x: Sequence[float]) -> int:
    return g.coords_to_index(x)


def point_distances(coords: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Accumulate squared differences dimension by dimension so results are
    # bit-identical to the compiled closure kernel.
    d2 = np.zeros(len(coords))
    for k in range(coords.shape[1]):
        diff = x[k] - coords[:, k]
        d2 += diff * diff
    return np.sqrt(d2)


def _unit_axis(count: int) -> np.ndarray:
    if count == 1:
        return np.zeros(1)
    return np.arange(count, dtype=float) / (count - 1)
