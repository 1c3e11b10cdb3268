"""Regular space-time meshes, value storage and clamped interpolation.

State space is truncated to a box and discretised with a uniform grid
per axis; values are stored flat in row-major axis order (axis 0
slowest) so exports are reproducible byte for byte.  Queries outside
the box are clamped to it, i.e. constant extrapolation, which keeps
every interpolation weight nonnegative and the schemes monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels

__all__ = ["Grid", "TimeMesh", "ValueField", "node_state", "interp", "time_slice"]


def _as_float_vec(v, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr


@dataclass(frozen=True)
class Grid:
    """Uniform box grid; ``counts[a]`` nodes per axis, at least 2."""

    lo: np.ndarray
    hi: np.ndarray
    counts: np.ndarray

    def __init__(self, lo, hi, counts):
        object.__setattr__(self, "lo", _as_float_vec(lo, "lo"))
        object.__setattr__(self, "hi", _as_float_vec(hi, "hi"))
        object.__setattr__(
            self, "counts", np.atleast_1d(np.asarray(counts, dtype=np.int64))
        )
        if not (self.lo.shape == self.hi.shape == self.counts.shape):
            raise ValueError("lo, hi and counts must have matching lengths")
        if np.any(self.counts < 2):
            raise ValueError("every axis needs at least 2 nodes")
        if np.any(self.lo >= self.hi):
            raise ValueError("need lo < hi on every axis")

    @property
    def ndim(self) -> int:
        return self.lo.shape[0]

    @cached_property
    def step(self) -> np.ndarray:
        return (self.hi - self.lo) / (self.counts - 1)

    @cached_property
    def inv_step(self) -> np.ndarray:
        return 1.0 / self.step

    @cached_property
    def strides(self) -> np.ndarray:
        strides = np.ones(self.ndim, dtype=np.int64)
        for a in range(self.ndim - 2, -1, -1):
            strides[a] = strides[a + 1] * self.counts[a + 1]
        return strides

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (n_nodes, ndim), row-major order."""
        axes = [
            np.linspace(self.lo[a], self.hi[a], self.counts[a])
            for a in range(self.ndim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.flags.writeable = False
        return pts

    def axis_coords(self, a: int) -> np.ndarray:
        return np.linspace(self.lo[a], self.hi[a], self.counts[a])

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(points, self.lo), self.hi)

    def flat_index(self, index) -> int:
        idx = np.atleast_1d(np.asarray(index, dtype=np.int64))
        if idx.shape[0] != self.ndim:
            raise IndexError(f"expected {self.ndim} indices, got {idx.shape[0]}")
        if np.any(idx < 0) or np.any(idx >= self.counts):
            raise IndexError(f"node index {tuple(int(i) for i in idx)} out of range")
        return int(np.sum(idx * self.strides))

    def interp_many(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Clamped multilinear interpolation of a node array at ``points``."""
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.shape[0] != self.n_nodes:
            raise ValueError("value slice length does not match the grid")
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[None, :]
        return kernels.interp_batch(
            values, self.lo, self.hi, self.inv_step, self.counts, self.strides, pts
        )


@dataclass(frozen=True)
class TimeMesh:
    """Uniform partition of [t0, T] into ``steps`` backward-solve steps."""

    t0: float
    t_end: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if not self.t0 < self.t_end:
            raise ValueError("need t0 < T")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / self.steps

    @cached_property
    def times(self) -> np.ndarray:
        # linspace pins the last node exactly to T
        return np.linspace(self.t0, self.t_end, self.steps + 1)

    def time(self, k: int) -> float:
        if not 0 <= k <= self.steps:
            raise IndexError(f"time index {k} out of range [0, {self.steps}]")
        return float(self.times[k])


@dataclass
class ValueField:
    """Grid values per time node; ``values[k]`` is the slice at ``times[k]``."""

    grid: Grid
    mesh: TimeMesh
    values: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        shape = (self.mesh.steps + 1, self.grid.n_nodes)
        if self.values is None:
            self.values = np.zeros(shape, dtype=np.float64)
        else:
            self.values = np.asarray(self.values, dtype=np.float64)
            if self.values.shape != shape:
                raise ValueError(
                    f"value array shape {self.values.shape} does not match {shape}"
                )

    def time_slice(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.mesh.steps:
            raise IndexError(
                f"time index {k} out of range [0, {self.mesh.steps}]"
            )
        return self.values[k]

    def copy(self) -> "ValueField":
        return ValueField(self.grid, self.mesh, self.values.copy())


def node_state(grid: Grid, index) -> np.ndarray:
    """Coordinates of the node at a (multi-)index."""
    flat = grid.flat_index(index)
    return grid.nodes[flat].copy()


def interp(values: np.ndarray, grid: Grid, x) -> float:
    """Multilinear interpolation of one query point, clamped to the box."""
    return float(grid.interp_many(values, np.asarray(x, dtype=np.float64))[0])


def time_slice(fieldv: ValueField, k: int) -> np.ndarray:
    return fieldv.time_slice(k)
