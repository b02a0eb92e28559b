"""Dense 2-D grids, validity masks and masked grid arithmetic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionError, EmptyMaskError

UNITS = ("disparity", "inverse_depth", "depth", "flow_u", "flow_v", "dimensionless")

Axis = Literal["x", "y"]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    """A rows x cols real field tagged with the unit it is expressed in."""

    values: np.ndarray
    unit: str = "disparity"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        if values.ndim != 2 or values.size == 0:
            raise DimensionError(f"grid must be a non-empty 2-D array, got shape {values.shape}")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values, unit: str | None = None) -> "ScalarGrid":
        return ScalarGrid(values, self.unit if unit is None else unit)

    def __repr__(self):
        return f"ScalarGrid({self.rows}x{self.cols}, unit={self.unit!r})"


@dataclass(frozen=True, eq=False)
class ValidityMask:
    """Per-pixel validity flags; ``count`` is the number of valid pixels."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.ndim == 1:
            flags = flags.reshape(1, -1)
        if flags.ndim != 2 or flags.size == 0:
            raise DimensionError(f"mask must be a non-empty 2-D array, got shape {flags.shape}")
        object.__setattr__(self, "flags", _frozen(flags.astype(bool)))

    @classmethod
    def full(cls, rows: int, cols: int, value: bool = True) -> "ValidityMask":
        return cls(np.full((rows, cols), value, dtype=bool))

    @classmethod
    def like(cls, grid: ScalarGrid) -> "ValidityMask":
        return cls.full(grid.rows, grid.cols)

    @property
    def rows(self) -> int:
        return self.flags.shape[0]

    @property
    def cols(self) -> int:
        return self.flags.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.flags.shape

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def __and__(self, other: "ValidityMask") -> "ValidityMask":
        check_shapes(self, other)
        return ValidityMask(self.flags & other.flags)

    def __repr__(self):
        return f"ValidityMask({self.rows}x{self.cols}, count={self.count})"


def check_shapes(*items) -> tuple[int, int]:
    shapes = {tuple(item.shape) for item in items}
    if len(shapes) != 1:
        raise DimensionError(f"shape mismatch: {sorted(shapes)}")
    return shapes.pop()


# Array-level kernels. The loss module backpropagates through these, so each
# forward op has an explicit adjoint next to it.

def diff_array(values: np.ndarray, valid: np.ndarray, axis: Axis):
    """Forward difference along ``axis``; returns (diff, valid) of the input shape."""
    out = np.zeros_like(values, dtype=np.float64)
    ok = np.zeros_like(valid, dtype=bool)
    if axis == "x":
        out[:, :-1] = values[:, 1:] - values[:, :-1]
        ok[:, :-1] = valid[:, 1:] & valid[:, :-1]
    elif axis == "y":
        out[:-1, :] = values[1:, :] - values[:-1, :]
        ok[:-1, :] = valid[1:, :] & valid[:-1, :]
    else:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    out[~ok] = 0.0
    return out, ok


def diff_adjoint(upstream: np.ndarray, ok: np.ndarray, axis: Axis) -> np.ndarray:
    """Transpose of :func:`diff_array` applied to ``upstream`` (zero where not ok)."""
    up = np.where(ok, upstream, 0.0)
    grad = np.zeros_like(up)
    if axis == "x":
        grad[:, 1:] += up[:, :-1]
        grad[:, :-1] -= up[:, :-1]
    else:
        grad[1:, :] += up[:-1, :]
        grad[:-1, :] -= up[:-1, :]
    return grad


def subsample_array(values: np.ndarray, stride: int) -> np.ndarray:
    return values[::stride, ::stride]


def subsample_adjoint(upstream: np.ndarray, shape: tuple[int, int], stride: int) -> np.ndarray:
    grad = np.zeros(shape, dtype=np.float64)
    grad[::stride, ::stride] = upstream
    return grad


def median_weights(values: np.ndarray) -> tuple[float, np.ndarray]:
    """Median of a 1-D array and d(median)/d(values) at that point.

    Even counts use the midpoint of the two central values, so the weight
    is split 0.5/0.5 over the central pair.
    """
    n = values.size
    if n == 0:
        raise EmptyMaskError("median of an empty selection")
    order = np.argsort(values, kind="stable")
    weights = np.zeros(n)
    if n % 2:
        k = order[n // 2]
        weights[k] = 1.0
        return float(values[k]), weights
    lo, hi = order[n // 2 - 1], order[n // 2]
    weights[lo] = weights[hi] = 0.5
    return float(0.5 * (values[lo] + values[hi])), weights


# Public grid-level operations.

def finite_diff(grid: ScalarGrid, mask: ValidityMask, axis: Axis):
    """Forward difference ``v[i+1] - v[i]`` along ``axis``.

    The output keeps the input shape; the last column (x) or row (y) and any
    difference touching an invalid pixel are invalid and hold 0.
    """
    check_shapes(grid, mask)
    out, ok = diff_array(grid.values, mask.flags, axis)
    return grid.with_values(out), ValidityMask(ok)


def subsample(grid: ScalarGrid, mask: ValidityMask, stride: int):
    """Keep the pixels at (stride*i, stride*j); output size rounds up."""
    check_shapes(grid, mask)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if stride > grid.rows and stride > grid.cols:
        raise DimensionError(f"stride {stride} exceeds both dimensions of {grid.shape}")
    return (
        grid.with_values(subsample_array(grid.values, stride)),
        ValidityMask(subsample_array(mask.flags, stride)),
    )


def masked_reduce(grid: ScalarGrid, mask: ValidityMask, kind: str, about: float | None = None) -> float:
    """Reduce the valid pixels of ``grid``.

    ``kind`` is one of sum, mean, min, max, median or mean_abs_dev; the last
    measures the mean absolute deviation about ``about`` (the median when
    omitted). An all-false mask sums to 0 and raises for everything else.
    """
    check_shapes(grid, mask)
    vals = grid.values[mask.flags]
    if kind == "sum":
        return float(vals.sum())
    if vals.size == 0:
        raise EmptyMaskError(f"masked {kind} over zero valid pixels")
    if kind == "mean":
        return float(vals.mean())
    if kind == "min":
        return float(vals.min())
    if kind == "max":
        return float(vals.max())
    if kind == "median":
        return median_weights(vals)[0]
    if kind in ("mean_abs_dev", "mad"):
        center = median_weights(vals)[0] if about is None else about
        return float(np.abs(vals - center).mean())
    raise ValueError(f"unknown reduction {kind!r}")
