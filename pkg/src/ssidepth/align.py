"""Scale/shift estimators mapping prediction and ground truth into a common frame."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateAlignmentError,
    DegenerateScaleError,
    EmptyMaskError,
    InsufficientDataError,
)
from .grids import ScalarGrid, ValidityMask, check_shapes, median_weights


@dataclass(frozen=True)
class AffineAlignment:
    s: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.s) and math.isfinite(self.t)):
            raise ValueError(f"non-finite alignment ({self.s}, {self.t})")


@dataclass(frozen=True)
class RobustStats:
    t: float  # median
    s: float  # mean absolute deviation about the median


def lsq_fit(d: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    """Closed-form minimiser of sum((s*d + t - g)**2) over 1-D samples.

    Solves the 2x2 normal equations in centred form. Raises when fewer than
    two samples are given or the normal matrix is numerically singular.
    """
    m = d.size
    if m < 2:
        raise InsufficientDataError(f"least-squares alignment needs >= 2 valid pixels, got {m}")
    d_mean = d.mean()
    g_mean = g.mean()
    dc = d - d_mean
    var = float(dc @ dc)
    # det of [[sum d^2, sum d], [sum d, M]] equals M * var
    if m * var < 1e-12 * m * m:
        raise DegenerateAlignmentError("prediction is (nearly) constant over the valid pixels")
    s = float(dc @ (g - g_mean)) / var
    t = float(g_mean - s * d_mean)
    return s, t


def lsq_backprop(upstream: np.ndarray, d: np.ndarray, g: np.ndarray, s: float) -> np.ndarray:
    """Gradient w.r.t. ``d`` of a function of R = s(d)*d + t(d) - g.

    ``upstream`` is dF/dR for each valid sample; (s, t) are treated as the
    least-squares functions of ``d`` rather than constants.
    """
    m = d.size
    d_mean = d.mean()
    dc = d - d_mean
    var = float(dc @ dc)
    ds = (g - g.mean() - 2.0 * s * dc) / var
    return s * upstream + ds * float(upstream @ dc) - (s / m) * upstream.sum()


def robust_fit(d: np.ndarray):
    """Median, mean absolute deviation and d(median)/dd for 1-D samples."""
    if d.size == 0:
        raise EmptyMaskError("robust statistics over zero valid pixels")
    t, med_w = median_weights(d)
    s = float(np.abs(d - t).mean())
    return t, s, med_w


def robust_normalize_array(d: np.ndarray):
    """Return (normalized, backprop) where backprop maps dF/dnormalized to dF/dd."""
    t, s, med_w = robust_fit(d)
    if not s > 0.0:
        raise DegenerateScaleError("zero mean absolute deviation; cannot normalize")
    u = d - t
    n = u / s
    m = d.size

    def backprop(upstream: np.ndarray) -> np.ndarray:
        sgn = np.sign(u)
        ds = (sgn - med_w * sgn.sum()) / m
        return upstream / s - med_w * (upstream.sum() / s) - (float(upstream @ u) / (s * s)) * ds

    return n, backprop


def lsq_align(pred: ScalarGrid, gt: ScalarGrid, mask: ValidityMask) -> AffineAlignment:
    """Least-squares (s, t) aligning ``pred`` to ``gt`` over the valid pixels."""
    check_shapes(pred, gt, mask)
    s, t = lsq_fit(pred.values[mask.flags], gt.values[mask.flags])
    return AffineAlignment(s, t)


def apply_alignment(grid: ScalarGrid, a: AffineAlignment) -> ScalarGrid:
    return grid.with_values(a.s * grid.values + a.t)


def robust_stats(grid: ScalarGrid, mask: ValidityMask) -> RobustStats:
    check_shapes(grid, mask)
    t, s, _ = robust_fit(grid.values[mask.flags])
    return RobustStats(t=t, s=s)


def robust_normalize(grid: ScalarGrid, mask: ValidityMask) -> ScalarGrid:
    """Shift by the masked median and divide by the mean absolute deviation.

    All pixels are transformed with the statistics of the valid ones; the
    result is dimensionless.
    """
    stats = robust_stats(grid, mask)
    if not stats.s > 0.0:
        raise DegenerateScaleError("zero mean absolute deviation; cannot normalize")
    return grid.with_values((grid.values - stats.t) / stats.s, unit="dimensionless")
