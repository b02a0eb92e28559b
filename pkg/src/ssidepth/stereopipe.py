"""Stereo disparity post-processing: consistency check, frame gating, sky fill."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRangeError, DimensionError, EmptyMaskError
from .grids import ScalarGrid, ValidityMask, check_shapes


@dataclass(frozen=True)
class FlowField:
    u: ScalarGrid  # horizontal, pixels
    v: ScalarGrid  # vertical, pixels

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise DimensionError(f"flow components differ in shape: {self.u.shape} vs {self.v.shape}")

    @property
    def shape(self):
        return self.u.shape


@dataclass(frozen=True)
class QualityThresholds:
    v_px: float = 2.0
    v_frac: float = 0.10
    h_range: float = 10.0
    pass_rate: float = 0.70
    lr_px: float = 2.0


@dataclass(frozen=True)
class FrameQualityReport:
    vertical_violation_fraction: float
    horizontal_range: float
    lr_pass_rate: float
    reject_reasons: tuple[str, ...] = field(default_factory=tuple)

    @property
    def accepted(self) -> bool:
        return not self.reject_reasons

    def to_dict(self) -> dict:
        return {
            "vertical_violation_fraction": self.vertical_violation_fraction,
            "horizontal_range": self.horizontal_range,
            "lr_pass_rate": self.lr_pass_rate,
            "accepted": self.accepted,
            "reject_reasons": list(self.reject_reasons),
        }


def _sample_rows(values: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linearly interpolate each row of ``values`` at columns ``xs`` (same shape).

    Rows are sampled at integer y, so bilinear sampling reduces to linear
    interpolation along x. Returns (samples, in_bounds).
    """
    rows, cols = values.shape
    inside = (xs >= 0) & (xs <= cols - 1)
    xc = np.clip(xs, 0, cols - 1)
    x0 = np.minimum(np.floor(xc).astype(int), max(cols - 2, 0))
    x1 = np.minimum(x0 + 1, cols - 1)
    frac = xc - x0
    r = np.arange(rows)[:, None]
    out = (1 - frac) * values[r, x0] + frac * values[r, x1]
    return out, inside


def lr_consistency(flow_lr: FlowField, flow_rl: FlowField, threshold: float = 2.0) -> ValidityMask:
    """Valid where |u_lr(x) + u_rl(x + u_lr(x))| <= threshold.

    The reverse flow is sampled with linear interpolation; warp targets
    outside the frame are invalid.
    """
    check_shapes(flow_lr, flow_rl)
    u_lr = flow_lr.u.values
    xs = np.arange(u_lr.shape[1])[None, :] + u_lr
    back, inside = _sample_rows(flow_rl.u.values, xs)
    ok = inside & (np.abs(u_lr + back) <= threshold)
    return ValidityMask(ok)


def frame_quality(flow_lr: FlowField, flow_rl: FlowField,
                  thresholds: QualityThresholds = QualityThresholds()) -> FrameQualityReport:
    """Gate a stereo frame on vertical disparity, disparity range and LR pass rate."""
    consistent = lr_consistency(flow_lr, flow_rl, thresholds.lr_px).flags
    vfrac = float(np.mean(np.abs(flow_lr.v.values) > thresholds.v_px))
    pass_rate = float(consistent.mean())
    if consistent.any():
        u = flow_lr.u.values[consistent]
        hrange = float(u.max() - u.min())
    else:
        hrange = 0.0
    reasons = []
    if vfrac > thresholds.v_frac:
        reasons.append("vertical")
    if hrange < thresholds.h_range:
        reasons.append("range")
    if pass_rate < thresholds.pass_rate:
        reasons.append("pass_rate")
    return FrameQualityReport(vfrac, hrange, pass_rate, tuple(reasons))


def apply_sky_mask(disp: ScalarGrid, mask: ValidityMask, sky: ValidityMask):
    """Set sky pixels to the minimum disparity of the valid non-sky pixels.

    Returns the filled grid and a mask in which sky pixels are valid.
    """
    check_shapes(disp, mask, sky)
    anchor = mask.flags & ~sky.flags
    if not anchor.any():
        raise EmptyMaskError("no valid non-sky pixels to take the minimum disparity from")
    low = disp.values[anchor].min()
    values = np.where(sky.flags, low, disp.values)
    return disp.with_values(values), ValidityMask(mask.flags | sky.flags)


def normalize_unit(disp: ScalarGrid, mask: ValidityMask) -> ScalarGrid:
    """Min-max rescale of the valid pixels to [0, 1]; invalid pixels become 0."""
    check_shapes(disp, mask)
    vals = disp.values[mask.flags]
    if vals.size == 0:
        raise EmptyMaskError("normalize_unit over zero valid pixels")
    low, high = vals.min(), vals.max()
    if not high > low:
        raise DegenerateRangeError("constant disparity cannot be normalized to [0, 1]")
    out = np.where(mask.flags, (disp.values - low) / (high - low), 0.0)
    return disp.with_values(out)
