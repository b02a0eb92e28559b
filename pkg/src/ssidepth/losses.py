"""Scale- and shift-invariant loss family with analytic gradients.

Every loss returns a :class:`LossResult` holding the scalar value and the
gradient with respect to the prediction grid. Gradients are exact almost
everywhere: sort orders, median positions and trim selections are frozen
at the evaluation point, and abs() uses sign() with sign(0) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .align import lsq_backprop, lsq_fit, robust_normalize_array
from .errors import ConfigError, DegenerateScaleError, DomainError, InsufficientDataError
from .grids import (
    ScalarGrid,
    ValidityMask,
    check_shapes,
    diff_adjoint,
    diff_array,
    subsample_adjoint,
    subsample_array,
)

BASE_LOSSES = ("ssimse", "ssimae", "ssitrim")


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: ScalarGrid


@dataclass(frozen=True)
class TrimConfig:
    trim_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.trim_fraction < 1.0:
            raise ConfigError(f"trim_fraction must lie in [0, 1), got {self.trim_fraction}")

    def kept(self, m: int) -> int:
        # tiny slack so that e.g. 0.8 * 10 is not floored to 7
        return int(math.floor((1.0 - self.trim_fraction) * m + 1e-9))


@dataclass(frozen=True)
class GradMatchConfig:
    levels: int = 4

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")


@dataclass(frozen=True)
class TotalLossConfig:
    alpha: float = 0.5
    base: Literal["ssimse", "ssimae", "ssitrim"] = "ssitrim"

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.base not in BASE_LOSSES:
            raise ConfigError(f"unknown base loss {self.base!r}")


def _unpack(pred: ScalarGrid, gt: ScalarGrid, mask: ValidityMask):
    check_shapes(pred, gt, mask)
    valid = mask.flags
    return pred.values[valid], gt.values[valid], valid


def _result(value: float, pred: ScalarGrid, valid: np.ndarray, grad_valid: np.ndarray) -> LossResult:
    grad = np.zeros(pred.shape)
    grad[valid] = grad_valid
    return LossResult(float(value), pred.with_values(grad))


# -- aligned residual fields ------------------------------------------------

def _lsq_residual(d, g):
    """R = s*d + t - g plus its backprop (chains through (s, t))."""
    s, t = lsq_fit(d, g)
    r = s * d + t - g
    return r, (lambda up: lsq_backprop(up, d, g, s))


def _robust_residual(d, g):
    """R = normalize(d) - normalize(g) plus its backprop."""
    n_pred, backprop = robust_normalize_array(d)
    n_gt, _ = robust_normalize_array(g)
    return n_pred - n_gt, backprop


def _residual(aligner: str, d, g):
    if aligner == "lsq":
        return _lsq_residual(d, g)
    if aligner == "robust":
        return _robust_residual(d, g)
    raise ConfigError(f"unknown aligner {aligner!r}")


# -- base losses --------------------------------------------------------------

def ssimse(pred: ScalarGrid, gt: ScalarGrid, mask: ValidityMask) -> LossResult:
    """Least-squares aligned MSE, (1/2M) sum (s*d + t - d*)^2.

    (s, t) minimise the summed squared residual, so the gradient treats
    them as constants: grad_i = (s/M) * residual_i.
    """
    d, g, valid = _unpack(pred, gt, mask)
    m = d.size
    s, t = lsq_fit(d, g)
    r = s * d + t - g
    return _result((r @ r) / (2 * m), pred, valid, (s / m) * r)


def _l1_on_normalized(pred, gt, mask, keep_count=None) -> LossResult:
    d, g, valid = _unpack(pred, gt, mask)
    m = d.size
    r, backprop = _robust_residual(d, g)
    a = np.abs(r)
    if keep_count is None:
        kept = np.ones(m, dtype=bool)
    else:
        # stable sort: equal residuals keep the lower pixel index
        order = np.argsort(a, kind="stable")
        kept = np.zeros(m, dtype=bool)
        kept[order[:keep_count]] = True
    value = a[kept].sum() / (2 * m)
    upstream = np.where(kept, np.sign(r), 0.0) / (2 * m)
    return _result(value, pred, valid, backprop(upstream))


def ssimae(pred: ScalarGrid, gt: ScalarGrid, mask: ValidityMask) -> LossResult:
    """Mean absolute error between median/MAD-normalized prediction and target."""
    return _l1_on_normalized(pred, gt, mask)


def ssitrim(pred: ScalarGrid, gt: ScalarGrid, mask: ValidityMask, cfg: TrimConfig = TrimConfig()) -> LossResult:
    """Trimmed variant of :func:`ssimae` keeping the smallest residuals.

    Only floor((1 - trim_fraction) * M) residuals enter the sum, but the
    normaliser stays 1/(2M).
    """
    m = mask.count
    keep = cfg.kept(m)
    if keep < 1:
        raise InsufficientDataError(f"trimming leaves no residuals (M={m}, trim={cfg.trim_fraction})")
    return _l1_on_normalized(pred, gt, mask, keep_count=keep)


def _multiscale_abs_grad(field: np.ndarray, valid: np.ndarray, levels: int):
    """sum_k sum |dx R^k| + |dy R^k| over strided levels and its gradient."""
    total = 0.0
    grad = np.zeros(field.shape)
    for k in range(levels):
        stride = 2 ** k
        sub = subsample_array(field, stride)
        sub_valid = subsample_array(valid, stride)
        level_grad = np.zeros(sub.shape)
        for axis in ("x", "y"):
            diff, ok = diff_array(sub, sub_valid, axis)
            total += np.abs(diff[ok]).sum()
            level_grad += diff_adjoint(np.sign(diff), ok, axis)
        grad += subsample_adjoint(level_grad, field.shape, stride)
    return total, grad


def gradient_matching(
    pred: ScalarGrid,
    gt: ScalarGrid,
    mask: ValidityMask,
    cfg: GradMatchConfig = GradMatchConfig(),
    aligner: Literal["lsq", "robust"] = "robust",
) -> LossResult:
    """Multi-scale gradient matching on the aligned residual field.

    value = (1/M) sum_k sum_i |dx R_i^k| + |dy R_i^k|, where level k keeps
    every 2^(k-1)-th pixel of R and M is the full-resolution valid count.
    """
    d, g, valid = _unpack(pred, gt, mask)
    m = d.size
    r, backprop = _residual(aligner, d, g)
    field = np.zeros(pred.shape)
    field[valid] = r
    total, field_grad = _multiscale_abs_grad(field, valid, cfg.levels)
    return _result(total / m, pred, valid, backprop(field_grad[valid] / m))


def total_loss(
    pred: ScalarGrid,
    gt: ScalarGrid,
    mask: ValidityMask,
    cfg: TotalLossConfig = TotalLossConfig(),
    trim: TrimConfig = TrimConfig(),
    gm: GradMatchConfig = GradMatchConfig(),
) -> LossResult:
    """Base loss plus alpha times gradient matching in the base loss's frame."""
    if cfg.base == "ssimse":
        base = ssimse(pred, gt, mask)
        aligner = "lsq"
    elif cfg.base == "ssimae":
        base = ssimae(pred, gt, mask)
        aligner = "robust"
    else:
        base = ssitrim(pred, gt, mask, trim)
        aligner = "robust"
    if cfg.alpha == 0:
        return base
    reg = gradient_matching(pred, gt, mask, gm, aligner)
    return LossResult(
        base.value + cfg.alpha * reg.value,
        pred.with_values(base.grad.values + cfg.alpha * reg.grad.values),
    )


# -- related losses -----------------------------------------------------------

def silog(pred_z: ScalarGrid, gt_z: ScalarGrid, mask: ValidityMask) -> LossResult:
    """Scale-invariant log-depth loss in variance form.

    With r = log z - log z*, minimising over a global log-scale leaves
    (1/2M) sum (r - mean(r))^2.
    """
    z, zs, valid = _unpack(pred_z, gt_z, mask)
    if z.size == 0:
        raise InsufficientDataError("silog over zero valid pixels")
    if np.any(z <= 0) or np.any(zs <= 0):
        raise DomainError("silog requires strictly positive depths at valid pixels")
    m = z.size
    r = np.log(z) - np.log(zs)
    rc = r - r.mean()
    return _result((rc @ rc) / (2 * m), pred_z, valid, rc / (m * z))


def ordinal_labels(gi: np.ndarray, gj: np.ndarray, ratio_threshold: float) -> np.ndarray:
    """+1 where gi > gj, -1 where gi < gj, 0 when their ratio is within the threshold.

    Inputs must already be strictly positive.
    """
    ratio = np.maximum(gi, gj) / np.minimum(gi, gj)
    return np.where(ratio <= ratio_threshold, 0, np.where(gi > gj, 1, -1)).astype(np.int8)


def sample_pairs(m: int, num_pairs: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``num_pairs`` ordered pairs of distinct indices in [0, m)."""
    rng = np.random.default_rng(seed)
    i = rng.integers(0, m, size=num_pairs)
    j = rng.integers(0, m - 1, size=num_pairs)
    j = j + (j >= i)
    return i, j


def ordinal(
    pred: ScalarGrid,
    gt: ScalarGrid,
    mask: ValidityMask,
    num_pairs: int = 5000,
    ratio_threshold: float = 1.02,
    rng_seed=0,
) -> LossResult:
    """Pairwise ranking loss on randomly sampled valid pixel pairs.

    Labels come from the ground truth (shifted to be strictly positive for
    the ratio test); a pair with label l contributes log(1 + exp(-l*x)) when
    l != 0 and x^2 when l == 0, where x = pred_i - pred_j. The value is the
    mean over pairs.
    """
    if num_pairs < 1:
        raise ConfigError("num_pairs must be positive")
    if ratio_threshold <= 1:
        raise ConfigError("ratio_threshold must exceed 1")
    d, g, valid = _unpack(pred, gt, mask)
    m = d.size
    if m < 2:
        raise InsufficientDataError(f"ordinal loss needs >= 2 valid pixels, got {m}")
    low = g.min()
    if low <= 0:
        g = g + (1e-6 - low)
    i, j = sample_pairs(m, num_pairs, rng_seed)
    labels = ordinal_labels(g[i], g[j], ratio_threshold)
    x = d[i] - d[j]
    ranked = labels != 0
    lx = labels * x
    per_pair = np.where(ranked, np.logaddexp(0.0, -lx), x * x)
    # d/dx log(1 + exp(-l x)) = -l * sigmoid(-l x)
    dpair = np.where(ranked, -labels * np.exp(-np.logaddexp(0.0, lx)), 2.0 * x) / num_pairs
    grad = np.zeros(m)
    np.add.at(grad, i, dpair)
    np.add.at(grad, j, -dpair)
    return _result(per_pair.mean(), pred, valid, grad)


def nmg(pred: ScalarGrid, gt: ScalarGrid, mask: ValidityMask, cfg: GradMatchConfig = GradMatchConfig()) -> LossResult:
    """Normalized multiscale gradient loss.

    value = sum_k sum |s dx^k d - dx^k d*| + |s dy^k d - dy^k d*| with one
    least-squares scale s = <gp, gt> / <gp, gp> over every valid gradient
    component at every level. The gradient includes the dependence of s on
    the prediction.
    """
    check_shapes(pred, gt, mask)
    valid = mask.flags
    parts = []  # (stride, axis, ok, pred_diff, gt_diff)
    for k in range(cfg.levels):
        stride = 2 ** k
        sub_valid = subsample_array(valid, stride)
        for axis in ("x", "y"):
            pd, ok = diff_array(subsample_array(pred.values, stride), sub_valid, axis)
            gd, _ = diff_array(subsample_array(gt.values, stride), sub_valid, axis)
            parts.append((stride, axis, ok, pd, gd))
    gp = np.concatenate([p[3][p[2]] for p in parts])
    gg = np.concatenate([p[4][p[2]] for p in parts])
    if gp.size == 0:
        raise InsufficientDataError("no valid gradient components")
    energy = float(gp @ gp)
    if energy == 0.0:
        raise DegenerateScaleError("prediction has no gradient energy; scale undefined")
    s = float(gp @ gg) / energy
    e = np.sign(s * gp - gg)
    value = np.abs(s * gp - gg).sum()
    # total derivative wrt each prediction gradient component
    upstream = s * e + float(e @ gp) * (gg - 2.0 * s * gp) / energy

    grad = np.zeros(pred.shape)
    offset = 0
    for stride, axis, ok, pd, _ in parts:
        n = int(ok.sum())
        up = np.zeros(pd.shape)
        up[ok] = upstream[offset:offset + n]
        offset += n
        grad += subsample_adjoint(diff_adjoint(up, ok, axis), pred.shape, stride)
    grad[~valid] = 0.0
    return LossResult(float(value), pred.with_values(grad))


LOSSES = {
    "ssimse": ssimse,
    "ssimae": ssimae,
    "ssitrim": ssitrim,
    "gradient_matching": gradient_matching,
    "total": total_loss,
    "silog": silog,
    "ordinal": ordinal,
    "nmg": nmg,
}
