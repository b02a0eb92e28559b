"""Zero-shot cross-dataset evaluation: per-image alignment, depth caps, metrics.

Predictions are disparities. Every image is aligned to the ground truth in
inverse-depth space by least squares before any metric is taken; depth
metrics additionally convert the aligned disparity to capped depth.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .align import apply_alignment, lsq_align
from .errors import ConfigError, DomainError, EmptyMaskError, InsufficientDataError, NumericalError, ParseError
from .grids import ScalarGrid, ValidityMask, check_shapes

METRICS = ("whdr", "abs_rel", "delta_gt_125", "rmse_disparity")


@dataclass(frozen=True)
class DepthCapPolicy:
    cap: float | None = None

    def __post_init__(self):
        if self.cap is not None and not self.cap > 0:
            raise ConfigError(f"depth cap must be positive, got {self.cap}")


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    metric: str
    cap_meters: float | None = None
    gt_unit: Literal["depth", "disparity"] = "depth"
    # pixels whose ground-truth depth exceeds this are not evaluated
    max_gt_depth: float | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.gt_unit not in ("depth", "disparity"):
            raise ConfigError(f"unknown gt_unit {self.gt_unit!r}")
        if self.metric in ("abs_rel", "delta_gt_125"):
            if self.gt_unit != "depth":
                raise ConfigError(f"{self.metric} needs depth ground truth")
            if self.cap_meters is None:
                raise ConfigError(f"{self.metric} needs a depth cap")
        DepthCapPolicy(self.cap_meters)

    @classmethod
    def from_json(cls, path) -> "DatasetDescriptor":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: {exc}") from exc
        try:
            return cls(
                name=doc["name"],
                metric=doc["metric"],
                cap_meters=doc.get("cap_meters"),
                gt_unit=doc.get("gt_unit", "depth"),
                max_gt_depth=doc.get("max_gt_depth"),
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: missing descriptor field {exc}") from exc


# Caps are the maximum ground-truth depth of each test set; Sintel is
# additionally restricted to pixels closer than 72 m.
DESCRIPTORS = {
    "DIW": DatasetDescriptor("DIW", "whdr", gt_unit="disparity"),
    "ETH3D": DatasetDescriptor("ETH3D", "abs_rel", 72.0),
    "Sintel": DatasetDescriptor("Sintel", "abs_rel", 72.0, max_gt_depth=72.0),
    "KITTI": DatasetDescriptor("KITTI", "delta_gt_125", 80.0),
    "NYU": DatasetDescriptor("NYU", "delta_gt_125", 10.0),
    "TUM": DatasetDescriptor("TUM", "delta_gt_125", 10.0),
    "MV": DatasetDescriptor("MV", "rmse_disparity", gt_unit="disparity"),
    "RW": DatasetDescriptor("RW", "rmse_disparity", gt_unit="disparity"),
    "MD": DatasetDescriptor("MD", "rmse_disparity", gt_unit="disparity"),
}


@dataclass(frozen=True)
class MetricRecord:
    image_id: str
    metric: str
    value: float
    dataset: str = ""
    direction: str = "lower_is_better"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite metric value for {self.image_id}")


@dataclass(frozen=True)
class SkipRecord:
    image_id: str
    reason: str
    dataset: str = ""


@dataclass(frozen=True)
class OrdinalAnnotation:
    x1: int
    y1: int
    x2: int
    y2: int
    label: Literal["first_closer", "second_closer"]
    weight: float = 1.0

    def __post_init__(self):
        if self.label not in ("first_closer", "second_closer"):
            raise ValueError(f"unknown ordinal label {self.label!r}")
        if (self.x1, self.y1) == (self.x2, self.y2):
            raise ValueError("ordinal annotation must reference two distinct pixels")
        if not self.weight > 0:
            raise ValueError("annotation weight must be positive")


# -- per-image operations ---------------------------------------------------

def eval_align(pred_disp: ScalarGrid, gt_disp: ScalarGrid, mask: ValidityMask) -> ScalarGrid:
    """Least-squares scale/shift alignment of the prediction to the ground truth."""
    return apply_alignment(pred_disp, lsq_align(pred_disp, gt_disp, mask))


def disparity_to_depth(d: ScalarGrid, policy: DepthCapPolicy) -> ScalarGrid:
    """z = 1 / max(d, 1/cap); non-positive disparities map to the cap."""
    if policy.cap is None:
        raise ConfigError("disparity_to_depth needs a depth cap")
    return d.with_values(1.0 / np.maximum(d.values, 1.0 / policy.cap), unit="depth")


def _valid_pair(z: ScalarGrid, z_star: ScalarGrid, mask: ValidityMask):
    check_shapes(z, z_star, mask)
    zv, gv = z.values[mask.flags], z_star.values[mask.flags]
    if zv.size == 0:
        raise EmptyMaskError("metric over zero valid pixels")
    return zv, gv


def abs_rel(z: ScalarGrid, z_star: ScalarGrid, mask: ValidityMask) -> float:
    zv, gv = _valid_pair(z, z_star, mask)
    if np.any(gv <= 0):
        raise DomainError("ground-truth depth must be positive at valid pixels")
    return float(np.mean(np.abs(zv - gv) / gv))


def delta_gt(z: ScalarGrid, z_star: ScalarGrid, mask: ValidityMask, threshold: float = 1.25) -> float:
    """Percentage of valid pixels with max(z/z*, z*/z) strictly above ``threshold``."""
    zv, gv = _valid_pair(z, z_star, mask)
    if np.any(zv <= 0) or np.any(gv <= 0):
        raise DomainError("depths must be positive at valid pixels")
    ratio = np.maximum(zv / gv, gv / zv)
    return float(100.0 * np.count_nonzero(ratio > threshold) / zv.size)


def whdr(pred_disp: ScalarGrid, annotations: Sequence[OrdinalAnnotation]) -> float:
    """Weighted percentage of ordinal pairs the prediction orders wrongly.

    Larger disparity means closer; exact ties count as disagreements.
    """
    if len(annotations) == 0:
        raise InsufficientDataError("WHDR needs at least one annotation")
    v = pred_disp.values
    for a in annotations:
        for x, y in ((a.x1, a.y1), (a.x2, a.y2)):
            if not (0 <= x < pred_disp.cols and 0 <= y < pred_disp.rows):
                raise DomainError(f"annotation point ({x}, {y}) outside {pred_disp.shape} grid")
    idx = np.array([(a.y1, a.x1, a.y2, a.x2) for a in annotations])
    weights = np.array([a.weight for a in annotations], dtype=np.float64)
    first = np.array([a.label == "first_closer" for a in annotations])
    d1 = v[idx[:, 0], idx[:, 1]]
    d2 = v[idx[:, 2], idx[:, 3]]
    agree = np.where(first, d1 > d2, d2 > d1)
    # exactly rounded sums make the result independent of annotation order
    return float(100.0 * math.fsum(weights[~agree]) / math.fsum(weights))


def rmse_disparity(pred_disp: ScalarGrid, gt_disp: ScalarGrid, mask: ValidityMask) -> float:
    pv, gv = _valid_pair(pred_disp, gt_disp, mask)
    r = pv - gv
    return float(math.sqrt((r @ r) / r.size))


def eval_resize_dims(h: int, w: int, target: int = 384, multiple: int = 32,
                     mode: Literal["larger_axis", "smaller_axis"] = "larger_axis") -> tuple[int, int]:
    """Network input size for an h x w test image.

    The selected axis becomes ``target``; the other keeps the aspect ratio,
    rounded to the nearest multiple of ``multiple`` (halves round up, never
    below ``multiple``). Square inputs treat the height as the selected axis.
    """
    if h < 1 or w < 1:
        raise ConfigError("image dimensions must be positive")
    if mode not in ("larger_axis", "smaller_axis"):
        raise ConfigError(f"unknown resize mode {mode!r}")
    pick_h = h >= w if mode == "larger_axis" else h <= w
    selected, other = (h, w) if pick_h else (w, h)
    scaled = other * target / selected
    snapped = max(multiple, int(math.floor(scaled / multiple + 0.5)) * multiple)
    return (target, snapped) if pick_h else (snapped, target)


def relative_change(baseline: float, value: float) -> float:
    """Improvement of ``value`` over ``baseline`` in percent for lower-is-better metrics."""
    if baseline == 0:
        raise DomainError("relative change against a zero baseline")
    return 100.0 * (baseline - value) / baseline


@dataclass
class AggregateReport:
    dataset: str
    metric: str
    mean: float | None
    count: int
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "metric": self.metric,
            "mean": self.mean,
            "count": self.count,
            "skipped": [{"image_id": i, "reason": r} for i, r in self.skipped],
        }


def aggregate(records: Sequence[MetricRecord | SkipRecord]) -> list[AggregateReport]:
    """Unweighted per-image mean for each (dataset, metric), in image-id order."""
    groups: dict[tuple[str, str], list[MetricRecord]] = {}
    skips: dict[str, list[tuple[str, str]]] = {}
    for rec in records:
        if isinstance(rec, SkipRecord):
            skips.setdefault(rec.dataset, []).append((rec.image_id, rec.reason))
        else:
            groups.setdefault((rec.dataset, rec.metric), []).append(rec)
    datasets = sorted(set(k[0] for k in groups) | set(skips))
    reports = []
    for ds in datasets:
        keys = sorted(k for k in groups if k[0] == ds) or [(ds, "")]
        for key in keys:
            recs = sorted(groups.get(key, []), key=lambda r: r.image_id)
            mean = float(np.mean([r.value for r in recs])) if recs else None
            reports.append(AggregateReport(ds, key[1], mean, len(recs), sorted(skips.get(ds, []))))
    return reports


# -- per-image driver -------------------------------------------------------

def evaluate_image(
    image_id: str,
    descriptor: DatasetDescriptor,
    pred_disp: ScalarGrid,
    gt: ScalarGrid | None = None,
    mask: ValidityMask | None = None,
    annotations: Sequence[OrdinalAnnotation] = (),
) -> MetricRecord | SkipRecord:
    """Run the protocol for one image; numerical failures become skip records."""
    name = descriptor.name
    try:
        if descriptor.metric == "whdr":
            value = whdr(pred_disp, annotations)
            return MetricRecord(image_id, "whdr", value, name)
        if gt is None:
            raise ConfigError(f"{image_id}: dense ground truth required for {descriptor.metric}")
        if mask is None:
            mask = ValidityMask.like(gt)
        check_shapes(pred_disp, gt, mask)
        valid = mask.flags & np.isfinite(gt.values)
        if descriptor.gt_unit == "depth":
            valid &= gt.values > 0
            if descriptor.max_gt_depth is not None:
                valid &= gt.values <= descriptor.max_gt_depth
            gt_depth = gt.with_values(np.where(valid, gt.values, 1.0), unit="depth")
            gt_disp = gt.with_values(1.0 / gt_depth.values, unit="disparity")
        else:
            gt_disp = gt.with_values(np.where(valid, gt.values, 0.0))
        valid_mask = ValidityMask(valid)
        aligned = eval_align(pred_disp, gt_disp, valid_mask)
        if descriptor.metric == "rmse_disparity":
            value = rmse_disparity(aligned, gt_disp, valid_mask)
        else:
            z = disparity_to_depth(aligned, DepthCapPolicy(descriptor.cap_meters))
            if descriptor.metric == "abs_rel":
                value = abs_rel(z, gt_depth, valid_mask)
            else:
                value = delta_gt(z, gt_depth, valid_mask)
        return MetricRecord(image_id, descriptor.metric, value, name)
    except NumericalError as exc:
        return SkipRecord(image_id, f"{type(exc).__name__}: {exc}", name)


def read_annotations(path) -> dict[str, list[OrdinalAnnotation]]:
    """CSV with columns image_id, x1, y1, x2, y2, label, weight (weight optional)."""
    out: dict[str, list[OrdinalAnnotation]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        try:
            for row in reader:
                weight = row.get("weight") or 1.0
                ann = OrdinalAnnotation(
                    int(row["x1"]), int(row["y1"]), int(row["x2"]), int(row["y2"]),
                    row["label"].strip(), float(weight),
                )
                out.setdefault(row["image_id"], []).append(ann)
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: bad annotation row ({exc})") from exc
    return out
