"""Desk-scale training loops for the loss family and the two mixing strategies.

Predictors are deliberately tiny: either one free parameter per pixel of
every training image, or a per-pixel linear model over a fixed stack of
feature maps whose weights are shared by all images.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Literal, Sequence

import numpy as np

from .align import lsq_fit, robust_fit
from .errors import ConfigError, SsiError
from .grids import ScalarGrid, ValidityMask
from .losses import GradMatchConfig, TotalLossConfig, TrimConfig, total_loss
from .mo_opt import combine, min_norm_fw
from .sampler import DatasetHandle, MixPlan, MixSampler

log = logging.getLogger(__name__)


# -- data -------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    gt: ScalarGrid
    mask: ValidityMask
    features: np.ndarray | None = None  # (F, rows, cols) for linear_features


@dataclass
class SyntheticDataset:
    id: Hashable
    samples: list[Sample]

    @property
    def handle(self) -> DatasetHandle:
        return DatasetHandle(self.id, len(self.samples))


def smooth_field(rows: int, cols: int, rng: np.random.Generator, modes: int = 5) -> np.ndarray:
    """Sum of random 2-D cosine modes with amplitudes in [0.1, 1]."""
    y, x = np.mgrid[0:rows, 0:cols]
    out = np.zeros((rows, cols))
    for _ in range(modes):
        amp = rng.uniform(0.1, 1.0)
        fy, fx = rng.uniform(0.0, 2.0, size=2)
        phase = rng.uniform(0.0, 2 * np.pi)
        out += amp * np.cos(2 * np.pi * (fy * y / rows + fx * x / cols) + phase)
    return out


def make_synthetic_datasets(
    n_datasets: int,
    n_images: int,
    rows: int,
    cols: int,
    seed: int = 0,
    n_features: int = 0,
    true_weights: np.ndarray | None = None,
) -> list[SyntheticDataset]:
    """Random smooth disparity datasets, each under its own affine corruption.

    Every dataset draws one scale in [0.5, 2] and one shift in [-0.5, 0.5]
    and applies it to all of its ground truth. With ``n_features > 0`` each
    sample also carries smooth feature maps, and the clean disparity is the
    feature stack contracted with ``true_weights`` (shared across datasets).
    """
    rng = np.random.default_rng(seed)
    if n_features and true_weights is None:
        true_weights = rng.normal(size=n_features)
    datasets = []
    for k in range(n_datasets):
        s = rng.uniform(0.5, 2.0)
        t = rng.uniform(-0.5, 0.5)
        samples = []
        for _ in range(n_images):
            feats = None
            if n_features:
                feats = np.stack([smooth_field(rows, cols, rng) for _ in range(n_features)])
                clean = np.tensordot(true_weights, feats, axes=1)
            else:
                clean = smooth_field(rows, cols, rng)
            samples.append(Sample(ScalarGrid(s * clean + t), ValidityMask.full(rows, cols), feats))
        datasets.append(SyntheticDataset(f"ds{k}", samples))
    return datasets


# -- predictor and optimiser ------------------------------------------------

@dataclass
class ToyPredictor:
    kind: Literal["free_grid", "linear_features"]
    theta: np.ndarray
    # free_grid: (dataset position, sample index) -> (offset, shape)
    layout: dict = field(default_factory=dict)

    @classmethod
    def init(cls, kind: str, datasets: Sequence[SyntheticDataset], rng: np.random.Generator) -> "ToyPredictor":
        if kind == "free_grid":
            layout, offset = {}, 0
            for d, ds in enumerate(datasets):
                for i, sample in enumerate(ds.samples):
                    layout[d, i] = (offset, sample.gt.shape)
                    offset += sample.gt.values.size
            return cls(kind, rng.normal(scale=0.1, size=offset), layout)
        if kind == "linear_features":
            feats = datasets[0].samples[0].features
            if feats is None:
                raise ConfigError("linear_features predictor needs samples with feature maps")
            return cls(kind, rng.normal(size=feats.shape[0]))
        raise ConfigError(f"unknown predictor kind {kind!r}")

    def predict(self, datasets, d: int, i: int) -> ScalarGrid:
        if self.kind == "free_grid":
            offset, shape = self.layout[d, i]
            return ScalarGrid(self.theta[offset:offset + shape[0] * shape[1]].reshape(shape))
        return ScalarGrid(np.tensordot(self.theta, datasets[d].samples[i].features, axes=1))

    def backprop(self, datasets, d: int, i: int, grad: ScalarGrid) -> np.ndarray:
        """Parameter gradient given the loss gradient w.r.t. the predicted grid."""
        if self.kind == "free_grid":
            out = np.zeros_like(self.theta)
            offset, shape = self.layout[d, i]
            out[offset:offset + shape[0] * shape[1]] = grad.values.ravel()
            return out
        return np.tensordot(datasets[d].samples[i].features, grad.values, axes=([1, 2], [0, 1]))


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: Literal["sgd", "adam"] = "adam"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    steps: int = 100
    eps: float = 1e-8
    schedule: Literal["constant", "cosine"] = "constant"

    def __post_init__(self):
        if self.schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr schedule {self.schedule!r}")
        if self.algorithm not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.algorithm!r}")
        if self.lr < 0 or self.steps < 1:
            raise ConfigError("lr must be >= 0 and steps >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("betas must lie in (0, 1)")


class Optimizer:
    """Plain SGD or Adam with bias correction, optionally cosine-annealed to 0."""

    def __init__(self, cfg: OptimizerConfig, size: int):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def lr(self) -> float:
        if self.cfg.schedule == "constant":
            return self.cfg.lr
        return 0.5 * self.cfg.lr * (1 + math.cos(math.pi * self.t / self.cfg.steps))

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        lr = self.lr()
        self.t += 1
        if cfg.algorithm == "sgd":
            return theta - lr * grad
        self.m = cfg.beta1 * self.m + (1 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1 - cfg.beta2) * grad * grad
        m_hat = self.m / (1 - cfg.beta1 ** self.t)
        v_hat = self.v / (1 - cfg.beta2 ** self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


# -- training loops ---------------------------------------------------------

@dataclass
class LossSetup:
    total: TotalLossConfig = TotalLossConfig()
    trim: TrimConfig = TrimConfig()
    gm: GradMatchConfig = GradMatchConfig()


@dataclass
class TrainResult:
    predictor: ToyPredictor
    loss_trace: np.ndarray  # (steps, L): mean loss of each dataset's batch slice
    weight_trace: np.ndarray | None = None  # (steps, L) for Pareto mixing
    dataset_ids: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["step"] + [f"loss_{i}" for i in self.dataset_ids]
            if self.weight_trace is not None:
                header += [f"weight_{i}" for i in self.dataset_ids]
            writer.writerow(header)
            for step, losses in enumerate(self.loss_trace):
                row = [step] + [repr(float(v)) for v in losses]
                if self.weight_trace is not None:
                    row += [repr(float(v)) for v in self.weight_trace[step]]
                writer.writerow(row)


def _sample_loss(predictor, datasets, d, i, setup: LossSetup):
    sample = datasets[d].samples[i]
    pred = predictor.predict(datasets, d, i)
    try:
        res = total_loss(pred, sample.gt, sample.mask, setup.total, setup.trim, setup.gm)
    except SsiError as exc:
        raise type(exc)(f"dataset {datasets[d].id!r} sample {i}: {exc}") from exc
    return res.value, predictor.backprop(datasets, d, i, res.grad)


def _slice_losses(predictor, datasets, batch, setup):
    """Per-dataset (sum of losses, sum of parameter gradients, count).

    Samples are accumulated in ascending (dataset, index) order so the result
    does not depend on the order the sampler emitted them in.
    """
    position = {ds.id: d for d, ds in enumerate(datasets)}
    out = [[0.0, np.zeros_like(predictor.theta), 0] for _ in datasets]
    for d, i in sorted((position[ds_id], i) for ds_id, i in batch):
        value, grad = _sample_loss(predictor, datasets, d, i, setup)
        out[d][0] += value
        out[d][1] += grad
        out[d][2] += 1
    return out


def _check_plan(datasets, plan: MixPlan):
    if [ds.id for ds in datasets] != [h.id for h in plan.datasets]:
        raise ConfigError("plan datasets do not match the supplied datasets")


def _train(datasets, setup, opt, plan, seed, kind, pareto, init_theta=None):
    _check_plan(datasets, plan)
    rng = np.random.default_rng(seed)
    predictor = ToyPredictor.init(kind, datasets, rng)
    if init_theta is not None:
        predictor.theta = np.array(init_theta, dtype=np.float64)
    sampler = MixSampler(plan, seed)
    optimizer = Optimizer(opt, predictor.theta.size)
    losses, weights = [], []
    for step in range(opt.steps):
        slices = _slice_losses(predictor, datasets, sampler.next_batch(), setup)
        losses.append([s[0] / s[2] for s in slices])
        if pareto:
            w = min_norm_fw([s[1] / s[2] for s in slices])
            weights.append(w.alpha)
            direction = combine([s[1] / s[2] for s in slices], w)
        else:
            direction = sum(s[1] for s in slices) / plan.batch_size
        predictor.theta = optimizer.step(predictor.theta, direction)
        if step % 100 == 0:
            log.debug("step %d losses %s", step, losses[-1])
    ids = [ds.id for ds in datasets]
    return TrainResult(predictor, np.array(losses), np.array(weights) if pareto else None, ids)


def train_naive(datasets, setup: LossSetup, opt: OptimizerConfig, plan: MixPlan, seed: int = 0,
                kind: str = "free_grid", init_theta=None) -> TrainResult:
    """Minimise the mean loss over equal-parts mixed minibatches."""
    return _train(datasets, setup, opt, plan, seed, kind, pareto=False, init_theta=init_theta)


def train_pareto(datasets, setup: LossSetup, opt: OptimizerConfig, plan: MixPlan, seed: int = 0,
                 kind: str = "free_grid", init_theta=None) -> TrainResult:
    """Step along the min-norm combination of per-dataset batch gradients."""
    return _train(datasets, setup, opt, plan, seed, kind, pareto=True, init_theta=init_theta)


def dataset_objectives(predictor: ToyPredictor, datasets, setup: LossSetup):
    """Full-dataset mean losses and parameter gradients, one entry per dataset."""
    values, grads = [], []
    for d, ds in enumerate(datasets):
        total, grad = 0.0, np.zeros_like(predictor.theta)
        for i in range(len(ds.samples)):
            v, g = _sample_loss(predictor, datasets, d, i, setup)
            total += v
            grad += g
        values.append(total / len(ds.samples))
        grads.append(grad / len(ds.samples))
    return values, grads


def min_norm_value(grads) -> float:
    """Squared norm of the min-norm point of the gradients' convex hull."""
    v = combine(grads, min_norm_fw(grads))
    return float(v @ v)


# -- robustness experiment --------------------------------------------------

def inlier_rmse(pred: np.ndarray, clean_gt: np.ndarray, inliers: np.ndarray) -> float:
    """RMSE over inlier pixels after least-squares alignment of ``pred``.

    Both sides are expressed in the robust frame of the clean ground truth
    (median 0, mean absolute deviation 1) so the number is dimensionless.
    """
    t, s, _ = robust_fit(clean_gt[inliers])
    target = (clean_gt[inliers] - t) / s
    a, b = lsq_fit(pred[inliers], target)
    r = a * pred[inliers] + b - target
    return float(math.sqrt((r @ r) / r.size))


def robustness_experiment(
    grid_size: int = 32,
    outlier_fraction: float = 0.2,
    outlier_magnitude: float = 10.0,
    seed: int = 0,
    kind: str = "free_grid",
    steps: int = 4000,
    lr: float = 0.05,
    alpha: float = 0.5,
    n_features: int = 6,
) -> dict:
    """Fit one corrupted synthetic image under each base loss (+ gradient matching).

    A random ``outlier_fraction`` of pixels gets +/- ``outlier_magnitude``
    added to its ground truth. The report holds the inlier RMSE (see
    :func:`inlier_rmse`) reached by ssitrim, ssimse and ssimae.
    """
    trim = TrimConfig()
    if outlier_fraction > trim.trim_fraction:
        raise ConfigError(f"outlier fraction {outlier_fraction} exceeds trim capacity {trim.trim_fraction}")
    rng = np.random.default_rng(seed)
    feats = np.stack([smooth_field(grid_size, grid_size, rng) for _ in range(n_features)])
    clean = np.tensordot(rng.normal(size=n_features), feats, axes=1)
    m = grid_size * grid_size
    n_out = int(round(outlier_fraction * m))
    corrupted = clean.copy().ravel()
    idx = rng.choice(m, size=n_out, replace=False)
    corrupted[idx] += outlier_magnitude * rng.choice([-1.0, 1.0], size=n_out)
    corrupted = corrupted.reshape(clean.shape)
    inliers = np.ones(m, dtype=bool)
    inliers[idx] = False
    inliers = inliers.reshape(clean.shape)

    mask = ValidityMask.full(grid_size, grid_size)
    datasets = [SyntheticDataset("robust", [Sample(ScalarGrid(corrupted), mask, feats)])]
    plan = MixPlan(1, (datasets[0].handle,), epoch_images=1)
    opt = OptimizerConfig("adam", lr=lr, steps=steps, schedule="cosine")
    report = {}
    for base in ("ssitrim", "ssimse", "ssimae"):
        setup = LossSetup(TotalLossConfig(alpha=alpha, base=base), trim)
        result = train_naive(datasets, setup, opt, plan, seed, kind)
        pred = result.predictor.predict(datasets, 0, 0).values
        report[f"inlier_rmse_{base}"] = inlier_rmse(pred, clean, inliers)
    return report
