"""Equal-parts minibatch mixing over several datasets."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from .errors import ConfigError, ParseError

EPOCH_IMAGES = 72_000


@dataclass(frozen=True)
class DatasetHandle:
    id: Hashable
    size: int
    path_pattern: str | None = None

    def __post_init__(self):
        if int(self.size) < 1:
            raise ConfigError(f"dataset {self.id!r} must hold at least one sample")


@dataclass(frozen=True)
class MixPlan:
    batch_size: int
    datasets: tuple[DatasetHandle, ...]
    epoch_images: int = EPOCH_IMAGES

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        if not self.datasets:
            raise ConfigError("a mix plan needs at least one dataset")
        if self.batch_size < 1 or self.epoch_images < 1:
            raise ConfigError("batch_size and epoch_images must be positive")
        if self.batch_size % len(self.datasets):
            raise ConfigError(
                f"batch size {self.batch_size} is not divisible by {len(self.datasets)} datasets"
            )

    @property
    def per_dataset(self) -> int:
        return self.batch_size // len(self.datasets)


@dataclass
class MixSampler:
    """Stateful batch source: B/L indices per dataset, per-dataset shuffled epochs.

    Each dataset is drawn without replacement from its own permutation and
    reshuffled once exhausted. Two samplers built from the same plan and seed
    emit identical streams; ``clone`` forks the current state.
    """

    plan: MixPlan
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)
    _orders: list = field(init=False, repr=False)
    _cursors: list = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)
        self._orders = [self._rng.permutation(ds.size) for ds in self.plan.datasets]
        self._cursors = [0] * len(self.plan.datasets)

    def _draw(self, k: int, count: int) -> list[int]:
        out = []
        size = self.plan.datasets[k].size
        while len(out) < count:
            if self._cursors[k] == size:
                self._orders[k] = self._rng.permutation(size)
                self._cursors[k] = 0
            take = min(count - len(out), size - self._cursors[k])
            out.extend(int(i) for i in self._orders[k][self._cursors[k]:self._cursors[k] + take])
            self._cursors[k] += take
        return out

    def next_batch(self) -> list[tuple[Hashable, int]]:
        batch = []
        for k, ds in enumerate(self.plan.datasets):
            batch.extend((ds.id, i) for i in self._draw(k, self.plan.per_dataset))
        return batch

    def clone(self) -> "MixSampler":
        return copy.deepcopy(self)


def next_batch(plan: MixPlan, sampler: MixSampler | int) -> list[tuple[Hashable, int]]:
    """Functional form: pass a sampler to advance it, or an int seed for a fresh stream's first batch."""
    if not isinstance(sampler, MixSampler):
        sampler = MixSampler(plan, int(sampler))
    elif sampler.plan != plan:
        raise ConfigError("sampler was built for a different plan")
    return sampler.next_batch()


def epoch_progress(images_seen: int, plan: MixPlan) -> tuple[int, float]:
    epoch, rest = divmod(int(images_seen), plan.epoch_images)
    return epoch, rest / plan.epoch_images


def load_manifest(path) -> list[DatasetHandle]:
    """Read dataset handles from JSON: a list (or {"datasets": [...]}) of {id, size, path-pattern}."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    entries = doc.get("datasets", []) if isinstance(doc, dict) else doc
    try:
        return [
            DatasetHandle(e["id"], int(e["size"]), e.get("path-pattern", e.get("path_pattern")))
            for e in entries
        ]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed dataset entry ({exc})") from exc
