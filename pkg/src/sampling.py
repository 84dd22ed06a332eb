"""Batch sources for the descent stages.

Every estimation call in the warm start and the refinement asks for a fresh
batch of ``m`` rows. Three sources are provided:

- ``SubsampleSampler`` reuses a fixed dataset, drawing each batch without
  replacement (rows may repeat across batches).
- ``StreamSampler`` hands out disjoint consecutive batches and runs dry.
- ``ModelSampler`` draws brand-new rows from a known model.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from src.errors import ResourceError
from src.model import Dataset, MixtureModel, sample_dataset


class BatchSampler(Protocol):
    """Anything that can hand out batches of rows."""

    consumed: int

    @property
    def d(self) -> int: ...

    def draw(self, m: int) -> Dataset: ...


class SubsampleSampler:
    def __init__(self, data: Dataset, rng: np.random.Generator) -> None:
        self.data = data
        self.rng = rng
        self.consumed = 0

    @property
    def d(self) -> int:
        return self.data.d

    def draw(self, m: int) -> Dataset:
        if m > self.data.n:
            msg = f"Requested a batch of {m} rows but only {self.data.n} remain"
            raise ResourceError(msg)
        idx = self.rng.choice(self.data.n, size=m, replace=False)
        self.consumed += m
        return self.data.take(idx)


class StreamSampler:
    def __init__(self, data: Dataset) -> None:
        self.data = data
        self.position = 0
        self.consumed = 0

    @property
    def d(self) -> int:
        return self.data.d

    def draw(self, m: int) -> Dataset:
        if self.position + m > self.data.n:
            msg = (
                f"Stream exhausted: requested {m} rows at position {self.position} "
                f"of {self.data.n}"
            )
            raise ResourceError(msg)
        idx = np.arange(self.position, self.position + m)
        self.position += m
        self.consumed += m
        return self.data.take(idx)


class ModelSampler:
    def __init__(self, model: MixtureModel, rng: np.random.Generator) -> None:
        self.model = model
        self.rng = rng
        self.consumed = 0

    @property
    def d(self) -> int:
        return self.model.d

    def draw(self, m: int) -> Dataset:
        self.consumed += m
        return sample_dataset(self.model, m, self.rng).without_truth()
