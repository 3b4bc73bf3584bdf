"""Shared plumbing for the offline optimizers.

Optimizers see a :class:`~mbo.tasks.Dataset` and a design space, never the
task itself, so they cannot reach the oracle. They work on a relaxed,
normalized view of the designs: continuous designs are standardized
column-wise; discrete sequences are first mapped to log-probabilities
(``to_logits``) and then standardized the same way. Scores are
standardized too.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InitializationError
from ..space import (Continuous, DesignSpace, Discrete, Normalizer, denormalize, fit_normalizer,
                     from_logits, normalize, to_logits)
from ..tasks import Dataset


@dataclass(frozen=True)
class CandidateSet:
    designs: np.ndarray
    surrogate_scores: np.ndarray
    method_name: str
    seed: int
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.designs)


@dataclass(frozen=True, eq=False)
class Prepared:
    space: DesignSpace
    raw: np.ndarray          # relaxed, un-normalized designs (N, d)
    x: np.ndarray            # normalized relaxed designs
    y: np.ndarray            # normalized scores
    x_norm: Normalizer
    y_norm: Normalizer
    lo: np.ndarray | None    # normalized box bounds (continuous only)
    hi: np.ndarray | None

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def encode(self, designs) -> np.ndarray:
        if isinstance(self.space, Discrete):
            return normalize(self.x_norm, to_logits(self.space, designs))
        return normalize(self.x_norm, designs)

    def decode(self, xn) -> np.ndarray:
        raw = denormalize(self.x_norm, xn)
        if isinstance(self.space, Discrete):
            return from_logits(self.space, raw)
        return self.space.clip(raw)

    def decode_from(self, rows, xn) -> np.ndarray:
        """Decode points reached by moving dataset rows ``rows`` to ``xn``.

        The displacement is added to the stored raw designs, so an untouched
        point decodes to exactly its original design.
        """
        raw = self.raw[rows] + (xn - self.x[rows]) * self.x_norm.std
        if isinstance(self.space, Discrete):
            return from_logits(self.space, raw)
        return self.space.clip(raw)

    def project(self, xn) -> np.ndarray:
        """Clip normalized continuous points to the image of the design box."""
        if self.lo is None:
            return xn
        return np.clip(xn, self.lo, self.hi)


def prepare(dataset: Dataset, space: DesignSpace) -> Prepared:
    if isinstance(space, Discrete):
        raw = to_logits(space, dataset.designs)
    else:
        raw = np.asarray(dataset.designs, dtype=np.float64)
    x_norm = fit_normalizer(raw)
    y_norm = fit_normalizer(dataset.scores[:, None])
    x = normalize(x_norm, raw)
    y = normalize(y_norm, dataset.scores[:, None])[:, 0]
    lo = hi = None
    if isinstance(space, Continuous):
        lo = normalize(x_norm, np.asarray(space.lo))
        hi = normalize(x_norm, np.asarray(space.hi))
    return Prepared(space, raw, x, y, x_norm, y_norm, lo, hi)


def top_rows(dataset: Dataset, k: int) -> np.ndarray:
    if len(dataset) < k:
        raise InitializationError(f"dataset has {len(dataset)} rows, fewer than K={k}")
    return dataset.top_k(k)


def best_k(points: np.ndarray, values: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """The k highest-valued points, best first; ties keep insertion order."""
    order = np.argsort(-values, kind="stable")[:k]
    return points[order], values[order]


def ascend(x0: np.ndarray, grad_fn, lr: float, steps: int, project=None) -> np.ndarray:
    """``steps`` of x <- x + lr * grad(x), optionally projected after each step."""
    x = np.array(x0, dtype=np.float64, copy=True)
    for _ in range(steps):
        x = x + lr * grad_fn(x)
        if project is not None:
            x = project(x)
    return x
