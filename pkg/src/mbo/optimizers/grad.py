"""Gradient ascent on a learned objective (single model, ensemble min or mean)."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ParameterError
from ..space import DesignSpace
from ..surrogate import SurrogateEnsemble, TrainConfig, ensemble_reduce, fit_ensemble
from ..tasks import Dataset
from .base import CandidateSet, ascend, prepare, top_rows


@dataclass(frozen=True)
class GradConfig:
    mode: str = "single"
    steps: int = 200
    lr: float = 0.05
    ensemble: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.mode not in ("single", "min", "mean"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.steps < 0 or self.ensemble < 1 or self.lr <= 0:
            raise ParameterError("steps >= 0, ensemble >= 1 and lr > 0 required")


def grad_ascent_propose(dataset: Dataset, space: DesignSpace, cfg: GradConfig, k: int, seed: int,
                        *, ensemble: SurrogateEnsemble | None = None) -> CandidateSet:
    """Start at the top-k training designs and climb the reduced ensemble prediction.

    The step size is ``lr * sqrt(d)`` in normalized (relaxed) design space.
    Passing ``ensemble`` skips fitting.
    """
    prep = prepare(dataset, space)
    if ensemble is None:
        n = 1 if cfg.mode == "single" else cfg.ensemble
        ensemble = fit_ensemble((prep.x, prep.y), replace(cfg.train, seed=seed), n)
    rows = top_rows(dataset, k)
    lr = cfg.lr * np.sqrt(prep.dim)
    x = ascend(prep.x[rows], lambda z: ensemble_reduce(ensemble, z, cfg.mode)[1], lr, cfg.steps,
               prep.project)
    values = ensemble_reduce(ensemble, x, cfg.mode)[0]
    return CandidateSet(prep.decode_from(rows, x), values, f"grad-{cfg.mode}", seed,
                        {"step_size": float(lr), "val_losses": ensemble.val_losses.tolist()})
