"""Conservative objective models: ascent on a surrogate trained to distrust ascended designs."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ParameterError
from ..space import DesignSpace, Discrete
from ..surrogate import (COMS_ALPHA_CONTINUOUS, COMS_ALPHA_DISCRETE, COMS_ASCENT_STEPS, TrainConfig,
                         fit_conservative, input_gradient, predict)
from ..tasks import Dataset
from .base import CandidateSet, ascend, prepare, top_rows


@dataclass(frozen=True)
class ComsConfig:
    alpha: float | None = None        # None: 2 for discrete spaces, 0.5 for continuous
    ascent_steps: int = COMS_ASCENT_STEPS
    ascent_lr: float | None = None    # None: 2 * sqrt(d) discrete, 0.05 * sqrt(d) continuous
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=50))

    def __post_init__(self):
        if self.ascent_steps < 0:
            raise ParameterError("ascent_steps must be >= 0")
        if self.alpha is not None and self.alpha < 0:
            raise ParameterError("alpha must be >= 0")


def coms_settings(cfg: ComsConfig, space: DesignSpace, d: int) -> tuple[float, float]:
    discrete = isinstance(space, Discrete)
    alpha = cfg.alpha if cfg.alpha is not None else (COMS_ALPHA_DISCRETE if discrete else COMS_ALPHA_CONTINUOUS)
    lr = cfg.ascent_lr if cfg.ascent_lr is not None else (2.0 if discrete else 0.05) * np.sqrt(d)
    return float(alpha), float(lr)


def coms_propose(dataset: Dataset, space: DesignSpace, cfg: ComsConfig, k: int, seed: int) -> CandidateSet:
    prep = prepare(dataset, space)
    alpha, lr = coms_settings(cfg, space, prep.dim)
    model = fit_conservative((prep.x, prep.y), replace(cfg.train, seed=seed), alpha, cfg.ascent_steps, lr)
    rows = top_rows(dataset, k)
    x = ascend(prep.x[rows], lambda z: input_gradient(model, z), lr, cfg.ascent_steps, prep.project)
    return CandidateSet(prep.decode_from(rows, x), predict(model, x), "coms", seed,
                        {"alpha": alpha, "step_size": lr})
