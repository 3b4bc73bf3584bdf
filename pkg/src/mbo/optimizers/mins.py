"""Model inversion: sample designs conditioned on a score above the best seen."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..density import BANDWIDTH, fit_conditional, sample_conditional
from ..errors import ParameterError
from ..space import DesignSpace, Discrete
from ..surrogate import TrainConfig, fit_ensemble, predict
from ..tasks import Dataset
from .base import CandidateSet, prepare


@dataclass(frozen=True)
class MinsConfig:
    y_margin: float = 0.5
    bandwidth: float = BANDWIDTH
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ParameterError("bandwidth must be positive")


def mins_propose(dataset: Dataset, space: DesignSpace, cfg: MinsConfig, k: int, seed: int,
                 *, report_scores: bool = True) -> CandidateSet:
    """Query the score-conditioned sampler at (max normalized score + margin).

    The surrogate fitted here only fills ``surrogate_scores``; it plays no
    part in choosing designs.
    """
    prep = prepare(dataset, space)
    discrete = isinstance(space, Discrete)
    data = dataset.designs if discrete else prep.x
    cs = fit_conditional((data, prep.y), bandwidth=cfg.bandwidth,
                         categories=space.categories if discrete else None)
    y_star = float(prep.y.max() + cfg.y_margin)
    draw = sample_conditional(cs, y_star, k, np.random.SeedSequence([seed, 4]))
    if discrete:
        designs, encoded = draw.designs, prep.encode(draw.designs)
    else:
        encoded = prep.project(draw.designs)
        designs = prep.decode(encoded)
    if report_scores:
        model = fit_ensemble((prep.x, prep.y), replace(cfg.train, seed=seed), 1).models[0]
        scores = predict(model, encoded)
    else:
        scores = np.full(k, np.nan)
    return CandidateSet(designs, scores, "mins", seed, {"y_star": y_star, "fallback": draw.fallback})
