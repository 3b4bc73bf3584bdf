"""Conditioning by adaptive sampling, with optional autofocused surrogate refits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from ..density import Density, effective_sample_size, fit_weighted, log_weight_ratio, sample
from ..errors import ParameterError
from ..space import DesignSpace, Discrete
from ..surrogate import SurrogateEnsemble, TrainConfig, ensemble_stats, fit_ensemble, fit_reweighted
from ..tasks import Dataset
from .base import CandidateSet, best_k, prepare

LOG_CLAMP = math.log(20.0)
MIN_STD = 1e-6


@dataclass(frozen=True)
class CbasConfig:
    iterations: int = 20
    samples: int = 512
    quantile: float = 0.9
    autofocus: bool = False
    ensemble: int = 5
    refit_epochs: int = 20
    threshold: float | None = None    # fixed tau instead of the batch quantile (test hook)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.iterations < 0 or self.samples < 2 or self.ensemble < 1 or self.refit_epochs < 0:
            raise ParameterError("iterations >= 0, samples >= 2, ensemble >= 1 required")
        if not 0.0 < self.quantile < 1.0:
            raise ParameterError("quantile must lie in (0, 1)")


def clamped_ratio(log_ratio: np.ndarray) -> np.ndarray:
    """exp of a log density ratio clamped to [-ln 20, ln 20]."""
    return np.exp(np.clip(log_ratio, -LOG_CLAMP, LOG_CLAMP))


def exceedance(mean: np.ndarray, std: np.ndarray, tau: float) -> np.ndarray:
    """Pr(f >= tau) under a Gaussian with the ensemble's mean and std."""
    if tau == -np.inf:
        return np.ones_like(mean)
    return norm.sf((tau - mean) / np.maximum(std, MIN_STD))


def cbas_weights(samples, p0: Density, pt: Density, mean, std, tau) -> np.ndarray:
    return clamped_ratio(log_weight_ratio(p0, pt, samples)) * exceedance(mean, std, tau)


def autofocus_weights(designs, p0: Density, pt: Density) -> np.ndarray:
    """Importance weights p_t / p_0 on the training rows, clamped to [1/20, 20]."""
    return clamped_ratio(log_weight_ratio(pt, p0, designs))


def _refit(prep, base: SurrogateEnsemble, weights, cfg: CbasConfig, seed) -> SurrogateEnsemble:
    if np.all(weights == 1.0):
        return base
    train = replace(cfg.train, seed=seed, epochs=cfg.refit_epochs)
    models = tuple(fit_reweighted((prep.x, prep.y), weights, replace(train, seed=(seed * 7919 + i) % 2**63),
                                  init=m)
                   for i, m in enumerate(base.models))
    return SurrogateEnsemble(models, base.val_losses)


def cbas_propose(dataset: Dataset, space: DesignSpace, cfg: CbasConfig, k: int, seed: int,
                 *, history: bool = False) -> CandidateSet:
    """Iteratively refit a design density toward designs the ensemble scores highly.

    With ``history=True`` the decoded sample batch of every iteration is
    kept in ``info["batches"]``.
    """
    prep = prepare(dataset, space)
    discrete = isinstance(space, Discrete)
    categories = space.categories if discrete else None
    data = dataset.designs if discrete else prep.x
    encode = prep.encode if discrete else prep.project

    base = fit_ensemble((prep.x, prep.y), replace(cfg.train, seed=seed), cfg.ensemble)
    ens = base
    p0 = fit_weighted(data, np.ones(len(data)), categories=categories)
    pt = p0
    ss = np.random.SeedSequence([seed, 3])
    seeds = ss.spawn(cfg.iterations + 1)
    info = {"early_stop": None, "ess": [], "batches": [] if history else None}

    for t in range(cfg.iterations):
        batch = sample(pt, cfg.samples, seeds[t])
        if history:
            info["batches"].append(batch if discrete else prep.decode(prep.project(batch)))
        if cfg.autofocus:
            ens = _refit(prep, base, autofocus_weights(data, p0, pt), cfg, seed + t)
        mean, std = ensemble_stats(ens, encode(batch))
        tau = cfg.threshold if cfg.threshold is not None else float(np.quantile(mean, cfg.quantile))
        w = cbas_weights(batch, p0, pt, mean, std, tau)
        ess = effective_sample_size(w)
        info["ess"].append(ess)
        if ess < 2.0:
            info["early_stop"] = t
            break
        pt = fit_weighted(batch, w, categories=categories)

    final = sample(pt, k, seeds[-1])
    values = ensemble_stats(ens, encode(final))[0]
    best, best_vals = best_k(final, values, k)
    designs = best if discrete else prep.decode(prep.project(best))
    return CandidateSet(designs, best_vals, "autofocused-cbas" if cfg.autofocus else "cbas", seed, info)


def autofocused_cbas_propose(dataset: Dataset, space: DesignSpace, cfg: CbasConfig, k: int, seed: int,
                             **kw) -> CandidateSet:
    return cbas_propose(dataset, space, replace(cfg, autofocus=True), k, seed, **kw)
