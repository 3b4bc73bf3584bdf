"""The offline optimizers and a registry mapping method names to them.

Every ``*_propose`` function has the signature
``(dataset, space, cfg, k, seed) -> CandidateSet``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..space import DesignSpace
from ..tasks import Dataset
from .base import CandidateSet, prepare
from .bo import BoQeiConfig, bo_qei_propose
from .cbas import CbasConfig, autofocused_cbas_propose, cbas_propose
from .cmaes import CmaEsConfig, cma_es_propose
from .coms import ComsConfig, coms_propose
from .grad import GradConfig, grad_ascent_propose
from .mins import MinsConfig, mins_propose
from .reinforce import ReinforceConfig, reinforce_propose


@dataclass(frozen=True)
class DatasetBestConfig:
    pass


def dataset_best_propose(dataset: Dataset, space: DesignSpace, cfg: DatasetBestConfig, k: int,
                         seed: int) -> CandidateSet:
    """Null method: the top-k training designs, unchanged."""
    rows = dataset.top_k(k)
    return CandidateSet(dataset.designs[rows], dataset.scores[rows], "dataset-best", seed)


@dataclass(frozen=True)
class Method:
    name: str
    propose: object
    default_config: object
    description: str


METHODS = {
    m.name: m
    for m in [
        Method("grad", grad_ascent_propose, lambda: GradConfig(mode="single"),
               "gradient ascent on one learned model"),
        Method("grad-min", grad_ascent_propose, lambda: GradConfig(mode="min"),
               "gradient ascent on the ensemble minimum"),
        Method("grad-mean", grad_ascent_propose, lambda: GradConfig(mode="mean"),
               "gradient ascent on the ensemble mean"),
        Method("cma-es", cma_es_propose, CmaEsConfig, "CMA-ES against a learned model"),
        Method("reinforce", reinforce_propose, ReinforceConfig, "policy gradient against a learned model"),
        Method("cbas", cbas_propose, CbasConfig, "conditioning by adaptive sampling"),
        Method("autofocused-cbas", autofocused_cbas_propose, lambda: CbasConfig(autofocus=True),
               "CbAS with importance-weighted surrogate refits"),
        Method("mins", mins_propose, MinsConfig, "score-conditioned inverse sampling"),
        Method("bo-qei", bo_qei_propose, BoQeiConfig, "GP Bayesian optimization with batch EI"),
        Method("coms", coms_propose, ComsConfig, "conservative objective models"),
        Method("dataset-best", dataset_best_propose, DatasetBestConfig, "top-K training designs (reference)"),
    ]
}

__all__ = [
    "METHODS", "Method", "CandidateSet", "prepare",
    "GradConfig", "CmaEsConfig", "ReinforceConfig", "CbasConfig", "MinsConfig", "BoQeiConfig",
    "ComsConfig", "DatasetBestConfig",
    "grad_ascent_propose", "cma_es_propose", "reinforce_propose", "cbas_propose",
    "autofocused_cbas_propose", "mins_propose", "bo_qei_propose", "coms_propose",
    "dataset_best_propose",
]
