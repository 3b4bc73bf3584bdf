"""CMA-ES on a learned objective, run in normalized design space."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ParameterError
from ..space import DesignSpace
from ..surrogate import TrainConfig, fit_ensemble, predict
from ..tasks import Dataset
from .base import CandidateSet, best_k, prepare, top_rows


@dataclass(frozen=True)
class CmaEsConfig:
    sigma: float = 0.5
    population: int | None = None   # None: max(4 + floor(3 ln d), 2K)
    iterations: int = 100
    elite_fraction: float = 0.25
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.sigma <= 0 or self.iterations < 0:
            raise ParameterError("sigma must be positive and iterations >= 0")
        if not 0.0 < self.elite_fraction < 1.0:
            raise ParameterError("elite_fraction must lie in (0, 1)")
        if self.population is not None and self.population < 2:
            raise ParameterError("population must be at least 2")


class CMA:
    """(mu/mu_w, lambda)-CMA-ES maximizing a function, with the usual default constants."""

    def __init__(self, mean, sigma: float, popsize: int, mu: int, rng: np.random.Generator):
        self.mean = np.array(mean, dtype=np.float64)
        n = self.dim = len(self.mean)
        self.sigma = float(sigma)
        self.popsize = popsize
        self.mu = max(1, min(mu, popsize))
        self.rng = rng

        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))

        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.generation = 0

    def ask(self) -> np.ndarray:
        z = self.rng.standard_normal((self.popsize, self.dim))
        return self.mean + self.sigma * (z * self.D) @ self.B.T

    def tell(self, x: np.ndarray, values: np.ndarray) -> None:
        n = self.dim
        elite = x[np.argsort(-values, kind="stable")[: self.mu]]
        old = self.mean
        self.mean = self.weights @ elite
        step = (self.mean - old) / self.sigma

        inv_sqrt_c = self.B @ np.diag(1 / self.D) @ self.B.T
        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * inv_sqrt_c @ step
        self.generation += 1
        ps_norm = np.linalg.norm(self.ps)
        hsig = ps_norm / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation)) / self.chi_n < 1.4 + 2 / (n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * step

        y = (elite - old) / self.sigma
        rank_mu = (y * self.weights[:, None]).T @ y
        rank_one = np.outer(self.pc, self.pc)
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (rank_one + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
                  + self.cmu * rank_mu)
        self.sigma *= math.exp((self.cs / self.damps) * (ps_norm / self.chi_n - 1))

        self.C = np.triu(self.C) + np.triu(self.C, 1).T
        eigvals, self.B = np.linalg.eigh(self.C)
        self.D = np.sqrt(np.maximum(eigvals, 1e-300))


def default_population(d: int, k: int) -> int:
    return max(4 + int(math.floor(3 * math.log(d))), 2 * k)


def run_cma(objective, mean0, sigma: float, popsize: int, mu: int, iterations: int, seed):
    """Run CMA-ES; returns (engine, all points sampled, their objective values).

    ``iterations`` full ask/tell rounds are followed by one last ask, so
    ``iterations=0`` yields a single draw from the initial distribution.
    """
    es = CMA(mean0, sigma, popsize, mu, np.random.default_rng(seed))
    points, values = [], []
    for it in range(iterations + 1):
        x = es.ask()
        f = np.asarray(objective(x), dtype=np.float64)
        points.append(x)
        values.append(f)
        if it < iterations:
            es.tell(x, f)
    return es, np.concatenate(points), np.concatenate(values)


def cma_es_propose(dataset: Dataset, space: DesignSpace, cfg: CmaEsConfig, k: int, seed: int,
                   *, objective=None) -> CandidateSet:
    """Evolve a Gaussian search distribution against the surrogate.

    ``objective`` (normalized points -> values) replaces the fitted surrogate;
    it exists so the search can be checked against a known function.
    """
    prep = prepare(dataset, space)
    if objective is None:
        model = fit_ensemble((prep.x, prep.y), replace(cfg.train, seed=seed), 1).models[0]
        objective = lambda z: predict(model, z)  # noqa: E731
    mean0 = prep.x[top_rows(dataset, k)].mean(axis=0)
    lam = cfg.population or default_population(prep.dim, k)
    mu = max(1, int(cfg.elite_fraction * lam))
    es, pts, vals = run_cma(lambda z: objective(prep.project(z)), mean0, cfg.sigma, lam, mu,
                            cfg.iterations, np.random.SeedSequence([seed, 1]))
    pts = prep.project(pts)
    best, best_vals = best_k(pts, vals, k)
    return CandidateSet(prep.decode(best), best_vals, "cma-es", seed,
                        {"final_sigma": es.sigma, "population": lam, "elite": mu})
