"""Offline Bayesian optimization with Monte-Carlo batch expected improvement.

A Gaussian process is fitted to surrogate labels on a subsample of the
data (the top-scoring half plus a random half); each round picks a batch greedily by q-EI from a pool of
perturbations of the current incumbents, labels it with the surrogate and
conditions the GP on it.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import pdist

from ..errors import NumericalError, ParameterError
from ..space import DesignSpace, Discrete
from ..surrogate import TrainConfig, fit_ensemble, predict
from ..tasks import Dataset
from .base import CandidateSet, best_k, prepare

MAX_JITTER = 1e-2


@dataclass(frozen=True)
class BoQeiConfig:
    gp_subsample: int = 256
    rounds: int = 8
    batch: int = 16
    mc_samples: int = 64
    pool: int = 1024
    perturb_std: float | None = None   # None: 0.1 continuous, 1.0 discrete (argmax needs larger moves)
    noise: float = 1e-4
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if min(self.gp_subsample, self.batch, self.mc_samples, self.pool) < 1 or self.rounds < 0:
            raise ParameterError("counts must be positive")
        if self.noise <= 0 or (self.perturb_std is not None and self.perturb_std <= 0):
            raise ParameterError("noise and perturb_std must be positive")


def cholesky_jitter(a: np.ndarray, start: float = 1e-10) -> np.ndarray:
    """Cholesky factor, adding jitter * I (x10 per retry, up to 1e-2) on failure."""
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    jitter = start
    eye = np.eye(len(a))
    while jitter <= MAX_JITTER:
        try:
            return np.linalg.cholesky(a + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("Cholesky failed even with maximal jitter")


class GaussianProcess:
    """Zero-trend GP with a squared-exponential kernel around the label mean."""

    def __init__(self, x, y, lengthscale: float, noise: float):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.lengthscale = lengthscale
        self.noise = noise
        self.offset = float(self.y.mean())
        var = float(self.y.var())
        self.signal = var if var > 0 else 1.0
        k = self.kernel(self.x, self.x) + noise * np.eye(len(self.x))
        self.chol = cholesky_jitter(k)
        self.alpha = cho_solve((self.chol, True), self.y - self.offset)

    def kernel(self, a, b):
        sq = np.sum(a**2, 1)[:, None] + np.sum(b**2, 1)[None, :] - 2 * a @ b.T
        return self.signal * np.exp(-np.maximum(sq, 0.0) / (2 * self.lengthscale**2))

    def posterior(self, xq):
        kq = self.kernel(xq, self.x)
        mean = self.offset + kq @ self.alpha
        v = solve_triangular(self.chol, kq.T, lower=True)
        cov = self.kernel(xq, xq) - v.T @ v
        return mean, 0.5 * (cov + cov.T)

    def condition(self, x_new, y_new) -> "GaussianProcess":
        return GaussianProcess(np.vstack([self.x, x_new]), np.concatenate([self.y, y_new]),
                               self.lengthscale, self.noise)


def posterior_draws(mean, cov, n: int, rng) -> np.ndarray:
    """(n, q) joint draws; a covariance that is exactly zero gives the mean itself."""
    if not np.any(cov):
        return np.repeat(mean[None, :], n, axis=0)
    return mean + rng.standard_normal((n, len(mean))) @ cholesky_jitter(cov).T


def q_expected_improvement(mean, cov, best: float, n: int, rng) -> float:
    """MC estimate of E[max(max_i Y_i - best, 0)] for a jointly Gaussian batch."""
    draws = posterior_draws(np.asarray(mean, float), np.asarray(cov, float), n, rng)
    return float(np.maximum(draws.max(axis=1) - best, 0.0).mean())


def greedy_qei_batch(draws: np.ndarray, best: float, q: int) -> list[int]:
    """Pick q pool columns maximizing MC q-EI under shared joint draws."""
    running = np.full(draws.shape[0], -np.inf)
    chosen: list[int] = []
    for _ in range(min(q, draws.shape[1])):
        gain = np.maximum(np.maximum(running[:, None], draws) - best, 0.0).mean(axis=0)
        gain[chosen] = -np.inf
        j = int(np.argmax(gain))
        chosen.append(j)
        running = np.maximum(running, draws[:, j])
    return chosen


def bo_qei_propose(dataset: Dataset, space: DesignSpace, cfg: BoQeiConfig, k: int, seed: int,
                   *, label=None) -> CandidateSet:
    """``label`` (normalized points -> values) replaces the fitted surrogate."""
    prep = prepare(dataset, space)
    if label is None:
        model = fit_ensemble((prep.x, prep.y), replace(cfg.train, seed=seed), 1).models[0]
        label = lambda z: predict(model, z)  # noqa: E731
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    n_sub = min(cfg.gp_subsample, len(prep.x))
    top = dataset.top_k(n_sub // 2)
    rest = np.setdiff1d(np.arange(len(prep.x)), top)
    sub = np.concatenate([top, rng.choice(rest, size=n_sub - len(top), replace=False)])
    x = prep.x[sub]
    y = np.asarray(label(x), dtype=np.float64)
    dists = pdist(x)
    lengthscale = float(np.median(dists)) if len(dists) and np.median(dists) > 0 else 1.0
    gp = GaussianProcess(x, y, lengthscale, cfg.noise)

    std = cfg.perturb_std or (1.0 if isinstance(space, Discrete) else 0.1)
    per = max(1, cfg.pool // cfg.batch)
    for _ in range(cfg.rounds):
        incumbents = gp.x[np.argsort(-gp.y, kind="stable")[: cfg.batch]]
        pool = np.repeat(incumbents, per, axis=0)
        pool = prep.project(pool + std * rng.standard_normal(pool.shape))
        mean, cov = gp.posterior(pool)
        draws = posterior_draws(mean, cov, cfg.mc_samples, rng)
        pick = pool[greedy_qei_batch(draws, float(gp.y.max()), cfg.batch)]
        gp = gp.condition(pick, np.asarray(label(pick), dtype=np.float64))

    if len(gp.y) < k:
        raise ParameterError(f"only {len(gp.y)} labelled points, fewer than K={k}")
    best, best_vals = best_k(gp.x, gp.y, k)
    return CandidateSet(prep.decode(best), best_vals, "bo-qei", seed,
                        {"lengthscale": lengthscale, "labelled": len(gp.y)})
