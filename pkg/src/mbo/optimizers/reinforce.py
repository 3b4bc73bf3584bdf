"""Score-function policy gradient against a filtered surrogate ensemble."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import log_softmax, softmax

from ..errors import ParameterError
from ..space import DesignSpace, Discrete
from ..surrogate import SurrogateEnsemble, TrainConfig, ensemble_stats, fit_ensemble
from ..tasks import Dataset
from .base import CandidateSet, best_k, prepare, top_rows

PROB_FLOOR = 1e-3


@dataclass(frozen=True)
class ReinforceConfig:
    iterations: int = 200
    batch: int = 128
    policy_lr: float = 0.05
    val_threshold: float = 1.0
    ensemble: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.iterations < 0 or self.batch < 2 or self.ensemble < 1:
            raise ParameterError("iterations >= 0, batch >= 2 and ensemble >= 1 required")
        if self.policy_lr <= 0:
            raise ParameterError("policy_lr must be positive")


class Adam:
    """Adam ascent on a flat parameter vector."""

    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m, self.v = np.zeros_like(grad), np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def filter_ensemble(ens: SurrogateEnsemble, threshold: float) -> tuple[SurrogateEnsemble, bool]:
    """Keep members whose validation MSE is at most ``threshold``.

    If none qualify the single best member is kept and the flag is True.
    """
    keep = [i for i, loss in enumerate(ens.val_losses) if loss <= threshold]
    fallback = not keep
    if fallback:
        keep = [int(np.argmin(ens.val_losses))]
    return SurrogateEnsemble(tuple(ens.models[i] for i in keep), ens.val_losses[keep]), fallback


def advantages(values: np.ndarray) -> np.ndarray:
    """Mean-baseline advantages; exactly zero for constant values."""
    if np.all(values == values[0]):
        return np.zeros_like(values)
    return values - values.mean()


class GaussianPolicy:
    def __init__(self, mean, std):
        self.theta = np.concatenate([np.asarray(mean, float), np.log(np.asarray(std, float))])
        self.d = len(mean)

    @property
    def mean(self):
        return self.theta[: self.d]

    def sample(self, rng, n):
        return self.mean + np.exp(self.theta[self.d:]) * rng.standard_normal((n, self.d))

    def grad(self, x, adv):
        mu, log_std = self.theta[: self.d], self.theta[self.d:]
        z = (x - mu) / np.exp(log_std)
        g_mu = (adv[:, None] * z / np.exp(log_std)).mean(axis=0)
        g_ls = (adv[:, None] * (z * z - 1.0)).mean(axis=0)
        return np.concatenate([g_mu, g_ls])


class CategoricalPolicy:
    def __init__(self, logits):
        self.shape = logits.shape
        self.theta = np.asarray(logits, float).ravel()

    def sample(self, rng, n):
        p = softmax(self.theta.reshape(self.shape), axis=1)
        u = rng.random((n, self.shape[0], 1))
        idx = (u >= np.cumsum(p, axis=1)[None]).sum(axis=2)
        return np.minimum(idx, self.shape[1] - 1)

    def grad(self, s, adv):
        p = softmax(self.theta.reshape(self.shape), axis=1)
        onehot = np.zeros((len(s),) + self.shape)
        np.put_along_axis(onehot, s[..., None], 1.0, axis=2)
        return (adv[:, None, None] * (onehot - p[None])).mean(axis=0).ravel()


def reinforce_propose(dataset: Dataset, space: DesignSpace, cfg: ReinforceConfig, k: int, seed: int,
                      *, objective=None) -> CandidateSet:
    """``objective`` (normalized relaxed points -> values) replaces the ensemble mean."""
    prep = prepare(dataset, space)
    info = {}
    if objective is None:
        ens = fit_ensemble((prep.x, prep.y), replace(cfg.train, seed=seed), cfg.ensemble)
        ens, fallback = filter_ensemble(ens, cfg.val_threshold)
        if fallback:
            warnings.warn("no ensemble member met the validation threshold; keeping the best one")
        info.update(members=len(ens), threshold_fallback=fallback)
        objective = lambda z: ensemble_stats(ens, z)[0]  # noqa: E731

    rows = top_rows(dataset, k)
    discrete = isinstance(space, Discrete)
    if discrete:
        counts = np.zeros((space.length, space.categories))
        for pos in range(space.length):
            counts[pos] = np.bincount(dataset.designs[rows, pos], minlength=space.categories)
        probs = np.maximum(counts / counts.sum(axis=1, keepdims=True), PROB_FLOOR)
        policy = CategoricalPolicy(log_softmax(np.log(probs), axis=1))
        score = lambda s: objective(prep.encode(s))  # noqa: E731
    else:
        policy = GaussianPolicy(prep.x[rows].mean(axis=0), np.maximum(prep.x.std(axis=0), 1e-6))
        score = lambda z: objective(prep.project(z))  # noqa: E731

    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    opt = Adam(cfg.policy_lr)
    pts, vals, means = [], [], []
    for _ in range(max(cfg.iterations, 1)):
        x = policy.sample(rng, cfg.batch)
        f = np.asarray(score(x), dtype=np.float64)
        pts.append(x)
        vals.append(f)
        if len(means) < cfg.iterations:
            policy.theta = opt.step(policy.theta, policy.grad(x, advantages(f)))
            means.append(policy.theta.copy())
    while sum(len(v) for v in vals) < k:
        x = policy.sample(rng, cfg.batch)
        pts.append(x)
        vals.append(np.asarray(score(x), dtype=np.float64))
    pts, vals = np.concatenate(pts), np.concatenate(vals)
    best, best_vals = best_k(pts, vals, k)
    info["policy_history"] = means
    designs = best if discrete else prep.decode(prep.project(best))
    return CandidateSet(designs, best_vals, "reinforce", seed, info)
