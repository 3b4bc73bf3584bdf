"""Closed-form weighted-MLE densities over designs.

Gaussians cover (normalized) continuous designs, independent per-position
categoricals cover discrete sequences. Both expose exact log-densities,
which is what the CbAS importance ratios need. :class:`ConditionalSampler`
is the score-conditioned sampler used for model inversion: it refits a
density with kernel weights centred on a target score.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, ParameterError, ShapeError

RIDGE = 1e-4
FLOOR = 1e-3
BANDWIDTH = 0.2
FALLBACK_ROWS = 32


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    mean: np.ndarray
    covariance: np.ndarray
    ridge: float = RIDGE

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=np.float64)
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ParameterError("covariance must be symmetric")
        # ridge is already part of the stored covariance for fitted densities
        object.__setattr__(self, "_chol", np.linalg.cholesky(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class CategoricalSeqDensity:
    probs: np.ndarray
    floor: float = FLOOR

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] < 2:
            raise ShapeError("probs must be a (length, categories) matrix")
        if not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ParameterError("each position's probabilities must sum to 1")
        if np.any(p < self.floor - 1e-15):
            raise ParameterError("probabilities below the floor")

    @property
    def length(self) -> int:
        return self.probs.shape[0]

    @property
    def categories(self) -> int:
        return self.probs.shape[1]


Density = GaussianDensity | CategoricalSeqDensity


def _weights(weights, n) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != (n,):
        raise ShapeError("need one weight per sample")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DataError("weights must be finite and nonnegative")
    total = w.sum()
    if not total > 0:
        raise DataError("weights sum to zero")
    return w / total


def fit_weighted(samples, weights, *, categories: int | None = None, ridge: float = RIDGE,
                 floor: float = FLOOR) -> Density:
    """Weighted MLE: Gaussian for float rows, categorical when ``categories`` is given.

    Categorical probabilities are mixed with the floor as
    ``floor + (1 - C * floor) * p`` so every entry is at least ``floor`` and
    rows still sum to one.
    """
    x = np.asarray(samples)
    if x.ndim != 2 or len(x) == 0:
        raise ShapeError("samples must be a non-empty 2-D array")
    w = _weights(weights, len(x))
    if categories is None:
        x = x.astype(np.float64)
        mean = w @ x
        centred = x - mean
        cov = (centred * w[:, None]).T @ centred
        cov = 0.5 * (cov + cov.T) + ridge * np.eye(x.shape[1])
        return GaussianDensity(mean, cov, ridge)
    if categories * floor >= 1.0:
        raise ParameterError("floor too large for the number of categories")
    counts = np.zeros((x.shape[1], categories))
    for pos in range(x.shape[1]):
        counts[pos] = np.bincount(x[:, pos], weights=w, minlength=categories)
    probs = floor + (1.0 - categories * floor) * counts / counts.sum(axis=1, keepdims=True)
    return CategoricalSeqDensity(probs, floor)


def sample(density: Density, n: int, seed) -> np.ndarray:
    if n < 1:
        raise ParameterError("n must be positive")
    rng = np.random.default_rng(seed)
    if isinstance(density, GaussianDensity):
        z = rng.standard_normal((n, density.dim))
        return density.mean + z @ density._chol.T
    cdf = np.cumsum(density.probs, axis=1)
    u = rng.random((n, density.length, 1))
    # inverse CDF; clamp guards the last bin against cumsum rounding
    idx = (u >= cdf[None, :, :]).sum(axis=2)
    return np.minimum(idx, density.categories - 1).astype(np.int64)


def log_density(density: Density, design) -> np.ndarray | float:
    x = np.asarray(design)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if isinstance(density, GaussianDensity):
        if x2.shape[1] != density.dim:
            raise ShapeError("design dimension does not match the density")
        diff = x2.astype(np.float64) - density.mean
        z = solve_triangular(density._chol, diff.T, lower=True)
        log_det = 2.0 * np.sum(np.log(np.diag(density._chol)))
        out = -0.5 * (np.sum(z * z, axis=0) + log_det + density.dim * np.log(2.0 * np.pi))
    else:
        if x2.shape[1] != density.length:
            raise ShapeError("sequence length does not match the density")
        lp = np.log(density.probs)
        out = lp[np.arange(density.length), x2].sum(axis=1)
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class ConditionalSampler:
    designs: np.ndarray
    scores: np.ndarray
    bandwidth: float = BANDWIDTH
    categories: int | None = None

    def __post_init__(self):
        if len(self.designs) == 0 or len(self.designs) != len(self.scores):
            raise DataError("conditional sampler needs a non-empty dataset")
        if not self.bandwidth > 0:
            raise ParameterError("bandwidth must be positive")


@dataclass(frozen=True)
class ConditionalDraw:
    designs: np.ndarray
    density: Density
    fallback: bool


def fit_conditional(data, *, bandwidth: float = BANDWIDTH, categories: int | None = None) -> ConditionalSampler:
    """Store (normalized) designs and scores for score-conditioned sampling."""
    x, y = data
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(x) < 2:
        raise DataError("need at least two rows")
    return ConditionalSampler(x, y, bandwidth, categories)


def conditional_density(cs: ConditionalSampler, y_star: float) -> tuple[Density, bool]:
    """Kernel-weighted refit centred on ``y_star``; second item flags the fallback path."""
    w = np.exp(-((cs.scores - y_star) ** 2) / (2.0 * cs.bandwidth**2))
    fallback = not np.any(w > 0)
    if fallback:
        nearest = np.argsort(np.abs(cs.scores - y_star), kind="stable")[:FALLBACK_ROWS]
        w = np.zeros(len(cs.scores))
        w[nearest] = 1.0
    return fit_weighted(cs.designs, w, categories=cs.categories), fallback


def sample_conditional(cs: ConditionalSampler, y_star: float, n: int, seed) -> ConditionalDraw:
    density, fallback = conditional_density(cs, y_star)
    return ConditionalDraw(sample(density, n, seed), density, fallback)


def log_weight_ratio(numer: Density, denom: Density, designs) -> np.ndarray:
    """log numer(x) - log denom(x), row-wise."""
    return np.atleast_1d(log_density(numer, designs)) - np.atleast_1d(log_density(denom, designs))


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=np.float64)
    s = w.sum()
    return float(s * s / np.sum(w * w)) if s > 0 else 0.0
