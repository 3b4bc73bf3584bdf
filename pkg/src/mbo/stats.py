"""Order statistics and bootstrap intervals used by the evaluation protocol."""
from __future__ import annotations

import math

import numpy as np

from .errors import InsufficientDataError, ParameterError


def percentile_score(scores, p: float) -> float:
    """Element at index ceil(p/100 * n) - 1 of the ascending sort; no interpolation."""
    s = np.sort(np.asarray(scores, dtype=np.float64).reshape(-1))
    if len(s) == 0:
        raise InsufficientDataError("percentile of an empty vector")
    if not 0.0 < p <= 100.0:
        raise ParameterError("P must lie in (0, 100]")
    idx = max(math.ceil(p * len(s) / 100.0) - 1, 0)
    return float(s[idx])


def iqm(values) -> float:
    """Mean after dropping floor(n/4) values from each end."""
    v = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if len(v) == 0:
        raise InsufficientDataError("iqm of an empty vector")
    cut = len(v) // 4
    return float(v[cut: len(v) - cut].mean())


def _iqm_rows(a: np.ndarray) -> np.ndarray:
    a = np.sort(a, axis=-1)
    cut = a.shape[-1] // 4
    return a[..., cut: a.shape[-1] - cut].mean(axis=-1)


STATISTICS = {
    "mean": lambda a: a.mean(axis=-1),
    "median": lambda a: np.median(a, axis=-1),
    "iqm": _iqm_rows,
}


def point_statistic(values, statistic: str) -> float:
    return float(STATISTICS[statistic](np.asarray(values, dtype=np.float64)[None, :])[0])


def _interval(stats: np.ndarray, level: float) -> tuple[float, float]:
    tail = 100.0 * (1.0 - level) / 2.0
    return percentile_score(stats, tail), percentile_score(stats, 100.0 - tail)


def bootstrap_ci(values, statistic: str = "mean", b: int = 2000, level: float = 0.95, seed=0):
    """Percentile bootstrap interval for ``statistic`` over ``b`` resamples."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(v) < 2:
        raise InsufficientDataError("bootstrap needs at least two values")
    if statistic not in STATISTICS:
        raise ParameterError(f"unknown statistic {statistic!r}")
    if not 0.0 < level < 1.0 or b < 1:
        raise ParameterError("level must lie in (0, 1) and b >= 1")
    if np.all(v == v[0]):
        # every resample is the constant; summation would only add rounding
        return float(v[0]), float(v[0])
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(v), size=(b, len(v)))
    return _interval(STATISTICS[statistic](v[idx]), level)


def stratified_bootstrap_ci(groups: dict, statistic: str = "mean", b: int = 2000, level: float = 0.95,
                            seed=0) -> tuple[float, float]:
    """Resample within each group, apply the statistic per group, average groups equally."""
    if not groups:
        raise InsufficientDataError("no groups")
    rng = np.random.default_rng(seed)
    total = np.zeros(b)
    for name in sorted(groups):
        v = np.asarray(groups[name], dtype=np.float64).reshape(-1)
        if len(v) == 0:
            raise InsufficientDataError(f"group {name!r} is empty")
        idx = rng.integers(0, len(v), size=(b, len(v)))
        total += STATISTICS[statistic](v[idx])
    return _interval(total / len(groups), level)


def stratified_point(groups: dict, statistic: str) -> float:
    return float(np.mean([point_statistic(groups[k], statistic) for k in sorted(groups)]))
