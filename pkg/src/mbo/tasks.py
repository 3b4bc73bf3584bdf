"""Synthetic offline-MBO tasks with exact oracles.

Each task pairs a design space with a closed-form objective and a recipe for
building an offline training set: draw a pool, score it with the oracle,
keep the bottom ``keep_percentile`` percent. Optimizers only ever see the
resulting :class:`Dataset`; the oracle is reserved for evaluation.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDesignError, ParameterError, UnsupportedError
from .space import Continuous, DesignSpace, Discrete

ENUMERATION_CAP = 2**20


@dataclass(frozen=True)
class DatasetSpec:
    pool_size: int
    keep_percentile: float
    sampler: str
    seed: int = 0

    def __post_init__(self):
        if self.pool_size < 2:
            raise ParameterError("pool_size must be at least 2")
        if not 0.0 < self.keep_percentile <= 100.0:
            raise ParameterError("keep_percentile must lie in (0, 100]")


@dataclass(frozen=True, eq=False)
class Task:
    name: str
    space: DesignSpace
    family: str
    oracle_params: dict
    y_min: float
    y_max: float
    dataset_spec: DatasetSpec
    sampler_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.y_min < self.y_max:
            raise ParameterError("task needs y_min < y_max")


@dataclass(frozen=True, eq=False)
class Dataset:
    designs: np.ndarray
    scores: np.ndarray
    task_name: str

    def __post_init__(self):
        if len(self.designs) != len(self.scores):
            raise ParameterError("designs and scores differ in length")
        if len(self.scores) < 2:
            raise ParameterError("a dataset needs at least two rows")

    def __len__(self):
        return len(self.scores)

    def top_k(self, k: int) -> np.ndarray:
        """Row indices of the k highest scores, best first (ties by row order)."""
        return np.argsort(-self.scores, kind="stable")[:k]


@dataclass(frozen=True)
class HistogramPair:
    edges: np.ndarray
    dataset_counts: np.ndarray
    resampled_counts: np.ndarray
    dataset_mean: float
    resampled_mean: float

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "dataset_counts": self.dataset_counts.tolist(),
            "resampled_counts": self.resampled_counts.tolist(),
            "dataset_mean": self.dataset_mean,
            "resampled_mean": self.resampled_mean,
        }


# -- oracle families ---------------------------------------------------------

def _quadratic(params, x):
    return -np.sum(x**2, axis=-1)


def _separable(params, x):
    centers = params["centers"]  # (m, 2)
    pairs = x.reshape(x.shape[:-1] + centers.shape)
    return -np.sum((pairs - centers) ** 2, axis=(-2, -1))


def _lookup(params, s):
    unary, pairwise = params["unary"], params["pairwise"]
    positions = np.arange(s.shape[-1])
    y = unary[positions, s].sum(axis=-1)
    if s.shape[-1] > 1:
        y = y + pairwise[positions[:-1], s[..., :-1], s[..., 1:]].sum(axis=-1)
    return y


def _ridge(params, x):
    return np.exp(-((x - params["peak"]) ** 2) / (2.0 * params["width"] ** 2)).sum(axis=-1)


_ORACLES = {
    "quadratic": _quadratic,
    "separable": _separable,
    "lookup": _lookup,
    "ridge": _ridge,
}


def _score(task: Task, designs: np.ndarray) -> np.ndarray:
    """The single point through which every oracle evaluation passes."""
    return np.asarray(_ORACLES[task.family](task.oracle_params, designs), dtype=np.float64)


def oracle_evaluate(task: Task, design) -> float:
    """Exact score of one design."""
    d = task.space.validate(design)
    if d.ndim != 1:
        raise InvalidDesignError("oracle_evaluate takes a single design; use oracle_evaluate_batch")
    return float(_score(task, d[None, :])[0])


def oracle_evaluate_batch(task: Task, designs) -> np.ndarray:
    d = task.space.validate(designs)
    return _score(task, np.atleast_2d(d))


# -- samplers ----------------------------------------------------------------

def _sample_uniform(task, rng, n):
    return task.space.uniform(rng, n)


def _sample_separable(task, rng, n):
    centers = task.oracle_params["centers"]
    m = centers.shape[0]
    x = task.space.uniform(rng, n)
    chosen = rng.integers(0, m, size=n)
    noise = rng.normal(0.0, task.sampler_params["noise"], size=(n, 2))
    pairs = x.reshape(n, m, 2)
    pairs[np.arange(n), chosen] = centers[chosen] + noise
    return task.space.clip(pairs.reshape(n, 2 * m))


def _sample_gaussian(task, rng, n):
    p = task.sampler_params
    x = rng.normal(p["center"], p["std"], size=(n, task.space.dim))
    return task.space.clip(x)


_SAMPLERS = {
    "uniform": _sample_uniform,
    "separable": _sample_separable,
    "gaussian": _sample_gaussian,
}


# -- constructors ------------------------------------------------------------

def make_toy_quadratic() -> Task:
    """f(x, y) = -x^2 - y^2 on [-2, 2]^2, trained on the worse half of a uniform pool."""
    return Task(
        name="toy-quadratic",
        space=Continuous.box(2, -2.0, 2.0),
        family="quadratic",
        oracle_params={},
        y_min=-8.0,
        y_max=0.0,
        dataset_spec=DatasetSpec(pool_size=5000, keep_percentile=50.0, sampler="uniform"),
    )


def make_separable(m: int = 4, *, oracle_seed: int = 0, noise: float = 0.05) -> Task:
    """Sum of m independent 2-D bowls with seeded centres in [-1, 1]^2.

    Each training sample is near-optimal in at most one partition, so the
    dataset holds every per-partition optimum but never their combination.
    """
    if m < 2:
        raise ParameterError("separable task needs m >= 2")
    rng = np.random.default_rng(np.random.SeedSequence([oracle_seed, m]))
    centers = rng.uniform(-1.0, 1.0, size=(m, 2))
    # worst corner per coordinate is the far end of [-2, 2]
    y_min = -float(np.sum(np.maximum(np.abs(-2.0 - centers), np.abs(2.0 - centers)) ** 2))
    return Task(
        name="separable" if m == 4 else f"separable-{m}",
        space=Continuous.box(2 * m, -2.0, 2.0),
        family="separable",
        oracle_params={"centers": centers},
        y_min=y_min,
        y_max=0.0,
        dataset_spec=DatasetSpec(pool_size=5000, keep_percentile=100.0, sampler="separable"),
        sampler_params={"noise": noise},
    )


def make_discrete_lookup(length: int = 8, categories: int = 4, *, oracle_seed: int = 0,
                         zeroed: bool = False) -> Task:
    """Unary plus adjacent-pair coefficients; bounds come from full enumeration.

    ``zeroed=True`` sets every coefficient to zero (a test hook).
    """
    space = Discrete(length, categories)
    if space.size > ENUMERATION_CAP:
        raise UnsupportedError(f"{categories}^{length} sequences exceed the enumeration cap {ENUMERATION_CAP}")
    rng = np.random.default_rng(np.random.SeedSequence([oracle_seed, length, categories]))
    unary = rng.standard_normal((length, categories))
    pairwise = rng.standard_normal((max(length - 1, 0), categories, categories))
    if zeroed:
        unary[:] = 0.0
        pairwise[:] = 0.0
    params = {"unary": unary, "pairwise": pairwise}
    scores = _lookup(params, space.enumerate())
    y_min, y_max = float(scores.min()), float(scores.max())
    if zeroed:
        # flat landscape; keep the bounds ordered
        y_min, y_max = -1.0, 0.0
    name = "discrete-lookup" if (length, categories) == (8, 4) else f"discrete-lookup-{length}x{categories}"
    return Task(
        name=name,
        space=space,
        family="lookup",
        oracle_params=params,
        y_min=y_min,
        y_max=y_max,
        dataset_spec=DatasetSpec(pool_size=space.size, keep_percentile=50.0, sampler="enumerate"),
    )


def make_sensitive_ridge(dim: int = 16) -> Task:
    """Narrow per-coordinate bumps at 1; data concentrates near 0.8 with std 0.15."""
    if dim < 1:
        raise ParameterError("dim must be positive")
    return Task(
        name="sensitive-ridge" if dim == 16 else f"sensitive-ridge-{dim}",
        space=Continuous.box(dim, -2.0, 2.0),
        family="ridge",
        oracle_params={"peak": 1.0, "width": 0.1},
        y_min=0.0,
        y_max=float(dim),
        dataset_spec=DatasetSpec(pool_size=5000, keep_percentile=80.0, sampler="gaussian"),
        sampler_params={"center": 0.8, "std": 0.15},
    )


TASKS = {
    "toy-quadratic": make_toy_quadratic,
    "separable": make_separable,
    "discrete-lookup": make_discrete_lookup,
    "sensitive-ridge": make_sensitive_ridge,
}


def get_task(name: str) -> Task:
    """Look up a task by name; sized variants use suffixes like ``separable-6``."""
    if name in TASKS:
        return TASKS[name]()
    if m := re.fullmatch(r"separable-(\d+)", name):
        return make_separable(int(m.group(1)))
    if m := re.fullmatch(r"sensitive-ridge-(\d+)", name):
        return make_sensitive_ridge(int(m.group(1)))
    if m := re.fullmatch(r"discrete-lookup-(\d+)x(\d+)", name):
        return make_discrete_lookup(int(m.group(1)), int(m.group(2)))
    raise KeyError(f"unknown task {name!r}; known: {', '.join(TASKS)}")


# -- datasets and analysis ---------------------------------------------------

def draw_pool(task: Task, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """The untruncated pool (designs, scores) for a given dataset seed."""
    spec = task.dataset_spec
    if spec.sampler == "enumerate":
        designs = task.space.enumerate()
    else:
        rng = np.random.default_rng(seed)
        designs = _SAMPLERS[spec.sampler](task, rng, spec.pool_size)
    return designs, _score(task, designs)


def build_dataset(task: Task, seed: int | None = None) -> Dataset:
    """Score a seeded pool and keep its bottom ``keep_percentile`` percent, sorted ascending."""
    spec = task.dataset_spec
    designs, scores = draw_pool(task, spec.seed if seed is None else seed)
    order = np.argsort(scores, kind="stable")
    keep = max(2, math.floor(len(scores) * spec.keep_percentile / 100.0))
    order = order[:keep]
    return Dataset(designs[order], scores[order], task.name)


def score_normalize(task: Task, y):
    """Fraction of the way from y_min to y_max; not clipped to [0, 1]."""
    return (y - task.y_min) / (task.y_max - task.y_min)


def enumerate_optimum(task: Task) -> tuple[np.ndarray, float]:
    """Brute-force argmax; ties resolve to the lexicographically smallest sequence."""
    space = task.space
    if not isinstance(space, Discrete) or space.size > ENUMERATION_CAP:
        raise UnsupportedError("enumerate_optimum needs an enumerable discrete space")
    designs = space.enumerate()
    scores = _score(task, designs)
    i = int(np.argmax(scores))
    return designs[i], float(scores[i])


def resample_histogram(task: Task, dataset: Dataset, n: int, bins: int, seed: int) -> HistogramPair:
    """Histogram dataset scores against n uniform draws from the design space."""
    if n < 1 or bins < 1:
        raise ParameterError("n and bins must be positive")
    rng = np.random.default_rng(seed)
    resampled = _score(task, task.space.uniform(rng, n))
    lo = min(resampled.min(), dataset.scores.min())
    hi = max(resampled.max(), dataset.scores.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    return HistogramPair(
        edges=edges,
        dataset_counts=np.histogram(dataset.scores, edges)[0],
        resampled_counts=np.histogram(resampled, edges)[0],
        dataset_mean=float(dataset.scores.mean()),
        resampled_mean=float(resampled.mean()),
    )


def slice_scan(task: Task, design, coord: int, n: int = 401) -> tuple[np.ndarray, np.ndarray]:
    """Oracle values along one coordinate across its full bounds, others held fixed."""
    if not isinstance(task.space, Continuous):
        raise UnsupportedError("slice scans need a continuous space")
    x = task.space.validate(design)
    ts = np.linspace(task.space.lo[coord], task.space.hi[coord], n)
    grid = np.repeat(x[None, :], n, axis=0)
    grid[:, coord] = ts
    return ts, _score(task, grid)


def slice_drop(ts: np.ndarray, values: np.ndarray, window: float = 0.2) -> float:
    """Largest loss within ``window`` of the slice peak, as a fraction of the slice's range."""
    peak = int(np.argmax(values))
    span = values.max() - values.min()
    if span == 0:
        return 0.0
    near = np.abs(ts - ts[peak]) <= window + 1e-12
    return float((values[peak] - values[near].min()) / span)
