"""Design spaces, column normalization and the discrete logit relaxation.

Designs are numpy arrays. A continuous design is a float vector of length
``dim``; a discrete design is an integer vector of length ``length`` with
entries in ``[0, categories)``. Batches stack designs along axis 0.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidDesignError, ParameterError, ShapeError

NORMALIZER_EPS = 1e-6
DEFAULT_SMOOTHING = 0.3


@dataclass(frozen=True)
class Continuous:
    dim: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError("dim must be positive")
        if len(self.lo) != self.dim or len(self.hi) != self.dim:
            raise ParameterError("bounds must have one entry per dimension")
        if any(not lo < hi for lo, hi in zip(self.lo, self.hi)):
            raise ParameterError("every dimension needs lo < hi")

    @classmethod
    def box(cls, dim: int, lo: float, hi: float) -> "Continuous":
        return cls(dim, (float(lo),) * dim, (float(hi),) * dim)

    kind = "continuous"

    @property
    def relaxed_dim(self) -> int:
        return self.dim

    @property
    def design_shape(self) -> tuple[int]:
        return (self.dim,)

    def validate(self, designs) -> np.ndarray:
        x = np.asarray(designs, dtype=np.float64)
        if x.shape[-1:] != (self.dim,) or x.ndim not in (1, 2):
            raise InvalidDesignError(f"expected designs of length {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidDesignError("design contains non-finite values")
        if np.any(x < np.asarray(self.lo)) or np.any(x > np.asarray(self.hi)):
            raise InvalidDesignError("design lies outside the box bounds")
        return x

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, np.asarray(self.lo), np.asarray(self.hi))

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(np.asarray(self.lo), np.asarray(self.hi), size=(n, self.dim))

    def to_dict(self) -> dict:
        return {"kind": "continuous", "dim": self.dim, "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Discrete:
    length: int
    categories: int

    def __post_init__(self):
        if self.length < 1:
            raise ParameterError("length must be at least 1")
        if self.categories < 2:
            raise ParameterError("categories must be at least 2")

    kind = "discrete"

    @property
    def relaxed_dim(self) -> int:
        return self.length * self.categories

    @property
    def design_shape(self) -> tuple[int]:
        return (self.length,)

    @property
    def size(self) -> int:
        return self.categories**self.length

    def validate(self, designs) -> np.ndarray:
        s = np.asarray(designs)
        if s.shape[-1:] != (self.length,) or s.ndim not in (1, 2):
            raise InvalidDesignError(f"expected sequences of length {self.length}, got shape {s.shape}")
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(np.equal(np.mod(s, 1), 0)):
                raise InvalidDesignError("discrete designs must be integers")
            s = s.astype(np.int64)
        if np.any(s < 0) or np.any(s >= self.categories):
            raise InvalidDesignError(f"categories must lie in [0, {self.categories})")
        return s.astype(np.int64, copy=False)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(0, self.categories, size=(n, self.length))

    def enumerate(self) -> np.ndarray:
        """Every sequence in lexicographic order."""
        rows = itertools.product(range(self.categories), repeat=self.length)
        return np.fromiter(itertools.chain.from_iterable(rows), dtype=np.int64,
                           count=self.size * self.length).reshape(self.size, self.length)

    def to_dict(self) -> dict:
        return {"kind": "discrete", "length": self.length, "categories": self.categories}


DesignSpace = Continuous | Discrete


def space_from_dict(d: dict) -> DesignSpace:
    if d["kind"] == "continuous":
        return Continuous(int(d["dim"]), tuple(map(float, d["lo"])), tuple(map(float, d["hi"])))
    if d["kind"] == "discrete":
        return Discrete(int(d["length"]), int(d["categories"]))
    raise ParameterError(f"unknown space kind {d['kind']!r}")


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    epsilon: float = field(default=NORMALIZER_EPS)


def fit_normalizer(rows) -> Normalizer:
    """Per-column mean and population std, with std clamped below at 1e-6."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise InsufficientDataError("need at least two rows to fit a normalizer")
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), NORMALIZER_EPS)
    return Normalizer(mean, std)


def _check(norm: Normalizer, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != norm.mean.shape[-1]:
        raise ShapeError(f"row length {x.shape[-1]} does not match normalizer length {norm.mean.shape[-1]}")
    return x


def normalize(norm: Normalizer, row) -> np.ndarray:
    return (_check(norm, row) - norm.mean) / norm.std


def denormalize(norm: Normalizer, row) -> np.ndarray:
    return _check(norm, row) * norm.std + norm.mean


def to_logits(space: Discrete, design, smoothing: float = DEFAULT_SMOOTHING) -> np.ndarray:
    """Log of a smoothed one-hot distribution per position, flattened position-major.

    Accepts one sequence or a batch of them.
    """
    if not 0.0 < smoothing < 1.0:
        raise ParameterError("smoothing must lie in (0, 1)")
    s = space.validate(design)
    on = np.log(1.0 - smoothing)
    off = np.log(smoothing / (space.categories - 1))
    out = np.full(s.shape + (space.categories,), off)
    np.put_along_axis(out, s[..., None], on, axis=-1)
    return out.reshape(s.shape[:-1] + (space.relaxed_dim,))


def from_logits(space: Discrete, logits) -> np.ndarray:
    """Per-position argmax; ties go to the lowest category index."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] != space.relaxed_dim:
        raise ShapeError(f"expected {space.relaxed_dim} logits, got {z.shape[-1]}")
    z = z.reshape(z.shape[:-1] + (space.length, space.categories))
    return np.argmax(z, axis=-1).astype(np.int64)
