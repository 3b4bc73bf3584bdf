"""Learned objective models: tanh MLPs with analytic input gradients.

Everything here works on already-normalized inputs and targets. Training is
plain mini-batch Adam on (optionally weighted) squared error; the
conservative variant adds a penalty on predictions at designs found by
gradient ascent on the current model.
"""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import DataError, ParameterError, ShapeError, UndefinedCorrelationError

COMS_ALPHA_DISCRETE = 2.0
COMS_ALPHA_CONTINUOUS = 0.5
COMS_ASCENT_STEPS = 50


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (64, 64)
    epochs: int = 200
    batch: int = 128
    step_size: float = 1e-3
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1:
            raise ParameterError("epochs must be >= 0 and batch >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ParameterError("val_fraction must lie in (0, 1)")
        if self.step_size <= 0:
            raise ParameterError("step_size must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True, eq=False)
class MlpModel:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation != "tanh":
            raise ParameterError("only the tanh activation is supported")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ShapeError("consecutive layer sizes do not match")
        if self.weights[-1].shape[1] != 1:
            raise ShapeError("output layer must have size 1")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]


@dataclass(frozen=True, eq=False)
class SurrogateEnsemble:
    models: tuple[MlpModel, ...]
    val_losses: np.ndarray

    def __post_init__(self):
        if not self.models:
            raise ParameterError("empty ensemble")
        if len({m.input_dim for m in self.models}) != 1:
            raise ShapeError("ensemble members disagree on input dimension")

    def __len__(self):
        return len(self.models)


@dataclass
class TrainResult:
    model: MlpModel
    val_loss: float
    losses: list[float] = field(default_factory=list)


# -- forward / backward --------------------------------------------------------

def _forward(weights, biases, x):
    acts = [x]
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = h @ w
        h += b
        np.tanh(h, out=h)
        acts.append(h)
    out = (h @ weights[-1])[:, 0] + biases[-1][0]
    return acts, out


def _backward(weights, acts, g_out, grads=None, want_input=False):
    """Back-propagate d(loss)/d(out); fills ``grads`` (list of (gW, gb)) in place."""
    g = g_out[:, None]
    for layer in range(len(weights) - 1, -1, -1):
        if grads is not None:
            gw, gb = grads[layer]
            np.dot(acts[layer].T, g, out=gw)
            np.sum(g, axis=0, out=gb)
        if layer == 0 and not want_input:
            return None
        g = g @ weights[layer].T
        if layer > 0:
            a = acts[layer]
            g -= g * a * a
    return g


def _as_batch(model: MlpModel, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != model.input_dim:
        raise ShapeError(f"expected inputs of length {model.input_dim}, got shape {x.shape}")
    return x2, single


def predict(model: MlpModel, x):
    """Model output for one input (float) or a batch (array)."""
    x2, single = _as_batch(model, x)
    out = _forward(model.weights, model.biases, x2)[1]
    return float(out[0]) if single else out


def input_gradient(model: MlpModel, x):
    x2, single = _as_batch(model, x)
    acts, _ = _forward(model.weights, model.biases, x2)
    g = _backward(model.weights, acts, np.ones(len(x2)), want_input=True)
    return g[0] if single else g


def ensemble_reduce(e: SurrogateEnsemble, x, mode: str = "mean"):
    """Reduced prediction and its input gradient.

    ``single`` uses member 0, ``min`` differentiates through the argmin member
    (lowest index on ties), ``mean`` averages.
    """
    if len(e) == 0:
        raise ParameterError("empty ensemble")
    x2, single = _as_batch(e.models[0], x)
    if mode == "single":
        value, grad = predict(e.models[0], x2), input_gradient(e.models[0], x2)
    elif mode in ("min", "mean"):
        values = np.stack([predict(m, x2) for m in e.models])
        grads = np.stack([input_gradient(m, x2) for m in e.models])
        if mode == "mean":
            value, grad = values.mean(axis=0), grads.mean(axis=0)
        else:
            pick = np.argmin(values, axis=0)
            rows = np.arange(x2.shape[0])
            value, grad = values[pick, rows], grads[pick, rows]
    else:
        raise ParameterError(f"unknown ensemble mode {mode!r}")
    return (float(value[0]), grad[0]) if single else (value, grad)


def ensemble_stats(e: SurrogateEnsemble, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-row mean and (population) std of member predictions."""
    values = np.stack([predict(m, x) for m in e.models])
    return values.mean(axis=0), values.std(axis=0)


# -- training ----------------------------------------------------------------

def _check_data(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or len(x) == 0 or len(x) != len(y):
        raise DataError("need a non-empty (N, d) design matrix with N targets")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("inputs and targets must be finite")
    return x, y


def _split(n: int, cfg: TrainConfig, rng: np.random.Generator):
    n_val = int(round(n * cfg.val_fraction))
    n_val = min(max(n_val, 1), n - 1)
    if n < 2:
        raise DataError("need at least one training and one validation row")
    perm = rng.permutation(n)
    return perm[: n - n_val], perm[n - n_val:]


def _init(sizes, rng):
    """Glorot-uniform hidden layers; the output layer starts at zero, so an
    untrained model predicts the (normalized) target mean of 0."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    weights[-1][:] = 0.0
    return weights, biases


def _flat_views(weights, biases):
    """Pack parameters into one buffer; returns (buffer, weight views, bias views)."""
    arrays = [a for pair in zip(weights, biases) for a in pair]
    buf = np.concatenate([a.ravel() for a in arrays])
    views, offset = [], 0
    for a in arrays:
        views.append(buf[offset: offset + a.size].reshape(a.shape))
        offset += a.size
    return buf, views[0::2], views[1::2]


def train_mlp(x, y, cfg: TrainConfig, weights=None, *, conservative=None, member: int = 0,
              init: MlpModel | None = None) -> TrainResult:
    """Mini-batch Adam on mean weighted squared error.

    ``weights`` are renormalized to mean 1 over the training rows.
    ``conservative=(alpha, steps, lr)`` adds alpha * (mean f(x_adv) - mean f(x)),
    where x_adv comes from ``steps`` ascent steps on the current model.
    ``init`` warm-starts from an existing model instead of a fresh draw.
    """
    x, y = _check_data(x, y)
    n, d = x.shape
    split_ss, init_ss, shuffle_ss = np.random.SeedSequence([cfg.seed, member]).spawn(3)
    train_idx, val_idx = _split(n, cfg, np.random.default_rng(split_ss))

    if weights is None:
        w_all = np.ones(n)
    else:
        w_all = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w_all.shape != (n,) or not np.all(np.isfinite(w_all)) or np.any(w_all < 0):
            raise DataError("weights must be finite, nonnegative, one per row")
    w_train = w_all[train_idx]
    if not np.any(w_train > 0):
        raise DataError("training weights are all zero")
    if weights is not None:
        # equal weights are exactly the unweighted objective
        w_train = np.ones_like(w_train) if np.all(w_train == w_train[0]) else w_train / w_train.mean()

    if init is None:
        ws, bs = _init((d,) + cfg.hidden + (1,), np.random.default_rng(init_ss))
    else:
        if init.input_dim != d:
            raise ShapeError("warm-start model has the wrong input dimension")
        ws, bs = [w.copy() for w in init.weights], [b.copy() for b in init.biases]
    buf, ws, bs = _flat_views(ws, bs)
    gbuf, gws, gbs = _flat_views([np.zeros_like(w) for w in ws], [np.zeros_like(b) for b in bs])
    grads = list(zip(gws, gbs))
    m = np.zeros_like(buf)
    v = np.zeros_like(buf)
    tmp = np.empty_like(buf)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    xt, yt = x[train_idx], y[train_idx]
    shuffle_rng = np.random.default_rng(shuffle_ss)
    losses = []
    step = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(xt))
        for start in range(0, len(order), cfg.batch):
            rows = order[start: start + cfg.batch]
            xb, yb, wb = xt[rows], yt[rows], w_train[rows]
            bsz = len(rows)
            acts, out = _forward(ws, bs, xb)
            resid = out - yb
            wr = wb * resid
            loss = float(wr @ resid) / bsz
            g_out = (2.0 / bsz) * wr
            if conservative is not None and conservative[0] != 0.0:
                alpha, steps, lr = conservative
                x_adv = xb.copy()
                for _ in range(steps):
                    a_acts, _ = _forward(ws, bs, x_adv)
                    x_adv += lr * _backward(ws, a_acts, np.ones(bsz), want_input=True)
                adv_acts, adv_out = _forward(ws, bs, x_adv)
                loss += alpha * float(adv_out.mean() - out.mean())
                acts = [np.concatenate([a, b]) for a, b in zip(acts, adv_acts)]
                g_out = np.concatenate([g_out - alpha / bsz, np.full(bsz, alpha / bsz)])
            _backward(ws, acts, g_out, grads)
            losses.append(loss)
            step += 1
            # Adam with the bias corrections folded into the step and epsilon
            m *= beta1
            np.multiply(gbuf, 1.0 - beta1, out=tmp)
            m += tmp
            v *= beta2
            np.multiply(gbuf, gbuf, out=tmp)
            tmp *= 1.0 - beta2
            v += tmp
            c2 = np.sqrt(1.0 - beta2**step)
            np.sqrt(v, out=tmp)
            tmp += eps * c2
            np.divide(m, tmp, out=tmp)
            tmp *= cfg.step_size * c2 / (1.0 - beta1**step)
            buf -= tmp

    model = MlpModel(tuple(w.copy() for w in ws), tuple(b.copy() for b in bs))
    val_pred = _forward(model.weights, model.biases, x[val_idx])[1]
    val_loss = float(np.mean((val_pred - y[val_idx]) ** 2))
    return TrainResult(model, val_loss, losses)


def fit_surrogate(data, cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, float]:
    """Fit on normalized (x, y); returns the model and held-out MSE."""
    res = train_mlp(data[0], data[1], cfg)
    return res.model, res.val_loss


def fit_reweighted(data, weights, cfg: TrainConfig = TrainConfig(), *, init: MlpModel | None = None) -> MlpModel:
    """Fit minimizing the importance-weighted squared error."""
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
        raise DataError("weights must be finite, nonnegative and not all zero")
    return train_mlp(data[0], data[1], cfg, w, init=init).model


def fit_conservative(data, cfg: TrainConfig = TrainConfig(), alpha: float = COMS_ALPHA_CONTINUOUS,
                     ascent_steps: int = COMS_ASCENT_STEPS, ascent_lr: float = 0.05) -> MlpModel:
    """Regression plus a penalty on overestimation at ascended designs.

    With ``alpha == 0`` this is exactly :func:`fit_surrogate`.
    """
    if alpha < 0 or ascent_steps < 0 or ascent_lr <= 0:
        raise ParameterError("alpha, ascent_steps must be >= 0 and ascent_lr > 0")
    return train_mlp(data[0], data[1], cfg, conservative=(alpha, ascent_steps, ascent_lr)).model


_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 16


def _digest(*arrays) -> str:
    h = hashlib.sha1()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def fit_ensemble(data, cfg: TrainConfig, n: int) -> SurrogateEnsemble:
    """n members differing in initialization and shuffling streams.

    Member 0 is the model :func:`fit_surrogate` returns for the same config.
    Results are memoized on (data, cfg, n) since fitting is deterministic.
    """
    if n < 1:
        raise ParameterError("ensemble size must be positive")
    x, y = _check_data(*data)
    key = (_digest(x, y), cfg, n)
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    results = [train_mlp(x, y, cfg, member=i) for i in range(n)]
    ens = SurrogateEnsemble(tuple(r.model for r in results), np.array([r.val_loss for r in results]))
    _CACHE[key] = ens
    if len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return ens


def validation_rank_correlation(model: MlpModel, val) -> float:
    """Spearman correlation between predictions and held-out targets."""
    x, y = _check_data(*val)
    if len(y) < 2:
        raise DataError("need at least two validation rows")
    pred = predict(model, x)
    return spearman(pred, y)


def spearman(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelationError("rank correlation is undefined for constant inputs")
    return float(stats.spearmanr(a, b).statistic)


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
