"""Evaluation protocol: seeded trials, oracle scoring, aggregation and reports.

A trial builds the dataset for its seed, asks a method for K candidates and
only then scores them with the oracle, one design per call. Trial ``i`` of a
run uses seed ``base_seed + i``, so adding trials never changes earlier ones.
"""
from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MalformedContentError, MBOError, ParameterError, TrialError, VersionError
from .optimizers import METHODS, Method
from .stats import (STATISTICS, bootstrap_ci, iqm, percentile_score, point_statistic,
                    stratified_bootstrap_ci, stratified_point)
from .tasks import Task, build_dataset, get_task, oracle_evaluate, score_normalize

RESULTS_VERSION = 1
CI_LEVEL = 0.95
BOOTSTRAP_RESAMPLES = 2000


# -- method configs ------------------------------------------------------------

def resolve_method(method) -> Method:
    if isinstance(method, Method):
        return method
    try:
        return METHODS[method]
    except KeyError:
        raise ParameterError(f"unknown method {method!r}; known: {', '.join(METHODS)}") from None


def config_to_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def _coerce(current, value):
    if isinstance(current, bool) or current is None:
        return value
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(current, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def _set_path(cfg, path: list[str], value):
    names = {f.name for f in dataclasses.fields(cfg)}
    head = path[0]
    if head not in names:
        raise ParameterError(f"{type(cfg).__name__} has no option {head!r}")
    current = getattr(cfg, head)
    if len(path) > 1:
        if not dataclasses.is_dataclass(current):
            raise ParameterError(f"option {head!r} has no sub-options")
        return dataclasses.replace(cfg, **{head: _set_path(current, path[1:], value)})
    if dataclasses.is_dataclass(current):
        if not isinstance(value, dict):
            raise ParameterError(f"option {head!r} needs a mapping")
        for k, v in value.items():
            current = _set_path(current, [k], v)
        return dataclasses.replace(cfg, **{head: current})
    return dataclasses.replace(cfg, **{head: _coerce(current, value)})


def config_from_dict(method, d: dict):
    cfg = resolve_method(method).default_config()
    for k, v in d.items():
        cfg = _set_path(cfg, [k], v)
    return cfg


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_options(cfg, options) -> object:
    """Apply ``key=value`` overrides; dotted keys reach nested configs (``train.epochs=5``)."""
    for opt in options:
        key, sep, value = opt.partition("=")
        if not sep or not key:
            raise ParameterError(f"method option {opt!r} is not key=value")
        cfg = _set_path(cfg, key.split("."), parse_value(value))
    return cfg


# -- trials --------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    task: str
    method: str
    method_cfg: object = None     # None: the method's default config
    K: int = 128
    trials: int = 8
    base_seed: int = 0
    output_path: str | None = None

    def __post_init__(self):
        if self.K < 1 or self.trials < 1:
            raise ParameterError("K and trials must be at least 1")
        if not 0 <= self.base_seed < 2**64:
            raise ParameterError("base_seed must be an unsigned 64-bit integer")
        if self.method_cfg is None:
            object.__setattr__(self, "method_cfg", resolve_method(self.method).default_config())

    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.trials)]

    def to_dict(self) -> dict:
        return {"task": self.task, "method": self.method, "method_cfg": config_to_dict(self.method_cfg),
                "K": self.K, "trials": self.trials, "base_seed": self.base_seed,
                "output_path": self.output_path}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(d["task"], d["method"], config_from_dict(d["method"], d["method_cfg"]), int(d["K"]),
                   int(d["trials"]), int(d["base_seed"]), d["output_path"])


@dataclass(frozen=True, eq=False)
class TrialResult:
    seed: int
    raw_scores: np.ndarray
    normalized_scores: np.ndarray
    p100: float
    p50: float
    dataset_best: float     # max normalized training score

    def __eq__(self, other):
        return (isinstance(other, TrialResult) and self.seed == other.seed
                and np.array_equal(self.raw_scores, other.raw_scores)
                and np.array_equal(self.normalized_scores, other.normalized_scores)
                and (self.p100, self.p50, self.dataset_best) == (other.p100, other.p50, other.dataset_best))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "raw_scores": self.raw_scores.tolist(),
                "normalized_scores": self.normalized_scores.tolist(),
                "p100": self.p100, "p50": self.p50, "dataset_best": self.dataset_best}

    @classmethod
    def from_dict(cls, d: dict) -> "TrialResult":
        return cls(int(d["seed"]), np.asarray(d["raw_scores"], dtype=np.float64),
                   np.asarray(d["normalized_scores"], dtype=np.float64),
                   float(d["p100"]), float(d["p50"]), float(d["dataset_best"]))


def run_trial(task: Task, method, cfg, k: int, seed: int) -> TrialResult:
    """One seeded trial; any failure is re-raised as :class:`TrialError` naming the seed."""
    m = resolve_method(method)
    cfg = m.default_config() if cfg is None else cfg
    try:
        dataset = build_dataset(task, seed)
        cands = m.propose(dataset, task.space, cfg, k, seed)
        if len(cands) != k:
            raise ParameterError(f"{m.name} returned {len(cands)} candidates, expected {k}")
        raw = np.array([oracle_evaluate(task, d) for d in cands.designs], dtype=np.float64)
    except (MBOError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        raise TrialError(seed, e) from e
    norm = score_normalize(task, raw)
    return TrialResult(seed, raw, norm, percentile_score(norm, 100), percentile_score(norm, 50),
                       float(score_normalize(task, dataset.scores.max())))


def _trial_job(args):
    task_name, method, cfg, k, seed = args
    return run_trial(get_task(task_name), method, cfg, k, seed)


def worker_count() -> int:
    env = os.environ.get("MBO_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"MBO_THREADS={env!r} is not an integer") from None
        if n < 1:
            raise ParameterError("MBO_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def run_trials(config: RunConfig, workers: int | None = None) -> list[TrialResult]:
    jobs = [(config.task, config.method, config.method_cfg, config.K, s) for s in config.seeds()]
    workers = min(workers or worker_count(), len(jobs))
    if workers == 1:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_job, jobs))


# -- aggregation -----------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    values: tuple[float, ...]
    mean: float
    std: float
    median: float
    iqm: float
    ci: dict    # statistic -> (lower, upper)

    def to_dict(self) -> dict:
        return {"values": list(self.values), "mean": self.mean, "std": self.std, "median": self.median,
                "iqm": self.iqm, "ci": {k: list(v) for k, v in self.ci.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "Summary":
        return cls(tuple(map(float, d["values"])), float(d["mean"]), float(d["std"]), float(d["median"]),
                   float(d["iqm"]), {k: (float(v[0]), float(v[1])) for k, v in d["ci"].items()})


def summarize(values, seed, b: int = BOOTSTRAP_RESAMPLES, level: float = CI_LEVEL) -> Summary:
    """Point statistics and percentile-bootstrap CIs.

    Each interval is widened, if needed, to contain its own point estimate.
    """
    v = np.asarray(values, dtype=np.float64)
    points = {name: point_statistic(v, name) for name in STATISTICS}
    ci = {}
    for j, name in enumerate(STATISTICS):
        if len(v) < 2:
            lo = hi = points[name]
        else:
            lo, hi = bootstrap_ci(v, name, b, level, np.random.SeedSequence([seed, j]))
        ci[name] = (min(lo, points[name]), max(hi, points[name]))
    std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return Summary(tuple(float(x) for x in v), float(v.mean()), std, float(np.median(v)), iqm(v), ci)


@dataclass(frozen=True)
class AggregateReport:
    task: str
    method: str
    p100: Summary
    p50: Summary
    dataset_best: Summary
    level: float = CI_LEVEL

    def to_dict(self) -> dict:
        return {"task": self.task, "method": self.method, "level": self.level, "p100": self.p100.to_dict(),
                "p50": self.p50.to_dict(), "dataset_best": self.dataset_best.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateReport":
        return cls(d["task"], d["method"], Summary.from_dict(d["p100"]), Summary.from_dict(d["p50"]),
                   Summary.from_dict(d["dataset_best"]), float(d["level"]))


def aggregate(trials, seed=0, *, task: str = "", method: str = "") -> AggregateReport:
    if not trials:
        raise ParameterError("aggregate needs at least one trial")
    return AggregateReport(
        task, method,
        summarize([t.p100 for t in trials], [seed, 0]),
        summarize([t.p50 for t in trials], [seed, 1]),
        summarize([t.dataset_best for t in trials], [seed, 2]),
    )


def cross_task(reports, metric: str = "p100", seed=0) -> dict:
    """Equal-weight aggregate over tasks with a stratified bootstrap (resample within each task)."""
    groups = {r.task: getattr(r, metric).values for r in reports}
    out = {}
    for j, name in enumerate(STATISTICS):
        point = stratified_point(groups, name)
        lo, hi = stratified_bootstrap_ci(groups, name, BOOTSTRAP_RESAMPLES, CI_LEVEL,
                                         np.random.SeedSequence([seed, j]))
        out[name] = {"point": point, "ci": [min(lo, point), max(hi, point)]}
    return out


# -- run records -------------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    config: RunConfig
    trials: list
    report: AggregateReport

    def to_dict(self) -> dict:
        return {"version": RESULTS_VERSION, "config": self.config.to_dict(),
                "trials": [t.to_dict() for t in self.trials], "report": self.report.to_dict()}


def run(config: RunConfig, workers: int | None = None) -> RunRecord:
    trials = run_trials(config, workers)
    rec = RunRecord(config, trials, aggregate(trials, config.base_seed, task=config.task, method=config.method))
    if config.output_path:
        save_results(config.output_path, rec)
    return rec


def dumps_results(record: RunRecord) -> str:
    return json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n"


def save_results(path, record: RunRecord) -> None:
    Path(path).write_text(dumps_results(record))


def loads_results(text: str) -> RunRecord:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedContentError(f"not valid JSON: {e}") from e
    if not isinstance(d, dict) or "version" not in d:
        raise MalformedContentError("missing version field")
    if d["version"] != RESULTS_VERSION:
        raise VersionError(f"results version {d['version']!r}; this build reads {RESULTS_VERSION}")
    try:
        return RunRecord(RunConfig.from_dict(d["config"]), [TrialResult.from_dict(t) for t in d["trials"]],
                         AggregateReport.from_dict(d["report"]))
    except (KeyError, TypeError, IndexError, ValueError) as e:
        raise MalformedContentError(f"bad results content: {e!r}") from e


def load_results(path) -> RunRecord:
    return loads_results(Path(path).read_text())


# -- reports -------------------------------------------------------------------------

def _pm(s: Summary) -> str:
    return f"{s.mean:.3f} ± {s.std:.3f}"


def emit_report(reports: dict, format: str = "markdown", config: dict | None = None) -> str:
    """Render ``label -> AggregateReport`` as a markdown table or JSON."""
    if not reports:
        raise ParameterError("no reports to emit")
    if format == "json":
        body = {"version": RESULTS_VERSION, "config": config or {},
                "reports": {k: r.to_dict() for k, r in reports.items()}}
        by_method: dict[str, list] = {}
        for r in reports.values():
            by_method.setdefault(r.method, []).append(r)
        multi = {m: {"p100": cross_task(rs, "p100"), "p50": cross_task(rs, "p50")}
                 for m, rs in by_method.items() if len({r.task for r in rs}) > 1}
        if multi:
            body["cross_task"] = multi
        return json.dumps(body, indent=2, sort_keys=True) + "\n"
    if format != "markdown":
        raise ParameterError(f"unknown report format {format!r}")
    tasks = list(dict.fromkeys(r.task for r in reports.values()))
    lines = ["| task | method | p100 | p50 |", "|---|---|---|---|"]
    for task in tasks:
        rows = [(k, r) for k, r in reports.items() if r.task == task]
        for label, r in rows:
            lines.append(f"| {task} | {label} | {_pm(r.p100)} | {_pm(r.p50)} |")
        if all(r.method != "dataset-best" for _, r in rows):
            best = rows[0][1].dataset_best
            lines.append(f"| {task} | dataset-best | {_pm(best)} | {_pm(best)} |")
    return "\n".join(lines) + "\n"
