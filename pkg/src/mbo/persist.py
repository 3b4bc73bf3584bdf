"""Two-file persistence for datasets and surrogate snapshots.

Each artifact is a JSON manifest next to a CSV file of numeric rows.
Continuous values are written with 17 significant digits so they read back
bit-identically; discrete designs are written as integers.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DataError, MalformedContentError, VersionError
from .space import Discrete, space_from_dict
from .surrogate import MlpModel
from .tasks import Dataset, Task, get_task, oracle_evaluate_batch

FORMAT_VERSION = 1
SCORE_RTOL = 1e-9


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    return p.with_suffix(".json"), p.with_suffix(".csv")


def _read_manifest(path: Path, kind: str) -> dict:
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedContentError(f"{path}: {e}") from e
    if not isinstance(meta, dict) or meta.get("kind") != kind:
        raise MalformedContentError(f"{path} is not a {kind} manifest")
    if meta.get("version") != FORMAT_VERSION:
        raise VersionError(f"{path} has format version {meta.get('version')!r}, expected {FORMAT_VERSION}")
    return meta


def _read_rows(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row]


def save_dataset(dataset: Dataset, task: Task, path, seed: int) -> tuple[Path, Path]:
    """Write ``<path>.json`` and ``<path>.csv``; returns both paths."""
    manifest, rows = _paths(path)
    meta = {
        "kind": "dataset",
        "version": FORMAT_VERSION,
        "task": task.name,
        "space": task.space.to_dict(),
        "seed": int(seed),
        "keep_percentile": task.dataset_spec.keep_percentile,
        "y_min": task.y_min,
        "y_max": task.y_max,
        "rows": len(dataset),
        "row_file": rows.name,
    }
    manifest.write_text(json.dumps(meta, indent=2) + "\n")
    discrete = isinstance(task.space, Discrete)
    with open(rows, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for d, s in zip(dataset.designs, dataset.scores):
            cells = [str(int(v)) for v in d] if discrete else [_fmt(v) for v in d]
            w.writerow(cells + [_fmt(s)])
    return manifest, rows


def load_dataset(path, task: Task | None = None) -> Dataset:
    """Read a dataset and re-verify every stored score against the oracle."""
    manifest, _ = _paths(path)
    meta = _read_manifest(manifest, "dataset")
    task = task or get_task(meta["task"])
    if space_from_dict(meta["space"]) != task.space:
        raise DataError("stored design space does not match the task")
    rows = _read_rows(manifest.with_name(meta["row_file"]))
    if len(rows) != meta["rows"]:
        raise MalformedContentError(f"expected {meta['rows']} rows, found {len(rows)}")
    discrete = isinstance(task.space, Discrete)
    try:
        scores = np.array([float(r[-1]) for r in rows])
        cells = [r[:-1] for r in rows]
        designs = np.array(cells, dtype=np.int64 if discrete else np.float64)
    except ValueError as e:
        raise MalformedContentError(str(e)) from e
    if designs.ndim != 2:
        raise MalformedContentError("rows have inconsistent lengths")
    fresh = oracle_evaluate_batch(task, designs)
    ok = np.array_equal(fresh, scores) if discrete else np.allclose(fresh, scores, rtol=SCORE_RTOL, atol=0.0)
    if not ok:
        raise DataError("stored scores disagree with the oracle")
    return Dataset(designs, scores, task.name)


def save_model(model: MlpModel, path) -> tuple[Path, Path]:
    """Snapshot: layer sizes in the manifest, then each weight matrix row by row followed by its bias."""
    manifest, rows = _paths(path)
    meta = {"kind": "mlp", "version": FORMAT_VERSION, "activation": model.activation,
            "layer_sizes": list(model.layer_sizes), "row_file": rows.name}
    manifest.write_text(json.dumps(meta, indent=2) + "\n")
    with open(rows, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for W, b in zip(model.weights, model.biases):
            for r in W:
                w.writerow([_fmt(v) for v in r])
            w.writerow([_fmt(v) for v in b])
    return manifest, rows


def load_model(path) -> MlpModel:
    manifest, _ = _paths(path)
    meta = _read_manifest(manifest, "mlp")
    sizes = meta["layer_sizes"]
    rows = _read_rows(manifest.with_name(meta["row_file"]))
    weights, biases, i = [], [], 0
    try:
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            block = np.array(rows[i: i + fan_in + 1], dtype=np.float64)
            if block.shape != (fan_in + 1, fan_out):
                raise MalformedContentError(f"layer block has shape {block.shape}")
            weights.append(block[:-1])
            biases.append(block[-1])
            i += fan_in + 1
    except ValueError as e:
        raise MalformedContentError(str(e)) from e
    if i != len(rows):
        raise MalformedContentError("trailing rows after the last layer")
    return MlpModel(tuple(weights), tuple(biases), meta["activation"])
